"""Tests for schema helpers and the run cache."""

import pytest

from sclsim.cache.manager import CacheManager, config_digest, make_run_id
from sclsim.schemas import ControllerConfig, ExperimentConfig
from sclsim.utils.schema_utils import flatten_model, nest_dotted, validate_with_pydantic


class TestNestDotted:
    def test_nests_sections(self):
        nested = nest_dotted({"controller.th_high": "4.5", "seed": "3", "controller.th_low": "2"})
        assert nested == {"controller": {"th_high": "4.5", "th_low": "2"}, "seed": "3"}

    def test_value_then_section_conflict(self):
        with pytest.raises(ValueError):
            nest_dotted({"controller": "x", "controller.th_high": "4.5"})

    def test_section_then_value_conflict(self):
        with pytest.raises(ValueError):
            nest_dotted({"controller.th_high": "4.5", "controller": "x"})

    def test_malformed_key(self):
        with pytest.raises(ValueError):
            nest_dotted({"controller..th_high": "4.5"})


class TestFlattenModel:
    def test_round_trip_through_nest(self):
        config = ExperimentConfig()
        flat = flatten_model(config)
        assert flat["controller.th_high"] == config.controller.th_high
        assert flat["seed"] == config.seed
        assert ExperimentConfig.model_validate(nest_dotted(flat)) == config


class TestValidateWithPydantic:
    def test_valid(self):
        assert validate_with_pydantic({"th_low": 1.0, "th_high": 2.0}, ControllerConfig) == (True, None)

    def test_errors_carry_key_path(self):
        passed, errors = validate_with_pydantic({"controller": {"th_high": "high"}}, ExperimentConfig)
        assert not passed
        assert any(e.startswith("controller.th_high") for e in errors)


class TestRunIdentity:
    def test_digest_ignores_seed(self):
        assert config_digest(ExperimentConfig(seed=1)) == config_digest(ExperimentConfig(seed=2))

    def test_digest_tracks_parameters(self):
        a = ExperimentConfig()
        b = ExperimentConfig.model_validate({"controller": {"th_high": 6.0}})
        assert config_digest(a) != config_digest(b)

    def test_run_id(self):
        assert make_run_id("run", "abcdef0123456789", 7) == "run_abcdef012345_7"


class TestCacheManager:
    def test_hit_requires_completed_report(self, tmp_path):
        cache = CacheManager(tmp_path)
        cache.add_run("run_x_1", "run", "digest", 1)
        assert cache.get_cached_run("run", "digest", 1) is None

        cache.update_run_status("run_x_1", "completed")
        assert cache.get_cached_run("run", "digest", 1) is None

        (tmp_path / "run_x_1").mkdir()
        (tmp_path / "run_x_1" / "report.json").write_text("{}")
        assert cache.get_cached_run("run", "digest", 1) == "run_x_1"
        assert cache.get_cached_run("run", "digest", 2) is None
        assert cache.get_cached_run("attack", "digest", 1) is None

    def test_list_and_invalidate(self, tmp_path):
        cache = CacheManager(tmp_path)
        cache.add_run("a", "run", "d1", 1, timestamp="2024-01-01T00:00:00")
        cache.add_run("b", "sweep", "d2", 1, timestamp="2024-01-02T00:00:00")
        assert [r["run_id"] for r in cache.list_runs()] == ["b", "a"]
        assert [r["run_id"] for r in cache.list_runs("run")] == ["a"]
        assert cache.get_run_metadata("b")["mode"] == "sweep"
        assert cache.invalidate_cache("a")
        assert not cache.invalidate_cache("a")

    def test_add_replaces_existing(self, tmp_path):
        cache = CacheManager(tmp_path)
        cache.add_run("a", "run", "d1", 1)
        cache.add_run("a", "run", "d1", 1, status="completed")
        runs = cache.list_runs()
        assert len(runs) == 1 and runs[0]["status"] == "completed"

    def test_corrupted_index(self, tmp_path):
        cache = CacheManager(tmp_path)
        cache.cache_file.write_text("{not json")
        assert cache.list_runs() == []
