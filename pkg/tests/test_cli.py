"""Tests for the sclsim command line."""

import pytest
from typer.testing import CliRunner

from sclsim import __version__
from sclsim.cli import app
from sclsim.exceptions import (
    AllColumnsDegenerate,
    ConfigError,
    GridTooSmall,
    InvalidThresholds,
    MalformedTraceRow,
    NotPerfectSquare,
    UnmappedSensor,
    exit_code_for,
)

from .conftest import FAST_CONFIG

runner = CliRunner()


@pytest.fixture
def config_file(tmp_path):
    path = tmp_path / "fast.conf"
    path.write_text("".join(f"{key} = {value}\n" for key, value in FAST_CONFIG.items()))
    return path


@pytest.fixture(autouse=True)
def clean_env(monkeypatch, tmp_path):
    monkeypatch.chdir(tmp_path)
    for name in ("SCLSIM__SEED", "SCLSIM__N_TRACES", "SCLSIM__CONTROLLER__TH_HIGH"):
        monkeypatch.delenv(name, raising=False)


class TestCommands:
    def test_run(self, config_file, tmp_path):
        out = tmp_path / "runs"
        result = runner.invoke(app, ["run", "--config", str(config_file), "--out", str(out), "--seed", "5"])
        assert result.exit_code == 0, result.output
        run_dirs = [p for p in out.iterdir() if p.is_dir()]
        assert len(run_dirs) == 1
        assert run_dirs[0].name.startswith("run_") and run_dirs[0].name.endswith("_5")
        assert (run_dirs[0] / "report.json").exists()
        assert (run_dirs[0] / "config.conf").exists()
        assert "ACC duty" in result.output

    def test_second_run_is_cached(self, config_file, tmp_path):
        args = ["calibrate", "--config", str(config_file), "--out", str(tmp_path / "runs")]
        assert runner.invoke(app, args).exit_code == 0
        result = runner.invoke(app, args)
        assert result.exit_code == 0
        assert "Cache hit" in result.output

    def test_show(self, config_file, tmp_path):
        out = tmp_path / "runs"
        assert runner.invoke(app, ["run", "--config", str(config_file), "--out", str(out)]).exit_code == 0
        run_dir = next(p for p in out.iterdir() if p.is_dir())
        result = runner.invoke(app, ["show", str(run_dir)])
        assert result.exit_code == 0
        assert "run complete" in result.output

    def test_show_missing(self, tmp_path):
        assert runner.invoke(app, ["show", str(tmp_path / "nothing")]).exit_code == 1

    def test_floorplan(self, config_file):
        result = runner.invoke(app, ["floorplan", "--config", str(config_file)])
        assert result.exit_code == 0
        assert "Sensors and ACCs" in result.output

    def test_floorplan_shows_armed_cells(self, config_file):
        result = runner.invoke(app, ["floorplan", "--config", str(config_file), "--set", "countermeasure.per_acc=2:none"])
        assert result.exit_code == 0
        assert result.output.count("noise_injector") == 3
        assert "No ACC is armed" not in result.output
        result = runner.invoke(app, ["floorplan", "--config", str(config_file), "--set", "countermeasure.kind=none"])
        assert "No ACC is armed" in result.output

    def test_runs_lists_and_invalidates(self, config_file, tmp_path):
        out = tmp_path / "runs"
        assert runner.invoke(app, ["run", "--config", str(config_file), "--out", str(out)]).exit_code == 0
        assert runner.invoke(app, ["calibrate", "--config", str(config_file), "--out", str(out)]).exit_code == 0
        listing = runner.invoke(app, ["runs", "--out", str(out)])
        assert listing.exit_code == 0
        assert "calibrate" in listing.output and "completed" in listing.output

        run_id = next(p.name for p in out.iterdir() if p.name.startswith("run_"))
        dropped = runner.invoke(app, ["runs", "--out", str(out), "--invalidate", run_id])
        assert dropped.exit_code == 0
        assert "No runs recorded" in runner.invoke(app, ["runs", "--out", str(out), "--mode", "run"]).output
        assert runner.invoke(app, ["runs", "--out", str(out), "--invalidate", run_id]).exit_code == 1
        rerun = runner.invoke(app, ["run", "--config", str(config_file), "--out", str(out)])
        assert "Cache hit" not in rerun.output

    def test_runs_empty(self, tmp_path):
        result = runner.invoke(app, ["runs", "--out", str(tmp_path / "none")])
        assert result.exit_code == 0 and "No runs recorded" in result.output

    def test_version(self):
        result = runner.invoke(app, ["version"])
        assert result.exit_code == 0
        assert __version__ in result.output


class TestExitCodes:
    def test_bad_override(self, config_file, tmp_path):
        result = runner.invoke(app, ["run", "--config", str(config_file), "--out", str(tmp_path), "--set", "oops"])
        assert result.exit_code == 2

    def test_invalid_value(self, config_file, tmp_path):
        args = ["run", "--config", str(config_file), "--out", str(tmp_path), "--set", "controller.th_low=9"]
        assert runner.invoke(app, args).exit_code == 2

    def test_not_perfect_square(self, config_file, tmp_path):
        args = ["run", "--config", str(config_file), "--out", str(tmp_path), "--set", "sensors.n_sensors=3"]
        result = runner.invoke(app, args)
        assert result.exit_code == 2
        assert "floorplan" in result.output

    def test_missing_config_file(self, tmp_path):
        result = runner.invoke(app, ["run", "--config", str(tmp_path / "absent.conf"), "--out", str(tmp_path)])
        assert result.exit_code == 2

    @pytest.mark.parametrize("error,code", [
        (ConfigError("bad", "seed"), 2),
        (NotPerfectSquare("n=3"), 2),
        (GridTooSmall("k=5"), 2),
        (InvalidThresholds("th"), 2),
        (UnmappedSensor("s"), 2),
        (AllColumnsDegenerate("flat"), 3),
        (MalformedTraceRow("bad", line=4), 3),
        (RuntimeError("boom"), 1),
    ])
    def test_exit_code_mapping(self, error, code):
        assert exit_code_for(error) == code

    def test_error_message_names_module(self):
        assert str(NotPerfectSquare("n_sensors=3")) == "[floorplan] n_sensors=3"
        assert str(ConfigError("must be >= 0", "sensors.gamma")) == "[harness] sensors.gamma: must be >= 0"
