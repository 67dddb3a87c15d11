"""Cache manager for storing and retrieving simulation run metadata.

This module provides a JSON-based index so that a (mode, config, seed)
combination that already completed is served from disk instead of being
simulated again.
"""

import hashlib
import json
from datetime import datetime
from pathlib import Path
from typing import Any, Dict, List, Optional

from sclsim.schemas import ExperimentConfig


def config_digest(config: ExperimentConfig) -> str:
    """sha256 of the canonical config JSON, seed excluded."""
    canonical = json.dumps(config.model_dump(mode="json", exclude={"seed"}), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode()).hexdigest()


def make_run_id(mode: str, digest: str, seed: int) -> str:
    return f"{mode}_{digest[:12]}_{seed}"


class CacheManager:
    """Manages run caching using a JSON-based index."""

    def __init__(self, data_dir: Path):
        """Initialize cache manager.

        Args:
            data_dir: Output directory containing run directories
        """
        self.data_dir = Path(data_dir)
        self.cache_file = self.data_dir / "runs.json"

        self.data_dir.mkdir(parents=True, exist_ok=True)
        if not self.cache_file.exists():
            self._write_cache({"runs": []})

    def _read_cache(self) -> Dict[str, Any]:
        try:
            with open(self.cache_file, 'r') as f:
                return json.load(f)
        except (json.JSONDecodeError, FileNotFoundError):
            # Corrupted or missing index: start over
            return {"runs": []}

    def _write_cache(self, cache_data: Dict[str, Any]) -> None:
        with open(self.cache_file, 'w') as f:
            json.dump(cache_data, f, indent=2)

    @staticmethod
    def _generate_cache_key(mode: str, digest: str, seed: int) -> str:
        """Format: mode:config_digest:seed"""
        return f"{mode}:{digest}:{seed}"

    def get_cached_run(self, mode: str, digest: str, seed: int) -> Optional[str]:
        """Check if a completed run exists whose report is still on disk.

        Returns:
            run_id if cache hit, None if cache miss
        """
        cache_key = self._generate_cache_key(mode, digest, seed)
        for run in self._read_cache().get("runs", []):
            run_key = self._generate_cache_key(run["mode"], run["config_digest"], run["seed"])
            if run_key == cache_key and run["status"] == "completed":
                if (self.data_dir / run["run_id"] / "report.json").exists():
                    return run["run_id"]
        return None

    def add_run(
        self,
        run_id: str,
        mode: str,
        digest: str,
        seed: int,
        timestamp: Optional[str] = None,
        status: str = "initializing",
    ) -> None:
        """Add (or replace) a run in the index."""
        cache_data = self._read_cache()
        cache_data["runs"] = [r for r in cache_data["runs"] if r["run_id"] != run_id]
        cache_data["runs"].append({
            "run_id": run_id,
            "mode": mode,
            "config_digest": digest,
            "seed": seed,
            "timestamp": timestamp or datetime.now().isoformat(),
            "status": status,
            "run_dir": str(self.data_dir / run_id),
        })
        # Newest first
        cache_data["runs"].sort(key=lambda r: r["timestamp"], reverse=True)
        self._write_cache(cache_data)

    def update_run_status(self, run_id: str, status: str) -> None:
        cache_data = self._read_cache()
        for run in cache_data["runs"]:
            if run["run_id"] == run_id:
                run["status"] = status
                break
        self._write_cache(cache_data)

    def list_runs(self, mode: Optional[str] = None) -> List[Dict[str, Any]]:
        runs = self._read_cache().get("runs", [])
        if mode:
            runs = [r for r in runs if r["mode"] == mode]
        return runs

    def get_run_metadata(self, run_id: str) -> Optional[Dict[str, Any]]:
        for run in self._read_cache()["runs"]:
            if run["run_id"] == run_id:
                return run
        return None

    def invalidate_cache(self, run_id: str) -> bool:
        """Remove a run from the index.

        Returns:
            True if run was found and removed, False otherwise
        """
        cache_data = self._read_cache()
        remaining = [r for r in cache_data["runs"] if r["run_id"] != run_id]
        if len(remaining) == len(cache_data["runs"]):
            return False
        cache_data["runs"] = remaining
        self._write_cache(cache_data)
        return True
