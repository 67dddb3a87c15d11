"""Run index and result cache."""

from .manager import CacheManager, config_digest, make_run_id

__all__ = ["CacheManager", "config_digest", "make_run_id"]
