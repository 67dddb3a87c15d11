"""
Layered experiment configuration.

Sources, lowest precedence first:

1. Defaults declared on the schema sections.
2. The config file, flat ``section.key=value`` lines (``#`` comments).
3. ``SCLSIM__SECTION__KEY`` environment variables; a ``.env`` file found
   from the working directory is loaded first.
4. ``--set key=value`` overrides, then the command's mode and ``--seed``.

Every failure surfaces as ConfigError naming the offending key path.
"""

import logging
import os
from pathlib import Path
from typing import Dict, Mapping, Optional, Sequence, Union

from dotenv import find_dotenv, load_dotenv
from pydantic import ValidationError

from sclsim.exceptions import ConfigError
from sclsim.pipeline.world import build_layout
from sclsim.schemas import ExperimentConfig
from sclsim.utils import format_validation_errors, nest_dotted

logger = logging.getLogger(__name__)

ENV_PREFIX = "SCLSIM__"


def parse_config_text(text: str, source: str = "<config>") -> Dict[str, str]:
    """
    Parse flat key=value config text.

    Raises:
        ConfigError: a non-blank line has no '=' or an empty key
    """
    entries: Dict[str, str] = {}
    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep or not key.strip():
            raise ConfigError(f"line {line_no} of {source}: expected key=value, got '{raw.strip()}'")
        entries[key.strip()] = value.strip()
    return entries


def read_config_file(path: Union[str, Path]) -> Dict[str, str]:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file {path} does not exist", "config")
    return parse_config_text(path.read_text(), source=str(path))


def parse_overrides(items: Sequence[str]) -> Dict[str, str]:
    """Turn repeated ``--set key=value`` options into a flat mapping."""
    entries: Dict[str, str] = {}
    for item in items:
        key, sep, value = item.partition("=")
        if not sep or not key.strip():
            raise ConfigError(f"override '{item}' is not of the form key=value", "--set")
        entries[key.strip()] = value.strip()
    return entries


def env_overrides(environ: Mapping[str, str]) -> Dict[str, str]:
    """SCLSIM__CONTROLLER__TH_HIGH=6 -> {'controller.th_high': '6'}"""
    entries: Dict[str, str] = {}
    for name, value in environ.items():
        if not name.startswith(ENV_PREFIX):
            continue
        parts = [p.lower() for p in name[len(ENV_PREFIX):].split("__")]
        entries[".".join(parts)] = value
    return entries


def config_from_flat(flat: Mapping[str, str]) -> ExperimentConfig:
    """Nest and validate a flat dotted-key mapping."""
    try:
        nested = nest_dotted(flat)
    except ValueError as e:
        raise ConfigError(str(e)) from None
    try:
        return ExperimentConfig.model_validate(nested)
    except ValidationError as e:
        errors = format_validation_errors(e)
        key_path, message = errors[0]
        if len(errors) > 1:
            message = f"{message} (+{len(errors) - 1} more)"
            for other_path, other_message in errors[1:]:
                logger.debug(f"config error at {other_path or 'config'}: {other_message}")
        raise ConfigError(message, key_path or "config") from None


def check_mode(config: ExperimentConfig) -> None:
    """Calibration needs the fixed-vs-random detector; every other mode the label-free one."""
    if config.mode == "calibrate" and config.detector.kind != "tvla_fixed_random":
        raise ConfigError("calibrate mode needs tvla_fixed_random", "detector.kind")
    if config.mode != "calibrate" and config.detector.kind != "nicv":
        raise ConfigError(f"{config.mode} mode needs the label-free detector nicv", "detector.kind")


def load_config(
    path: Optional[Union[str, Path]] = None,
    overrides: Optional[Sequence[str]] = None,
    seed: Optional[int] = None,
    mode: Optional[str] = None,
    env: Optional[Mapping[str, str]] = None,
) -> ExperimentConfig:
    """
    Load, merge and validate an experiment configuration.

    Args:
        path: key=value config file (optional)
        overrides: ``key=value`` strings applied after the file and environment
        seed: seed override
        mode: run mode set by the CLI command
        env: environment mapping; None reads os.environ after loading .env

    Returns:
        Validated ExperimentConfig whose floorplan, sensor lattice and ACC
        wiring have been built once

    Raises:
        ConfigError: syntax or validation failure, with the key path
        NotPerfectSquare, GridTooSmall, UnmappedSensor: unbuildable setup
    """
    flat: Dict[str, str] = {}
    if path is not None:
        flat.update(read_config_file(path))
    if env is None:
        load_dotenv(find_dotenv(usecwd=True))
        env = os.environ
    flat.update(env_overrides(env))
    flat.update(parse_overrides(overrides or []))
    if mode is not None:
        flat["mode"] = mode
    if seed is not None:
        flat["seed"] = str(seed)

    config = config_from_flat(flat)
    check_mode(config)
    build_layout(config)
    logger.debug(f"loaded {config.mode} config from {path or 'defaults'} ({len(flat)} keys set)")
    return config
