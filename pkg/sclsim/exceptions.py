"""
Error hierarchy for sclsim.

Every error raised by the simulator derives from SimulationError and carries
the tag of the module that raised it, so the CLI can print a single
``[module] message`` line and pick an exit code:

1. Configuration and construction errors (ConfigError, NotPerfectSquare,
   GridTooSmall, InvalidThresholds, UnmappedSensor) exit with code 2.
2. Any other SimulationError exits with code 3.
3. Unexpected exceptions and KeyboardInterrupt exit with code 1.
"""

from typing import Optional


class SimulationError(Exception):
    """Root of all simulator errors."""

    module: str = "sclsim"

    def __init__(self, message: str, *, module: Optional[str] = None):
        super().__init__(message)
        self.message = message
        if module is not None:
            self.module = module

    def __str__(self) -> str:
        return f"[{self.module}] {self.message}"


# ============================================================================
# CONFIGURATION
# ============================================================================

class ConfigError(SimulationError):
    """Invalid configuration value, file syntax or override."""

    module = "harness"

    def __init__(self, message: str, key_path: Optional[str] = None, *, module: Optional[str] = None):
        self.key_path = key_path
        super().__init__(f"{key_path}: {message}" if key_path else message, module=module)


# ============================================================================
# FLOORPLAN
# ============================================================================

class NotPerfectSquare(SimulationError):
    """Sensor count is not a positive perfect square."""

    module = "floorplan"


class GridTooSmall(SimulationError):
    """Sensor lattice side exceeds the grid side."""

    module = "floorplan"


# ============================================================================
# DETECTION / ATTACK STATISTICS
# ============================================================================

class InsufficientSamples(SimulationError):
    module = "detection"


class DegenerateVariance(SimulationError):
    module = "detection"


class LengthMismatch(SimulationError):
    module = "attack"


class AllColumnsDegenerate(SimulationError):
    """Every sample column of an attack trace set has zero variance."""

    module = "attack"


# ============================================================================
# CONTROLLER
# ============================================================================

class InvalidThresholds(SimulationError):
    module = "controller"


class UnmappedSensor(SimulationError):
    module = "controller"


# ============================================================================
# TRACE FILES
# ============================================================================

class TraceFileError(SimulationError):
    """Base for trace import failures."""

    module = "harness"


class EmptyTraceFile(TraceFileError):
    pass


class MalformedTraceRow(TraceFileError):
    """A row (or the header) of a trace file cannot be parsed."""

    def __init__(self, message: str, line: int):
        self.line = line
        super().__init__(f"line {line}: {message}")


class TraceDimensionMismatch(TraceFileError):
    pass


# Errors that indicate a bad configuration or an unbuildable setup.
CONFIGURATION_ERRORS = (ConfigError, NotPerfectSquare, GridTooSmall, InvalidThresholds, UnmappedSensor)


def exit_code_for(error: BaseException) -> int:
    """Map an exception to the CLI exit code."""
    if isinstance(error, CONFIGURATION_ERRORS):
        return 2
    if isinstance(error, SimulationError):
        return 3
    return 1
