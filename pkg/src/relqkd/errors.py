"""Exception hierarchy shared by the simulator modules."""


class RelQKDError(Exception):
    """Base class for all package errors."""


class DomainError(RelQKDError, ValueError):
    """An argument lies outside the mathematical domain of an operation."""


class ConfigError(RelQKDError, ValueError):
    """Invalid experiment configuration or geometry."""


class CausalityViolation(RelQKDError):
    """A strategy asked for information outside its past light cone."""


class StrategyError(RelQKDError):
    """A strategy returned a decision the engine cannot apply."""


class CalibrationError(RelQKDError):
    """A calibration target cannot be reached with the given model."""
