"""Semantic exception hierarchy shared across the lab."""


class HorizonLabError(Exception):
    """Base class for all lab-specific failures."""


class InvalidInputError(HorizonLabError, ValueError):
    """An argument or configuration value violates a stated precondition."""


class NoSignalError(HorizonLabError):
    """A trace contains too little usable signal to fit anything."""


class ContractViolationError(HorizonLabError):
    """Caller broke an interface contract (e.g. stepping a terminal episode)."""


class ResourceLimitError(HorizonLabError):
    """An exact computation would exceed the configured enumeration budget."""


class UndefinedIndicatorError(HorizonLabError):
    """A diagnostic indicator is undefined at this point (reported as saturated)."""


class IntegrityError(HorizonLabError):
    """A run directory or manifest is missing, corrupt, or inconsistent."""
