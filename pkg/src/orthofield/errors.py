class OrthofieldError(Exception):
    """Base class for all library errors."""


class StructuralError(OrthofieldError, ValueError):
    """Array/window shapes or dimensions disagree."""


class LatticeRangeError(OrthofieldError, IndexError):
    """An index, rectangle or grid point lies outside its allowed range."""


class ParameterError(OrthofieldError, ValueError):
    """A numeric parameter is outside its domain."""


class ArgumentError(OrthofieldError, ValueError):
    """A call received an inconsistent or incomplete argument."""


class CapacityError(OrthofieldError, RuntimeError):
    """Exact enumeration would exceed the configured branch cutoff."""


class ContractError(OrthofieldError, RuntimeError):
    """A model does not meet the precondition of the requested experiment."""


class ConfigError(OrthofieldError, ValueError):
    """Run configuration failed validation; message carries the location."""
