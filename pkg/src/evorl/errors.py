"""Exception types shared across the package."""


class EvoRLError(Exception):
    """Base class for all errors raised by :mod:`evorl`."""


class InvalidArgumentError(EvoRLError, ValueError):
    """An argument violates an operation's precondition."""


class ProtocolError(EvoRLError, RuntimeError):
    """An object was used out of order (e.g. stepping a finished episode)."""


class NumericFaultError(EvoRLError, ArithmeticError):
    """A computation produced a non-finite value."""


class ConfigError(EvoRLError, ValueError):
    """A run configuration is invalid."""


class SchemaError(EvoRLError, ValueError):
    """A serialized artifact has an unexpected layout or version."""
