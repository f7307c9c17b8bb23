"""Exception types shared across the package."""


class SnipalignError(Exception):
    """Base class for all package-specific errors."""


class DimensionError(SnipalignError, ValueError):
    """Operand shapes do not conform."""


class ArgumentError(SnipalignError, ValueError):
    """An argument value is invalid."""


class ConfigurationError(SnipalignError, ValueError):
    """A run configuration is infeasible; raised before any training step."""


class DataFormatError(SnipalignError, ValueError):
    """A feature file or manifest is missing, malformed, or inconsistent."""


class SequencingError(SnipalignError, RuntimeError):
    """An operation was invoked before the state it depends on existed."""


class InferenceError(SnipalignError, ValueError):
    """A video cannot be evaluated (e.g. fewer frames than the clip length)."""


class DivergenceError(SnipalignError, RuntimeError):
    """A non-finite value surfaced during training or gradient checking."""
