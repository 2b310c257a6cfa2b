"""Exception hierarchy shared by all modules."""


class MetalGraphError(Exception):
    """Base class for all package-specific errors."""


class InvalidArgumentError(MetalGraphError, ValueError):
    """An argument violates a documented precondition."""


class FormatError(MetalGraphError):
    """A file does not conform to its on-disk format."""


class DataError(MetalGraphError):
    """Input data is readable but semantically unusable (e.g. no metal)."""


class EmptyMetalError(DataError):
    """A metal mask with no set bits was given where one is required."""


class StateError(MetalGraphError, RuntimeError):
    """An object was used before reaching the required state."""
