"""Exception types shared across the package."""


class ThermofuseError(Exception):
    """Base class for all package-specific errors."""


class ShapeError(ThermofuseError, ValueError):
    """Array extents violate an operation's shape contract."""


class FormatError(ThermofuseError, ValueError):
    """A serialized file is malformed (bad magic, truncation, bad header)."""


class ValidationError(ThermofuseError, ValueError):
    """Input data violates a documented invariant (ranges, bounds, schema)."""


class StateError(ThermofuseError, RuntimeError):
    """An operation was invoked in a state where it is undefined."""
