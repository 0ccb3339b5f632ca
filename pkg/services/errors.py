"""
services/errors.py - Exception types raised by the evaluation services.

Callers that only care about bad input can keep catching ValueError; the
pipeline catches LatentAuditError per sample and records the message.
"""


class LatentAuditError(Exception):
    """Base class for every error raised by this package."""


class DimensionMismatchError(LatentAuditError, ValueError):
    """A layer received an input whose width does not match its weights."""

    def __init__(self, layer_index, expected, received):
        self.layer_index = layer_index
        self.expected = expected
        self.received = received
        super().__init__(
            f"layer {layer_index}: expected input width {expected}, got {received}"
        )


class ShapeMismatchError(LatentAuditError, ValueError):
    """Two tensors that must share a shape do not."""


class SpecParseError(LatentAuditError, ValueError):
    """A generator spec file could not be parsed."""

    def __init__(self, message, path=None, line=None, field=None):
        self.path = path
        self.line = line
        self.field = field
        location = str(path) if path is not None else "<spec>"
        if line is not None:
            location = f"{location}:{line}"
        if field is not None:
            location = f"{location} [{field}]"
        super().__init__(f"{location}: {message}")


class InvariantViolationError(LatentAuditError, ValueError):
    """A structurally valid object breaks one of its invariants."""

    def __init__(self, invariant, detail=""):
        self.invariant = invariant
        message = f"invariant violated: {invariant}"
        if detail:
            message = f"{message} ({detail})"
        super().__init__(message)


class DatasetError(LatentAuditError, ValueError):
    """A dataset file is malformed, empty or incompatible with the generator."""


class ConfigError(LatentAuditError, ValueError):
    """A configuration value is invalid."""


class DivergenceError(LatentAuditError):
    """The inversion objective became non-finite."""

    def __init__(self, iteration, value):
        self.iteration = iteration
        self.value = value
        super().__init__(f"objective diverged at iteration {iteration} (value {value})")


class ScheduleError(LatentAuditError):
    """The sigma schedule could not find a level with enough hits."""


class InterpolationError(LatentAuditError, ValueError):
    """Polar interpolation is undefined for the given endpoints."""
