"""Exception types shared across the package.

The CLI maps ConfigurationError to exit code 1 and NumericError to exit
code 2; everything else is a bug.
"""


class ContextRlError(Exception):
    """Base class for all package errors."""


class ConfigurationError(ContextRlError):
    """Invalid specs, configs, or arguments."""


class ShapeError(ContextRlError):
    """Array dimensions do not agree."""


class NumericError(ContextRlError):
    """A computation produced NaN/Inf or otherwise left the finite domain."""


class EmptyBufferError(ContextRlError):
    """Sampling was requested from a buffer with no data."""


class TaskMismatchError(ContextRlError):
    """A transition was routed to a buffer belonging to a different task."""


class EpisodeDoneError(ContextRlError):
    """step() was called on a state whose episode already ended."""
