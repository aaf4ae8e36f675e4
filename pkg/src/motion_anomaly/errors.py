"""Exception types raised across the package."""


class FormatError(ValueError):
    """A file does not follow its declared binary or text layout."""


class DataError(ValueError):
    """Input values are structurally valid but numerically unusable."""


class StateError(RuntimeError):
    """An operation was requested on an object that is not ready for it."""


class ConfigError(ValueError):
    """A pipeline configuration is invalid or cannot be parsed."""


class EvaluationError(ValueError):
    """Ground truth cannot support the requested metric."""
