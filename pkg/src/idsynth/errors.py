"""Exception types shared across the package."""


class IdsynthError(Exception):
    """Base class for all errors raised by this package."""


class ValidationError(IdsynthError):
    """An input violates a documented precondition or invariant."""


class ConfigurationError(IdsynthError):
    """A config file or config object is malformed or inconsistent."""


class LoadError(IdsynthError):
    """A dataset, image, checkpoint, or detector file cannot be loaded."""


class TrainingError(IdsynthError):
    """Training aborted, e.g. because a loss became non-finite."""
