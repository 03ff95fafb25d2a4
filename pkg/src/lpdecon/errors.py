"""Exception hierarchy shared by all modules."""


class DeconError(Exception):
    """Base class for every error raised by :mod:`lpdecon`."""

    exit_code = 1


class InvalidArgumentError(DeconError, ValueError):
    """An argument is outside its documented domain."""


class ResourceGuardError(DeconError):
    """A request would enumerate or allocate more than the configured guard."""

    exit_code = 3


class UnsupportedModelError(DeconError):
    """The noise model has no closed form for the requested quantity."""

    exit_code = 2


class IllPosedModelError(DeconError):
    """The noise characteristic function vanishes where it must be inverted."""

    exit_code = 2


class AssumptionViolationError(DeconError):
    """A noise assumption required by the chosen loss does not hold."""

    exit_code = 2


class DataRangeError(DeconError, ValueError):
    """Observations fall outside the evaluation grid."""


class ConfigurationError(DeconError):
    """The run configuration admits no candidate or is inconsistent."""


class NumericalGuardError(DeconError):
    """A numerical guard (memory, truncation) was tripped."""

    exit_code = 3


class InvalidDataError(DeconError, ValueError):
    """Input data cannot be used (empty file, nonpositive risks, ...)."""
