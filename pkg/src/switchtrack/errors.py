"""Exception hierarchy shared across the package."""


class SwitchtrackError(Exception):
    """Base class for all package-specific errors."""


class DegenerateVector(SwitchtrackError):
    """Vector cannot be normalized (all-zero or non-finite)."""


class DimensionError(SwitchtrackError):
    """Shapes of related objects do not agree."""


class ConfigError(SwitchtrackError):
    """Invalid configuration or out-of-range parameter."""


class AdmissibilityError(SwitchtrackError):
    """A controller emitted controls outside the admissible set."""

    def __init__(self, message: str, round_index: int | None = None):
        super().__init__(message)
        self.round_index = round_index


class SizeError(SwitchtrackError):
    """Instance too large for an exhaustive computation."""


class DataError(SwitchtrackError):
    """Malformed or non-finite input data."""


class HistoryError(SwitchtrackError):
    """Loss history too short for the requested features."""


class TrainingError(SwitchtrackError):
    """Controller training diverged."""

    def __init__(self, message: str, iteration: int | None = None):
        super().__init__(message)
        self.iteration = iteration


class StatsError(SwitchtrackError):
    """Not enough paired observations for a statistic."""


class InternalError(SwitchtrackError):
    """Numerical state that should be unreachable (non-finite intermediate)."""


class CertificateViolation(SwitchtrackError):
    """A regret certificate failed on a realized run (treated as a bug)."""
