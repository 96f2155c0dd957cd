"""Exception hierarchy for laplab."""


class LapLabError(Exception):
    """Base class for all laplab errors."""


class GridError(LapLabError):
    """Invalid grid construction parameters."""


class PotentialError(LapLabError):
    """Unknown potential family, bad parameters, or non-finite samples."""


class ShellCountError(LapLabError):
    """Too few complete dyadic shells for the requested classification."""


class PhaseError(LapLabError):
    """Phase construction failed (branch inconsistency or unsatisfiable onset)."""


class WeightClassError(LapLabError):
    """A weight function violates its declared class constraints."""


class SolveError(LapLabError):
    """A linear solve could not be completed or verified."""


class EigenvalueProximityError(SolveError):
    """Spectral parameter too close to a detected eigenvalue of the closed system."""


class ExtrapolationError(LapLabError):
    """Limit extrapolation refused (non-monotone or insufficient data)."""


class TruncationLimitedError(LapLabError):
    """Requested verdict withheld because data is truncation-limited."""


class ConfigError(LapLabError):
    """Malformed configuration file or override."""
