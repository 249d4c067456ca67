"""Exception types raised by fpcok.

All of them derive from ``ValueError`` so callers that only care about
"bad input" can catch that; the CLI maps them to exit status 2.
"""


class FpcokError(ValueError):
    """Base class for validation failures."""


class ThresholdOutOfRange(FpcokError):
    """``c log(n)/n`` exceeds ``1 - 1/p``, so no balanced law exists."""


class InfeasibleSize(FpcokError):
    """An exact enumeration would be too large to run."""


class NoFeasibleGamma(FpcokError):
    """Constant selection by bisection did not converge."""


class InvalidProfile(FpcokError):
    """A popular-set profile is empty or otherwise malformed."""
