"""Exception hierarchy for the ring-clock toolkit."""

from __future__ import annotations


class RingClockError(Exception):
    """Base class for all domain errors raised by this package."""


class BadDimension(RingClockError, ValueError):
    pass


class NonPositiveCoupling(RingClockError, ValueError):
    """An ansatz or explicit profile produced a coupling <= 0."""


class DimensionOverflow(RingClockError):
    """A dense matrix would exceed the configured size limit."""


class IllConditioned(RingClockError):
    """Eigendecomposition failed its residual check and no fallback succeeded."""


class ResonantDenominator(RingClockError):
    """A Lyapunov denominator lambda_m + conj(lambda_n) is numerically zero."""


class HorizonTooShort(RingClockError):
    """The time grid ends before the tick density has integrated to one."""


class DegenerateDominant(RingClockError):
    """Two eigenvalues share the maximal real part of a tilted generator."""


class StepUnderflow(RingClockError):
    """Richardson-extrapolated finite differences disagree with the raw estimate."""

    def __init__(self, message: str, coarse: float, extrapolated: float):
        super().__init__(message)
        self.coarse = coarse
        self.extrapolated = extrapolated


class NonUniqueSteadyState(RingClockError):
    """The generator has more than one zero eigenvalue."""


class SolveFailure(RingClockError):
    pass


class CapExceeded(RingClockError):
    """Global optimisation requested above the configured ring-length cap."""


class DegenerateFit(RingClockError, ValueError):
    pass
