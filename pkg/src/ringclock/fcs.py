"""Full counting statistics of the tick counter at finite entropy production.

The tilted generator ``L(chi, delta)`` has a unique eigenvalue ``lam(chi)`` of
maximal real part; its first two ``chi`` derivatives at zero give the tick current
``-i lam'`` and diffusion ``-lam''``.  The ``delta`` dependence is expanded with a
Drazin-inverse perturbation recursion around the irreversible generator.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

from .errors import DegenerateDominant, NonUniqueSteadyState, StepUnderflow
from .model import (
    DEFAULT_LIMITS,
    Limits,
    RingClockModel,
    liouvillian,
    liouvillian_parts,
    unvec,
    vec,
)

ZERO_RTOL = 1e-9
DOMINANT_RTOL = 1e-10
DEFAULT_CHI_STEP = 3e-3


@dataclass(frozen=True)
class CountingResult:
    current: float
    diffusion: float
    precision_sigma: float
    sigma_tick: float
    chi_step: float
    delta: float = 0.0

    @property
    def tur_ratio(self) -> float:
        """``N_sigma / (sigma_tick / 2)``; zero when the entropy per tick is infinite."""
        if math.isinf(self.sigma_tick):
            return 0.0
        return self.precision_sigma / (0.5 * self.sigma_tick) if self.sigma_tick > 0 else math.inf


@dataclass(frozen=True)
class PerturbationTable:
    """Expansion of ``lam(chi, delta)`` around ``chi = delta = 0``.

    ``lam[i][k]`` is the mixed derivative ``d^i/dchi^i d^k/ddelta^k lam`` (so
    ``-i lam[1][0] = 1/E[T]`` and ``-lam[2][0] = Var[T]/E[T]^3``).  ``omega[i][k]``
    are the Taylor-coefficient matrices of the dominant eigenvector, normalised so
    that ``tr omega[0][0] = 1`` and all other traces vanish.
    """

    lam: np.ndarray  # shape (3, k_max + 1), complex
    omega: list

    @property
    def k_max(self) -> int:
        return self.lam.shape[1] - 1

    def current(self, delta: float) -> float:
        k = np.arange(self.k_max + 1)
        terms = self.lam[1] * delta ** k / np.array([math.factorial(int(j)) for j in k])
        return float((-1j * np.sum(terms)).real)

    def diffusion(self, delta: float) -> float:
        k = np.arange(self.k_max + 1)
        terms = self.lam[2] * delta ** k / np.array([math.factorial(int(j)) for j in k])
        return float((-np.sum(terms)).real)

    def precision(self, delta: float) -> float:
        return self.current(delta) / self.diffusion(delta)


@dataclass(frozen=True)
class GapResult:
    n: int
    gap: float
    method: str = "DenseEig"
    delta: float = 0.0


def _zero_tolerance(eigs: np.ndarray) -> float:
    return ZERO_RTOL * max(float(np.max(np.abs(eigs))), 1.0)


def _refine(l: np.ndarray, lam0: complex, iters: int = 3) -> complex:
    """Two-sided inverse iteration at a fixed shift, finished with a Rayleigh quotient."""
    N = l.shape[0]
    shift = lam0 + 1e-14 * max(1.0, abs(lam0))
    lu = sla.lu_factor(l - shift * np.eye(N), check_finite=False)
    rng = np.random.default_rng(0)
    r = rng.standard_normal(N) + 1j * rng.standard_normal(N)
    y = r.copy()
    for _ in range(iters):
        r = sla.lu_solve(lu, r, check_finite=False)
        r /= np.linalg.norm(r)
        y = sla.lu_solve(lu, y, trans=2, check_finite=False)
        y /= np.linalg.norm(y)
    if not (np.all(np.isfinite(r)) and np.all(np.isfinite(y))):
        return lam0
    denom = np.vdot(y, r)
    if abs(denom) < 1e-12:
        return lam0
    return complex(np.vdot(y, l @ r) / denom)


def dominant_eigenvalue(l: np.ndarray, refine: bool = True) -> complex:
    """Eigenvalue of maximal real part of a tilted generator.

    The full dense spectrum identifies the eigenvalue and checks it is isolated;
    two-sided inverse iteration then polishes it, which matters when the value is
    differenced at small counting fields.
    """
    eigs = sla.eigvals(l, check_finite=False)
    order = np.argsort(-eigs.real)
    top = eigs[order[0]]
    if eigs.size > 1:
        second = eigs[order[1]]
        tol = DOMINANT_RTOL * max(float(np.max(np.abs(eigs))), 1.0)
        if abs(second.real - top.real) < tol:
            raise DegenerateDominant(
                f"two eigenvalues share the maximal real part: {top!r}, {second!r}"
            )
    return _refine(l, complex(top)) if refine else complex(top)


def _parts(model: RingClockModel, limits: Limits):
    return liouvillian_parts(model, limits, sparse=True)


def _lambda_of_chi(parts, delta: float, chi: float) -> complex:
    L0, Lp, Lml, Lm = parts
    L = L0 + np.exp(1j * chi) * Lp
    if delta:
        L = L + delta * (Lml + np.exp(-1j * chi) * Lm)
    return dominant_eigenvalue(L.toarray())


def counting_cumulants(
    model: RingClockModel,
    delta: float | None = None,
    h: float = DEFAULT_CHI_STEP,
    rtol: float = 1e-3,
    limits: Limits = DEFAULT_LIMITS,
) -> CountingResult:
    """Asymptotic tick current and diffusion from ``chi`` derivatives of ``lam(chi)``.

    Central differences at steps ``h`` and ``h/2`` combined by one Richardson step.
    ``lam(0) = 0`` exactly by trace preservation and is not recomputed.
    """
    delta = model.delta if delta is None else float(delta)
    parts = _parts(model, limits)
    lam = {c: _lambda_of_chi(parts, delta, c) for c in (h, -h, h / 2, -h / 2)}

    def first(s):
        return (lam[s] - lam[-s]) / (2 * s)

    def second(s):
        return (lam[s] + lam[-s]) / s ** 2

    d1 = [(-1j * first(s)).real for s in (h, h / 2)]
    d2 = [(-second(s)).real for s in (h, h / 2)]
    current = (4 * d1[1] - d1[0]) / 3
    diffusion = (4 * d2[1] - d2[0]) / 3
    for name, raw, ext in (("current", d1[1], current), ("diffusion", d2[1], diffusion)):
        if abs(raw - ext) > rtol * abs(ext):
            raise StepUnderflow(f"{name}: Richardson estimate {ext!r} vs raw {raw!r}", raw, ext)
    sigma = math.inf if delta == 0 else -math.log(delta)
    return CountingResult(
        current=current,
        diffusion=diffusion,
        precision_sigma=current / diffusion,
        sigma_tick=sigma,
        chi_step=h,
        delta=delta,
    )


def entropy_delta(n: int, beta: float) -> tuple[float, float]:
    """``delta = n^-beta`` and ``sigma_tick = beta ln n``."""
    if beta < 0:
        raise ValueError("beta must be non-negative")
    if math.isinf(beta):
        return 0.0, math.inf
    return float(n) ** (-beta), beta * math.log(n)


def precision_sigma(model: RingClockModel, beta: float, **kwargs) -> CountingResult:
    """Counting statistics with the entropy schedule ``delta = n^-beta``."""
    delta, _ = entropy_delta(model.n, beta)
    return counting_cumulants(model.with_delta(delta), delta, **kwargs)


def steady_state(l0: np.ndarray) -> np.ndarray:
    """Trace-one null vector of a trace-preserving generator, as a matrix."""
    N = l0.shape[0]
    n = math.isqrt(N)
    M = np.array(l0, dtype=complex, copy=True)
    # row 0 belongs to rho_00, whose equation is implied by the others plus trace preservation
    M[0, :] = vec(np.eye(n))
    rhs = np.zeros(N, dtype=complex)
    rhs[0] = 1.0
    rho = unvec(sla.solve(M, rhs, check_finite=False))
    rho = 0.5 * (rho + rho.conj().T)
    return rho / np.trace(rho).real


def drazin_inverse(l0: np.ndarray, check: bool = True) -> np.ndarray:
    """Drazin (group) inverse of a generator with a unique, semisimple zero eigenvalue.

    With ``P = |vec rho_ss><vec I|`` the spectral projector on the null space,
    ``L^+ = (L + P)^{-1} - P``; it satisfies ``L L^+ = L^+ L = 1 - P``.
    """
    l0 = np.asarray(l0, dtype=complex)
    N = l0.shape[0]
    n = math.isqrt(N)
    if check:
        eigs = sla.eigvals(l0, check_finite=False)
        zeros = int(np.sum(np.abs(eigs) <= _zero_tolerance(eigs)))
        if zeros != 1:
            raise NonUniqueSteadyState(f"{zeros} zero eigenvalues; a unique steady state is required")
    ss = vec(steady_state(l0))
    P = np.outer(ss, vec(np.eye(n)).conj())
    return sla.inv(l0 + P, check_finite=False) - P


def perturbation_coefficients(
    model: RingClockModel, k_max: int = 4, limits: Limits = DEFAULT_LIMITS
) -> PerturbationTable:
    """Double series of ``lam(chi, delta)`` to second order in ``chi`` and ``k_max`` in ``delta``.

    Order by order, with ``L_km`` the Taylor blocks of the tilted generator,
    ``lam_ij = tr sum' L_km w_{i-k, j-m}`` and
    ``w_ij = L00^+ sum' (lam_km - L_km) w_{i-k, j-m}`` where ``sum'`` omits
    ``(k, m) = (0, 0)``.  Only ``m <= 1`` blocks are non-zero.
    """
    if not 0 <= k_max <= 6:
        raise ValueError("k_max must lie in 0..6")
    L0, Lp, Lml, Lm = (p.toarray() for p in _parts(model, limits))
    n = model.n
    trace_row = vec(np.eye(n)).conj()

    def block(k: int, m: int):
        if m == 0:
            out = (1j ** k / math.factorial(k)) * Lp
            return out + L0 if k == 0 else out
        out = ((-1j) ** k / math.factorial(k)) * Lm
        return out + Lml if k == 0 else out

    blocks = {(k, m): block(k, m) for k in range(3) for m in range(2)}
    dplus = drazin_inverse(blocks[(0, 0)])
    w = {(0, 0): vec(steady_state(blocks[(0, 0)]))}
    taylor = np.zeros((3, k_max + 1), dtype=complex)
    for i in range(3):
        for j in range(k_max + 1):
            if (i, j) == (0, 0):
                continue
            src = np.zeros_like(w[(0, 0)])
            for k in range(i + 1):
                for m in range(min(1, j) + 1):
                    if (k, m) != (0, 0):
                        src += blocks[(k, m)] @ w[(i - k, j - m)]
            taylor[i, j] = trace_row @ src
            mix = np.zeros_like(src)
            for k in range(i + 1):
                for m in range(j + 1):
                    if (k, m) != (0, 0):
                        mix += taylor[k, m] * w[(i - k, j - m)]
            w[(i, j)] = dplus @ (mix - src)
    scale = np.array([[math.factorial(i) * math.factorial(j) for j in range(k_max + 1)] for i in range(3)])
    omega = [[unvec(w[(i, j)]) for j in range(k_max + 1)] for i in range(3)]
    return PerturbationTable(lam=taylor * scale, omega=omega)


def spectral_gap(model: RingClockModel, delta: float = 0.0, limits: Limits = DEFAULT_LIMITS) -> GapResult:
    """Smallest non-zero eigenvalue magnitude of ``L(0, delta)``."""
    if model.n < 2:
        raise ValueError("a one-site ring has a 1x1 generator with no non-zero eigenvalue")
    l = liouvillian(model, 0.0, delta, limits)
    eigs = sla.eigvals(l, overwrite_a=True, check_finite=False)
    mags = np.abs(eigs)
    tol = _zero_tolerance(eigs)
    zeros = int(np.sum(mags <= tol))
    if zeros != 1:
        raise NonUniqueSteadyState(f"{zeros} zero eigenvalues in L(0, {delta})")
    return GapResult(n=model.n, gap=float(np.min(mags[mags > tol])), delta=delta)
