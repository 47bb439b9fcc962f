"""Waiting-time statistics of ticks.

The no-jump generator ``L0 rho = A rho + rho A^dag`` with ``A = -i H_eff`` fixes the
survival probability ``P[T >= t] = tr exp(L0 t) rho0`` and the moments
``E[T^k] = (-1)^k k! tr[L0^{-k} rho0]``.  ``rho_k = L0^{-k} rho0`` is obtained by
repeatedly solving the Lyapunov equation ``A rho_k + rho_k A^dag = rho_{k-1}``.
With ``A = V diag(lam) V^{-1}`` each step is an entrywise division in the
eigenbasis, ``sigma_k = sigma_{k-1} / (lam_m + conj(lam_n))``.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
from scipy.integrate import trapezoid

from .errors import HorizonTooShort, IllConditioned, ResonantDenominator
from .model import (
    DEFAULT_LIMITS,
    Limits,
    RingClockModel,
    effective_hamiltonian,
    gauged_generator,
)

EIG_RTOL = 1e-8
RESONANCE_RTOL = 1e-13
DIRECT_RTOL = 1e-6


@dataclass(frozen=True)
class TickStatistics:
    mean_t: float
    var_t: float
    moments: tuple
    precision_inf: float
    solver: str  # "Diagonalized" or "DirectSolve"
    residual: float

    def __post_init__(self):
        if not (self.mean_t > 0 and self.var_t > 0):
            raise ValueError(f"non-positive waiting-time statistics: E={self.mean_t}, Var={self.var_t}")


@dataclass(frozen=True)
class PdfCurve:
    times: np.ndarray
    density: np.ndarray
    survival: np.ndarray

    def integral(self) -> float:
        return float(trapezoid(self.density, self.times))


class _Eigensystem:
    """Verified eigendecomposition ``A V = V diag(lam)`` of a square matrix."""

    def __init__(self, A: np.ndarray, rtol: float = EIG_RTOL):
        self.A = A
        lam, V = sla.eig(A, check_finite=False)
        scale = max(np.max(np.abs(A)), np.finfo(float).tiny)
        # generators here are tridiagonal plus corners: sparse product keeps this O(n^2)
        resid = np.max(np.abs(sp.csr_matrix(A) @ V - V * lam)) if A.size else 0.0
        # eigenvectors are unit-norm, so this is a relative residual
        self.residual = float(resid / scale)
        if not np.isfinite(self.residual) or self.residual > rtol:
            raise IllConditioned(f"eigenvector residual {self.residual:.3e} exceeds {rtol:.1e}")
        self.lam = lam
        self.V = V
        self._lu = sla.lu_factor(V, check_finite=False)

    def to_eigbasis(self, x: np.ndarray) -> np.ndarray:
        return sla.lu_solve(self._lu, x, check_finite=False)

    def denominators(self) -> np.ndarray:
        den = self.lam[:, None] + self.lam.conj()[None, :]
        floor = RESONANCE_RTOL * max(np.max(np.abs(self.lam)), 1.0)
        if np.min(np.abs(den)) < floor:
            raise ResonantDenominator(
                f"|lam_m + conj(lam_n)| = {np.min(np.abs(den)):.3e} below {floor:.1e}"
            )
        return den


def _direct_lyapunov(A: np.ndarray, rhs: np.ndarray, limits: Limits = DEFAULT_LIMITS) -> np.ndarray:
    """Dense solve of ``A X + X A^dag = rhs``.

    Uses the vectorised ``n^2`` system while it fits the superoperator limit and
    Bartels-Stewart (Schur based) beyond it.
    """
    n = A.shape[0]
    if n <= limits.superop_n:
        I = np.eye(n)
        K = np.kron(I, A) + np.kron(A.conj(), I)
        with warnings.catch_warnings():
            warnings.simplefilter("error", sla.LinAlgWarning)
            try:
                x = sla.solve(K, rhs.reshape(-1, order="F"))
            except (sla.LinAlgWarning, np.linalg.LinAlgError) as exc:
                raise IllConditioned(f"vectorised Lyapunov system is singular: {exc}") from exc
        return x.reshape((n, n), order="F")
    return sla.solve_continuous_lyapunov(A, rhs)


def _hermitize(X: np.ndarray) -> np.ndarray:
    return 0.5 * (X + X.conj().T)


def _lyapunov_residual(A, X, rhs) -> float:
    r = A @ X + X @ A.conj().T - rhs
    return float(np.max(np.abs(r)) / max(np.max(np.abs(rhs)), np.finfo(float).tiny))


def conditional_propagate(h_eff: np.ndarray, psi0: np.ndarray, t) -> np.ndarray:
    """Apply ``exp(-i H_eff t)`` to ``psi0``.

    ``t`` may be a scalar or a 1-d array; for an array the result has shape
    ``(n, len(t))``.  Falls back to ``scipy.linalg.expm`` when the
    eigendecomposition fails its residual check.
    """
    psi0 = np.asarray(psi0, dtype=complex)
    ts = np.atleast_1d(np.asarray(t, dtype=float))
    if np.any(ts < 0):
        raise ValueError("propagation time must be non-negative")
    A = -1j * np.asarray(h_eff, dtype=complex)
    try:
        es = _Eigensystem(A)
        c = es.to_eigbasis(psi0)
        out = es.V @ (np.exp(np.outer(es.lam, ts)) * c[:, None])
        # t = 0 must be the identity exactly
        out[:, ts == 0] = psi0[:, None]
    except IllConditioned:
        out = np.column_stack([sla.expm(A * tk) @ psi0 for tk in ts])
        if not np.all(np.isfinite(out)):
            raise
    return out[:, 0] if np.ndim(t) == 0 else out


def default_time_grid(model: RingClockModel) -> np.ndarray:
    """``[0, 3 n / (2 g) + 20 / gamma]`` with ``10 n`` points (at least 200)."""
    n = model.n
    g = model.profile.bulk_coupling()
    t_max = 3.0 * n / (2.0 * g) + 20.0 / model.gamma
    return np.linspace(0.0, t_max, max(10 * n, 200))


def tick_pdf(model: RingClockModel, times=None, tol: float = 1e-3, check_horizon: bool = True) -> PdfCurve:
    """Tick density and survival probability starting from ``|0>``.

    At ``delta > 0`` the density counts the first jump in either direction,
    ``p(t) = gamma |psi_{n-1}|^2 + delta gamma |psi_0|^2``.
    """
    times = default_time_grid(model) if times is None else np.asarray(times, dtype=float)
    if times.ndim != 1 or times[0] != 0 or np.any(np.diff(times) <= 0):
        raise ValueError("times must be an increasing grid starting at 0")
    n = model.n
    psi0 = np.zeros(n, dtype=complex)
    psi0[0] = 1.0
    psi = conditional_propagate(effective_hamiltonian(model), psi0, times)
    amp2 = np.abs(psi) ** 2
    survival = np.minimum(np.sum(amp2, axis=0), 1.0)
    survival = np.minimum.accumulate(survival)
    density = model.gamma * amp2[n - 1] + model.delta * model.gamma * amp2[0]
    curve = PdfCurve(times=times, density=density, survival=survival)
    if check_horizon and survival[-1] > tol:
        raise HorizonTooShort(
            f"survival {survival[-1]:.3e} at t={times[-1]:.4g}; extend the grid beyond ~n/(2g)"
        )
    return curve


def lyapunov_step(h_eff: np.ndarray, rho_prev: np.ndarray) -> np.ndarray:
    """Solve ``(-i H_eff) rho + rho (-i H_eff)^dag = rho_prev`` for ``rho``."""
    A = -1j * np.asarray(h_eff, dtype=complex)
    rho_prev = np.asarray(rho_prev, dtype=complex)
    try:
        es = _Eigensystem(A)
        den = es.denominators()
        sigma = es.to_eigbasis(es.to_eigbasis(rho_prev).conj().T).conj().T
        rho = _hermitize(es.V @ (sigma / den) @ es.V.conj().T)
        if _lyapunov_residual(A, rho, rho_prev) > 1e-9:
            raise IllConditioned("Lyapunov residual too large after diagonal solve")
    except (IllConditioned, ResonantDenominator):
        rho = _hermitize(_direct_lyapunov(A, rho_prev))
    return rho


class _MomentRecursion:
    """Repeated Lyapunov solves against one cached decomposition.

    Works on the real gauged generator, which is exactly similar to
    ``-i H_eff`` and leaves ``|0><0|`` and all traces invariant.
    """

    def __init__(self, model: RingClockModel, limits: Limits = DEFAULT_LIMITS):
        self.n = model.n
        self.A = gauged_generator(model)
        self.limits = limits
        try:
            self.es = _Eigensystem(self.A)
            self.den = self.es.denominators()
            self.solver = "Diagonalized"
        except (IllConditioned, ResonantDenominator):
            self.es = None
            self.solver = "DirectSolve"

    def traces(self, k_max: int, check: bool = True) -> tuple[list[float], float]:
        """``tr rho_k`` for ``k = 1..k_max`` plus the worst relative residual.

        In the eigenbasis ``tr rho = sum_mn sigma_mn (V^dag V)_nm`` and
        ``sigma_0 = a a^dag`` with ``a = V^{-1} e_0``, so the traces cost
        ``O(n^2)`` per order once ``V^dag V`` is known.  With ``check`` the
        matrices ``rho_1, rho_2`` are formed and their Lyapunov residual
        reported; otherwise only the back-substitution residual ``|V a - e_0|``.
        """
        e0 = np.zeros(self.n)
        e0[0] = 1.0
        if self.es is not None:
            es = self.es
            a = es.to_eigbasis(e0.astype(complex))
            sigma = np.outer(a, a.conj())
            gram_t = (es.V.conj().T @ es.V).T
            out = []
            rho_prev = np.outer(e0, e0).astype(complex)
            resid = float(np.max(np.abs(es.V @ a - e0)))
            for k in range(1, k_max + 1):
                sigma = sigma / self.den
                out.append(float(np.sum(sigma * gram_t).real))
                if check and k <= 2:
                    rho = es.V @ sigma @ es.V.conj().T
                    resid = max(resid, _lyapunov_residual(self.A, rho, rho_prev))
                    rho_prev = rho
            if resid <= 1e-8:
                return out, resid
            self.solver = "DirectSolve"
        rho = np.outer(e0, e0).astype(complex)
        out, resid = [], 0.0
        for _ in range(k_max):
            nxt = _hermitize(_direct_lyapunov(self.A.astype(complex), rho, self.limits))
            resid = max(resid, _lyapunov_residual(self.A, nxt, rho))
            out.append(float(np.trace(nxt).real))
            rho = nxt
        if not np.isfinite(resid) or resid > DIRECT_RTOL:
            raise IllConditioned(f"direct Lyapunov residual {resid:.3e} exceeds {DIRECT_RTOL:.1e}")
        return out, resid


def waiting_moments(
    model: RingClockModel, k_max: int = 2, limits: Limits = DEFAULT_LIMITS, check: bool = True
) -> TickStatistics:
    """Raw moments ``E[T^k]``, ``k = 1..k_max``, and the precision ``E[T]^2 / Var[T]``.

    At ``delta > 0`` the backward-jump loss is part of the no-jump generator, so
    ``T`` is the time to the first jump in either direction.
    """
    if k_max < 2:
        raise ValueError("k_max must be at least 2")
    rec = _MomentRecursion(model, limits)
    traces, resid = rec.traces(k_max, check)
    moments = tuple((-1) ** k * math.factorial(k) * tr for k, tr in enumerate(traces, start=1))
    mean_t = moments[0]
    var_t = moments[1] - mean_t ** 2
    # same quantity written through the traces directly, avoids E[T^2] - E[T]^2 roundoff
    var_alt = mean_t ** 2 * (2 * traces[1] / traces[0] ** 2 - 1)
    return TickStatistics(
        mean_t=mean_t,
        var_t=var_alt if var_alt > 0 else var_t,
        moments=moments,
        precision_inf=1.0 / (2 * traces[1] / traces[0] ** 2 - 1),
        solver=rec.solver,
        residual=resid,
    )


def precision_inf(model: RingClockModel, limits: Limits = DEFAULT_LIMITS, check: bool = True) -> float:
    """Clock precision ``N_inf = E[T]^2 / Var[T]`` of the irreversible waiting time."""
    return waiting_moments(model, 2, limits, check).precision_inf


def rho_sequence(model: RingClockModel, k_max: int) -> list[np.ndarray]:
    """``[rho_1, ..., rho_k_max]`` in the physical (ungauged) basis."""
    h_eff = effective_hamiltonian(model)
    rho = np.zeros((model.n, model.n), dtype=complex)
    rho[0, 0] = 1.0
    out = []
    for _ in range(k_max):
        rho = lyapunov_step(h_eff, rho)
        out.append(rho)
    return out
