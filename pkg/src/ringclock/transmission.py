"""Two-port transmission through an apodized chain.

The chain is coupled to wide-band ports at both ends, each contributing a loss
``-i gamma / 2`` to the effective Hamiltonian.  The transmission probability is
``T(w) = gamma^2 |<n-1| (w - H_eff)^{-1} |0>|^2``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

from .errors import SolveFailure
from .model import AnsatzParams, CouplingProfile, coupling_profile, hamiltonian
from .transport import momentum_distribution, packet_snapshot

SYMMETRY_RTOL = 1e-12


def symmetrized_profile(n: int, g: float, mu_r: float, lambda_r: float) -> CouplingProfile:
    """``g_j = g + mu_r (e^{-(j+1)/lambda_r} + e^{-(n-1-j)/lambda_r})`` for ``j = 0..n-2``.

    The second term is the ring clock's right ramp; the first is its mirror image,
    so ``g_j = g_{n-2-j}`` exactly.
    """
    if n < 2:
        raise ValueError("a two-port chain needs n >= 2")
    if lambda_r <= 0:
        raise ValueError("lambda_r must be positive")
    j = np.arange(n - 1, dtype=float)
    vals = g + mu_r * (np.exp(-(j + 1) / lambda_r) + np.exp(-(n - 1 - j) / lambda_r))
    vals = 0.5 * (vals + vals[::-1])
    return CouplingProfile(n=n, values=tuple(vals))


@dataclass(frozen=True)
class TwoPortChain:
    profile: CouplingProfile
    gamma: float = 1.0

    def __post_init__(self):
        v = self.profile.as_array()
        if v.size and np.max(np.abs(v - v[::-1])) > SYMMETRY_RTOL * np.max(np.abs(v)):
            raise ValueError("two-port chain profile must be mirror symmetric")
        if self.gamma <= 0:
            raise ValueError("port coupling must be positive")

    @property
    def n(self) -> int:
        return self.profile.n

    def bulk_coupling(self) -> float:
        return self.profile.bulk_coupling()

    def effective_hamiltonian(self) -> np.ndarray:
        H = hamiltonian(self.profile).astype(complex)
        H[0, 0] -= 0.5j * self.gamma
        H[-1, -1] -= 0.5j * self.gamma
        return H


@dataclass(frozen=True)
class TransmissionCurve:
    omegas: np.ndarray
    values: np.ndarray
    band: tuple = (0.0, 0.0)
    band_min: float = float("nan")
    band_grid: np.ndarray = field(default=None, repr=False)


def _banded(chain: TwoPortChain, omega: float) -> np.ndarray:
    n = chain.n
    g = chain.profile.as_array()
    ab = np.zeros((3, n), dtype=complex)
    ab[0, 1:] = -g
    ab[1, :] = omega
    ab[1, 0] += 0.5j * chain.gamma
    ab[1, -1] += 0.5j * chain.gamma
    ab[2, :-1] = -g
    return ab


def _resolvent_column(chain: TwoPortChain, omega: float, source: int) -> np.ndarray:
    rhs = np.zeros(chain.n, dtype=complex)
    rhs[source] = 1.0
    try:
        x = sla.solve_banded((1, 1), _banded(chain, float(omega)), rhs, check_finite=False)
    except (np.linalg.LinAlgError, ValueError) as exc:
        raise SolveFailure(f"resolvent solve failed at omega={omega}: {exc}") from exc
    if not np.all(np.isfinite(x)):
        raise SolveFailure(f"non-finite resolvent at omega={omega}")
    return x


def transmission(chain: TwoPortChain, omega: float, reverse: bool = False) -> float:
    """``T(omega)``; ``reverse`` injects at site ``n-1`` and detects at site 0."""
    src, det = (chain.n - 1, 0) if reverse else (0, chain.n - 1)
    x = _resolvent_column(chain, omega, src)
    return float(chain.gamma ** 2 * abs(x[det]) ** 2)


def transmission_curve(chain: TwoPortChain, omegas, reverse: bool = False) -> np.ndarray:
    return np.array([transmission(chain, w, reverse) for w in np.asarray(omegas, dtype=float)])


def transmission_band(
    chain: TwoPortChain,
    omegas,
    band: tuple[float, float] | None = None,
    band_points: int = 2001,
) -> TransmissionCurve:
    """Curve on ``omegas`` plus the minimum of ``T`` over ``band``.

    ``band`` defaults to ``|omega| <= g / 2``.  The minimum is taken on its own
    uniform grid of ``band_points`` so that it does not depend on ``omegas``.
    """
    g = chain.bulk_coupling()
    if band is None:
        band = (-0.5 * g, 0.5 * g)
    lo, hi = float(band[0]), float(band[1])
    if hi < lo:
        raise ValueError("band must satisfy lo <= hi")
    omegas = np.asarray(omegas, dtype=float)
    grid = np.linspace(lo, hi, band_points)
    inside = transmission_curve(chain, grid)
    return TransmissionCurve(
        omegas=omegas,
        values=transmission_curve(chain, omegas),
        band=(lo, hi),
        band_min=float(inside.min()),
        band_grid=grid,
    )


def packet_energy_band(n: int, params: AnsatzParams, mass: float = 0.95) -> tuple[float, float]:
    """Central ``mass`` energy interval of the ring-clock packet at ``2 g t = n / 2``."""
    profile = coupling_profile(n, params)
    psi = packet_snapshot(profile, 0.5 * n, g=params.g)
    return momentum_distribution(psi).energy_band(params.g, mass)


def flat_chain(n: int, g: float, gamma: float = 1.0) -> TwoPortChain:
    return TwoPortChain(CouplingProfile.flat(n, g), gamma)


def apodized_chain(n: int, g: float, mu_r: float, lambda_r: float, gamma: float = 1.0) -> TwoPortChain:
    return TwoPortChain(symmetrized_profile(n, g, mu_r, lambda_r), gamma)
