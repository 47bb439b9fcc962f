"""Coherent transport on the ring: lattice evolution, momentum analysis and the
hydrodynamic continuum limit of the left ramp.

Conventions
-----------
* Lattice momentum ``k_l = 2 pi l / n`` with ``psi_k = n^{-1/2} sum_j e^{i k j} psi_j``;
  a packet moving to larger ``j`` sits near ``k = pi/2``.
* Continuum coordinate ``x = j / lambda_l``; densities in ``x`` carry a factor
  ``lambda_l`` relative to site probabilities.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
from scipy.integrate import trapezoid
from scipy.stats import norm

from .errors import BadDimension
from .model import AnsatzParams, CouplingProfile, RingClockModel, coupling_profile, hamiltonian
from .tickstats import default_time_grid, tick_pdf


@dataclass(frozen=True)
class WavePacket:
    amplitudes: np.ndarray
    time: float = 0.0

    def __post_init__(self):
        a = np.asarray(self.amplitudes, dtype=complex)
        if a.ndim != 1 or a.size == 0:
            raise BadDimension("a wave packet needs a non-empty 1-D amplitude vector")
        object.__setattr__(self, "amplitudes", a)

    @property
    def n(self) -> int:
        return self.amplitudes.size

    @classmethod
    def site(cls, n: int, j: int = 0) -> "WavePacket":
        a = np.zeros(n, dtype=complex)
        a[j] = 1.0
        return cls(a)

    @classmethod
    def momentum_state(cls, n: int, ell: int) -> "WavePacket":
        """Plane wave ``n^{-1/2} e^{-i k j}`` with ``k = 2 pi ell / n``."""
        k = 2 * np.pi * ell / n
        return cls(np.exp(-1j * k * np.arange(n)) / math.sqrt(n))

    def probabilities(self) -> np.ndarray:
        return np.abs(self.amplitudes) ** 2

    def norm(self) -> float:
        return float(np.sqrt(np.sum(self.probabilities())))


@dataclass(frozen=True)
class ContinuumParams:
    """Left ramp ``g(x) = g - mu_l e^{-x}`` on the half line ``x >= 0``."""

    mu_l: float
    g: float
    lambda_l: float

    def __post_init__(self):
        if not (self.g > self.mu_l >= 0):
            raise ValueError(f"need g > mu_l >= 0, got g={self.g}, mu_l={self.mu_l}")
        if self.lambda_l <= 0:
            raise ValueError("lambda_l must be positive")

    def coupling(self, x):
        return self.g - self.mu_l * np.exp(-np.asarray(x, dtype=float))

    def velocity(self, x):
        """Characteristic speed ``dx/dt = 2 g(x) / lambda_l``."""
        return 2.0 * self.coupling(x) / self.lambda_l

    def tau(self, t):
        return 2.0 * self.g * np.asarray(t, dtype=float) / self.lambda_l


@dataclass(frozen=True)
class GaussianDensity:
    """Normal density on ``x``; optionally truncated to ``x >= 0`` and renormalised."""

    center: float = 1.0
    width: float = 1.0
    truncate: bool = True

    def __post_init__(self):
        if self.width <= 0:
            raise ValueError("width must be positive")

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        p = norm.pdf(x, self.center, self.width)
        if not self.truncate:
            return p
        return np.where(x >= 0, p / norm.sf(0.0, self.center, self.width), 0.0)


# lattice dynamics -------------------------------------------------------------


def closed_hamiltonian(profile: CouplingProfile, periodic: bool = False) -> np.ndarray:
    """Hopping matrix of the open chain; ``periodic`` adds a closing bond ``n-1 <-> 0``.

    The closing bond takes the bulk (median) coupling of the profile.
    """
    H = hamiltonian(profile).astype(float)
    if periodic:
        if profile.n < 3:
            raise BadDimension("a periodic ring needs n >= 3")
        gb = profile.bulk_coupling()
        H[0, -1] = H[-1, 0] = gb
    return H


class LatticePropagator:
    """Exact unitary propagation via one symmetric eigendecomposition."""

    def __init__(self, profile: CouplingProfile, periodic: bool = False):
        self.profile = profile
        self.periodic = periodic
        self.energies, self.modes = sla.eigh(closed_hamiltonian(profile, periodic))

    def evolve(self, psi0: WavePacket, t: float) -> WavePacket:
        c = self.modes.T @ psi0.amplitudes
        a = self.modes @ (np.exp(-1j * self.energies * t) * c)
        return WavePacket(a, psi0.time + t)

    def evolve_many(self, psi0: WavePacket, times) -> np.ndarray:
        """Amplitudes at each time, shape ``(len(times), n)``."""
        c = self.modes.T @ psi0.amplitudes
        ph = np.exp(-1j * np.outer(np.asarray(times, dtype=float), self.energies))
        return (ph * c) @ self.modes.T


def evolve_closed(psi0: WavePacket, profile: CouplingProfile, t: float, periodic: bool = False) -> WavePacket:
    if psi0.n != profile.n:
        raise BadDimension(f"packet has {psi0.n} sites, profile has {profile.n}")
    return LatticePropagator(profile, periodic).evolve(psi0, t)


def gauge_transform(psi: WavePacket, power: int = 1) -> WavePacket:
    """``psi_j -> i^{power j} psi_j``; leaves ``|0>`` and all site probabilities unchanged."""
    phase = 1j ** ((power * np.arange(psi.n)) % 4)
    return WavePacket(phase * psi.amplitudes, psi.time)


def real_generator(profile: CouplingProfile) -> np.ndarray:
    """Real antisymmetric ``A`` with ``d/dt psi~ = A psi~`` in the gauged frame."""
    g = profile.as_array()
    n = profile.n
    A = np.zeros((n, n))
    if n > 1:
        A[np.arange(n - 1), np.arange(1, n)] = -g
        A[np.arange(1, n), np.arange(n - 1)] = g
    return A


def evolve_gauged(psi_tilde: WavePacket, profile: CouplingProfile, t: float) -> WavePacket:
    """Propagate a gauged packet with the real generator (open chain)."""
    U = sla.expm(real_generator(profile) * t)
    return WavePacket(U @ psi_tilde.amplitudes, psi_tilde.time + t)


# momentum space ---------------------------------------------------------------


def dispersion(k, g: float):
    """Band ``E(k) = 2 g cos k`` of the uniform ring."""
    return 2.0 * g * np.cos(k)


@dataclass(frozen=True)
class MomentumDistribution:
    k: np.ndarray
    prob: np.ndarray

    def total(self) -> float:
        return float(np.sum(self.prob))

    def mode(self) -> float:
        return float(self.k[np.argmax(self.prob)])

    def spread(self) -> float:
        """Standard deviation of ``k`` about the mode, distances wrapped to ``(-pi, pi]``."""
        d = np.angle(np.exp(1j * (self.k - self.mode())))
        p = self.prob / self.prob.sum()
        mean = np.sum(p * d)
        return float(np.sqrt(np.sum(p * (d - mean) ** 2)))

    def energy_band(self, g: float, mass: float = 0.95) -> tuple[float, float]:
        """Central ``mass`` quantile interval of ``E(k)`` under this distribution."""
        E = dispersion(self.k, g)
        order = np.argsort(E)
        cdf = np.cumsum(self.prob[order]) / self.prob.sum()
        lo_q, hi_q = 0.5 * (1 - mass), 0.5 * (1 + mass)
        lo = E[order][np.searchsorted(cdf, lo_q)]
        hi = E[order][min(np.searchsorted(cdf, hi_q), len(E) - 1)]
        return float(lo), float(hi)


def momentum_distribution(psi: WavePacket) -> MomentumDistribution:
    n = psi.n
    amp = np.fft.ifft(psi.amplitudes, norm="ortho")
    return MomentumDistribution(k=2 * np.pi * np.arange(n) / n, prob=np.abs(amp) ** 2)


def packet_snapshot(profile: CouplingProfile, two_g_t: float, g: float | None = None) -> WavePacket:
    """Packet launched from ``|0>`` on the open chain, evaluated at ``2 g t = two_g_t``."""
    g = profile.bulk_coupling() if g is None else g
    return evolve_closed(WavePacket.site(profile.n), profile, two_g_t / (2 * g))


def wavepacket_width(psi: WavePacket) -> float:
    """Standard deviation of the site index under ``|psi_j|^2``."""
    p = psi.probabilities()
    p = p / p.sum()
    j = np.arange(psi.n)
    m = np.sum(p * j)
    return float(np.sqrt(max(np.sum(p * (j - m) ** 2), 0.0)))


def left_ramp_profile(n: int, mu_l: float, g: float, lambda_l: float) -> CouplingProfile:
    """Ansatz profile with the right ramp switched off."""
    return coupling_profile(n, AnsatzParams(mu_l=mu_l, g=g, mu_r=0.0, lambda_l=lambda_l, lambda_r=1.0))


def ramp_width(n: int, mu_l: float, g: float, lambda_l: float, two_g_t: float) -> float:
    """Packet width (sites) at ``2 g t = two_g_t`` behind a pure left ramp."""
    return wavepacket_width(packet_snapshot(left_ramp_profile(n, mu_l, g, lambda_l), two_g_t, g))


# continuum --------------------------------------------------------------------


def characteristic(t, x, p: ContinuumParams):
    """Label ``xi(t, x)`` of the characteristic through ``(t, x)``; ``xi(0, x) = x``."""
    tau = p.tau(t)
    x = np.asarray(x, dtype=float)
    return np.log(p.mu_l / p.g * (1.0 - np.exp(-tau)) + np.exp(x - tau))


def continuum_density(t, x, p0, p: ContinuumParams):
    """Exact transported density ``n(t, x) = p0(xi) / (1 + (mu_l/g)(e^{tau - x} - e^{-x}))``."""
    tau = p.tau(t)
    x = np.asarray(x, dtype=float)
    denom = 1.0 + p.mu_l / p.g * (np.exp(tau - x) - np.exp(-x))
    return p0(characteristic(t, x, p)) / denom


def support_edge(t, p: ContinuumParams) -> float:
    """Position where ``xi(t, x) = 0``: material from ``x < 0`` lies behind it."""
    tau = float(p.tau(t))
    return tau + math.log(1.0 - p.mu_l / p.g * (1.0 - math.exp(-tau)))


def continuum_mass(t, p0, p: ContinuumParams, x_max: float | None = None) -> float:
    """``int_0^x_max n(t, x) dx`` by adaptive quadrature.

    The integral is split at the support edge, where a truncated ``p0`` jumps.
    """
    from scipy.integrate import quad

    tau = float(p.tau(t))
    if x_max is None:
        x_max = tau + 60.0
    edge = support_edge(t, p)
    cuts = sorted({0.0, min(max(edge, 0.0), x_max), min(max(tau, 0.0), x_max), x_max})

    def f(x):
        return float(continuum_density(t, x, p0, p))

    total = 0.0
    for a, b in zip(cuts[:-1], cuts[1:]):
        if b > a:
            total += quad(f, a, b, limit=500, epsabs=1e-13, epsrel=1e-12)[0]
    return total


def back_side_rate(t, p0, p: ContinuumParams, window: tuple[float, float] = (2.0, 6.0), points: int = 401) -> float:
    """Log-slope ``d ln n / dx`` on the trailing side, ``x = tau - a`` for ``a`` in ``window``.

    The asymptotic tail ``n ~ e^{-(tau - x)}`` corresponds to a slope of one.
    """
    tau = float(p.tau(t))
    a = np.linspace(window[0], window[1], points)
    x = tau - a
    if np.any(x < 0):
        raise ValueError("window reaches past x = 0; use a later time")
    d = continuum_density(t, x, p0, p)
    if np.any(d <= 0):
        raise ValueError("density vanishes inside the window (truncated initial density)")
    return float(np.polyfit(x, np.log(d), 1)[0])


@dataclass(frozen=True)
class ContinuumComparison:
    l1: float
    two_g_t: float
    two_g_t0: float
    p0_center: float
    p0_width: float
    lattice_mean: float
    lattice_width: float
    continuum_mean: float
    continuum_width: float
    block: int
    x: np.ndarray = field(repr=False)
    lattice: np.ndarray = field(repr=False)
    continuum: np.ndarray = field(repr=False)


def _site_moments(prob: np.ndarray) -> tuple[float, float]:
    j = np.arange(prob.size)
    p = prob / prob.sum()
    m = float(np.sum(p * j))
    return m, float(np.sqrt(np.sum(p * (j - m) ** 2)))


def compare_lattice_continuum(
    n: int,
    p: ContinuumParams,
    two_g_t: float,
    two_g_t0: float | None = None,
    block: int = 5,
    sub: int = 10,
) -> ContinuumComparison:
    """Coarse-grained lattice density versus the continuum prediction.

    The continuum is started at ``t0`` (default ``2 g t0 = 3 lambda_l``, when the
    packet has just left the ramp) from a truncated Gaussian whose centre and width
    equal the lattice packet's mean and standard deviation at ``t0``.  Both
    densities are reduced to probability masses on blocks of ``block`` sites and
    compared in L1.
    """
    if two_g_t0 is None:
        two_g_t0 = 3.0 * p.lambda_l
    if two_g_t < two_g_t0:
        raise ValueError("comparison time precedes the matching time")
    prof = left_ramp_profile(n, p.mu_l, p.g, p.lambda_l)
    prop = LatticePropagator(prof)
    psi0 = WavePacket.site(n)
    t0, t = two_g_t0 / (2 * p.g), two_g_t / (2 * p.g)
    P0, P = (np.abs(a) ** 2 for a in prop.evolve_many(psi0, [t0, t]))
    m0, s0 = _site_moments(P0)
    p0 = GaussianDensity(center=m0 / p.lambda_l, width=s0 / p.lambda_l, truncate=True)

    nb = n // block
    lat = P[: nb * block].reshape(nb, block).sum(axis=1)
    # midpoint rule on sub-site cells, site j covering [j - 1/2, j + 1/2)
    cells = (np.arange(nb * block * sub) + 0.5) / sub - 0.5
    xs = np.maximum(cells, 0.0) / p.lambda_l
    dens = continuum_density(t - t0, xs, p0, p) / (p.lambda_l * sub)
    cont = dens.reshape(nb, block * sub).sum(axis=1)
    centers = (np.arange(nb) * block + 0.5 * (block - 1)) / p.lambda_l
    cm = float(np.sum(cont * centers) / cont.sum())
    cw = float(np.sqrt(np.sum(cont * (centers - cm) ** 2) / cont.sum()))
    lm, lw = _site_moments(P)
    return ContinuumComparison(
        l1=float(np.sum(np.abs(lat - cont))),
        two_g_t=two_g_t,
        two_g_t0=two_g_t0,
        p0_center=p0.center,
        p0_width=p0.width,
        lattice_mean=lm / p.lambda_l,
        lattice_width=lw / p.lambda_l,
        continuum_mean=cm,
        continuum_width=cw,
        block=block,
        x=centers,
        lattice=lat,
        continuum=cont,
    )


# free propagation versus full tick density ------------------------------------


@dataclass(frozen=True)
class FreeFullComparison:
    mean_full: float
    std_full: float
    mean_free: float
    std_free: float
    window: float


def free_vs_full(n: int, params: AnsatzParams, gamma: float = 1.0) -> FreeFullComparison:
    """Tick-time moments from ``p0(t) = Gamma |<n-1| e^{-i H0 t} |0>|^2`` versus the full density.

    ``H0`` keeps the left ramp and bulk but drops the right ramp and the loss.
    Since ``p0`` is not normalised, its moments are taken over ``[0, E + 6 sigma]``
    of the full density and renormalised there.
    """
    model = RingClockModel(coupling_profile(n, params), gamma=gamma)
    times = default_time_grid(model)
    full = tick_pdf(model, times)
    w = full.density / trapezoid(full.density, times)
    mf = float(trapezoid(times * w, times))
    sf = float(np.sqrt(trapezoid((times - mf) ** 2 * w, times)))
    window = mf + 6 * sf
    sel = times <= window
    ts = times[sel]
    prof0 = left_ramp_profile(n, params.mu_l, params.g, params.lambda_l)
    amps = LatticePropagator(prof0).evolve_many(WavePacket.site(n), ts)
    p0 = gamma * np.abs(amps[:, -1]) ** 2
    w0 = p0 / trapezoid(p0, ts)
    m0 = float(trapezoid(ts * w0, ts))
    s0 = float(np.sqrt(trapezoid((ts - m0) ** 2 * w0, ts)))
    return FreeFullComparison(mean_full=mf, std_full=sf, mean_free=m0, std_free=s0, window=window)
