"""Ring-clock model: coupling profiles, Hamiltonians and Liouvillians.

All rates are measured in units of the tick rate; ``gamma`` defaults to one.
Superoperators use column-stacking vectorisation, ``vec(A X B) = (B^T kron A) vec(X)``,
so that a density matrix ``rho`` maps to ``rho.reshape(-1, order="F")``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.sparse as sp

from .errors import BadDimension, DimensionOverflow, NonPositiveCoupling


@dataclass(frozen=True)
class Limits:
    """Upper bounds on dense problem sizes (ring length ``n``)."""

    hilbert_n: int = 2000
    superop_n: int = 80

    def __post_init__(self):
        if self.hilbert_n <= 0 or self.superop_n <= 0:
            raise ValueError("limits must be positive")


DEFAULT_LIMITS = Limits()


@dataclass(frozen=True)
class AnsatzParams:
    """Five-parameter coupling ansatz (left ramp, bulk, right ramp)."""

    mu_l: float
    g: float
    mu_r: float
    lambda_l: float
    lambda_r: float

    def __post_init__(self):
        vals = self.as_array()
        if not np.all(np.isfinite(vals)):
            raise ValueError(f"non-finite ansatz parameters: {self}")
        if self.lambda_l <= 0 or self.lambda_r <= 0:
            raise ValueError("ramp lengths must be positive")
        if self.g <= 0:
            raise ValueError("bulk coupling g must be positive")

    def as_array(self) -> np.ndarray:
        return np.array([self.mu_l, self.g, self.mu_r, self.lambda_l, self.lambda_r], dtype=float)

    @classmethod
    def from_array(cls, x) -> "AnsatzParams":
        x = [float(v) for v in x]
        return cls(*x)

    @classmethod
    def default_seed(cls, n: int) -> "AnsatzParams":
        """Cold-start seed used at the smallest ring length of a scan."""
        g = 1.0
        return cls(mu_l=0.5 * g, g=g, mu_r=0.5 * g, lambda_l=n ** (1.0 / 3.0), lambda_r=1.0)

    def scaled(self, s: float) -> "AnsatzParams":
        return replace(self, mu_l=s * self.mu_l, g=s * self.g, mu_r=s * self.mu_r)


@dataclass(frozen=True)
class CouplingProfile:
    """Nearest-neighbour couplings ``g_0 .. g_{n-2}`` of an ``n``-site ring."""

    n: int
    values: tuple = field(default=())

    def __post_init__(self):
        if self.n < 1:
            raise BadDimension(f"ring needs at least one site, got n={self.n}")
        vals = tuple(float(v) for v in self.values)
        object.__setattr__(self, "values", vals)
        if len(vals) != self.n - 1:
            raise BadDimension(f"expected {self.n - 1} couplings for n={self.n}, got {len(vals)}")
        arr = np.asarray(vals)
        if not np.all(np.isfinite(arr)):
            raise NonPositiveCoupling("couplings must be finite")
        if np.any(arr <= 0):
            j = int(np.argmin(arr))
            raise NonPositiveCoupling(f"coupling g_{j} = {arr[j]!r} is not positive")

    @classmethod
    def from_values(cls, values) -> "CouplingProfile":
        values = tuple(values)
        return cls(n=len(values) + 1, values=values)

    @classmethod
    def flat(cls, n: int, g: float = 1.0) -> "CouplingProfile":
        return cls(n=n, values=(g,) * (n - 1))

    def as_array(self) -> np.ndarray:
        return np.asarray(self.values, dtype=float)

    def bulk_coupling(self) -> float:
        """Median coupling, a robust stand-in for the bulk value ``g``."""
        if self.n == 1:
            return 1.0
        return float(np.median(self.as_array()))

    def scaled(self, s: float) -> "CouplingProfile":
        return CouplingProfile(self.n, tuple(s * v for v in self.values))


@dataclass(frozen=True)
class RingClockModel:
    """Coupling profile plus tick rate ``gamma`` and reversal weight ``delta``.

    ``delta = exp(-sigma_tick)``; ``delta = 0`` is the irreversible limit.
    """

    profile: CouplingProfile
    gamma: float = 1.0
    delta: float = 0.0

    def __post_init__(self):
        if not (self.gamma > 0 and math.isfinite(self.gamma)):
            raise ValueError(f"tick rate must be positive, got {self.gamma}")
        if not (0.0 <= self.delta <= 1.0):
            raise ValueError(f"delta must lie in [0, 1], got {self.delta}")

    @property
    def n(self) -> int:
        return self.profile.n

    def sigma_tick(self) -> float:
        return math.inf if self.delta == 0 else -math.log(self.delta)

    def with_delta(self, delta: float) -> "RingClockModel":
        return replace(self, delta=float(delta))

    def scaled(self, s: float) -> "RingClockModel":
        """Rescale every rate by ``s`` (profile and tick rate)."""
        return replace(self, profile=self.profile.scaled(s), gamma=s * self.gamma)

    def jump_operator(self) -> np.ndarray:
        """Forward tick ``J = sqrt(gamma) |0><n-1|``."""
        J = np.zeros((self.n, self.n), dtype=complex)
        J[0, self.n - 1] = math.sqrt(self.gamma)
        return J

    def reverse_jump_operator(self) -> np.ndarray:
        """Backward tick ``sqrt(delta) J^dagger``."""
        return math.sqrt(self.delta) * self.jump_operator().conj().T


def coupling_profile(n: int, p: AnsatzParams) -> CouplingProfile:
    """Evaluate the exponential-ramp ansatz on an ``n``-site ring.

    Raises NonPositiveCoupling rather than clamping, so that optimisers see
    the rejection explicitly.
    """
    if n < 2:
        raise BadDimension(f"the ansatz needs n >= 2, got {n}")
    j = np.arange(n - 1, dtype=float)
    vals = -p.mu_l * np.exp(-j / p.lambda_l) + p.g + p.mu_r * np.exp((j - (n - 1)) / p.lambda_r)
    return CouplingProfile(n=n, values=tuple(vals))


def hamiltonian(profile: CouplingProfile) -> np.ndarray:
    """Real symmetric tridiagonal hopping matrix of the open chain."""
    g = profile.as_array()
    return np.diag(g, 1) + np.diag(g, -1) if profile.n > 1 else np.zeros((1, 1))


def effective_hamiltonian(model: RingClockModel) -> np.ndarray:
    """No-jump generator ``H - (i/2) (J^dag J + delta J J^dag)``."""
    n = model.n
    H = hamiltonian(model.profile).astype(complex)
    H[n - 1, n - 1] -= 0.5j * model.gamma
    H[0, 0] -= 0.5j * model.delta * model.gamma
    return H


def gauged_generator(model: RingClockModel) -> np.ndarray:
    """Real matrix similar to ``-i H_eff`` under the diagonal gauge ``U = diag(i^j)``.

    ``U (-i H_eff) U^dag`` has ``-g_j`` above and ``+g_j`` below the diagonal and the
    loss rates on the diagonal.  ``U |0><0| U^dag = |0><0|`` and traces are
    unchanged, so waiting-time moments can be computed in real arithmetic.
    """
    n = model.n
    g = model.profile.as_array()
    A = np.zeros((n, n))
    if n > 1:
        A[np.arange(n - 1), np.arange(1, n)] = -g
        A[np.arange(1, n), np.arange(n - 1)] = g
    A[n - 1, n - 1] -= 0.5 * model.gamma
    A[0, 0] -= 0.5 * model.delta * model.gamma
    return A


def _check_superop(n: int, limits: Limits):
    if n > limits.superop_n:
        raise DimensionOverflow(
            f"superoperator for n={n} has dimension {n * n}; limit is n <= {limits.superop_n}"
        )


def liouvillian_parts(model: RingClockModel, limits: Limits = DEFAULT_LIMITS, sparse: bool = False):
    """Building blocks of the tilted generator.

    Returns ``(L0, Lplus, Lminus_loss, Lminus)`` such that
    ``L(chi, delta) = L0 + e^{i chi} Lplus + delta * (Lminus_loss + e^{-i chi} Lminus)``.
    ``L0`` holds the Hamiltonian part and the forward-jump anticommutator only.
    """
    n = model.n
    _check_superop(n, limits)
    I = sp.identity(n, dtype=complex, format="csr")
    H = sp.csr_matrix(hamiltonian(model.profile).astype(complex))
    J = sp.csr_matrix(model.jump_operator())
    Jd = J.conj().T.tocsr()
    JdJ = (Jd @ J).tocsr()
    JJd = (J @ Jd).tocsr()

    L0 = -1j * (sp.kron(I, H) - sp.kron(H.T, I)) - 0.5 * (sp.kron(I, JdJ) + sp.kron(JdJ.T, I))
    Lp = sp.kron(J.conj(), J)
    Lm_loss = -0.5 * (sp.kron(I, JJd) + sp.kron(JJd.T, I))
    Lm = sp.kron(Jd.conj(), Jd)
    parts = (L0, Lp, Lm_loss, Lm)
    if sparse:
        return tuple(sp.csr_matrix(p) for p in parts)
    return tuple(p.toarray() for p in parts)


def liouvillian(
    model: RingClockModel,
    chi: float = 0.0,
    delta: float | None = None,
    limits: Limits = DEFAULT_LIMITS,
) -> np.ndarray:
    """Dense tilted Liouvillian ``L(chi, delta)`` of size ``n^2 x n^2``.

    ``delta`` defaults to the model's own reversal weight.
    """
    if delta is None:
        delta = model.delta
    L0, Lp, Lml, Lm = liouvillian_parts(model, limits, sparse=True)
    L = L0 + np.exp(1j * chi) * Lp
    if delta:
        L = L + delta * (Lml + np.exp(-1j * chi) * Lm)
    return L.toarray()


def vec(rho: np.ndarray) -> np.ndarray:
    return np.asarray(rho).reshape(-1, order="F")


def unvec(v: np.ndarray) -> np.ndarray:
    n = math.isqrt(v.size)
    return np.asarray(v).reshape((n, n), order="F")
