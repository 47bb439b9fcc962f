"""Maximisation of the clock precision over coupling profiles and scaling fits.

Two modes:

* ansatz: Nelder-Mead over the five ramp parameters, one seeded start plus
  log-normally jittered restarts;
* global: quasi-Newton over all ``n - 1`` couplings (log-parametrised), capped at
  small ``n``.

``warm_start_scan`` chains ansatz optimisations over increasing ``n`` and keeps one
JSON record per ``n`` on disk.
"""

from __future__ import annotations

import json
import logging
import math
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from scipy.optimize import minimize
from scipy.stats import linregress

from .errors import CapExceeded, DegenerateFit, NonPositiveCoupling, RingClockError
from .fcs import entropy_delta
from .model import AnsatzParams, CouplingProfile, RingClockModel, coupling_profile
from .tickstats import waiting_moments

log = logging.getLogger(__name__)

RECORD_VERSION = 1


@dataclass(frozen=True)
class OptimizerConfig:
    """Settings shared by every optimisation; stored with each record."""

    extra_starts: int = 4
    jitter: float = 0.2
    rng_seed: int = 20240611
    fatol: float = 1e-8
    maxfev: int = 2000
    global_cap: int = 50
    global_gtol: float = 1e-7
    global_maxiter: int = 500

    def __post_init__(self):
        if self.extra_starts < 0 or self.jitter < 0 or self.maxfev <= 0 or self.global_cap <= 0:
            raise ValueError(f"invalid optimizer config: {self}")

    def to_dict(self) -> dict:
        return asdict(self)


DEFAULT_CONFIG = OptimizerConfig()


@dataclass(frozen=True)
class OptResult:
    n: int
    params: object  # AnsatzParams (ansatz mode) or tuple of couplings (global mode)
    objective: float
    evals: int
    converged: bool
    improved: bool = True
    seed_objective: float = float("nan")
    mode: str = "ansatz"

    def profile(self) -> CouplingProfile:
        if isinstance(self.params, AnsatzParams):
            return coupling_profile(self.n, self.params)
        return CouplingProfile(self.n, tuple(self.params))


@dataclass(frozen=True)
class ScanRecord:
    n: int
    params: AnsatzParams
    n_inf: float
    e_t: float
    var_t: float
    lambda_l: float
    timestamp: str = ""
    evals: int = 0
    converged: bool = True
    status: str = "ok"
    optimizer: dict = field(default_factory=dict)

    @property
    def usable(self) -> bool:
        """True unless the optimisation failed; ``no-improvement`` keeps the seed optimum."""
        return self.status in ("ok", "no-improvement")

    def model(self, gamma: float = 1.0) -> RingClockModel:
        return RingClockModel(coupling_profile(self.n, self.params), gamma=gamma)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["params"] = asdict(self.params)
        d["version"] = RECORD_VERSION
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ScanRecord":
        d = dict(d)
        d.pop("version", None)
        d["params"] = AnsatzParams(**d["params"])
        return cls(**d)

    def to_text(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "ScanRecord":
        return cls.from_dict(json.loads(text))

    def verify(self) -> float:
        """Largest relative deviation of the stored figures from a fresh evaluation."""
        st = waiting_moments(self.model())
        pairs = ((self.n_inf, st.precision_inf), (self.e_t, st.mean_t), (self.var_t, st.var_t))
        return max(abs(a - b) / abs(b) for a, b in pairs)


@dataclass(frozen=True)
class ExponentFit:
    exponent: float
    stderr: float
    r2: float
    range: tuple
    intercept: float = 0.0
    npoints: int = 0

    def predict(self, n):
        return np.exp(self.intercept) * np.asarray(n, dtype=float) ** self.exponent


# objective --------------------------------------------------------------------


def objective(model: RingClockModel) -> float:
    """``N_inf`` of the model, or 0 when the model cannot be evaluated."""
    try:
        return float(waiting_moments(model, 2, check=False).precision_inf)
    except (RingClockError, ValueError, np.linalg.LinAlgError):
        return 0.0


def ansatz_objective(n: int, x, gamma: float = 1.0) -> float:
    """Objective of the ansatz parameter vector ``x``; invalid parameters give 0."""
    try:
        p = AnsatzParams.from_array(x)
        prof = coupling_profile(n, p)
    except (NonPositiveCoupling, ValueError):
        return 0.0
    return objective(RingClockModel(prof, gamma=gamma))


def _jittered(x0: np.ndarray, count: int, jitter: float, rng: np.random.Generator) -> list[np.ndarray]:
    return [x0 * np.exp(jitter * rng.standard_normal(x0.size)) for _ in range(count)]


def optimize_ansatz(
    n: int, seed: AnsatzParams, config: OptimizerConfig = DEFAULT_CONFIG, gamma: float = 1.0
) -> OptResult:
    """Maximise ``N_inf`` over the five ansatz parameters.

    Each start runs Nelder-Mead on ``-N_inf / N_inf(seed)``; it stops once the
    simplex values agree to ``fatol`` (relative, via the normalisation) or after
    ``maxfev`` evaluations.  The best of all starts and the seed itself is returned.
    """
    x_seed = seed.as_array()
    f_seed = ansatz_objective(n, x_seed, gamma)
    if f_seed <= 0:
        raise NonPositiveCoupling(f"seed {seed} is not admissible at n={n}")
    rng = np.random.default_rng([config.rng_seed, n])
    starts = [x_seed] + _jittered(x_seed, config.extra_starts, config.jitter, rng)

    evals = 0

    def fun(x):
        nonlocal evals
        evals += 1
        return -ansatz_objective(n, x, gamma) / f_seed

    best_x, best_f, converged = x_seed, f_seed, False
    for x0 in starts:
        res = minimize(
            fun, x0, method="Nelder-Mead",
            options={"fatol": config.fatol, "xatol": np.inf, "maxfev": config.maxfev},
        )
        f = -res.fun * f_seed
        if f > best_f:
            best_x, best_f, converged = res.x, f, bool(res.success)
    improved = best_f > f_seed
    if not improved:
        log.warning("n=%d: no start improved on the seed objective %.6g", n, f_seed)
    return OptResult(
        n=n,
        params=AnsatzParams.from_array(best_x),
        objective=float(best_f),
        evals=evals,
        converged=converged,
        improved=improved,
        seed_objective=float(f_seed),
        mode="ansatz",
    )


def optimize_global(
    n: int, seed: CouplingProfile, config: OptimizerConfig = DEFAULT_CONFIG, gamma: float = 1.0
) -> OptResult:
    """Maximise ``N_inf`` over all couplings ``g_j = exp(y_j)`` with BFGS.

    Gradients are forward differences.  Starts: the seed plus ``extra_starts``
    jittered copies.
    """
    if n > config.global_cap:
        raise CapExceeded(f"global optimisation is capped at n <= {config.global_cap}; use ansatz mode")
    if seed.n != n:
        raise ValueError(f"seed profile has n={seed.n}, expected {n}")
    y_seed = np.log(seed.as_array())
    f_seed = objective(RingClockModel(seed, gamma=gamma))
    if f_seed <= 0:
        raise ValueError("seed profile cannot be evaluated")
    rng = np.random.default_rng([config.rng_seed, n, 1])
    starts = [y_seed] + [y_seed + config.jitter * rng.standard_normal(y_seed.size) for _ in range(config.extra_starts)]

    evals = 0

    def fun(y):
        nonlocal evals
        evals += 1
        prof = CouplingProfile(n, tuple(np.exp(y)))
        return -objective(RingClockModel(prof, gamma=gamma)) / f_seed

    best_y, best_f, converged = y_seed, f_seed, False
    for y0 in starts:
        res = minimize(fun, y0, method="BFGS", options={"gtol": config.global_gtol, "maxiter": config.global_maxiter})
        f = -res.fun * f_seed
        if f > best_f:
            best_y, best_f, converged = res.x, f, bool(res.success)
    return OptResult(
        n=n,
        params=tuple(float(v) for v in np.exp(best_y)),
        objective=float(best_f),
        evals=evals,
        converged=converged,
        improved=best_f > f_seed,
        seed_objective=float(f_seed),
        mode="global",
    )


# scans ------------------------------------------------------------------------


def record_path(cache_dir, n: int) -> Path:
    return Path(cache_dir) / f"n_{n}.record"


def load_record(cache_dir, n: int) -> ScanRecord | None:
    p = record_path(cache_dir, n)
    if not p.exists():
        return None
    return ScanRecord.from_text(p.read_text())


def save_record(cache_dir, rec: ScanRecord) -> Path:
    p = record_path(cache_dir, rec.n)
    p.parent.mkdir(parents=True, exist_ok=True)
    tmp = p.with_suffix(".tmp")
    tmp.write_text(rec.to_text())
    tmp.replace(p)
    return p


def load_records(cache_dir, n_values=None) -> list[ScanRecord]:
    """All cached records (or those for ``n_values``), sorted by ``n``."""
    d = Path(cache_dir)
    if n_values is None:
        found = [ScanRecord.from_text(p.read_text()) for p in d.glob("n_*.record")]
    else:
        found = [r for r in (load_record(d, n) for n in n_values) if r is not None]
    return sorted(found, key=lambda r: r.n)


def make_record(opt: OptResult, config: OptimizerConfig, status: str = "ok") -> ScanRecord:
    st = waiting_moments(RingClockModel(opt.profile()))
    return ScanRecord(
        n=opt.n,
        params=opt.params,
        n_inf=st.precision_inf,
        e_t=st.mean_t,
        var_t=st.var_t,
        lambda_l=opt.params.lambda_l,
        timestamp=time.strftime("%Y-%m-%dT%H:%M:%S"),
        evals=opt.evals,
        converged=opt.converged,
        status=status if opt.improved else "no-improvement",
        optimizer=config.to_dict(),
    )


def bootstrap_chain(n_first: int, step: int = 10, count: int = 4) -> list[int]:
    """Small ring lengths optimised before ``n_first`` to reach a good basin."""
    return [m for m in range(step, step * (count + 1), step) if m < n_first]


def warm_start_scan(
    n_values,
    seed: AnsatzParams | None = None,
    config: OptimizerConfig = DEFAULT_CONFIG,
    cache_dir=None,
    bootstrap: list[int] | None = None,
    reuse: str = "record",
    progress=None,
) -> list[ScanRecord]:
    """Sequential ansatz optimisation over increasing ``n``, each seeded by the last optimum.

    ``bootstrap`` lengths (default ``10, 20, 30, 40`` below the first requested
    ``n``) are optimised first, starting from ``AnsatzParams.default_seed``; they
    are cached but not returned.  ``reuse`` controls cached records: ``"record"``
    takes them as they are, ``"seed"`` re-optimises from them, ``"none"`` ignores
    them.  A failing ``n`` is recorded with its error and the chain continues from
    the last good optimum.
    """
    n_values = [int(v) for v in n_values]
    if any(b <= a for a, b in zip(n_values, n_values[1:])):
        raise ValueError("n_values must be strictly increasing")
    if reuse not in ("record", "seed", "none"):
        raise ValueError("reuse must be 'record', 'seed' or 'none'")
    if bootstrap is None:
        bootstrap = bootstrap_chain(n_values[0]) if n_values else []
    chain = [b for b in bootstrap if b < n_values[0]] + n_values
    current = seed if seed is not None else AnsatzParams.default_seed(chain[0])
    out = []
    for n in chain:
        cached = load_record(cache_dir, n) if (cache_dir is not None and reuse != "none") else None
        if cached is not None and cached.usable and reuse == "record":
            rec = cached
        else:
            start = cached.params if (cached is not None and cached.usable) else current
            t0 = time.time()
            try:
                opt = optimize_ansatz(n, start, config)
                rec = make_record(opt, config)
            except (RingClockError, ValueError) as exc:
                log.error("n=%d failed: %s", n, exc)
                rec = ScanRecord(
                    n=n, params=current, n_inf=float("nan"), e_t=float("nan"), var_t=float("nan"),
                    lambda_l=current.lambda_l, timestamp=time.strftime("%Y-%m-%dT%H:%M:%S"),
                    converged=False, status=f"failed: {exc}", optimizer=config.to_dict(),
                )
            log.info("n=%d N_inf=%.6g evals=%d (%.1fs)", n, rec.n_inf, rec.evals, time.time() - t0)
            if cache_dir is not None:
                save_record(cache_dir, rec)
        if rec.usable:
            current = rec.params
        if progress is not None:
            progress(rec)
        if n in n_values:
            out.append(rec)
    return out


# fits and schedules -----------------------------------------------------------


def fit_exponent(ns, ys=None) -> ExponentFit:
    """Least squares on ``(ln n, ln y)``.

    Accepts either two sequences or a single sequence of ``(n, y)`` pairs.
    """
    if ys is None:
        pts = np.asarray(list(ns), dtype=float)
        ns, ys = pts[:, 0], pts[:, 1]
    ns = np.asarray(ns, dtype=float)
    ys = np.asarray(ys, dtype=float)
    if ns.size != ys.size:
        raise ValueError("ns and ys differ in length")
    if ns.size < 5:
        raise ValueError(f"need at least 5 points, got {ns.size}")
    if np.any(ns <= 0) or np.any(ys <= 0):
        raise ValueError("all points must be positive")
    lx, ly = np.log(ns), np.log(ys)
    if np.ptp(lx) == 0:
        raise DegenerateFit("all n values coincide")
    if np.ptp(ly) == 0:
        return ExponentFit(0.0, 0.0, 1.0, (float(ns.min()), float(ns.max())), float(ly[0]), int(ns.size))
    r = linregress(lx, ly)
    return ExponentFit(
        exponent=float(r.slope),
        stderr=float(r.stderr),
        r2=float(min(max(r.rvalue ** 2, 0.0), 1.0)),
        range=(float(ns.min()), float(ns.max())),
        intercept=float(r.intercept),
        npoints=int(ns.size),
    )


SCAN_QUANTITIES = ("n_inf", "e_t", "var_t", "lambda_l", "mu_l", "g", "mu_r", "lambda_r")


def _quantity(rec: ScanRecord, name: str) -> float:
    if hasattr(rec, name) and name != "params":
        return float(getattr(rec, name))
    return float(getattr(rec.params, name))


def scan_fits(records, quantities=SCAN_QUANTITIES, n_min: float = 0, n_max: float = math.inf) -> dict:
    recs = [r for r in records if r.usable and n_min <= r.n <= n_max]
    ns = [r.n for r in recs]
    return {q: fit_exponent(ns, [_quantity(r, q) for r in recs]) for q in quantities}


def entropy_schedule(n: int, beta: float) -> tuple[float, float]:
    """``(delta, sigma_tick) = (n^-beta, beta ln n)``."""
    if n < 1:
        raise ValueError("n must be positive")
    return entropy_delta(n, beta)


def tur_report(records, beta: float = 4.0) -> list[dict]:
    """Ratio ``N_inf / (sigma_tick / 2)`` along a scan."""
    rows = []
    for r in records:
        _, sigma = entropy_schedule(r.n, beta)
        rows.append({"n": r.n, "sigma_tick": sigma, "n_inf": r.n_inf, "tur_ratio": r.n_inf / (0.5 * sigma)})
    return rows


def extrapolate_params(records, n: int) -> AnsatzParams:
    """Power-law extrapolation of each ansatz parameter to ring length ``n``."""
    recs = [r for r in records if r.usable]
    ns = [r.n for r in recs]
    vals = {}
    for name in ("mu_l", "g", "mu_r", "lambda_l", "lambda_r"):
        fit = fit_exponent(ns, [getattr(r.params, name) for r in recs])
        vals[name] = float(fit.predict(n))
    return AnsatzParams(**vals)
