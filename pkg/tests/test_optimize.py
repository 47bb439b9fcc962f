from __future__ import annotations

import math

import numpy as np
import pytest

import ringclock.optimize as opt
from ringclock.errors import CapExceeded, DegenerateFit
from ringclock.model import AnsatzParams, CouplingProfile, RingClockModel, coupling_profile
from ringclock.optimize import (
    OptimizerConfig,
    ScanRecord,
    ansatz_objective,
    bootstrap_chain,
    entropy_schedule,
    extrapolate_params,
    fit_exponent,
    load_record,
    load_records,
    make_record,
    objective,
    optimize_ansatz,
    optimize_global,
    record_path,
    tur_report,
    warm_start_scan,
)
from ringclock.tickstats import precision_inf

FAST = OptimizerConfig(extra_starts=1, maxfev=400)


def test_objective_anchor_and_determinism():
    assert objective(RingClockModel(CouplingProfile(1, ()))) == pytest.approx(1.0, abs=1e-12)
    flat = RingClockModel(CouplingProfile.flat(10, 1.0))
    assert objective(flat) == objective(flat)


def test_objective_rejects_invalid():
    assert ansatz_objective(10, [2.0, 1.0, 0.0, 1.0, 1.0]) == 0.0
    assert ansatz_objective(10, [0.1, 1.0, 0.5, -1.0, 1.0]) == 0.0


@pytest.fixture(scope="module")
def n10():
    return optimize_ansatz(10, AnsatzParams.default_seed(10))


def test_ansatz_optimum_n10(n10):
    assert n10.improved and n10.objective > n10.seed_objective
    assert n10.objective == pytest.approx(47.8016, rel=1e-5)
    fresh = precision_inf(RingClockModel(n10.profile()))
    assert fresh == pytest.approx(n10.objective, rel=1e-9)
    flat = max(objective(RingClockModel(CouplingProfile.flat(10, g))) for g in np.geomspace(0.05, 5, 41))
    assert n10.objective > 2 * flat


def test_ansatz_deterministic():
    seed = AnsatzParams.default_seed(8)
    a = optimize_ansatz(8, seed, FAST)
    b = optimize_ansatz(8, seed, FAST)
    assert a.params == b.params and a.objective == b.objective and a.evals == b.evals


def test_global_grid_oracle_n3():
    res = optimize_global(3, CouplingProfile.flat(3, 0.5))

    def f(g0, g1):
        return objective(RingClockModel(CouplingProfile(3, (g0, g1))))

    lo, hi = np.log(0.05), np.log(5.0)
    c0 = c1 = 0.5 * (lo + hi)
    width = hi - lo
    for _ in range(6):
        grid = np.linspace(-0.5, 0.5, 21) * width
        vals = np.array([[f(math.exp(c0 + a), math.exp(c1 + b)) for b in grid] for a in grid])
        i, j = np.unravel_index(np.argmax(vals), vals.shape)
        c0, c1 = c0 + grid[i], c1 + grid[j]
        width *= 0.2
    best = f(math.exp(c0), math.exp(c1))
    assert res.objective >= best * (1 - 1e-9)
    assert np.allclose(np.log(res.params), [c0, c1], atol=5 * width)


def test_global_dominates_ansatz(n10):
    res = optimize_global(10, n10.profile(), OptimizerConfig(extra_starts=0))
    assert res.objective >= n10.objective
    assert res.mode == "global" and len(res.params) == 9


def test_global_cap():
    with pytest.raises(CapExceeded):
        optimize_global(51, CouplingProfile.flat(51))


def test_record_roundtrip(tmp_path, n10):
    rec = make_record(n10, opt.DEFAULT_CONFIG)
    opt.save_record(tmp_path, rec)
    assert record_path(tmp_path, 10).name == "n_10.record"
    back = load_record(tmp_path, 10)
    assert back == rec
    assert back.verify() < 1e-8
    assert load_record(tmp_path, 11) is None


def test_warm_start_scan(tmp_path):
    recs = warm_start_scan([12, 14], config=FAST, cache_dir=tmp_path, bootstrap=[10])
    assert [r.n for r in recs] == [12, 14]
    assert sorted(r.n for r in load_records(tmp_path)) == [10, 12, 14]
    # each optimum is at least the previous optimum re-evaluated at this n
    chain = load_records(tmp_path)
    for prev, cur in zip(chain, chain[1:]):
        assert cur.n_inf >= ansatz_objective(cur.n, prev.params.as_array()) * (1 - 1e-12)
    again = warm_start_scan([12, 14], config=FAST, cache_dir=tmp_path, bootstrap=[10])
    assert again == recs
    fresh = warm_start_scan([12, 14], config=FAST, cache_dir=tmp_path / "other", bootstrap=[10])
    assert [r.params for r in fresh] == [r.params for r in recs]
    assert all(abs(a.n_inf - b.n_inf) <= 1e-12 * a.n_inf for a, b in zip(fresh, recs))


def test_scan_continues_past_failure(tmp_path, monkeypatch):
    real = opt.optimize_ansatz

    def flaky(n, seed, config=opt.DEFAULT_CONFIG, gamma=1.0):
        if n == 12:
            raise ValueError("synthetic failure")
        return real(n, seed, config, gamma)

    monkeypatch.setattr(opt, "optimize_ansatz", flaky)
    recs = warm_start_scan([11, 12, 13], config=FAST, cache_dir=tmp_path, bootstrap=[])
    assert [r.usable for r in recs] == [True, False, True]
    assert recs[1].status.startswith("failed")


def test_bootstrap_chain():
    assert bootstrap_chain(50) == [10, 20, 30, 40]
    assert bootstrap_chain(25) == [10, 20]
    with pytest.raises(ValueError):
        warm_start_scan([20, 10])


def test_fit_exact_power():
    ns = np.arange(10, 200, 10)
    fit = fit_exponent(ns, ns.astype(float) ** 2)
    assert fit.exponent == pytest.approx(2.0, abs=1e-12)
    assert fit.stderr < 1e-10 and fit.r2 == pytest.approx(1.0)
    assert fit.range == (10.0, 190.0) and fit.npoints == ns.size


def test_fit_noisy_power():
    rng = np.random.default_rng(7)
    ns = np.arange(50, 401, 25)
    ys = 3.0 * ns ** 1.31 * (1 + 0.01 * rng.standard_normal(ns.size))
    fit = fit_exponent(list(zip(ns, ys)))
    assert abs(fit.exponent - 1.31) < 0.02
    assert 0 <= fit.r2 <= 1


def test_fit_constant_and_errors():
    assert fit_exponent(range(1, 8), [4.0] * 7).exponent == 0.0
    with pytest.raises(ValueError):
        fit_exponent([1, 2, 3, 4], [1, 2, 3, 4])
    with pytest.raises(DegenerateFit):
        fit_exponent([5] * 6, range(1, 7))
    with pytest.raises(ValueError):
        fit_exponent(range(1, 7), [1, 2, 0, 4, 5, 6])


def test_entropy_schedule_examples():
    assert entropy_schedule(9, 0.0) == (1.0, 0.0)
    delta, sigma = entropy_schedule(200, 4)
    assert sigma == pytest.approx(21.19, abs=5e-3) and delta == pytest.approx(200.0 ** -4)


def _synthetic_records():
    recs = []
    for n in range(50, 301, 50):
        p = AnsatzParams(mu_l=0.1 * n ** 0.05, g=0.16, mu_r=1.0, lambda_l=n ** 0.35, lambda_r=0.55)
        recs.append(ScanRecord(n=n, params=p, n_inf=0.8 * n ** 1.3, e_t=3.0 * n, var_t=n ** 0.66, lambda_l=p.lambda_l))
    return recs


def test_tur_report_grows():
    rows = tur_report(_synthetic_records(), beta=4)
    ratios = [r["tur_ratio"] for r in rows]
    assert all(b > a for a, b in zip(ratios, ratios[1:]))
    assert rows[0]["sigma_tick"] == pytest.approx(4 * math.log(50))


def test_extrapolate_params_power_law():
    p = extrapolate_params(_synthetic_records(), 1000)
    assert p.lambda_l == pytest.approx(1000 ** 0.35, rel=1e-10)
    assert p.g == pytest.approx(0.16, rel=1e-12)
    assert coupling_profile(1000, p).n == 1000


# invariants over the cached warm-start scan ----------------------------------

SCAN_N = list(range(50, 401, 25))


@pytest.fixture(scope="module")
def cached_scan(cache_dir):
    recs = [r for r in load_records(cache_dir, SCAN_N) if r.usable]
    if len(recs) < len(SCAN_N):
        pytest.skip("warm-start scan not cached; run `ringclock scan --n 50:400:25`")
    return recs


def test_scan_monotone_knowledge(cached_scan):
    for prev, cur in zip(cached_scan, cached_scan[1:]):
        assert cur.n_inf >= ansatz_objective(cur.n, prev.params.as_array()) * (1 - 1e-12)


@pytest.mark.parametrize("quantity", ["n_inf", "e_t", "var_t", "lambda_l"])
def test_exponent_stability(cached_scan, quantity):
    n_max = cached_scan[-1].n
    wide = opt.scan_fits(cached_scan, (quantity,), n_min=n_max / 4)[quantity]
    narrow = opt.scan_fits(cached_scan, (quantity,), n_min=n_max / 2)[quantity]
    tol = 2 * max(wide.stderr, narrow.stderr)
    assert abs(wide.exponent - narrow.exponent) <= tol, (wide, narrow)


@pytest.mark.parametrize("n", [20, 30, 40])
def test_global_vs_ansatz_gap(cache_dir, n):
    rec = load_record(cache_dir, n)
    if rec is None:
        pytest.skip("bootstrap record not cached")
    res = optimize_global(n, coupling_profile(n, rec.params), OptimizerConfig(extra_starts=0))
    assert res.objective >= rec.n_inf
    assert (res.objective - rec.n_inf) / res.objective <= 0.02
    bulk = slice(n // 4, 3 * n // 4)
    diff = np.abs(np.array(res.params) - coupling_profile(n, rec.params).as_array())
    assert diff[bulk].max() < 0.05
