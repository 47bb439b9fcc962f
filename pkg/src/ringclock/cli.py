"""Command-line entry point.

Every subcommand writes a CSV (``#`` comment lines with the resolved config,
then a header row) and a JSON summary into ``--out`` and prints the summary.
Exit status: 0 on success, 1 on a domain error, 2 on a usage error.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import sys
from dataclasses import asdict
from pathlib import Path

import numpy as np
import yaml

from . import __version__
from .errors import RingClockError
from .model import AnsatzParams, CouplingProfile, Limits, RingClockModel, coupling_profile

log = logging.getLogger("ringclock")

DEFAULTS = {
    "gamma": 1.0,
    "beta": None,
    "delta": None,
    "profile": "auto",
    "params": None,
    "couplings": None,
    "g": 1.0,
    "cache_dir": "cache",
    "out": "ringclock_out",
    "seed": 20240611,
    "hilbert_cap": 2000,
    "superop_cap": 80,
    "tol": 1e-3,
    "chi_step": 3e-3,
    "k_max": 4,
    "mode": None,
    "fit": False,
    "times": None,
    "omegas": None,
    "band": None,
    "lambda_l": 20.0,
    "mu_l": None,
    "two_g_t": None,
}

PROFILE_SOURCES = ("auto", "ansatz", "explicit", "cache", "optimize", "flat")


class UsageError(Exception):
    pass


# parsing helpers --------------------------------------------------------------


def parse_range(text) -> list[int]:
    """``"n"`` or ``"start:stop:step"`` (stop inclusive) to a list of ints."""
    if isinstance(text, int):
        return [text]
    if isinstance(text, (list, tuple)):
        return [int(v) for v in text]
    parts = str(text).split(":")
    try:
        if len(parts) == 1:
            return [int(parts[0])]
        if len(parts) == 3:
            start, stop, step = (int(p) for p in parts)
            if step <= 0 or stop < start:
                raise ValueError
            return list(range(start, stop + 1, step))
    except ValueError:
        pass
    raise UsageError(f"--n: expected an integer or start:stop:step, got {text!r}")


def parse_grid(text, name: str) -> np.ndarray:
    """``"lo:hi:count"`` to a uniform grid."""
    parts = str(text).split(":")
    try:
        lo, hi, count = float(parts[0]), float(parts[1]), int(parts[2])
        if len(parts) != 3 or count < 2 or hi <= lo:
            raise ValueError
    except (ValueError, IndexError):
        raise UsageError(f"--{name}: expected lo:hi:count, got {text!r}") from None
    return np.linspace(lo, hi, count)


def parse_floats(text, name: str) -> list[float]:
    if isinstance(text, (list, tuple)):
        return [float(v) for v in text]
    try:
        return [float(v) for v in str(text).split(",") if v.strip()]
    except ValueError:
        raise UsageError(f"--{name}: expected comma-separated numbers, got {text!r}") from None


def fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return str(bool(x)).lower()
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return "%.17g" % float(x)
    return str(x)


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else str(v)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, AnsatzParams):
        return asdict(obj)
    return obj


# output -----------------------------------------------------------------------


def write_csv(path: Path, header: list[str], rows, config: dict) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        fh.write("# ringclock " + __version__ + "\n")
        fh.write("# config: " + json.dumps(_jsonable(config), sort_keys=True) + "\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([fmt(v) for v in row])
    return path


def write_summary(path: Path, summary: dict, config: dict) -> str:
    path.parent.mkdir(parents=True, exist_ok=True)
    doc = {"summary": _jsonable(summary), "config": _jsonable(config)}
    text = json.dumps(doc, indent=2, sort_keys=True)
    path.write_text(text + "\n")
    return text


# config resolution ------------------------------------------------------------


def load_config_file(path: str | None) -> dict:
    if not path:
        return {}
    try:
        data = yaml.safe_load(Path(path).read_text()) or {}
    except (OSError, yaml.YAMLError) as exc:
        raise UsageError(f"--config: cannot read {path}: {exc}") from None
    if not isinstance(data, dict):
        raise UsageError("--config: top level must be a mapping")
    return {k.replace("-", "_"): v for k, v in data.items()}


def resolve_config(args: argparse.Namespace) -> dict:
    """Defaults, then the config file, then explicit flags."""
    given = {k: v for k, v in vars(args).items() if k not in ("config", "func", "verbose")}
    cfg = dict(DEFAULTS)
    file_cfg = load_config_file(getattr(args, "config", None))
    unknown = set(file_cfg) - set(DEFAULTS) - {"n"}
    if unknown:
        raise UsageError(f"--config: unknown keys {sorted(unknown)}")
    cfg.update(file_cfg)
    cfg.update(given)
    cfg["subcommand"] = args.subcommand
    if "n" not in cfg or cfg["n"] is None:
        raise UsageError("--n is required (flag or config file)")
    if cfg["beta"] is not None and cfg["delta"] is not None:
        raise UsageError("--beta and --delta are mutually exclusive")
    if cfg["profile"] not in PROFILE_SOURCES:
        raise UsageError(f"--profile: must be one of {PROFILE_SOURCES}")
    if cfg["hilbert_cap"] <= 0 or cfg["superop_cap"] <= 0:
        raise UsageError("--hilbert-cap/--superop-cap must be positive")
    if cfg["profile"] == "ansatz" and cfg["params"] is None:
        raise UsageError("--profile ansatz needs --params mu_l,g,mu_r,lambda_l,lambda_r")
    if cfg["profile"] == "explicit" and cfg["couplings"] is None:
        raise UsageError("--profile explicit needs --couplings")
    return cfg


def _limits(cfg) -> Limits:
    return Limits(hilbert_n=int(cfg["hilbert_cap"]), superop_n=int(cfg["superop_cap"]))


def _optimizer_config(cfg):
    from .optimize import OptimizerConfig

    return OptimizerConfig(rng_seed=int(cfg["seed"]))


def _ansatz(cfg) -> AnsatzParams:
    vals = parse_floats(cfg["params"], "params")
    if len(vals) != 5:
        raise UsageError("--params: need five values mu_l,g,mu_r,lambda_l,lambda_r")
    return AnsatzParams(*vals)


def resolve_profile(cfg, n: int) -> tuple[CouplingProfile, AnsatzParams | None, str]:
    """Coupling profile for ring length ``n`` from the configured source."""
    from .optimize import load_record, warm_start_scan

    if n < 1:
        raise UsageError("--n: ring length must be positive")
    if n == 1:
        return CouplingProfile(1, ()), None, "trivial"
    src = cfg["profile"]
    if src == "flat":
        return CouplingProfile.flat(n, float(cfg["g"])), None, src
    if src == "ansatz":
        p = _ansatz(cfg)
        return coupling_profile(n, p), p, src
    if src == "explicit":
        prof = CouplingProfile.from_values(parse_floats(cfg["couplings"], "couplings"))
        if prof.n != n:
            raise UsageError(f"--couplings: {prof.n - 1} values do not match n={n}")
        return prof, None, src
    rec = load_record(cfg["cache_dir"], n) if src in ("auto", "cache") else None
    if rec is not None and rec.usable:
        return coupling_profile(n, rec.params), rec.params, "cache"
    if src == "cache":
        raise RingClockError(f"no usable cached record for n={n} in {cfg['cache_dir']}")
    rec = warm_start_scan([n], config=_optimizer_config(cfg), cache_dir=cfg["cache_dir"])[0]
    if not rec.usable:
        raise RingClockError(f"optimisation failed for n={n}: {rec.status}")
    return coupling_profile(n, rec.params), rec.params, "optimize"


def _single_n(cfg) -> int:
    ns = parse_range(cfg["n"])
    if len(ns) != 1:
        raise UsageError(f"--n: subcommand {cfg['subcommand']} takes a single ring length")
    return ns[0]


def _delta(cfg, n: int) -> tuple[float, float]:
    from .optimize import entropy_schedule

    if cfg["delta"] is not None:
        d = float(cfg["delta"])
        return d, (math.inf if d == 0 else -math.log(d))
    if cfg["beta"] is not None:
        return entropy_schedule(n, float(cfg["beta"]))
    return 0.0, math.inf


# subcommands ------------------------------------------------------------------


def cmd_tick(cfg) -> dict:
    from .errors import HorizonTooShort
    from .tickstats import default_time_grid, tick_pdf, waiting_moments

    n = _single_n(cfg)
    prof, params, src = resolve_profile(cfg, n)
    delta, _ = _delta(cfg, n)
    model = RingClockModel(prof, gamma=float(cfg["gamma"]), delta=delta)
    st = waiting_moments(model, 2, _limits(cfg))
    if cfg["times"]:
        pdf = tick_pdf(model, parse_grid(cfg["times"], "times"), tol=float(cfg["tol"]))
    else:
        # the default horizon suits near-optimal profiles; stretch it for slower ones
        times = default_time_grid(model)
        for _ in range(8):
            try:
                pdf = tick_pdf(model, times, tol=float(cfg["tol"]))
                break
            except HorizonTooShort:
                times = np.linspace(0.0, 2 * times[-1], 2 * times.size - 1)
        else:
            pdf = tick_pdf(model, times, tol=float(cfg["tol"]))
    out = Path(cfg["out"])
    write_csv(out / f"tick_n{n}.csv", ["t", "pdf", "survival"], zip(pdf.times, pdf.density, pdf.survival), cfg)
    return {
        "n": n, "profile_source": src, "params": params, "delta": delta,
        "E_T": st.mean_t, "Var_T": st.var_t, "N_inf": st.precision_inf,
        "solver": st.solver, "residual": st.residual, "pdf_integral": pdf.integral(),
    }


def cmd_optimize(cfg) -> dict:
    from .optimize import make_record, optimize_ansatz, optimize_global, save_record

    n = _single_n(cfg)
    mode = cfg["mode"] or "ansatz"
    ocfg = _optimizer_config(cfg)
    if mode == "ansatz":
        seed = _ansatz(cfg) if cfg["params"] is not None else AnsatzParams.default_seed(n)
        res = optimize_ansatz(n, seed, ocfg, float(cfg["gamma"]))
        save_record(cfg["cache_dir"], make_record(res, ocfg))
    elif mode == "global":
        prof, _, _ = resolve_profile(cfg, n)
        res = optimize_global(n, prof, ocfg, float(cfg["gamma"]))
    else:
        raise UsageError("--mode: optimize supports 'ansatz' or 'global'")
    vals = res.profile().as_array()
    write_csv(Path(cfg["out"]) / f"optimize_n{n}.csv", ["j", "g_j"], enumerate(vals), cfg)
    return {
        "n": n, "mode": mode, "objective": res.objective, "seed_objective": res.seed_objective,
        "evals": res.evals, "converged": res.converged, "improved": res.improved,
        "params": res.params if mode == "ansatz" else list(res.params),
    }


SCAN_COLUMNS = ["n", "mu_l", "g", "mu_r", "lambda_l", "lambda_r", "n_inf", "e_t", "var_t"]


def cmd_scan(cfg) -> dict:
    from .optimize import scan_fits, tur_report, warm_start_scan

    ns = parse_range(cfg["n"])
    seed = _ansatz(cfg) if cfg["params"] is not None else None
    recs = warm_start_scan(ns, seed=seed, config=_optimizer_config(cfg), cache_dir=cfg["cache_dir"])
    rows = [
        [r.n, r.params.mu_l, r.params.g, r.params.mu_r, r.params.lambda_l, r.params.lambda_r, r.n_inf, r.e_t, r.var_t]
        for r in recs
    ]
    write_csv(Path(cfg["out"]) / f"scan_{ns[0]}_{ns[-1]}.csv", SCAN_COLUMNS, rows, cfg)
    summary = {"n": ns, "failed": [r.n for r in recs if not r.usable]}
    if cfg["fit"]:
        for key, kw in (("fits", {}), ("fits_upper_half", {"n_min": ns[len(ns) // 2]})):
            try:
                summary[key] = {k: asdict(v) for k, v in scan_fits(recs, **kw).items()}
            except ValueError as exc:
                summary[key] = f"skipped: {exc}"
    beta = 4.0 if cfg["beta"] is None else float(cfg["beta"])
    summary["tur"] = tur_report([r for r in recs if r.usable], beta)
    return summary


def cmd_fcs(cfg) -> dict:
    from .fcs import counting_cumulants, perturbation_coefficients, spectral_gap
    from .tickstats import waiting_moments

    n = _single_n(cfg)
    prof, params, src = resolve_profile(cfg, n)
    limits = _limits(cfg)
    delta, sigma = _delta(cfg, n)
    base = RingClockModel(prof, gamma=float(cfg["gamma"]))
    n_inf = waiting_moments(base, 2, limits).precision_inf
    cr = counting_cumulants(base.with_delta(delta), delta, h=float(cfg["chi_step"]), limits=limits)
    summary = {
        "n": n, "profile_source": src, "params": params, "delta": delta,
        "N_sigma": cr.precision_sigma, "N_inf": n_inf, "sigma_tick": sigma,
        "tur_ratio": cr.tur_ratio, "current": cr.current, "diffusion": cr.diffusion,
        "chi_step": cr.chi_step,
    }
    summary["gap"] = spectral_gap(base, 0.0, limits).gap if n >= 2 else None
    table = perturbation_coefficients(base, int(cfg["k_max"]), limits) if n >= 1 else None
    rows = [[i, k, table.lam[i, k].real, table.lam[i, k].imag] for i in range(3) for k in range(table.k_max + 1)]
    write_csv(Path(cfg["out"]) / f"fcs_n{n}_lambda.csv", ["i", "k", "re", "im"], rows, cfg)
    summary["N_sigma_series"] = table.precision(delta)
    return summary


def cmd_transmit(cfg) -> dict:
    from .optimize import load_records
    from .transmission import apodized_chain, flat_chain, packet_energy_band, transmission_band

    n = _single_n(cfg)
    if cfg["params"] is not None:
        p, ref_n = _ansatz(cfg), None
    else:
        recs = [r for r in load_records(cfg["cache_dir"]) if r.usable]
        if not recs:
            raise RingClockError(f"no cached scan records in {cfg['cache_dir']}; pass --params")
        p, ref_n = recs[-1].params, recs[-1].n
    gamma = float(cfg["gamma"])
    omegas = parse_grid(cfg["omegas"], "omegas") if cfg["omegas"] else np.linspace(-3 * p.g, 3 * p.g, 601)
    if cfg["band"]:
        band = tuple(parse_floats(cfg["band"], "band"))
    elif ref_n is not None:
        band = packet_energy_band(ref_n, p)
    else:
        band = (-0.5 * p.g, 0.5 * p.g)
    flat = transmission_band(flat_chain(n, p.g, gamma), omegas, band)
    apod = transmission_band(apodized_chain(n, p.g, p.mu_r, p.lambda_r, gamma), omegas, band)
    write_csv(
        Path(cfg["out"]) / f"transmit_n{n}.csv", ["omega", "T_flat", "T_apodized"],
        zip(omegas, flat.values, apod.values), cfg,
    )
    return {
        "n": n, "g": p.g, "mu_r": p.mu_r, "lambda_r": p.lambda_r, "band": band, "band_source_n": ref_n,
        "band_min_flat": flat.band_min, "band_min_apodized": apod.band_min,
    }


def cmd_transport(cfg) -> dict:
    from . import transport as tr

    n = _single_n(cfg)
    mode = cfg["mode"] or "momentum"
    out = Path(cfg["out"])
    if mode == "momentum":
        prof, params, src = resolve_profile(cfg, n)
        g = params.g if params is not None else prof.bulk_coupling()
        two_g_t = float(cfg["two_g_t"]) if cfg["two_g_t"] is not None else 0.5 * n
        psi = tr.packet_snapshot(prof, two_g_t, g)
        md = tr.momentum_distribution(psi)
        write_csv(out / f"transport_momentum_n{n}.csv", ["k", "prob"], zip(md.k, md.prob), cfg)
        return {
            "n": n, "mode": mode, "profile_source": src, "two_g_t": two_g_t, "mode_k": md.mode(),
            "spread_k": md.spread(), "total": md.total(), "energy_band_95": md.energy_band(g),
            "width_sites": tr.wavepacket_width(psi),
        }
    if mode == "continuum":
        g = float(cfg["g"])
        mu_l = float(cfg["mu_l"]) if cfg["mu_l"] is not None else 0.79 * g
        p = tr.ContinuumParams(mu_l=mu_l, g=g, lambda_l=float(cfg["lambda_l"]))
        two_g_t = float(cfg["two_g_t"]) if cfg["two_g_t"] is not None else 0.25 * n
        cmp = tr.compare_lattice_continuum(n, p, two_g_t)
        write_csv(
            out / f"transport_continuum_n{n}.csv", ["x", "lattice", "continuum"],
            zip(cmp.x, cmp.lattice, cmp.continuum), cfg,
        )
        d = {k: v for k, v in asdict(cmp).items() if k not in ("x", "lattice", "continuum")}
        d.update({"n": n, "mode": mode, "t0_rule": "2 g t0 = 3 lambda_l"})
        return d
    if mode == "width":
        g = float(cfg["g"])
        mu_l = float(cfg["mu_l"]) if cfg["mu_l"] is not None else 0.6 * g
        lams = [5.0, 10.0, 15.0, 20.0, 30.0, 40.0]
        rows = [[lam, tr.ramp_width(n, mu_l, g, lam, 8 * lam)] for lam in lams]
        write_csv(out / f"transport_width_n{n}.csv", ["lambda_l", "width"], rows, cfg)
        return {"n": n, "mode": mode, "mu_l": mu_l, "two_g_t": "8 lambda_l", "widths": rows}
    raise UsageError("--mode: transport supports momentum, continuum or width")


COMMANDS = {
    "tick": cmd_tick,
    "optimize": cmd_optimize,
    "scan": cmd_scan,
    "fcs": cmd_fcs,
    "transmit": cmd_transmit,
    "transport": cmd_transport,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ringclock", description="Ring-clock simulation and optimisation.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="subcommand", required=True)
    S = argparse.SUPPRESS
    for name, helptext in (
        ("tick", "tick-time density and moments"),
        ("optimize", "optimise one ring length"),
        ("scan", "warm-start scan and exponent fits"),
        ("fcs", "counting statistics, perturbation table and gap"),
        ("transmit", "transmission of flat and apodized chains"),
        ("transport", "lattice transport, momentum and continuum comparison"),
    ):
        p = sub.add_parser(name, help=helptext, argument_default=S)
        p.add_argument("--config", help="YAML file with default values for any flag")
        p.add_argument("--n", help="ring length, or start:stop:step for scan")
        p.add_argument("--gamma", type=float)
        grp = p.add_mutually_exclusive_group()
        grp.add_argument("--beta", type=float, help="entropy exponent, delta = n^-beta")
        grp.add_argument("--delta", type=float, help="reversal weight in [0, 1]")
        p.add_argument("--profile", choices=PROFILE_SOURCES)
        p.add_argument("--params", help="mu_l,g,mu_r,lambda_l,lambda_r")
        p.add_argument("--couplings", help="comma-separated g_0..g_{n-2}")
        p.add_argument("--g", type=float, help="bulk coupling for flat or continuum runs")
        p.add_argument("--cache-dir", dest="cache_dir")
        p.add_argument("--out", help="output directory")
        p.add_argument("--seed", type=int, help="RNG seed for multi-start jitter")
        p.add_argument("--hilbert-cap", dest="hilbert_cap", type=int)
        p.add_argument("--superop-cap", dest="superop_cap", type=int)
        p.add_argument("--tol", type=float, help="tick-density horizon tolerance")
        p.add_argument("--chi-step", dest="chi_step", type=float)
        p.add_argument("--k-max", dest="k_max", type=int)
        p.add_argument("--mode")
        p.add_argument("--fit", action="store_true")
        p.add_argument("--times", help="lo:hi:count time grid")
        p.add_argument("--omegas", help="lo:hi:count energy grid")
        p.add_argument("--band", help="lo,hi energy band for band_min")
        p.add_argument("--lambda-l", dest="lambda_l", type=float)
        p.add_argument("--mu-l", dest="mu_l", type=float)
        p.add_argument("--two-g-t", dest="two_g_t", type=float)
    return parser


def run(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if isinstance(exc.code, int) else 2
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, stream=sys.stderr)
    try:
        cfg = resolve_config(args)
        summary = COMMANDS[args.subcommand](cfg)
    except UsageError as exc:
        print(f"ringclock {args.subcommand}: error: {exc}", file=sys.stderr)
        return 2
    except (RingClockError, ValueError, np.linalg.LinAlgError) as exc:
        print(f"ringclock {args.subcommand}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    text = write_summary(Path(cfg["out"]) / f"{args.subcommand}_summary.json", summary, cfg)
    print(text)
    return 0


def main() -> None:
    sys.exit(run())
