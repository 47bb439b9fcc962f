from __future__ import annotations

import json

import pytest

from ringclock.cli import UsageError, parse_grid, parse_range, run

PARAMS = "0.09,0.165,0.97,3.0,0.56"


def body(path):
    return [line for line in path.read_text().splitlines() if not line.startswith("#")]


def summary(capsys):
    return json.loads(capsys.readouterr().out)


def test_parse_range():
    assert parse_range("7") == [7]
    assert parse_range("50:400:25")[-1] == 400 and len(parse_range("50:400:25")) == 15
    for bad in ("a", "5:1:1", "1:5", "1:5:0"):
        with pytest.raises(UsageError):
            parse_range(bad)
    with pytest.raises(UsageError):
        parse_grid("0:1", "times")


def test_tick_poisson(tmp_path, capsys):
    assert run(["tick", "--n", "1", "--out", str(tmp_path)]) == 0
    s = summary(capsys)["summary"]
    assert abs(s["E_T"] - 1) < 1e-10 and abs(s["Var_T"] - 1) < 1e-10 and abs(s["N_inf"] - 1) < 1e-10
    csv = tmp_path / "tick_n1.csv"
    text = csv.read_bytes()
    assert b"\r" not in text
    lines = text.decode().splitlines()
    assert lines[0].startswith("# ") and lines[1].startswith("# config: ")
    assert json.loads(lines[1][len("# config: "):])["n"] == "1"
    assert body(csv)[0] == "t,pdf,survival"


def test_tick_reproducible(tmp_path, capsys):
    args = ["tick", "--n", "12", "--profile", "ansatz", "--params", PARAMS]
    assert run(args + ["--out", str(tmp_path / "a")]) == 0
    assert run(args + ["--out", str(tmp_path / "b")]) == 0
    a, b = tmp_path / "a" / "tick_n12.csv", tmp_path / "b" / "tick_n12.csv"
    assert body(a) == body(b)
    row = body(a)[5].split(",")
    assert all(v == "%.17g" % float(v) for v in row)


def test_config_file_and_override(tmp_path, capsys):
    cfg = tmp_path / "run.yaml"
    cfg.write_text(f"n: 12\nprofile: ansatz\nparams: '{PARAMS}'\ngamma: 2.0\nout: {tmp_path / 'o'}\n")
    assert run(["tick", "--config", str(cfg)]) == 0
    doc = summary(capsys)
    assert doc["config"]["gamma"] == 2.0
    assert run(["tick", "--config", str(cfg), "--gamma", "1.0"]) == 0
    doc2 = summary(capsys)
    assert doc2["config"]["gamma"] == 1.0
    assert doc2["summary"]["E_T"] != doc["summary"]["E_T"]


def test_usage_errors(tmp_path, capsys):
    assert run(["tick", "--n", "5", "--beta", "1", "--delta", "0.1"]) == 2
    assert "--delta" in capsys.readouterr().err
    assert run(["tick", "--n", "x"]) == 2
    assert "--n" in capsys.readouterr().err
    assert run(["tick", "--n", "5", "--profile", "ansatz"]) == 2
    assert "--profile" in capsys.readouterr().err
    assert run(["bogus"]) == 2
    bad = tmp_path / "bad.yaml"
    bad.write_text("n: 5\nunknown_key: 1\n")
    assert run(["tick", "--config", str(bad)]) == 2


def test_domain_errors(tmp_path, capsys):
    assert run(["tick", "--n", "10", "--profile", "ansatz", "--params", "2,1,0,1,1", "--out", str(tmp_path)]) == 1
    assert "NonPositiveCoupling" in capsys.readouterr().err
    assert run(["tick", "--n", "10", "--profile", "cache", "--cache-dir", str(tmp_path / "none")]) == 1


def test_fcs_summary_keys(tmp_path, capsys):
    args = ["fcs", "--n", "10", "--profile", "ansatz", "--params", PARAMS, "--beta", "4", "--out", str(tmp_path)]
    assert run(args) == 0
    s = summary(capsys)["summary"]
    for key in ("N_sigma", "N_inf", "sigma_tick", "tur_ratio", "gap"):
        assert key in s
    assert 0.9 < s["N_sigma"] / s["N_inf"] < 1
    assert body(tmp_path / "fcs_n10_lambda.csv")[0] == "i,k,re,im"


def test_optimize_and_scan(tmp_path, capsys):
    cache = str(tmp_path / "cache")
    assert run(["optimize", "--n", "10", "--cache-dir", cache, "--out", str(tmp_path)]) == 0
    assert summary(capsys)["summary"]["objective"] > 47
    assert (tmp_path / "cache" / "n_10.record").exists()
    assert run(["scan", "--n", "10:10:1", "--fit", "--cache-dir", cache, "--out", str(tmp_path)]) == 0
    s = summary(capsys)["summary"]
    assert s["fits"].startswith("skipped")
    header = body(tmp_path / "scan_10_10.csv")[0]
    assert header == "n,mu_l,g,mu_r,lambda_l,lambda_r,n_inf,e_t,var_t"


def test_transmit_and_transport(tmp_path, capsys):
    assert run(["transmit", "--n", "32", "--params", "0.12,0.155,1.03,7,0.54", "--out", str(tmp_path)]) == 0
    s = summary(capsys)["summary"]
    assert s["band_min_flat"] < 0.9 and s["band_min_apodized"] > 0.99
    assert body(tmp_path / "transmit_n32.csv")[0] == "omega,T_flat,T_apodized"
    args = ["transport", "--n", "100", "--mode", "momentum", "--profile", "ansatz", "--params", PARAMS]
    assert run(args + ["--out", str(tmp_path)]) == 0
    assert abs(summary(capsys)["summary"]["mode_k"] - 1.5707963) < 0.07
    assert run(["transport", "--n", "100", "--mode", "nonsense", "--out", str(tmp_path)]) == 2
