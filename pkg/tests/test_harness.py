import csv
import io
import json
import math
from dataclasses import replace

import numpy as np
import pytest

from fires.channel import GaussianJitter, Quantized
from fires.cli import EXIT_CONFIG, EXIT_INFEASIBLE, EXIT_OK, _seed_list, main
from fires.config import ConfigError, ExperimentConfig, from_dict, load_config, parse_quantity
from fires.experiments import (CSV_HEADER, BenchRow, bench_csv, run_baseline_star_ris, run_bench, run_bound,
                               run_optimize, run_sweep, runtime_ratio, to_csv)
from fires.pso import PsoConfig

SMALL = {
    "aperture": {"A_h": "0.4 m", "A_v": "0.4 m", "M_h": 2, "M_v": 2, "N_h_sub": 6, "N_v_sub": 6},
    "pso": {"n_particles": 4, "iterations": 4, "n_mc": 2, "stall": 4},
    "seeds": [1, 2],
}


def small(**extra):
    raw = json.loads(json.dumps(SMALL))
    raw.update(extra)
    return from_dict(raw)


def bisect_root(f, lo=1e-3, hi=1e7):
    a, b = math.log(lo), math.log(hi)
    for _ in range(200):
        m = 0.5 * (a + b)
        a, b = (m, b) if f(math.exp(m)) > 0 else (a, m)
    return math.exp(0.5 * (a + b))


# --- units and config ---------------------------------------------------------------

@pytest.mark.parametrize("text,dim,want", [
    ("30 dBm", "power", 1.0), ("0 dBW", "power", 1.0), ("-114 dBm", "power", 10 ** -14.4),
    ("3.5 GHz", "frequency", 3.5e9), ("10 dB", "ratio", 10.0), ("90 deg", "angle", math.pi / 2),
    ("50 cm", "length", 0.5), ("2 bps/Hz", "rate", 2.0), (1.5, "number", 1.5),
])
def test_parse_quantity(text, dim, want):
    assert parse_quantity(text, dim, "k") == pytest.approx(want, rel=1e-12)


def test_parse_wavelength_units():
    assert parse_quantity("0.5 lambda", "length", "D_min", {"wavelength": 0.08}) == pytest.approx(0.04)


@pytest.mark.parametrize("text,dim", [("3 GHz", "power"), ("abc", "power"), ("1 furlong", "length")])
def test_parse_quantity_errors_name_the_key(text, dim):
    with pytest.raises(ConfigError) as exc:
        parse_quantity(text, dim, "budget.P")
    assert "budget.P" in str(exc.value)


@pytest.mark.parametrize("raw,key", [
    ({"budget": {"P": "30 GHz"}}, "budget.P"),
    ({"aperture": {"M_h": 2.5}}, "aperture.M_h"),
    ({"mode": "tdma"}, "mode"),
    ({"sweep": {"axis": "weather", "values": [1]}}, "sweep.axis"),
    ({"sweep": {"axis": "M", "values": [20]}}, "sweep.values"),
    ({"pso": {"swarm": 3}}, "pso.swarm"),
    ({"phase_error": {"model": "quantized", "levels": 0}}, "phase_error"),
    ({"seeds": []}, "seeds"),
])
def test_config_errors(raw, key):
    with pytest.raises(ConfigError) as exc:
        from_dict(raw)
    assert key in str(exc.value)


def test_defaults_match_reference_setup():
    c = from_dict({})
    assert c.P == pytest.approx(1.0) and c.M_h * c.M_v == 36 and c.R_r == c.R_t == 1.0
    assert c.aperture().D_min == pytest.approx(c.wavelength / 2)
    assert set(c.K.values()) == {5.0} and c.seeds == tuple(range(1, 11))


def test_config_roundtrip_file(tmp_path):
    p = tmp_path / "c.json"
    p.write_text(json.dumps({"hops": {"K": 20, "t": {"position": ["10 m", "0 m", "-20 m"]}},
                             "phase_error": {"model": "jitter", "variance": "0.25 rad^2"},
                             "pso": {"w": 0.4}}))
    c = load_config(p)
    assert c.K == {"f": 20.0, "r": 20.0, "t": 20.0}
    assert c.angles["t"][0] == pytest.approx(math.atan(0.5))
    assert c.phase_r == GaussianJitter(0.25)
    assert c.pso.w_max == c.pso.w_min == 0.4
    with pytest.raises(ConfigError):
        load_config(tmp_path / "missing.json")


def test_seed_list_parser():
    assert _seed_list("1-3,7") == (1, 2, 3, 7)


# --- bound ---------------------------------------------------------------------------

def test_bound_oma_matches_bisection():
    c = ExperimentConfig()
    res = run_bound(c, "oma")
    b = c.budget()
    s = b.P / b.sigma2 * (b.M * b.rho0 * b.d_f ** (-b.alpha / 2)) ** 2
    # user at distance d: SNR = s d^-alpha, needs 0.5 log2(1 + SNR) >= 1
    root = bisect_root(lambda d: 0.5 * math.log2(1 + s * d ** -b.alpha) - 1.0)
    assert res.D_r == pytest.approx(root, rel=1e-9) and res.D_t == pytest.approx(root, rel=1e-9)
    assert res.feasible and not res.rayleigh_warning


def test_bound_quantization_ratio():
    ideal = run_bound(ExperimentConfig(), "oma")
    q2 = run_bound(replace(ExperimentConfig(), phase_r=Quantized(2), phase_t=Quantized(2)), "oma")
    assert q2.D_tot / ideal.D_tot == pytest.approx((2 / math.pi) ** (2 / 2.1), rel=1e-12)


def test_bound_zero_power_infeasible():
    res = run_bound(replace(ExperimentConfig(), P=0.0), "oma")
    assert res.D_r == res.D_t == 0.0 and not res.feasible


def test_bound_schemes():
    c = ExperimentConfig()
    for scheme in ("es", "oma", "noma"):
        assert run_bound(c, scheme).D_tot > 0
    with pytest.raises(ValueError):
        run_bound(c, "tdma")


# --- runs and CSV ---------------------------------------------------------------------

def test_optimize_and_baseline_records():
    c = small(mode="oma")
    runs, recs = run_optimize(c)
    assert len(runs) == 2 and len(recs) == 1
    _, star = run_baseline_star_ris(c)
    assert star[0].surface == "star" and star[0].D_tot_mean <= recs[0].D_tot_mean + 1e-9


def test_single_preset_fires_equals_star():
    c = small(mode="oma", aperture=dict(SMALL["aperture"], N_h_sub=1, N_v_sub=1))
    _, fires = run_optimize(c)
    _, star = run_baseline_star_ris(c)
    assert fires[0].row()[3:] == star[0].row()[3:]


def test_sweep_csv_shape_and_determinism(tmp_path):
    c = small(mode="both", surface="both", sweep={"axis": "K", "values": [0, 5]})
    out = tmp_path / "k.csv"
    run_sweep(c, out=out)
    text = out.read_text()
    rows = list(csv.reader(io.StringIO(text)))
    assert tuple(rows[0]) == CSV_HEADER
    assert len(rows) == 1 + 2 * 2 * 2
    assert all(r[-1] == "" for r in rows[1:])  # secs left blank without timing
    assert [r[:3] for r in rows[1:3]] == [["0", "oma", "fires"], ["0", "oma", "star"]]
    run_sweep(c, out=tmp_path / "again.csv")
    run_sweep(c, out=tmp_path / "par.csv", jobs=2)
    assert (tmp_path / "again.csv").read_bytes() == out.read_bytes() == (tmp_path / "par.csv").read_bytes()


def test_timing_fills_secs():
    recs = run_sweep(small(mode="oma", timing=True, sweep={"axis": "K", "values": [5]}))
    assert recs[0].secs > 0


def test_jitter_sweep_follows_attenuation_law():
    c = small(mode="oma", sweep={"axis": "jitter", "values": [0.0, 0.5]})
    a, b = run_sweep(c)
    assert b.D_tot_mean / a.D_tot_mean == pytest.approx(math.exp(-0.5 / 2.1), rel=1e-6)


def test_beta_sweep_crossing():
    c = small(sweep={"axis": "beta_r", "values": [0.3, 0.5, 0.7]})
    recs = run_sweep(c)
    assert [r.mode for r in recs] == ["es"] * 3
    D_r = [r.D_r_mean for r in recs]
    D_t = [r.D_t_mean for r in recs]
    assert D_r[0] < D_r[1] < D_r[2] and D_t[0] > D_t[1] > D_t[2]
    assert D_r[0] < D_t[0] and D_r[2] > D_t[2]


def test_bench_table_and_ratio():
    c = small(mode="oma", bench={"M": [4], "n_particles": [2, 4], "iterations": [3]})
    rows = run_bench(c)
    assert len(rows) == 2 and all(r.it99 <= r.T for r in rows)
    text = bench_csv(rows)
    assert text.splitlines()[0].startswith("mode,M,N_p,T")
    fake = [BenchRow("oma", 36, 30, 60, 2.0, 0.1, 5, 1.0), BenchRow("oma", 36, 60, 60, 4.2, 0.2, 5, 1.0)]
    assert runtime_ratio(fake, "N_p", 30, 60) == pytest.approx(2.1)


# --- CLI --------------------------------------------------------------------------------

def test_cli_bound_ok(capsys):
    assert main(["bound"]) == EXIT_OK
    out = capsys.readouterr().out
    assert "oma:" in out and "noma:" in out


def test_cli_config_error(tmp_path, capsys):
    p = tmp_path / "bad.json"
    p.write_text(json.dumps({"budget": {"P": "1 GHz"}}))
    assert main(["bound", "--config", str(p)]) == EXIT_CONFIG
    assert "budget.P" in capsys.readouterr().err
    assert main(["sweep"]) == EXIT_CONFIG  # no axis in the default config


def test_cli_infeasible(tmp_path):
    p = tmp_path / "hard.json"
    p.write_text(json.dumps({"budget": {"P": "-200 dBm"}}))
    assert main(["bound", "--config", str(p)]) == EXIT_INFEASIBLE


def test_cli_optimize_writes_csv(tmp_path):
    p = tmp_path / "c.json"
    p.write_text(json.dumps(SMALL))
    out = tmp_path / "o.csv"
    assert main(["optimize", "--config", str(p), "--mode", "oma", "--seed", "1", "--out", str(out)]) == EXIT_OK
    rows = list(csv.reader(out.open()))
    assert tuple(rows[0]) == CSV_HEADER and rows[1][1:3] == ["oma", "fires"]
