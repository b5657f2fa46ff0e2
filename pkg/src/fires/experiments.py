"""Experiment runners behind the command line: bounds, optimization, sweeps, benchmarks.

Each (axis value, mode, surface, seed) run is an independent task.  Tasks may
be farmed out to a process pool; results are always collected in task order,
so the CSV does not depend on scheduling.  The ``secs`` column is only filled
when timing is requested, keeping default output byte-reproducible.
"""

from __future__ import annotations

import csv
import io
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .config import ExperimentConfig
from .coverage import CoverageResult, coverage_result, noma_threshold, radius_es, radius_noma, radius_oma
from .pso import PsoResult, baseline, channel_innovations, optimize, score

CSV_HEADER = ("axis", "mode", "surface", "D_r_mean", "D_r_std", "D_t_mean", "D_t_std",
              "D_tot_mean", "D_tot_std", "feas_rate", "secs")
BENCH_HEADER = ("mode", "M", "N_p", "T", "tot_time", "time_per_iter", "it99", "D_tot_best")


def run_bound(config: ExperimentConfig, scheme: str = "oma") -> CoverageResult:
    """Closed-form far-field radii at the configured budget, no optimization.

    ``scheme`` is ``"es"`` (energy split ``beta_r``), ``"oma"`` (time split
    ``tau``, full energy in each slot) or ``"noma"`` (splits ``beta_r`` and
    ``p_r``, user r decoding first).
    """
    b = config.budget()
    t = config.targets()
    if scheme == "es":
        D_r = radius_es(b, config.beta_r, b.chi_r, noma_threshold(t.R_r))
        D_t = radius_es(b, 1 - config.beta_r, b.chi_t, noma_threshold(t.R_t))
    elif scheme == "oma":
        D_r = radius_oma(b, b.chi_r, config.tau, t.R_r)
        D_t = radius_oma(b, b.chi_t, 1 - config.tau, t.R_t)
    elif scheme == "noma":
        D_r, D_t, _ = radius_noma(b, config.beta_r, 1 - config.beta_r, config.p_r, 1 - config.p_r,
                                  b.chi_r, b.chi_t, t.noma_threshold("r"), t.noma_threshold("t"))
    else:
        raise ValueError(f"unknown scheme {scheme!r}")
    return coverage_result(D_r, D_t, config.aperture().rayleigh_distance, config.min_radius)


@dataclass(frozen=True)
class RunRecord:
    axis_value: object
    mode: str
    surface: str
    seed: int
    result: PsoResult


def _run_one(task) -> RunRecord:
    config, axis_value, mode, surface, seed = task
    pso = replace(config.pso, seed=seed)
    scenario = config.scenario()
    if surface == "star":
        res = baseline(scenario, mode, pso)
    elif config.axis == "beta_r":
        # ES split sweep: one placement optimized at the configured split, re-scored at each split
        res = _beta_sweep_point(config, scenario, pso)
    else:
        res = optimize(scenario, mode, pso)
    return RunRecord(axis_value, mode, surface, seed, res)


_BETA_CACHE: dict = {}


def _beta_sweep_point(config, scenario, pso) -> PsoResult:
    key = (repr(config.with_axis("beta_r", 0.5)), pso.seed)
    placement = _BETA_CACHE.get(key)
    if placement is None:
        placement = optimize(replace(scenario, beta_r=0.5), "es", pso).placement
        _BETA_CACHE[key] = placement
    ev = score(scenario, placement, "es", channel_innovations(pso.seed, pso.n_mc, scenario.aperture.M),
               pso.mu_space, pso.mu_q)
    return PsoResult("es", placement, ev.J, ev.D_tot, ev.D_r, ev.D_t, ev.feasible, ev.violations,
                     ev.inner, [ev.J], [0.0], ev.violations == 0)


def _tasks(config: ExperimentConfig, surfaces=None):
    values = config.values if config.axis is not None else (None,)
    out = []
    for v in values:
        cfg_v = config if v is None else config.with_axis(config.axis, v)
        for mode in cfg_v.modes():
            for surface in (surfaces or cfg_v.surfaces()):
                for seed in config.seeds:
                    out.append((cfg_v, v, mode, surface, seed))
    return out


def run_tasks(tasks, jobs: int = 1) -> list[RunRecord]:
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(_run_one, tasks, chunksize=max(1, len(tasks) // (4 * jobs))))
    return [_run_one(t) for t in tasks]


@dataclass(frozen=True)
class SweepRecord:
    axis_value: object
    mode: str
    surface: str
    D_r_mean: float
    D_r_std: float
    D_t_mean: float
    D_t_std: float
    D_tot_mean: float
    D_tot_std: float
    feas_rate: float
    secs: float | None
    inner: dict

    def row(self) -> list[str]:
        v = "" if self.axis_value is None else _fmt(self.axis_value)
        secs = "" if self.secs is None else _fmt(self.secs)
        return [v, self.mode, self.surface] + [_fmt(x) for x in (
            self.D_r_mean, self.D_r_std, self.D_t_mean, self.D_t_std, self.D_tot_mean, self.D_tot_std,
            self.feas_rate)] + [secs]


def _fmt(x) -> str:
    return repr(float(x)) if isinstance(x, (float, np.floating)) else str(x)


def aggregate(runs: list[RunRecord], timing: bool = False) -> list[SweepRecord]:
    """Mean and (population) std over seeds for each (axis value, mode, surface), in first-seen order."""
    groups: dict = {}
    for r in runs:
        groups.setdefault((_key(r.axis_value), r.mode, r.surface), []).append(r)
    out = []
    for (_, mode, surface), rs in groups.items():
        D_r = np.array([r.result.D_r for r in rs])
        D_t = np.array([r.result.D_t for r in rs])
        D_tot = np.array([r.result.D_tot for r in rs])
        feas = np.array([r.result.feasible for r in rs], dtype=float)
        inner = {}
        for k in rs[0].result.inner:
            inner[k] = float(np.mean([r.result.inner[k] for r in rs]))
        secs = float(sum(r.result.total_seconds for r in rs)) / len(rs) if timing else None
        out.append(SweepRecord(rs[0].axis_value, mode, surface, float(D_r.mean()), float(D_r.std()),
                               float(D_t.mean()), float(D_t.std()), float(D_tot.mean()), float(D_tot.std()),
                               float(feas.mean()), secs, inner))
    return out


def _key(v):
    return ("none",) if v is None else ("v", repr(v))


def to_csv(records: list[SweepRecord]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_HEADER)
    for rec in records:
        w.writerow(rec.row())
    return buf.getvalue()


def write_csv(text: str, path) -> None:
    Path(path).write_text(text, encoding="utf-8")


def run_sweep(config: ExperimentConfig, out=None, jobs: int | None = None) -> list[SweepRecord]:
    """Run every (value, mode, surface, seed) of the configured sweep; write the CSV when ``out`` is given."""
    if config.axis is None:
        raise ValueError("config has no sweep axis")
    runs = run_tasks(_tasks(config), config.jobs if jobs is None else jobs)
    records = aggregate(runs, config.timing)
    if out is not None:
        write_csv(to_csv(records), out)
    return records


def run_optimize(config: ExperimentConfig, surface: str | None = None, jobs: int | None = None):
    """Single-point runs (no sweep axis) over the configured seeds; returns per-run and aggregated records."""
    cfg = replace(config, axis=None, values=())
    surfaces = (surface,) if surface else None
    runs = run_tasks(_tasks(cfg, surfaces), config.jobs if jobs is None else jobs)
    return runs, aggregate(runs, config.timing)


def run_baseline_star_ris(config: ExperimentConfig, jobs: int | None = None):
    """Fixed centre positions, same draws and inner solvers as the optimized surface."""
    return run_optimize(config, surface="star", jobs=jobs)


@dataclass(frozen=True)
class BenchRow:
    mode: str
    M: int
    N_p: int
    T: int
    tot_time: float
    time_per_iter: float
    it99: float
    D_tot_best: float

    def row(self) -> list[str]:
        return [self.mode, str(self.M), str(self.N_p), str(self.T)] + [
            _fmt(x) for x in (self.tot_time, self.time_per_iter, self.it99, self.D_tot_best)]


def run_bench(config: ExperimentConfig) -> list[BenchRow]:
    """Runtime table over the configured (mode, M, N_p, T) grid, averaged over seeds.

    Runs are always serial so that timings are not distorted by sharing cores.
    """
    rows = []
    bench = config.bench
    for mode in config.modes():
        for M in bench.get("M", [config.M_h * config.M_v]):
            for N_p in bench.get("n_particles", [config.pso.n_particles]):
                for T in bench.get("iterations", [config.pso.iterations]):
                    cfg = config.with_axis("M", M)
                    # fixed budget of iterations so that totals compare across sizes
                    pso_kw = dict(n_particles=int(N_p), iterations=int(T), stall=int(T))
                    tot, per, it99, best = [], [], [], []
                    for seed in config.seeds:
                        res = optimize(cfg.scenario(), mode, replace(cfg.pso, seed=seed, **pso_kw))
                        tot.append(res.total_seconds)
                        per.append(res.seconds_per_iter)
                        it99.append(res.it99)
                        best.append(res.D_tot)
                    rows.append(BenchRow(mode, int(M), int(N_p), int(T), float(np.mean(tot)), float(np.mean(per)),
                                         float(np.mean(it99)), float(np.mean(best))))
    return rows


def bench_csv(rows: list[BenchRow]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(BENCH_HEADER)
    for r in rows:
        w.writerow(r.row())
    return buf.getvalue()


def runtime_ratio(rows: list[BenchRow], key: str, lo, hi, mode: str | None = None) -> float:
    """Ratio of mean total time at ``key == hi`` over ``key == lo`` (``key`` is ``'N_p'`` or ``'M'``)."""
    sel = [r for r in rows if mode is None or r.mode == mode]
    t_hi = np.mean([r.tot_time for r in sel if getattr(r, key) == hi])
    t_lo = np.mean([r.tot_time for r in sel if getattr(r, key) == lo])
    return float(t_hi / t_lo) if t_lo > 0 else math.inf
