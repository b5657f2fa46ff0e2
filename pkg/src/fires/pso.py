"""Outer particle-swarm search over element placements.

Each particle carries a surrogate ``y in [0, 1]^(2M)`` (one unit-square point
per subarea).  Before scoring it is snapped to presets and greedily repaired
for the minimum spacing; what cannot be repaired is penalized.  A placement is
scored by drawing the three hops on the active elements, forming the
phase-aligned gains, solving the inner OMA/NOMA/ES problem per draw and
averaging the resulting coverage.

Channel draws use common random numbers: the complex Gaussian innovations of
every (hop, draw) pair are fixed for a run and shared by all particles and
iterations, so the objective is a deterministic function of the placement and
the fixed-position baseline can be scored on exactly the same realizations.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field, replace
from typing import NamedTuple

import numpy as np

from .access import DEFAULT_MIN_RADIUS, es_inner, noma_inner, oma_inner
from .channel import HOPS, HopParams, complex_normal, jakes_from_positions, sqrt_factor, steering_vector
from .coverage import LinkBudget, QosTargets, unit_snr
from .geometry import (ApertureConfig, Placement, positions, repair_local, snap, spacing_violations,
                       surrogate_of)

MODES = ("oma", "noma", "es")
IMPROVEMENT_TOL = 1e-12
PENALTY_CAP = 1e12


@dataclass(frozen=True)
class PsoConfig:
    n_particles: int = 30
    iterations: int = 60
    w_max: float = 0.9
    w_min: float = 0.3
    c1: float = 0.5
    c2: float = 0.5
    v_max: float = 0.2
    mu_space: float = 1e6
    mu_q: float = 1e6
    n_mc: int = 5
    stall: int = 20
    seed: int = 1
    seeded_fraction: float = 0.5
    penalty_period: int = 10

    def __post_init__(self):
        if self.n_particles < 1 or self.iterations < 1 or self.n_mc < 1 or self.stall < 1:
            raise ValueError("swarm size, iterations, draws and stall window must be at least 1")
        if not 0 < self.w_min <= self.w_max:
            raise ValueError("inertia needs 0 < w_min <= w_max")
        if self.c1 < 0 or self.c2 < 0:
            raise ValueError("acceleration coefficients must be nonnegative")
        if not self.v_max > 0:
            raise ValueError("v_max must be positive")
        if not (self.mu_space > 0 and self.mu_q > 0):
            raise ValueError("penalty weights must be positive")
        if not 0 <= self.seeded_fraction <= 1:
            raise ValueError("seeded_fraction must lie in [0, 1]")

    @classmethod
    def constant_inertia(cls, w: float = 0.4, **kw) -> "PsoConfig":
        """Fixed inertia weight (the tabulated setting) instead of the decaying schedule."""
        return cls(w_max=w, w_min=w, **kw)


@dataclass(frozen=True)
class Scenario:
    """Everything needed to score a placement."""

    aperture: ApertureConfig
    budget: LinkBudget
    hop_f: HopParams
    hop_r: HopParams
    hop_t: HopParams
    targets: QosTargets = QosTargets()
    beta_r: float = 0.5  # energy split used by the fixed-split (ES) mode
    min_radius: float = DEFAULT_MIN_RADIUS
    noma_method: str = "exact"

    def __post_init__(self):
        if self.budget.M != self.aperture.M:
            raise ValueError(f"link budget has M={self.budget.M} but the aperture has {self.aperture.M} subareas")

    @property
    def hops(self) -> tuple[HopParams, HopParams, HopParams]:
        return self.hop_f, self.hop_r, self.hop_t


def make_scenario(aperture: ApertureConfig, budget: LinkBudget, K=5.0, angles=None, **kw) -> Scenario:
    """Scenario with large-scale gains tied to the budget.

    The base-station hop carries ``rho0 * d_f**-alpha``; both user hops are
    referenced to 1 m (``rho0``) so that the scored gain plugs straight into
    the coverage-radius expressions.  ``K`` is a scalar or a per-hop dict and
    ``angles`` maps hop -> (azimuth, elevation) in radians.
    """
    Ks = K if isinstance(K, dict) else {h: K for h in HOPS}
    angles = angles or {}
    gains = {"f": budget.rho0 * budget.d_f ** (-budget.alpha), "r": budget.rho0, "t": budget.rho0}
    hops = {h: HopParams(h, gains[h], Ks[h], *angles.get(h, (0.0, 0.0))) for h in HOPS}
    return Scenario(aperture, budget, hops["f"], hops["r"], hops["t"], **kw)


def channel_innovations(seed: int, n_mc: int, M: int) -> np.ndarray:
    """Unit complex Gaussian innovations, shape (n_mc, 3, M), one stream per (hop, draw)."""
    g = np.empty((n_mc, len(HOPS), M), dtype=complex)
    for n in range(n_mc):
        for q in range(len(HOPS)):
            rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(q, n)))
            g[n, q] = complex_normal(rng, M)
    return g


def cascaded_gains(scenario: Scenario, local: np.ndarray, innovations: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Phase-aligned gains ``H_r, H_t`` for placements (P, M) over draws -> two (P, n_mc) arrays."""
    cfg = scenario.aperture
    local = np.atleast_2d(local)
    pos = positions(cfg, local)  # (P, M, 2)
    F = sqrt_factor(jakes_from_positions(pos, cfg.wavelength))  # (P, M, M)
    n_mc, n_hops, M = innovations.shape
    flat = innovations.transpose(2, 0, 1).reshape(M, n_mc * n_hops)
    z = (F @ flat.real + 1j * (F @ flat.imag)).reshape(local.shape[0], M, n_mc, n_hops)
    mags = []
    for q, hop in enumerate(scenario.hops):
        los = steering_vector(pos, hop.azimuth, hop.elevation, cfg.wavelength)[:, :, None]
        h = np.sqrt(hop.gain) * (hop.los_weight * los + hop.nlos_weight * z[..., q])
        mags.append(np.abs(h))  # (P, M, n_mc)
    H_r = np.sum(mags[1] * mags[0], axis=1)
    H_t = np.sum(mags[2] * mags[0], axis=1)
    return H_r, H_t


def solve_inner(scenario: Scenario, mode: str, H_r, H_t):
    b = scenario.budget
    s_r = unit_snr(b, b.chi_r, H_r)
    s_t = unit_snr(b, b.chi_t, H_t)
    R_r, R_t = scenario.targets.R_r, scenario.targets.R_t
    if mode == "oma":
        return oma_inner(s_r, s_t, R_r, R_t, b.alpha, scenario.min_radius)
    if mode == "noma":
        return noma_inner(s_r, s_t, R_r, R_t, b.alpha, scenario.noma_method, scenario.min_radius)
    if mode == "es":
        return es_inner(s_r, s_t, scenario.beta_r, R_r, R_t, b.alpha, scenario.min_radius)
    raise ValueError(f"mode must be one of {MODES}, got {mode!r}")


class Scores(NamedTuple):
    J: np.ndarray
    D_tot: np.ndarray
    D_r: np.ndarray
    D_t: np.ndarray
    feasible: np.ndarray  # inner problem feasible on every draw
    feasible_rate: np.ndarray  # share of draws with a feasible inner problem
    B_q: np.ndarray
    violations: np.ndarray
    x: np.ndarray  # mean tau (OMA) or beta_r (NOMA/ES)
    y: np.ndarray  # mean p_r (NOMA)


def score_batch(scenario: Scenario, local: np.ndarray, violations: np.ndarray, mode: str,
                innovations: np.ndarray, mu_space: float, mu_q: float) -> Scores:
    """Penalized objective of already projected placements (P, M)."""
    H_r, H_t = cascaded_gains(scenario, local, innovations)
    inner = solve_inner(scenario, mode, H_r, H_t)
    ok = inner.feasible
    D_r = np.where(ok, inner.D_r, 0.0).mean(axis=1)
    D_t = np.where(ok, inner.D_t, 0.0).mean(axis=1)
    D_tot = D_r + D_t
    B_q_draw = np.where(ok, 0.0, 1.0 + inner.shortfall)
    B_q = B_q_draw.mean(axis=1)
    violations = np.asarray(violations, dtype=float)
    J = D_tot - mu_space * violations - mu_q * B_q
    return Scores(J, D_tot, D_r, D_t, ok.all(axis=1), ok.mean(axis=1), B_q, violations,
                  np.nanmean(np.where(ok, inner.x, np.nan), axis=1) if ok.any() else inner.x.mean(axis=1),
                  inner.y.mean(axis=1))


def project(cfg: ApertureConfig, y: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Snap surrogates (P, 2M) to presets and repair spacing; returns local indices and residual violations."""
    y = np.atleast_2d(y)
    local = snap(cfg, y.reshape(y.shape[0], cfg.M, 2))
    viol = np.asarray(spacing_violations(positions(cfg, local), cfg.D_min)).reshape(-1)
    residual = viol.copy()
    for p in np.flatnonzero(viol):
        local[p], residual[p] = repair_local(cfg, local[p])
    return local, residual


@dataclass(frozen=True)
class Evaluation:
    placement: Placement
    J: float
    D_tot: float
    D_r: float
    D_t: float
    feasible: bool
    violations: int
    inner: dict


def _inner_summary(mode: str, x: float, y: float) -> dict:
    if mode == "oma":
        return {"tau": float(x)}
    if mode == "noma":
        return {"beta_r": float(x), "p_r": float(y)}
    return {"beta_r": float(x)}


def score(scenario: Scenario, placement: Placement, mode: str, innovations: np.ndarray,
          mu_space: float = 1e6, mu_q: float = 1e6) -> Evaluation:
    """Score one placement as-is (no snapping or repair)."""
    viol = spacing_violations(placement)
    s = score_batch(scenario, placement.local[None, :], np.array([viol]), mode, innovations, mu_space, mu_q)
    return Evaluation(placement, float(s.J[0]), float(s.D_tot[0]), float(s.D_r[0]), float(s.D_t[0]),
                      bool(s.feasible[0]), int(viol), _inner_summary(mode, s.x[0], s.y[0]))


# --- swarm -----------------------------------------------------------------

@dataclass
class Swarm:
    y: np.ndarray
    v: np.ndarray
    pbest_y: np.ndarray
    pbest_J: np.ndarray
    gbest_y: np.ndarray | None = None
    gbest_J: float = -math.inf
    local: np.ndarray | None = None


def inertia(t: int, T: int, w_max: float, w_min: float) -> float:
    return w_min + (w_max - w_min) * (T - t) / T


def seed_surrogate(scenario: Scenario) -> np.ndarray:
    """Per-subarea preset maximizing the LoS surrogate sum_u |a_u||a_f|.

    Ties (within 1e-12 of the maximum) go to the preset nearest the subarea
    centre, then to the smallest index.  Returns the surrogate ``y`` (2M,).
    """
    cfg = scenario.aperture
    idx = np.repeat(np.arange(cfg.N_sub)[:, None], cfg.M, axis=1)
    pos = positions(cfg, idx)  # (N_sub, M, 2): every preset of every subarea
    a_f = np.abs(steering_vector(pos, scenario.hop_f.azimuth, scenario.hop_f.elevation, cfg.wavelength))
    val = sum(np.abs(steering_vector(pos, h.azimuth, h.elevation, cfg.wavelength)) * a_f
              for h in (scenario.hop_r, scenario.hop_t))
    centre = positions(cfg, snap(cfg, np.full((cfg.M, 2), 0.5)))
    d2 = np.sum((pos - centre[None]) ** 2, axis=-1)
    tied = val >= val.max(axis=0, keepdims=True) - 1e-12
    # among ties: nearest to the centre preset, then smallest index (argmin keeps the first)
    local = np.argmin(np.where(tied, d2, np.inf), axis=0).astype(np.int64)
    return surrogate_of(cfg, local).reshape(-1)


def init_swarm(scenario: Scenario, pso: PsoConfig, rng: np.random.Generator) -> Swarm:
    dim = 2 * scenario.aperture.M
    n_seeded = math.ceil(pso.seeded_fraction * pso.n_particles)
    y = rng.uniform(0.0, 1.0, (pso.n_particles, dim))
    if n_seeded:
        y[:n_seeded] = seed_surrogate(scenario)
    v = rng.uniform(-pso.v_max, pso.v_max, (pso.n_particles, dim))
    return Swarm(y, v, y.copy(), np.full(pso.n_particles, -math.inf))


def step(swarm: Swarm, t: int, pso: PsoConfig, rng: np.random.Generator, T: int | None = None) -> Swarm:
    """Velocity and position update with clamping; bests are updated by the caller after scoring."""
    T = pso.iterations if T is None else T
    w = inertia(t, T, pso.w_max, pso.w_min)
    r1 = rng.uniform(size=swarm.y.shape)
    r2 = rng.uniform(size=swarm.y.shape)
    gbest = swarm.y if swarm.gbest_y is None else swarm.gbest_y[None, :]
    v = w * swarm.v + pso.c1 * r1 * (swarm.pbest_y - swarm.y) + pso.c2 * r2 * (gbest - swarm.y)
    swarm.v = np.clip(v, -pso.v_max, pso.v_max)
    swarm.y = np.clip(swarm.y + swarm.v, 0.0, 1.0)
    return swarm


@dataclass
class PsoResult:
    mode: str
    placement: Placement
    J: float
    D_tot: float
    D_r: float
    D_t: float
    feasible: bool
    violations: int
    inner: dict
    trace: list = field(default_factory=list)
    iter_seconds: list = field(default_factory=list, compare=False)
    ever_clean: bool = False

    @property
    def iterations(self) -> int:
        return len(self.trace)

    @property
    def it99(self) -> int:
        return first_reaching(self.trace, 0.99)

    @property
    def total_seconds(self) -> float:
        return float(sum(self.iter_seconds))

    @property
    def seconds_per_iter(self) -> float:
        return self.total_seconds / max(len(self.iter_seconds), 1)


def first_reaching(trace, fraction: float) -> int:
    """1-based iteration at which the incumbent first comes within ``1 - fraction`` of its final value."""
    final = trace[-1]
    target = final - (1.0 - fraction) * abs(final)
    for i, v in enumerate(trace):
        if v >= target:
            return i + 1
    return len(trace)


def optimize(scenario: Scenario, mode: str, pso: PsoConfig = PsoConfig(),
             innovations: np.ndarray | None = None) -> PsoResult:
    """Run the bi-level search and return the incumbent placement with its inner solution."""
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}, got {mode!r}")
    cfg = scenario.aperture
    if innovations is None:
        innovations = channel_innovations(pso.seed, pso.n_mc, cfg.M)
    rng = np.random.default_rng(np.random.SeedSequence(pso.seed, spawn_key=(len(HOPS) + 1,)))
    swarm = init_swarm(scenario, pso, rng)
    mu_space, mu_q = pso.mu_space, pso.mu_q
    best = None
    trace, times = [], []
    stall = 0
    violated_recently = False
    ever_clean = False
    T = pso.iterations
    for t in range(T):
        t0 = time.perf_counter()
        local, viol = project(cfg, swarm.y)
        s = score_batch(scenario, local, viol, mode, innovations, mu_space, mu_q)
        swarm.local = local
        ever_clean |= bool(np.any(viol == 0))
        violated_recently |= bool(np.any(viol > 0))
        better = s.J > swarm.pbest_J
        swarm.pbest_y[better] = swarm.y[better]
        swarm.pbest_J[better] = s.J[better]
        p = int(np.argmax(s.J))  # lowest index wins ties
        if s.J[p] > swarm.gbest_J + IMPROVEMENT_TOL or best is None:
            improved = best is not None
            swarm.gbest_J = float(s.J[p])
            swarm.gbest_y = swarm.y[p].copy()
            best = (local[p].copy(), p, s)
            stall = 0 if improved or t == 0 else stall
        else:
            stall += 1
        trace.append(swarm.gbest_J)
        if (t + 1) % pso.penalty_period == 0:
            if violated_recently:
                mu_space = min(2.0 * mu_space, PENALTY_CAP)
                mu_q = min(2.0 * mu_q, PENALTY_CAP)
            violated_recently = False
        if t < T - 1 and stall < pso.stall:
            step(swarm, t + 1, pso, rng, T)
        times.append(time.perf_counter() - t0)
        if stall >= pso.stall:
            break
    loc, p, s = best
    return PsoResult(mode, Placement(cfg, loc), float(s.J[p]), float(s.D_tot[p]), float(s.D_r[p]),
                     float(s.D_t[p]), bool(s.feasible[p]), int(s.violations[p]),
                     _inner_summary(mode, s.x[p], s.y[p]), trace, times, ever_clean)


def baseline(scenario: Scenario, mode: str, pso: PsoConfig = PsoConfig(),
             innovations: np.ndarray | None = None) -> PsoResult:
    """Fixed-position surface: every element at its subarea centre, same draws and inner solver."""
    cfg = scenario.aperture
    if innovations is None:
        innovations = channel_innovations(pso.seed, pso.n_mc, cfg.M)
    t0 = time.perf_counter()
    ev = score(scenario, Placement.centers(cfg), mode, innovations, pso.mu_space, pso.mu_q)
    secs = time.perf_counter() - t0
    return PsoResult(mode, ev.placement, ev.J, ev.D_tot, ev.D_r, ev.D_t, ev.feasible, ev.violations,
                     ev.inner, [ev.J], [secs], ev.violations == 0)


def with_aperture(scenario: Scenario, aperture: ApertureConfig) -> Scenario:
    """Same scenario on a different aperture (element count follows the subarea count)."""
    return replace(scenario, aperture=aperture, budget=replace(scenario.budget, M=aperture.M))
