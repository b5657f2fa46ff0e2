"""Inner resource allocation for a fixed surface placement.

Given the unit-distance SNRs ``s_r, s_t`` produced by a placement, these
routines pick the protocol variables that maximize the total coverage
``D_r + D_t``:

* OMA: the time split ``tau`` (coarse scan plus golden-section refinement,
  vectorized over instances);
* NOMA: the energy split ``beta_r`` and power split ``p_r`` with ``p_t = 1 - p_r``
  (dense grid plus coordinate-wise golden refinement, or the exact stationary
  point of the separable objective);
* ES: fixed energy split, no inner freedom.

A user counts as covered only when its radius reaches ``min_radius`` (1 m by
default, the reference distance of the path-loss law).  Equivalently the rate
target must be met at 1 m, which is how infeasibility penalties are measured.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .coverage import (LinkBudget, QosTargets, noma_threshold, oma_threshold, radius_from_snr,
                       unit_snr)

INV_PHI = (math.sqrt(5.0) - 1.0) / 2.0
TAU_LO, TAU_HI = 1e-4, 1.0 - 1e-4
DEFAULT_MIN_RADIUS = 1.0
COVER_RTOL = 1e-9
OMA_SCAN = 65


def golden_section_max(f, lo, hi, tol=1e-9, history=None):
    """Maximize a unimodal ``f`` on ``[lo, hi]``; works elementwise on arrays.

    All instances run the same number of iterations, fixed by the widest
    bracket.  When ``history`` is a list, each iteration's bracket and probe
    values are appended to it.
    """
    a = np.array(lo, dtype=float)
    b = np.array(hi, dtype=float)
    width = float(np.max(b - a)) if a.size else 0.0
    if width <= tol:
        return 0.5 * (a + b)
    n = int(math.ceil(math.log(tol / width) / math.log(INV_PHI)))
    c = b - INV_PHI * (b - a)
    d = a + INV_PHI * (b - a)
    fc, fd = f(c), f(d)
    for _ in range(n):
        if history is not None:
            history.append((np.copy(a), np.copy(b), np.copy(c), np.copy(d), np.copy(fc), np.copy(fd)))
        left = fc >= fd  # keep [a, d]
        b = np.where(left, d, b)
        a = np.where(left, a, c)
        nc = np.where(left, b - INV_PHI * (b - a), d)
        nd = np.where(left, c, a + INV_PHI * (b - a))
        fnew = f(np.where(left, nc, nd))
        fc, fd = np.where(left, fnew, fd), np.where(left, fc, fnew)
        c, d = nc, nd
    return np.where(fc >= fd, c, d)


def _covered(D_r, D_t, min_radius):
    """Both users reach ``min_radius`` (up to rounding at the boundary)."""
    floor = min_radius * (1.0 - COVER_RTOL)
    return (D_r > 0) & (D_t > 0) & (D_r >= floor) & (D_t >= floor)


def _log2p(x):
    return np.log1p(np.asarray(x, dtype=float)) / math.log(2.0)


# --- effective gains -------------------------------------------------------

@dataclass(frozen=True)
class EffectiveGains:
    """Unit-distance SNR factors of a placement.

    ``S_u`` is the full-power, full-energy SNR used by OMA; ``G_u`` is the NOMA
    gain fed to the SINR expressions with power fractions.  Both include the
    transmit power, so ``G_u == S_u``; they are kept apart to mirror the two
    protocols' notation.
    """

    S_r: float
    S_t: float
    G_r: float
    G_t: float

    @property
    def strong(self) -> str:
        return decoding_order(self.G_r, self.G_t)


def effective_gains(budget: LinkBudget, chi_r: float, chi_t: float, H_r=None, H_t=None) -> EffectiveGains:
    s_r = unit_snr(budget, chi_r, H_r)
    s_t = unit_snr(budget, chi_t, H_t)
    return EffectiveGains(s_r, s_t, s_r, s_t)


def decoding_order(G_r, G_t):
    """Strong (SIC) user: the larger effective gain, ties going to the reflection side."""
    out = np.where(np.asarray(G_r) >= np.asarray(G_t), "r", "t")
    return str(out) if out.ndim == 0 else out


# --- NOMA SINRs and feasibility --------------------------------------------

def noma_sinrs(G_r, G_t, beta_r, beta_t, p_r, p_t):
    """SINRs with user ``r`` strong: (weak user, weak layer at strong user, strong after SIC)."""
    G_r, G_t, beta_r, beta_t, p_r, p_t = (np.asarray(v, dtype=float) for v in (G_r, G_t, beta_r, beta_t, p_r, p_t))
    gamma_t = beta_t * p_t * G_t / (beta_t * p_r * G_t + 1.0)
    gamma_rt = beta_t * p_t * G_r / (beta_t * p_r * G_r + 1.0)
    gamma_r = beta_r * p_r * G_r
    return tuple(float(v) if v.ndim == 0 else v for v in (gamma_t, gamma_rt, gamma_r))


class NomaCheck(NamedTuple):
    weak: float  # weak user's own decoding margin, bit/s/Hz
    strong: float  # strong user's margin after SIC
    sic: float  # margin for decoding the weak layer at the strong user

    @property
    def feasible(self) -> bool:
        return min(self.weak, self.strong, self.sic) >= -1e-12


def check_noma(G_r, G_t, beta_r, p_r, targets: QosTargets, strong: str = "r") -> NomaCheck:
    """Rate margins of the three NOMA constraints at fixed gains."""
    beta_t, p_t = 1.0 - beta_r, 1.0 - p_r
    if strong == "r":
        g_w, g_sw, g_s = noma_sinrs(G_r, G_t, beta_r, beta_t, p_r, p_t)
        R_s, R_w = targets.R_r, targets.R_t
    elif strong == "t":
        g_w, g_sw, g_s = noma_sinrs(G_t, G_r, beta_t, beta_r, p_t, p_r)
        R_s, R_w = targets.R_t, targets.R_r
    else:
        raise ValueError(f"strong user must be 'r' or 't', got {strong!r}")
    return NomaCheck(float(_log2p(g_w) - R_w), float(_log2p(g_s) - R_s), float(_log2p(g_sw) - R_w))


# --- OMA -------------------------------------------------------------------

def check_oma(S_r, S_t, targets: QosTargets) -> tuple[float, bool]:
    """Time split meeting the reflection-side target with equality, and whether the other side fits."""
    cap_r, cap_t = float(_log2p(S_r)), float(_log2p(S_t))
    if cap_r <= 0 or cap_t <= 0:
        return math.inf, False
    tau = targets.R_r / cap_r
    feasible = 0.0 < tau < 1.0 and (1.0 - tau) * cap_t >= targets.R_t - 1e-12
    return tau, bool(feasible)


@dataclass(frozen=True)
class InnerSolutionOMA:
    tau_star: float
    feasible: bool
    D_r: float
    D_t: float

    @property
    def D_tot(self) -> float:
        return self.D_r + self.D_t

    @property
    def objective(self) -> float:
        return self.D_tot if self.feasible else 0.0


class InnerBatch(NamedTuple):
    """Vectorized inner solution; ``x`` is tau (OMA), beta_r (NOMA/ES); ``y`` is p_r (NOMA)."""

    x: np.ndarray
    y: np.ndarray
    D_r: np.ndarray
    D_t: np.ndarray
    feasible: np.ndarray
    shortfall: np.ndarray  # sum of per-user rate shortfalls at the reference distance


def oma_inner(s_r, s_t, R_r, R_t, alpha, min_radius=DEFAULT_MIN_RADIUS, tol=1e-9, n_scan=OMA_SCAN) -> InnerBatch:
    """Best time split per instance.

    The total radius is not unimodal in ``tau`` in general: each term behaves
    like ``exp(-c / tau)`` near zero, so a second local maximum can sit at the
    end of the interval where one user is only just covered.  A coarse scan
    over the covering interval picks the right basin, then golden section
    refines inside it.
    """
    s_r, s_t = np.broadcast_arrays(np.asarray(s_r, dtype=float), np.asarray(s_t, dtype=float))

    def total(tau, sr=s_r, st=s_t):
        return (radius_from_snr(sr, oma_threshold(R_r, tau), alpha)
                + radius_from_snr(st, oma_threshold(R_t, 1.0 - tau), alpha))

    # slots long enough for each user to reach min_radius
    with np.errstate(divide="ignore"):
        need_r = R_r / _log2p(s_r * min_radius ** -alpha)
        need_t = R_t / _log2p(s_t * min_radius ** -alpha)
    lo = np.maximum(TAU_LO, need_r)
    hi = np.minimum(TAU_HI, 1.0 - need_t)
    empty = ~(lo <= hi)
    lo, hi = np.where(empty, TAU_LO, lo), np.where(empty, TAU_HI, hi)

    grid = lo[..., None] + (hi - lo)[..., None] * np.linspace(0.0, 1.0, n_scan)
    f_grid = total(grid, s_r[..., None], s_t[..., None])
    i = np.argmax(f_grid, axis=-1)[..., None]
    a = np.take_along_axis(grid, np.clip(i - 1, 0, n_scan - 1), axis=-1)[..., 0]
    b = np.take_along_axis(grid, np.clip(i + 1, 0, n_scan - 1), axis=-1)[..., 0]
    tau = golden_section_max(total, a, b, tol)
    g_best = np.take_along_axis(grid, i, axis=-1)[..., 0]
    tau = np.where(total(tau) >= np.max(f_grid, axis=-1), tau, g_best)
    D_r = np.asarray(radius_from_snr(s_r, oma_threshold(R_r, tau), alpha))
    D_t = np.asarray(radius_from_snr(s_t, oma_threshold(R_t, 1.0 - tau), alpha))
    feasible = _covered(D_r, D_t, min_radius)
    short = (np.maximum(0.0, R_r - tau * _log2p(s_r)) + np.maximum(0.0, R_t - (1 - tau) * _log2p(s_t)))
    return InnerBatch(np.asarray(tau), np.full(s_r.shape, np.nan), D_r, D_t, feasible, short)


def maximize_oma_coverage(budget: LinkBudget, chi_r: float, chi_t: float, targets: QosTargets,
                          H_r=None, H_t=None, min_radius=DEFAULT_MIN_RADIUS, tol=1e-9) -> InnerSolutionOMA:
    """Best time split for total OMA coverage (each user gets full power and surface energy in its slot)."""
    s_r, s_t = unit_snr(budget, chi_r, H_r), unit_snr(budget, chi_t, H_t)
    sol = oma_inner(s_r, s_t, targets.R_r, targets.R_t, budget.alpha, min_radius, tol)
    return InnerSolutionOMA(float(sol.x), bool(sol.feasible), float(sol.D_r), float(sol.D_t))


# --- NOMA ------------------------------------------------------------------

@dataclass(frozen=True)
class InnerSolutionNOMA:
    beta_r: float
    p_r: float
    decoding_order: str  # the strong (SIC) user
    feasible: bool
    D_r: float
    D_t: float

    @property
    def beta_t(self) -> float:
        return 1.0 - self.beta_r

    @property
    def p_t(self) -> float:
        return 1.0 - self.p_r

    @property
    def D_tot(self) -> float:
        return self.D_r + self.D_t

    @property
    def objective(self) -> float:
        return self.D_tot if self.feasible else 0.0


def noma_radii(s_r, s_t, beta_r, p_r, gamma_r, gamma_t, alpha, strong="r"):
    """Radii at ``(beta_r, p_r)``; the weak side is zero where its power share is too small."""
    beta_r, p_r = np.asarray(beta_r, dtype=float), np.asarray(p_r, dtype=float)
    beta_t, p_t = 1.0 - beta_r, 1.0 - p_r
    strong = np.asarray(strong)
    r_strong = strong == "r"
    eff_r = np.where(r_strong, p_r, np.clip(p_r - p_t * gamma_r, 0.0, None))
    eff_t = np.where(r_strong, np.clip(p_t - p_r * gamma_t, 0.0, None), p_t)
    D_r = radius_from_snr(beta_r * eff_r * s_r, gamma_r, alpha)
    D_t = radius_from_snr(beta_t * eff_t * s_t, gamma_t, alpha)
    return np.asarray(D_r), np.asarray(D_t)


def _weak_power_ok(p_r, gamma_r, gamma_t, strong):
    p_t = 1.0 - p_r
    return p_t > p_r * gamma_t if strong == "r" else p_r > p_t * gamma_r


def _noma_grid(s_r, s_t, gamma_r, gamma_t, alpha, strong, n_grid, sweeps, min_radius=0.0):
    betas = np.linspace(0.0, 1.0, n_grid)
    ps = np.linspace(0.0, 1.0, n_grid)
    B, Pg = np.meshgrid(betas, ps, indexing="ij")
    D_r, D_t = noma_radii(s_r, s_t, B, Pg, gamma_r, gamma_t, alpha, strong)
    obj = np.where(_covered(D_r, D_t, min_radius) & _weak_power_ok(Pg, gamma_r, gamma_t, strong), D_r + D_t, -np.inf)
    i, j = np.unravel_index(int(np.argmax(obj)), obj.shape)
    beta, p = float(betas[i]), float(ps[j])
    if not np.isfinite(obj[i, j]):
        return beta, p
    h = 1.0 / (n_grid - 1)
    # weak-user power condition as an open interval in p_r
    if strong == "r":
        p_lo, p_hi = 0.0, (1.0 / (1.0 + gamma_t)) * (1.0 - 1e-12)
    else:
        p_lo, p_hi = (gamma_r / (1.0 + gamma_r)) * (1.0 + 1e-12), 1.0

    def f_beta(b):
        dr, dt = noma_radii(s_r, s_t, b, p, gamma_r, gamma_t, alpha, strong)
        return np.where(_covered(dr, dt, min_radius), dr + dt, -np.inf)

    def f_p(q):
        dr, dt = noma_radii(s_r, s_t, beta, q, gamma_r, gamma_t, alpha, strong)
        return np.where(_covered(dr, dt, min_radius), dr + dt, -np.inf)

    best = float(f_beta(beta))
    for _ in range(sweeps):
        b_new = float(golden_section_max(f_beta, max(0.0, beta - h), min(1.0, beta + h), 1e-12))
        if f_beta(b_new) >= best:
            beta, best = b_new, float(f_beta(b_new))
        lo, hi = max(p_lo, p - h), min(p_hi, p + h)
        if hi > lo:
            p_new = float(golden_section_max(f_p, lo, hi, 1e-12))
            if f_p(p_new) >= best:
                p, best = p_new, float(f_p(p_new))
    return beta, p


def _log0(x):
    with np.errstate(divide="ignore"):
        return np.log(np.asarray(x, dtype=float))


def noma_exact(s_r, s_t, R_r, R_t, alpha, min_radius=DEFAULT_MIN_RADIUS) -> InnerBatch:
    """Exact maximizer of the NOMA coverage objective, vectorized over instances.

    Write ``A = s_s / (g_s (1 + g_w))`` and ``B = s_w / g_w`` for the strong
    and weak users and substitute ``p_s = q / (1 + g_w)``.  The radii become
    ``(A b q)^a`` and ``(B (1-b)(1-q))^a`` with ``a = 1/alpha``.  Along the
    efficient frontier ``b = q = s``, so the problem reduces to maximizing
    ``(A s^2)^a + (B (1-s)^2)^a`` over ``s`` in the interval where both radii
    reach ``min_radius``.  That function is concave for ``alpha > 2`` (the
    stationary point is clipped to the interval) and convex otherwise (an
    endpoint wins).
    """
    s_r, s_t = np.broadcast_arrays(np.asarray(s_r, dtype=float), np.asarray(s_t, dtype=float))
    g_r, g_t = noma_threshold(R_r), noma_threshold(R_t)
    r_strong = s_r >= s_t
    s_s = np.where(r_strong, s_r, s_t)
    s_w = np.where(r_strong, s_t, s_r)
    g_s = np.where(r_strong, g_r, g_t)
    g_w = np.where(r_strong, g_t, g_r)
    c = 1.0 + g_w
    a = 1.0 / alpha
    logA = _log0(s_s / (g_s * c))
    logB = _log0(s_w / g_w)
    floor = alpha * math.log(min_radius) if min_radius > 0 else -np.inf
    with np.errstate(over="ignore", invalid="ignore"):
        lo = np.exp(0.5 * (floor - logA))
        hi = 1.0 - np.exp(0.5 * (floor - logB))
    lo = np.nan_to_num(lo, nan=np.inf)
    hi = np.nan_to_num(hi, nan=-np.inf)
    ok = lo <= hi

    def total(s):
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            return np.nan_to_num(np.exp(a * (logA + 2 * _log0(s))) + np.exp(a * (logB + 2 * _log0(1 - s))))

    lo_c, hi_c = np.clip(lo, 0.0, 1.0), np.clip(hi, 0.0, 1.0)
    if alpha > 2:
        with np.errstate(invalid="ignore", over="ignore"):
            t = np.nan_to_num(a * (logA - logB) / (1.0 - 2.0 * a), nan=0.0)
            s_star = 0.5 * (1.0 + np.tanh(0.5 * t))  # logistic, overflow-free
    else:
        s_star = np.where(total(lo_c) >= total(hi_c), lo_c, hi_c)
    s = np.where(ok, np.clip(s_star, lo_c, np.maximum(lo_c, hi_c)), s_star)
    s = np.where(ok & (total(lo_c) > total(s)), lo_c, s)
    s = np.where(ok & (total(hi_c) > total(s)), hi_c, s)
    beta_r = np.where(r_strong, s, 1.0 - s)
    p_r = np.where(r_strong, s / c, 1.0 - s / c)
    strong = np.where(r_strong, "r", "t")
    D_r, D_t = noma_radii(s_r, s_t, beta_r, p_r, g_r, g_t, alpha, strong)
    feasible = _covered(D_r, D_t, min_radius)
    short = _noma_shortfall(s_r, s_t, beta_r, p_r, R_r, R_t, r_strong)
    return InnerBatch(beta_r, p_r, D_r, D_t, feasible, short)


def _noma_shortfall(s_r, s_t, beta_r, p_r, R_r, R_t, r_strong):
    beta_t, p_t = 1.0 - beta_r, 1.0 - p_r
    with np.errstate(invalid="ignore", divide="ignore"):
        rate_r = np.where(r_strong, _log2p(beta_r * p_r * s_r),
                          _log2p(beta_r * p_r * s_r / (beta_r * p_t * s_r + 1.0)))
        rate_t = np.where(r_strong, _log2p(beta_t * p_t * s_t / (beta_t * p_r * s_t + 1.0)),
                          _log2p(beta_t * p_t * s_t))
    return np.maximum(0.0, R_r - rate_r) + np.maximum(0.0, R_t - rate_t)


def noma_inner(s_r, s_t, R_r, R_t, alpha, method="exact", min_radius=DEFAULT_MIN_RADIUS,
               n_grid=200, sweeps=3) -> InnerBatch:
    if method == "exact":
        return noma_exact(s_r, s_t, R_r, R_t, alpha, min_radius)
    if method not in ("exact", "grid"):
        raise ValueError(f"unknown NOMA inner method {method!r}")
    s_r, s_t = np.broadcast_arrays(np.asarray(s_r, dtype=float), np.asarray(s_t, dtype=float))
    g_r, g_t = noma_threshold(R_r), noma_threshold(R_t)
    beta_r = np.empty(s_r.shape)
    p_r = np.empty(s_r.shape)
    for idx in np.ndindex(s_r.shape):
        strong = decoding_order(s_r[idx], s_t[idx])
        beta_r[idx], p_r[idx] = _noma_grid(float(s_r[idx]), float(s_t[idx]), g_r, g_t, alpha, strong, n_grid, sweeps,
                                                min_radius)
    r_strong = s_r >= s_t
    strong = np.where(r_strong, "r", "t")
    D_r, D_t = noma_radii(s_r, s_t, beta_r, p_r, g_r, g_t, alpha, strong)
    feasible = _covered(D_r, D_t, min_radius)
    short = _noma_shortfall(s_r, s_t, beta_r, p_r, R_r, R_t, r_strong)
    return InnerBatch(beta_r, p_r, D_r, D_t, feasible, short)


def maximize_noma_coverage(budget: LinkBudget, chi_r: float, chi_t: float, targets: QosTargets,
                           H_r=None, H_t=None, order: str | None = None, method: str = "grid",
                           min_radius=DEFAULT_MIN_RADIUS, n_grid=200, sweeps=3) -> InnerSolutionNOMA:
    """Best ``(beta_r, p_r)`` for total NOMA coverage with the decoding order fixed.

    ``order`` defaults to the user with the larger effective gain.  The grid
    method scans an ``n_grid x n_grid`` box restricted to the weak user's SIC
    power condition, then refines each coordinate by golden section.
    """
    s_r, s_t = float(unit_snr(budget, chi_r, H_r)), float(unit_snr(budget, chi_t, H_t))
    strong = decoding_order(s_r, s_t) if order is None else order
    g_r, g_t = noma_threshold(targets.R_r), noma_threshold(targets.R_t)
    if method == "exact" and order is None:
        sol = noma_exact(s_r, s_t, targets.R_r, targets.R_t, budget.alpha, min_radius)
        beta, p = float(sol.x), float(sol.y)
    elif method in ("grid", "exact"):
        beta, p = _noma_grid(s_r, s_t, g_r, g_t, budget.alpha, strong, n_grid, sweeps, min_radius)
    else:
        raise ValueError(f"unknown NOMA inner method {method!r}")
    D_r, D_t = noma_radii(s_r, s_t, beta, p, g_r, g_t, budget.alpha, strong)
    D_r, D_t = float(D_r), float(D_t)
    feasible = bool(_covered(D_r, D_t, min_radius))
    return InnerSolutionNOMA(beta, p, strong, feasible, D_r, D_t)


# --- energy splitting with a fixed split -----------------------------------

def es_inner(s_r, s_t, beta_r, R_r, R_t, alpha, min_radius=DEFAULT_MIN_RADIUS) -> InnerBatch:
    """Both users served simultaneously with full power and a fixed energy split."""
    s_r, s_t = np.broadcast_arrays(np.asarray(s_r, dtype=float), np.asarray(s_t, dtype=float))
    beta_r = np.broadcast_to(np.asarray(beta_r, dtype=float), s_r.shape)
    g_r, g_t = noma_threshold(R_r), noma_threshold(R_t)
    D_r = np.asarray(radius_from_snr(beta_r * s_r, g_r, alpha))
    D_t = np.asarray(radius_from_snr((1.0 - beta_r) * s_t, g_t, alpha))
    feasible = _covered(D_r, D_t, min_radius)
    short = (np.maximum(0.0, R_r - _log2p(beta_r * s_r)) + np.maximum(0.0, R_t - _log2p((1 - beta_r) * s_t)))
    return InnerBatch(np.array(beta_r), np.full(s_r.shape, np.nan), D_r, D_t, feasible, short)
