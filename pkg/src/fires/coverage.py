"""Far-field coverage radii for the energy-splitting, OMA and NOMA protocols.

All quantities are linear (W, m, dimensionless).  Every radius function takes
an optional ``gain``: the realized phase-aligned cascaded gain of the surface
with the user-side hop referenced to 1 m.  Without it the ideal far-field gain
``M * rho0 * d_f**(-alpha/2)`` is used, which reproduces the closed forms
exactly.  Radii come back as floats, or arrays when any input is an array.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class LinkBudget:
    P: float  # W
    sigma2: float  # W
    rho0: float  # power gain at 1 m
    alpha: float
    d_f: float  # m
    M: int
    chi_r: float = 1.0
    chi_t: float = 1.0

    def __post_init__(self):
        for name in ("sigma2", "rho0", "alpha", "d_f", "M"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive, got {getattr(self, name)!r}")
        if not self.P >= 0:
            raise ValueError("transmit power must be nonnegative")
        for name in ("chi_r", "chi_t"):
            if not 0 < getattr(self, name) <= 1:
                raise ValueError(f"{name} must lie in (0, 1]")

    @property
    def snr_scale(self) -> float:
        return self.P / self.sigma2

    @property
    def ideal_gain(self) -> float:
        return self.M * self.rho0 * self.d_f ** (-self.alpha / 2.0)

    def chi(self, user: str) -> float:
        return {"r": self.chi_r, "t": self.chi_t}[user]


@dataclass(frozen=True)
class QosTargets:
    R_r: float = 1.0
    R_t: float = 1.0

    def __post_init__(self):
        if not (self.R_r > 0 and self.R_t > 0):
            raise ValueError("target rates must be positive")

    def rate(self, user: str) -> float:
        return {"r": self.R_r, "t": self.R_t}[user]

    def oma_threshold(self, user: str, tau) -> float:
        return oma_threshold(self.rate(user), tau)

    def noma_threshold(self, user: str) -> float:
        return noma_threshold(self.rate(user))


@dataclass(frozen=True)
class CoverageResult:
    D_r: float
    D_t: float
    feasible_r: bool
    feasible_t: bool
    rayleigh_warning: bool = False

    @property
    def D_tot(self) -> float:
        return self.D_r + self.D_t

    @property
    def feasible(self) -> bool:
        return self.feasible_r and self.feasible_t


def _out(x):
    return float(x) if np.ndim(x) == 0 else x


def oma_threshold(rate, tau):
    """SNR needed for ``rate`` bit/s/Hz inside a slot of relative length ``tau``."""
    tau = np.asarray(tau, dtype=float)
    if np.any(tau <= 0):
        raise ValueError("time fraction must be positive")
    with np.errstate(over="ignore"):
        return _out(np.expm1(np.log(2.0) * np.asarray(rate) / tau))


def noma_threshold(rate):
    return _out(np.expm1(np.log(2.0) * np.asarray(rate, dtype=float)))


def unit_snr(budget: LinkBudget, chi, gain=None):
    """SNR at 1 m from the surface for full power and surface energy."""
    g = budget.ideal_gain if gain is None else np.asarray(gain, dtype=float)
    return _out(budget.snr_scale * np.square(chi) * np.square(g))


def snr_at_distance(budget: LinkBudget, beta, chi, D, gain=None):
    D = np.asarray(D, dtype=float)
    if np.any(D <= 0):
        raise ValueError("distance must be positive")
    return _out(np.asarray(beta) * unit_snr(budget, chi, gain) * D ** (-budget.alpha))


def radius_from_snr(unit_snr_value, threshold, alpha: float):
    """Largest distance at which ``unit_snr * D**-alpha >= threshold``; 0 when unreachable."""
    s = np.asarray(unit_snr_value, dtype=float)
    th = np.asarray(threshold, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        arg = s / th
        r = np.where((s > 0) & (th > 0) & np.isfinite(th), arg, 0.0) ** (1.0 / alpha)
    return _out(np.nan_to_num(r, nan=0.0, posinf=np.inf))


def radius_es(budget: LinkBudget, beta, chi, gamma_th, gain=None):
    """Coverage radius of one side under energy splitting with share ``beta``."""
    if np.any(np.asarray(gamma_th) <= 0):
        raise ValueError("SNR threshold must be positive")
    return radius_from_snr(np.asarray(beta) * unit_snr(budget, chi, gain), gamma_th, budget.alpha)


def radius_oma(budget: LinkBudget, chi, tau, rate, beta=1.0, gain=None):
    """Radius of a user served in a slot of length ``tau`` with full power."""
    gamma = oma_threshold(rate, tau)
    return radius_from_snr(np.asarray(beta) * unit_snr(budget, chi, gain), gamma, budget.alpha)


def radius_noma(budget: LinkBudget, beta_r, beta_t, p_r, p_t, chi_r, chi_t, gamma_r, gamma_t,
                gain_r=None, gain_t=None, strong: str = "r"):
    """Strong- and weak-user radii for two-user power-domain NOMA.

    The strong user (``strong``) decodes after cancelling the weak user's
    layer; the weak user treats the strong layer as interference and is only
    covered when its power share exceeds ``p_strong * gamma_weak``.  Returns
    ``(D_r, D_t, feasible)`` where ``feasible`` means both radii are positive.
    """
    b_r, b_t, p_r_, p_t_ = (np.asarray(v, dtype=float) for v in (beta_r, beta_t, p_r, p_t))
    if np.any(p_r_ < 0) or np.any(p_t_ < 0) or np.any(p_r_ + p_t_ > 1 + 1e-12):
        raise ValueError("power fractions must be nonnegative and sum to at most 1")
    if np.any(np.abs(b_r + b_t - 1) > 1e-12) or np.any(b_r < 0) or np.any(b_t < 0):
        raise ValueError("energy-splitting shares must be in [0, 1] and sum to 1")
    s_r = unit_snr(budget, chi_r, gain_r)
    s_t = unit_snr(budget, chi_t, gain_t)
    if strong == "r":
        D_r = radius_from_snr(b_r * p_r_ * s_r, gamma_r, budget.alpha)
        D_t = radius_from_snr(b_t * np.clip(p_t_ - p_r_ * gamma_t, 0, None) * s_t, gamma_t, budget.alpha)
    elif strong == "t":
        D_t = radius_from_snr(b_t * p_t_ * s_t, gamma_t, budget.alpha)
        D_r = radius_from_snr(b_r * np.clip(p_r_ - p_t_ * gamma_r, 0, None) * s_r, gamma_r, budget.alpha)
    else:
        raise ValueError(f"strong user must be 'r' or 't', got {strong!r}")
    feasible = (np.asarray(D_r) > 0) & (np.asarray(D_t) > 0)
    return D_r, D_t, _out(feasible) if np.ndim(feasible) else bool(feasible)


def coverage_result(D_r: float, D_t: float, rayleigh: float, min_radius: float = 0.0) -> CoverageResult:
    """Package radii with per-side feasibility and the far-field validity warning."""
    feas_r = D_r > 0 and D_r >= min_radius
    feas_t = D_t > 0 and D_t >= min_radius
    warn = (D_r <= rayleigh) or (D_t <= rayleigh)
    return CoverageResult(float(D_r), float(D_t), bool(feas_r), bool(feas_t), bool(warn))
