"""Per-hop Rician channels over the active elements.

LoS parts are planar steering vectors at the element positions; NLoS parts are
circular Gaussian vectors coloured by the Jakes (sinc) spatial correlation of
the preset grid.  Phase-control imperfections are summarized by a scalar
attenuation ``chi`` applied to the phase-aligned cascaded gain.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Union

import numpy as np

from .geometry import ApertureConfig, Placement, grid_position, pair_distances

HOPS = ("f", "r", "t")


class CovarianceFactorizationError(np.linalg.LinAlgError):
    pass


@dataclass(frozen=True)
class HopParams:
    hop: str
    gain: float  # large-scale power gain l_q (linear)
    K: float  # Rician factor (linear); math.inf for pure LoS
    azimuth: float = 0.0  # rad
    elevation: float = 0.0  # rad

    def __post_init__(self):
        if self.hop not in HOPS:
            raise ValueError(f"hop must be one of {HOPS}, got {self.hop!r}")
        if not self.gain > 0:
            raise ValueError("large-scale gain must be positive")
        if not self.K >= 0:
            raise ValueError("Rician factor must be nonnegative")
        for name in ("azimuth", "elevation"):
            a = getattr(self, name)
            if not -math.pi < a <= math.pi:
                raise ValueError(f"{name} must lie in (-pi, pi], got {a!r}")

    @property
    def los_weight(self) -> float:
        return 1.0 if math.isinf(self.K) else math.sqrt(self.K / (self.K + 1.0))

    @property
    def nlos_weight(self) -> float:
        return 0.0 if math.isinf(self.K) else math.sqrt(1.0 / (self.K + 1.0))


def angles_towards(point, side: str) -> tuple[float, float]:
    """Azimuth/elevation of ``point`` (x, y, z) seen from the surface origin.

    The surface lies in the z = 0 plane with its normal along +z.  The
    reflection side ``'r'`` (and the base station, ``'f'``) must lie in the
    +z half-space, the transmission side ``'t'`` in the -z half-space.
    """
    p = np.asarray(point, dtype=float)
    norm = np.linalg.norm(p)
    if norm == 0:
        raise ValueError("point coincides with the surface origin")
    dx, dy, dz = p / norm
    if side in ("r", "f") and dz <= 0:
        raise ValueError(f"side {side!r} must lie in the +normal half-space")
    if side == "t" and dz >= 0:
        raise ValueError("side 't' must lie in the -normal half-space")
    elevation = math.asin(dy)
    azimuth = math.atan2(dx, abs(dz))
    return azimuth, elevation


def steering_vector(pos, azimuth: float, elevation: float, wavelength: float | None = None) -> np.ndarray:
    """Unit-modulus planar response at positions of shape (..., M, 2) or at a placement."""
    if isinstance(pos, Placement):
        wavelength = pos.cfg.wavelength if wavelength is None else wavelength
        pos = pos.positions
    if wavelength is None:
        raise ValueError("wavelength is required for raw positions")
    pos = np.asarray(pos, dtype=float)
    k = 2.0 * np.pi / wavelength
    phase = k * (pos[..., 0] * np.sin(azimuth) * np.cos(elevation) + pos[..., 1] * np.sin(elevation))
    return np.exp(1j * phase)


def jakes_from_positions(pos, wavelength: float) -> np.ndarray:
    """Sinc correlation between positions of shape (..., M, 2) -> (..., M, M)."""
    return np.sinc((2.0 / wavelength) * pair_distances(np.asarray(pos, dtype=float)))


def sqrt_factor(R: np.ndarray, check_tol: float | None = None) -> np.ndarray:
    """Symmetric PSD square root ``F`` with ``F @ F.T == R`` after flooring negative eigenvalues.

    Works on stacks (..., n, n).  The principal root is unique, so nearby
    placements get nearby factors.
    """
    R = np.asarray(R, dtype=float)

    def diagnostics():
        return (f"matrix of shape {R.shape}: finite={bool(np.isfinite(R).all())}, "
                f"max asymmetry={np.nanmax(np.abs(R - np.swapaxes(R, -1, -2))):.3e}")

    if not np.isfinite(R).all():
        raise CovarianceFactorizationError("cannot factor " + diagnostics())
    try:
        w, U = np.linalg.eigh(R)
    except np.linalg.LinAlgError as exc:
        raise CovarianceFactorizationError("eigendecomposition failed for " + diagnostics()) from exc
    w = np.clip(w, 0.0, None)
    F = (U * np.sqrt(w)[..., None, :]) @ np.swapaxes(U, -1, -2)
    if check_tol is not None:
        Rf = (U * w[..., None, :]) @ np.swapaxes(U, -1, -2)
        err = np.linalg.norm(F @ np.swapaxes(F, -1, -2) - Rf) / max(np.linalg.norm(Rf), 1e-300)
        if not err <= check_tol:
            raise CovarianceFactorizationError(f"factor reproduces floored matrix only to {err:.3e}")
    return F


@dataclass(frozen=True)
class CorrelationModel:
    """Jakes correlation over the full preset grid of an aperture.

    Entries are generated on demand from grid offsets, so the ``L x L`` matrix
    is only materialized (and factored) when explicitly requested.
    """

    cfg: ApertureConfig
    max_dense: int = 4096

    def entries(self, lin_a, lin_b) -> np.ndarray:
        cfg = self.cfg
        a_v, a_h = np.divmod(np.asarray(lin_a), cfg.L_h)
        b_v, b_h = np.divmod(np.asarray(lin_b), cfg.L_h)
        dx = np.abs(a_h - b_h) * cfg.step_h
        dy = np.abs(a_v - b_v) * cfg.step_v
        return np.sinc((2.0 / cfg.wavelength) * np.sqrt(dx * dx + dy * dy))

    def matrix(self) -> np.ndarray:
        L = self.cfg.L
        if L > self.max_dense:
            raise MemoryError(f"refusing to materialize a {L}x{L} correlation matrix (max_dense={self.max_dense})")
        idx = np.arange(L)
        return self.entries(idx[:, None], idx[None, :])

    def factor(self) -> np.ndarray:
        """Full-grid factor, the one-time precompute alternative to per-placement factoring."""
        return sqrt_factor(self.matrix())


def jakes_covariance(cfg: ApertureConfig) -> CorrelationModel:
    return CorrelationModel(cfg)


def active_covariance(model: CorrelationModel, placement: Placement) -> np.ndarray:
    """Rows/columns of the grid correlation at the active presets (``S R S^T``)."""
    g = placement.global_indices
    return model.entries(g[:, None], g[None, :])


def complex_normal(rng: np.random.Generator, shape) -> np.ndarray:
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2.0)


@dataclass(frozen=True)
class HopChannel:
    h: np.ndarray

    @property
    def magnitudes(self) -> np.ndarray:
        return np.abs(self.h)


def compose_hop(params: HopParams, los: np.ndarray, nlos: np.ndarray) -> np.ndarray:
    return np.sqrt(params.gain) * (params.los_weight * los + params.nlos_weight * nlos)


def draw_hop(params: HopParams, cfg: ApertureConfig, placement: Placement,
             correlation, rng: np.random.Generator) -> HopChannel:
    """One Rician realization of a hop at the active elements.

    ``correlation`` may be a :class:`CorrelationModel` (the active block is
    extracted and factored here), an explicit ``M x M`` active covariance, or
    ``None`` for uncorrelated NLoS.
    """
    M = placement.cfg.M
    if correlation is None:
        F = np.eye(M)
    elif isinstance(correlation, CorrelationModel):
        F = sqrt_factor(active_covariance(correlation, placement))
    else:
        F = sqrt_factor(np.asarray(correlation))
    los = steering_vector(placement.positions, params.azimuth, params.elevation, cfg.wavelength)
    nlos = F @ complex_normal(rng, M)
    return HopChannel(compose_hop(params, los, nlos))


def cascaded_gain(h_f, h_u) -> float:
    """Phase-aligned cascaded gain: sum of per-element magnitude products."""
    a = h_f.magnitudes if isinstance(h_f, HopChannel) else np.abs(np.asarray(h_f))
    b = h_u.magnitudes if isinstance(h_u, HopChannel) else np.abs(np.asarray(h_u))
    if a.shape[-1] != b.shape[-1]:
        raise ValueError(f"hop lengths differ: {a.shape[-1]} vs {b.shape[-1]}")
    out = np.sum(a * b, axis=-1)
    return float(out) if np.ndim(out) == 0 else out


@dataclass(frozen=True)
class Ideal:
    pass


@dataclass(frozen=True)
class GaussianJitter:
    variance: float  # rad^2

    def __post_init__(self):
        if not self.variance >= 0:
            raise ValueError("jitter variance must be nonnegative")


@dataclass(frozen=True)
class Quantized:
    levels: int

    def __post_init__(self):
        if int(self.levels) != self.levels or self.levels < 1:
            raise ValueError(f"quantization needs at least one level, got {self.levels!r}")


PhaseErrorModel = Union[Ideal, GaussianJitter, Quantized]


def phase_attenuation(model: PhaseErrorModel) -> float:
    """Deterministic coherence loss |E[exp(j eps)]| of the residual phase error."""
    if isinstance(model, Ideal):
        return 1.0
    if isinstance(model, GaussianJitter):
        return math.exp(-model.variance / 2.0)
    if isinstance(model, Quantized):
        x = math.pi / model.levels
        return abs(math.sin(x) / x)
    raise TypeError(f"unknown phase-error model {model!r}")


def sample_phase_errors(model: PhaseErrorModel, rng: np.random.Generator, shape) -> np.ndarray:
    """Per-element residual phase errors; only the validation path uses these."""
    if isinstance(model, Ideal):
        return np.zeros(shape)
    if isinstance(model, GaussianJitter):
        return rng.normal(0.0, math.sqrt(model.variance), shape)
    if isinstance(model, Quantized):
        half = math.pi / model.levels
        return rng.uniform(-half, half, shape)
    raise TypeError(f"unknown phase-error model {model!r}")


def grid_positions(cfg: ApertureConfig) -> np.ndarray:
    """All preset positions in linear-index order, shape (L, 2)."""
    idx = np.arange(cfg.L)
    g_v, g_h = np.divmod(idx, cfg.L_h)
    return grid_position(cfg, g_h, g_v)

