"""Aperture geometry: subareas, discrete preset grids, snapping and spacing repair.

The full surface carries an ``L_h x L_v`` grid of preset positions, partitioned
into ``M = M_h * M_v`` rectangular subareas of ``N_h_sub x N_v_sub`` presets
each.  Grid indices are row-major with the horizontal index running fastest,
and the aperture is anchored at the origin so that the corner presets sit at
``(0, 0)`` and ``(A_h, A_v)``.
"""

from __future__ import annotations

import functools

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

SPEED_OF_LIGHT = 299_792_458.0


class PresetIndex(NamedTuple):
    subarea: int
    local: int


@dataclass(frozen=True)
class ApertureConfig:
    A_h: float
    A_v: float
    M_h: int
    M_v: int
    N_h_sub: int
    N_v_sub: int
    wavelength: float
    D_min: float

    def __post_init__(self):
        for name in ("A_h", "A_v", "wavelength", "D_min"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive, got {getattr(self, name)!r}")
        for name in ("M_h", "M_v", "N_h_sub", "N_v_sub"):
            value = getattr(self, name)
            if int(value) != value or value < 1:
                raise ValueError(f"{name} must be a positive integer, got {value!r}")

    @classmethod
    def from_frequency(cls, f_c: float, A_h=1.0, A_v=1.0, M_h=6, M_v=6,
                       N_h_sub=100, N_v_sub=100, D_min=None) -> "ApertureConfig":
        """Build a config from the carrier frequency; ``D_min`` defaults to half a wavelength."""
        lam = SPEED_OF_LIGHT / f_c
        return cls(A_h, A_v, M_h, M_v, N_h_sub, N_v_sub, lam, lam / 2 if D_min is None else D_min)

    @property
    def M(self) -> int:
        return self.M_h * self.M_v

    @property
    def N_sub(self) -> int:
        return self.N_h_sub * self.N_v_sub

    @property
    def L_h(self) -> int:
        return self.M_h * self.N_h_sub

    @property
    def L_v(self) -> int:
        return self.M_v * self.N_v_sub

    @property
    def L(self) -> int:
        return self.L_h * self.L_v

    @property
    def area(self) -> float:
        return self.A_h * self.A_v

    @property
    def step_h(self) -> float:
        return self.A_h / max(self.L_h - 1, 1)

    @property
    def step_v(self) -> float:
        return self.A_v / max(self.L_v - 1, 1)

    @property
    def rayleigh_distance(self) -> float:
        return 2.0 * self.area / self.wavelength


def map_index(n_h, n_v, L_h: int, L_v: int):
    """Global 2-D grid index -> linear index (horizontal fastest)."""
    n_h = np.asarray(n_h)
    n_v = np.asarray(n_v)
    if np.any((n_h < 0) | (n_h >= L_h) | (n_v < 0) | (n_v >= L_v)):
        raise IndexError(f"grid index out of range for a {L_h}x{L_v} grid")
    out = n_v * L_h + n_h
    return int(out) if out.ndim == 0 else out


def unmap_index(n, L_h: int, L_v: int):
    n = np.asarray(n)
    if np.any((n < 0) | (n >= L_h * L_v)):
        raise IndexError(f"linear index out of range for a {L_h}x{L_v} grid")
    n_v, n_h = np.divmod(n, L_h)
    if n.ndim == 0:
        return int(n_h), int(n_v)
    return n_h, n_v


def _split_subarea(cfg: ApertureConfig, subarea):
    m_v, m_h = np.divmod(np.asarray(subarea), cfg.M_h)
    return m_h, m_v


def _split_local(cfg: ApertureConfig, local):
    n_v, n_h = np.divmod(np.asarray(local), cfg.N_h_sub)
    return n_h, n_v


def global_grid_index(cfg: ApertureConfig, subarea, local):
    """(subarea, local) -> global (n_h, n_v) on the full ``L_h x L_v`` grid."""
    subarea = np.asarray(subarea)
    local = np.asarray(local)
    if np.any((subarea < 0) | (subarea >= cfg.M)) or np.any((local < 0) | (local >= cfg.N_sub)):
        raise IndexError("preset index out of range")
    m_h, m_v = _split_subarea(cfg, subarea)
    n_h, n_v = _split_local(cfg, local)
    return m_h * cfg.N_h_sub + n_h, m_v * cfg.N_v_sub + n_v


def global_linear_index(cfg: ApertureConfig, subarea, local):
    g_h, g_v = global_grid_index(cfg, subarea, local)
    return map_index(g_h, g_v, cfg.L_h, cfg.L_v)


def grid_position(cfg: ApertureConfig, g_h, g_v) -> np.ndarray:
    """Physical (x, y) of global grid indices, stacked on the last axis."""
    return np.stack([np.asarray(g_h) * cfg.step_h, np.asarray(g_v) * cfg.step_v], axis=-1).astype(float)


def preset_position(cfg: ApertureConfig, idx: PresetIndex) -> tuple[float, float]:
    g_h, g_v = global_grid_index(cfg, idx.subarea, idx.local)
    x, y = grid_position(cfg, g_h, g_v)
    return float(x), float(y)


def subarea_bounds(cfg: ApertureConfig, subarea: int) -> tuple[float, float, float, float]:
    """(x_lo, x_hi, y_lo, y_hi) of a subarea's rectangle."""
    m_h, m_v = _split_subarea(cfg, subarea)
    w, h = cfg.A_h / cfg.M_h, cfg.A_v / cfg.M_v
    return m_h * w, (m_h + 1) * w, m_v * h, (m_v + 1) * h


def presets_of_subarea(cfg: ApertureConfig, subarea: int) -> np.ndarray:
    """Positions of all presets in ``subarea``, ordered by local index, shape (N_sub, 2)."""
    local = np.arange(cfg.N_sub)
    g_h, g_v = global_grid_index(cfg, np.full_like(local, subarea), local)
    return grid_position(cfg, g_h, g_v)


def positions(cfg: ApertureConfig, local: np.ndarray) -> np.ndarray:
    """Positions for one or many placements given as local-index arrays of shape (..., M)."""
    local = np.asarray(local)
    subarea = np.broadcast_to(np.arange(cfg.M), local.shape)
    g_h, g_v = global_grid_index(cfg, subarea, local)
    return grid_position(cfg, g_h, g_v)


@dataclass(frozen=True, eq=False)
class Placement:
    """One active preset per subarea, stored as local indices ordered by subarea."""

    cfg: ApertureConfig
    local: np.ndarray

    def __post_init__(self):
        local = np.asarray(self.local, dtype=np.int64).copy()
        if local.shape != (self.cfg.M,):
            raise ValueError(f"placement needs exactly one preset per subarea ({self.cfg.M}), got shape {local.shape}")
        if np.any((local < 0) | (local >= self.cfg.N_sub)):
            raise IndexError("local preset index out of range")
        local.setflags(write=False)
        object.__setattr__(self, "local", local)

    @classmethod
    def from_presets(cls, cfg: ApertureConfig, presets) -> "Placement":
        presets = list(presets)
        if sorted(p.subarea for p in presets) != list(range(cfg.M)):
            raise ValueError("placement must contain exactly one preset per subarea")
        local = np.empty(cfg.M, dtype=np.int64)
        for p in presets:
            local[p.subarea] = p.local
        return cls(cfg, local)

    @classmethod
    def centers(cls, cfg: ApertureConfig) -> "Placement":
        """Every element at its subarea centre (the fixed-position surface)."""
        return cls(cfg, snap(cfg, np.full((cfg.M, 2), 0.5)))

    @property
    def active(self) -> list[PresetIndex]:
        return [PresetIndex(m, int(n)) for m, n in enumerate(self.local)]

    @property
    def positions(self) -> np.ndarray:
        return positions(self.cfg, self.local)

    @property
    def global_indices(self) -> np.ndarray:
        return global_linear_index(self.cfg, np.arange(self.cfg.M), self.local)

    def __eq__(self, other):
        return isinstance(other, Placement) and self.cfg == other.cfg and np.array_equal(self.local, other.local)

    def __hash__(self):
        return hash((self.cfg, self.local.tobytes()))


def _nearest_axis(u, n: int):
    # nearest integer in [0, n-1]; exact halves go down so ties pick the smaller index
    return np.clip(np.ceil(np.asarray(u) - 0.5), 0, n - 1).astype(np.int64)


def snap(cfg: ApertureConfig, surrogate) -> np.ndarray:
    """Map unit-square surrogates to the nearest preset of their subarea.

    ``surrogate`` has shape (..., M, 2) with the element order matching the
    subarea order.  The geometric image of ``y`` spans the bounding box of the
    subarea's presets, so on a regular grid the nearest preset can be found per
    axis.  Returns local indices of shape (..., M).
    """
    y = np.clip(np.asarray(surrogate, dtype=float), 0.0, 1.0)
    n_h = _nearest_axis(y[..., 0] * (cfg.N_h_sub - 1), cfg.N_h_sub)
    n_v = _nearest_axis(y[..., 1] * (cfg.N_v_sub - 1), cfg.N_v_sub)
    return n_v * cfg.N_h_sub + n_h


def snap_one(cfg: ApertureConfig, subarea: int, y) -> PresetIndex:
    local = snap(cfg, np.asarray(y, dtype=float)[None, :])[0]
    return PresetIndex(subarea, int(local))


def surrogate_of(cfg: ApertureConfig, local) -> np.ndarray:
    """Inverse of :func:`snap` on preset indices: the surrogate that snaps exactly onto each preset."""
    n_h, n_v = _split_local(cfg, local)
    yh = n_h / (cfg.N_h_sub - 1) if cfg.N_h_sub > 1 else np.full(np.shape(n_h), 0.5)
    yv = n_v / (cfg.N_v_sub - 1) if cfg.N_v_sub > 1 else np.full(np.shape(n_v), 0.5)
    return np.stack([yh, yv], axis=-1).astype(float)


def pair_distances(pos: np.ndarray) -> np.ndarray:
    diff = pos[..., :, None, :] - pos[..., None, :, :]
    return np.sqrt(np.sum(diff * diff, axis=-1))


def spacing_violations(placement_or_positions, D_min: float | None = None):
    """Number of element pairs closer than ``D_min``.

    Accepts a :class:`Placement` or raw positions of shape (..., M, 2); for
    raw positions ``D_min`` is required and the result is batched.
    """
    if isinstance(placement_or_positions, Placement):
        pos = placement_or_positions.positions
        D_min = placement_or_positions.cfg.D_min if D_min is None else D_min
    else:
        pos = np.asarray(placement_or_positions, dtype=float)
        if D_min is None:
            raise ValueError("D_min is required for raw positions")
    M = pos.shape[-2]
    iu = np.triu_indices(M, k=1)
    close = pair_distances(pos)[..., iu[0], iu[1]] < D_min
    count = close.sum(axis=-1)
    return int(count) if np.ndim(count) == 0 else count


@functools.lru_cache(maxsize=16)
def _offset_order(N_h: int, N_v: int, step_h: float, step_v: float) -> tuple[np.ndarray, np.ndarray]:
    # grid offsets sorted by length; equal lengths by (dv, dh), i.e. by resulting local index
    dh, dv = np.meshgrid(np.arange(-(N_h - 1), N_h), np.arange(-(N_v - 1), N_v))
    dh, dv = dh.ravel(), dv.ravel()
    d2 = (dh * step_h) ** 2 + (dv * step_v) ** 2
    order = np.lexsort((dh, dv, d2))
    return dh[order], dv[order]


def _candidate_order(cfg: ApertureConfig, local: int) -> np.ndarray:
    """Local indices of a subarea ordered by distance from preset ``local`` (ties by index)."""
    n_h, n_v = _split_local(cfg, local)
    dh, dv = _offset_order(cfg.N_h_sub, cfg.N_v_sub, cfg.step_h, cfg.step_v)
    h, v = n_h + dh, n_v + dv
    ok = (h >= 0) & (h < cfg.N_h_sub) & (v >= 0) & (v < cfg.N_v_sub)
    return v[ok] * cfg.N_h_sub + h[ok]


def _preset_box(cfg: ApertureConfig, subarea: int) -> tuple[float, float, float, float]:
    m_h, m_v = _split_subarea(cfg, subarea)
    x0, y0 = m_h * cfg.N_h_sub * cfg.step_h, m_v * cfg.N_v_sub * cfg.step_v
    return x0, x0 + (cfg.N_h_sub - 1) * cfg.step_h, y0, y0 + (cfg.N_v_sub - 1) * cfg.step_v


def _relocate(cfg: ApertureConfig, mp: int, anchor: int, pos: np.ndarray):
    """Nearest preset of subarea ``mp`` (ranked from ``anchor``) clearing every other element, or None."""
    x0, x1, y0, y1 = _preset_box(cfg, mp)
    others = np.delete(pos, mp, axis=0)
    dx = np.maximum(np.maximum(x0 - others[:, 0], others[:, 0] - x1), 0.0)
    dy = np.maximum(np.maximum(y0 - others[:, 1], others[:, 1] - y1), 0.0)
    near = others[np.hypot(dx, dy) < cfg.D_min]  # only these can block a candidate
    n_h, n_v = _split_local(cfg, anchor)
    dh, dv = _offset_order(cfg.N_h_sub, cfg.N_v_sub, cfg.step_h, cfg.step_v)
    m_h, m_v = _split_subarea(cfg, mp)
    # walk the ranked offsets in growing chunks; the first clear preset is usually close by
    start, size = 0, 64
    while start < dh.size:
        h, v = n_h + dh[start:start + size], n_v + dv[start:start + size]
        ok = (h >= 0) & (h < cfg.N_h_sub) & (v >= 0) & (v < cfg.N_v_sub)
        h, v = h[ok], v[ok]
        if h.size:
            if near.shape[0] == 0:
                return int(v[0] * cfg.N_h_sub + h[0])
            cand = grid_position(cfg, m_h * cfg.N_h_sub + h, m_v * cfg.N_v_sub + v)
            d2 = ((cand[:, None, :] - near[None, :, :]) ** 2).sum(-1)
            clear = np.flatnonzero(np.all(np.sqrt(d2) >= cfg.D_min, axis=1))
            if clear.size:
                return int(v[clear[0]] * cfg.N_h_sub + h[clear[0]])
        start += size
        size *= 4
    return None


def repair_local(cfg: ApertureConfig, local: np.ndarray) -> tuple[np.ndarray, int]:
    """Greedy spacing repair on a local-index vector; see :func:`repair_spacing`."""
    local = np.array(local, dtype=np.int64)
    snapped = local.copy()
    pos = positions(cfg, local)
    close = pair_distances(pos) < cfg.D_min
    np.fill_diagonal(close, False)
    m = -1
    while True:
        rows = np.flatnonzero(np.triu(close[m + 1:, :], m + 2).any(axis=1))
        if rows.size == 0:
            break
        m = m + 1 + int(rows[0])
        # moving one element only changes its own pairs, so the violators of m can be handled in order
        for mp in (m + 1 + np.flatnonzero(close[m, m + 1:])):
            new = _relocate(cfg, int(mp), int(snapped[mp]), pos)
            if new is not None:
                local[mp] = new
                pos[mp] = positions(cfg, local)[mp]
                row = np.hypot(*(pos - pos[mp]).T) < cfg.D_min
                row[mp] = False
                close[mp, :] = close[:, mp] = row
    residual = spacing_violations(pos, cfg.D_min)
    return local, int(residual)


def repair_spacing(placement: Placement) -> tuple[Placement, int]:
    """Resolve spacing violations greedily, pair by pair in ascending ``(m, m')`` order.

    For each violating pair the element with the larger subarea index moves to
    the preset of its subarea nearest to its pre-repair position that clears
    every spacing constraint; if no such preset exists it stays and the pair
    is counted in the returned residual.  The violation count never increases.
    """
    local, residual = repair_local(placement.cfg, placement.local)
    return Placement(placement.cfg, local), residual
