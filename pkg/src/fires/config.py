"""Experiment configuration: JSON files with unit-tagged quantities.

Quantities are plain numbers (already in SI / linear units) or strings such
as ``"30 dBm"``, ``"3.5 GHz"``, ``"0.5 lambda"`` or ``"15 deg"``.  This is the
only place where logarithmic units are accepted; everything handed to the
library is linear.  Every key is optional; missing keys fall back to the
default scenario (1 m^2 aperture, 6x6 subareas of 100x100 presets, 3.5 GHz,
P = 30 dBm, noise -114 dBm, rho0 = -13.3 dBm, alpha = 2.1, d_f = 50 m, K = 5,
1 bit/s/Hz targets).
"""

from __future__ import annotations

import json
import math
import re
from dataclasses import dataclass, field, replace
from pathlib import Path

from .channel import GaussianJitter, HOPS, Ideal, PhaseErrorModel, Quantized, angles_towards, phase_attenuation
from .coverage import LinkBudget, QosTargets
from .geometry import ApertureConfig, SPEED_OF_LIGHT
from .pso import PsoConfig, Scenario, make_scenario

AXES = ("iterations", "snr", "M", "R_tar", "Q", "jitter", "beta_r", "K", "n_particles")


class ConfigError(ValueError):
    """Bad configuration value; ``key`` names the offending entry."""

    def __init__(self, key: str, msg: str):
        super().__init__(f"{key}: {msg}")
        self.key = key


_QTY = re.compile(r"^\s*([-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?)\s*([A-Za-z^0-9/]*)\s*$")

# unit -> (dimension, converter to SI/linear)
_UNITS = {
    "": ("number", lambda v, ctx: v),
    "W": ("power", lambda v, ctx: v),
    "mW": ("power", lambda v, ctx: v * 1e-3),
    "dBm": ("power", lambda v, ctx: 10 ** (v / 10) * 1e-3),
    "dBW": ("power", lambda v, ctx: 10 ** (v / 10)),
    "dB": ("ratio", lambda v, ctx: 10 ** (v / 10)),
    "Hz": ("frequency", lambda v, ctx: v),
    "kHz": ("frequency", lambda v, ctx: v * 1e3),
    "MHz": ("frequency", lambda v, ctx: v * 1e6),
    "GHz": ("frequency", lambda v, ctx: v * 1e9),
    "m": ("length", lambda v, ctx: v),
    "cm": ("length", lambda v, ctx: v * 1e-2),
    "mm": ("length", lambda v, ctx: v * 1e-3),
    "lambda": ("length", lambda v, ctx: v * ctx["wavelength"]),
    "rad": ("angle", lambda v, ctx: v),
    "deg": ("angle", lambda v, ctx: math.radians(v)),
    "rad^2": ("angle2", lambda v, ctx: v),
    "bps/Hz": ("rate", lambda v, ctx: v),
}

# plain numbers are accepted for these dimensions as already-linear values
_BARE_OK = {"power", "ratio", "frequency", "length", "angle", "angle2", "rate", "number"}


def parse_quantity(value, dimension: str, key: str, ctx: dict | None = None) -> float:
    """Convert ``value`` (number or ``"<number> <unit>"``) to a linear SI float."""
    ctx = ctx or {}
    if isinstance(value, bool):
        raise ConfigError(key, f"expected a {dimension}, got a boolean")
    if isinstance(value, (int, float)):
        if dimension not in _BARE_OK:
            raise ConfigError(key, f"a unit is required for {dimension}")
        return float(value)
    if not isinstance(value, str):
        raise ConfigError(key, f"expected a number or a string with units, got {type(value).__name__}")
    m = _QTY.match(value)
    if not m:
        raise ConfigError(key, f"cannot parse quantity {value!r}")
    num, unit = float(m.group(1)), m.group(2)
    if unit not in _UNITS:
        raise ConfigError(key, f"unknown unit {unit!r}")
    dim, conv = _UNITS[unit]
    if dim == "number":
        return num
    if dim == "ratio" and dimension in ("number", "ratio"):
        return conv(num, ctx)
    if dim != dimension:
        raise ConfigError(key, f"unit {unit!r} is a {dim}, expected a {dimension}")
    if unit == "lambda" and "wavelength" not in ctx:
        raise ConfigError(key, "'lambda' needs the carrier frequency")
    return conv(num, ctx)


def _phase_model(spec, key: str) -> PhaseErrorModel:
    if spec is None or spec == "ideal":
        return Ideal()
    if not isinstance(spec, dict):
        raise ConfigError(key, "expected 'ideal' or an object with a 'model' field")
    kind = spec.get("model", "ideal")
    try:
        if kind == "ideal":
            return Ideal()
        if kind == "jitter":
            return GaussianJitter(parse_quantity(spec.get("variance", 0.0), "angle2", f"{key}.variance"))
        if kind == "quantized":
            return Quantized(int(spec["levels"]))
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(key, str(exc)) from exc
    raise ConfigError(key, f"unknown phase-error model {kind!r}")


@dataclass(frozen=True)
class ExperimentConfig:
    name: str = "default"
    f_c: float = 3.5e9
    A_h: float = 1.0
    A_v: float = 1.0
    M_h: int = 6
    M_v: int = 6
    N_h_sub: int = 100
    N_v_sub: int = 100
    D_min: float | None = None  # None -> half a wavelength
    P: float = 1.0
    sigma2: float = 10 ** (-114 / 10) * 1e-3
    rho0: float = 10 ** (-13.3 / 10) * 1e-3
    alpha: float = 2.1
    d_f: float = 50.0
    K: dict = field(default_factory=lambda: {h: 5.0 for h in HOPS})
    angles: dict = field(default_factory=lambda: {h: (0.0, 0.0) for h in HOPS})
    phase_r: PhaseErrorModel = Ideal()
    phase_t: PhaseErrorModel = Ideal()
    R_r: float = 1.0
    R_t: float = 1.0
    mode: str = "both"
    surface: str = "fires"
    pso: PsoConfig = PsoConfig()
    axis: str | None = None
    values: tuple = ()
    seeds: tuple = tuple(range(1, 11))
    out: str | None = None
    tau: float = 0.5  # time split reported by the bound command
    beta_r: float = 0.5  # energy split for the bound command and the ES mode
    p_r: float = 0.25  # NOMA power split for the bound command
    min_radius: float = 1.0
    noma_method: str = "exact"
    timing: bool = False
    jobs: int = 1
    bench: dict = field(default_factory=lambda: {"M": [36, 64], "n_particles": [30, 60], "iterations": [60]})

    @property
    def wavelength(self) -> float:
        return SPEED_OF_LIGHT / self.f_c

    def aperture(self) -> ApertureConfig:
        return ApertureConfig(self.A_h, self.A_v, self.M_h, self.M_v, self.N_h_sub, self.N_v_sub,
                              self.wavelength, self.wavelength / 2 if self.D_min is None else self.D_min)

    def budget(self) -> LinkBudget:
        return LinkBudget(self.P, self.sigma2, self.rho0, self.alpha, self.d_f, self.M_h * self.M_v,
                          phase_attenuation(self.phase_r), phase_attenuation(self.phase_t))

    def targets(self) -> QosTargets:
        return QosTargets(self.R_r, self.R_t)

    def scenario(self) -> Scenario:
        return make_scenario(self.aperture(), self.budget(), K=dict(self.K), angles=dict(self.angles),
                             targets=self.targets(), beta_r=self.beta_r, min_radius=self.min_radius,
                             noma_method=self.noma_method)

    def modes(self) -> tuple[str, ...]:
        if self.axis == "beta_r":
            return ("es",)
        return ("oma", "noma") if self.mode == "both" else (self.mode,)

    def surfaces(self) -> tuple[str, ...]:
        return ("fires", "star") if self.surface == "both" else (self.surface,)

    def with_axis(self, axis: str, value) -> "ExperimentConfig":
        """Config with the sweep variable set to ``value``."""
        if axis == "iterations":
            return replace(self, pso=replace(self.pso, iterations=int(value)))
        if axis == "n_particles":
            return replace(self, pso=replace(self.pso, n_particles=int(value)))
        if axis == "snr":  # P / sigma2 in dB, noise held fixed
            return replace(self, P=self.sigma2 * 10 ** (float(value) / 10))
        if axis == "M":
            side = math.isqrt(int(value))
            if side * side != int(value):
                raise ConfigError("sweep.values", f"M={value} is not a square number of subareas")
            return replace(self, M_h=side, M_v=side)
        if axis == "R_tar":
            return replace(self, R_r=float(value), R_t=float(value))
        if axis == "Q":
            q = Quantized(int(value))
            return replace(self, phase_r=q, phase_t=q)
        if axis == "jitter":
            j = GaussianJitter(float(value))
            return replace(self, phase_r=j, phase_t=j)
        if axis == "beta_r":
            return replace(self, beta_r=float(value))
        if axis == "K":
            return replace(self, K={h: float(value) for h in HOPS})
        raise ConfigError("sweep.axis", f"unknown axis {axis!r}; choose from {AXES}")


def _get(d: dict, key: str, path: str):
    if not isinstance(d, dict):
        raise ConfigError(path, "expected an object")
    return d.get(key)


def from_dict(raw: dict) -> ExperimentConfig:
    """Build an :class:`ExperimentConfig`, raising :class:`ConfigError` on the first bad key."""
    if not isinstance(raw, dict):
        raise ConfigError("<root>", "expected a JSON object")
    kw = {}
    cfg = ExperimentConfig()
    if "name" in raw:
        kw["name"] = str(raw["name"])
    f_c = parse_quantity(raw.get("f_c", cfg.f_c), "frequency", "f_c")
    if not f_c > 0:
        raise ConfigError("f_c", "carrier frequency must be positive")
    kw["f_c"] = f_c
    ctx = {"wavelength": SPEED_OF_LIGHT / f_c}

    ap = raw.get("aperture", {}) or {}
    for k in ("A_h", "A_v", "D_min"):
        if _get(ap, k, "aperture") is not None:
            kw[k] = parse_quantity(ap[k], "length", f"aperture.{k}", ctx)
    for k in ("M_h", "M_v", "N_h_sub", "N_v_sub"):
        if ap.get(k) is not None:
            if not isinstance(ap[k], int) or isinstance(ap[k], bool):
                raise ConfigError(f"aperture.{k}", "expected an integer")
            kw[k] = ap[k]
    if ap.get("M") is not None:
        side = math.isqrt(int(ap["M"]))
        if side * side != ap["M"]:
            raise ConfigError("aperture.M", "M must be a square number (use M_h and M_v otherwise)")
        kw["M_h"] = kw["M_v"] = side

    bd = raw.get("budget", {}) or {}
    for k in ("P", "sigma2", "rho0"):
        if _get(bd, k, "budget") is not None:
            kw[k] = parse_quantity(bd[k], "power", f"budget.{k}", ctx)
    if bd.get("alpha") is not None:
        kw["alpha"] = parse_quantity(bd["alpha"], "number", "budget.alpha")
    if bd.get("d_f") is not None:
        kw["d_f"] = parse_quantity(bd["d_f"], "length", "budget.d_f", ctx)

    hops = raw.get("hops", {}) or {}
    K = dict(cfg.K)
    angles = dict(cfg.angles)
    if _get(hops, "K", "hops") is not None:
        K = {h: parse_quantity(hops["K"], "ratio", "hops.K") for h in HOPS}
    for h in HOPS:
        hd = hops.get(h)
        if hd is None:
            continue
        if not isinstance(hd, dict):
            raise ConfigError(f"hops.{h}", "expected an object")
        if hd.get("K") is not None:
            K[h] = parse_quantity(hd["K"], "ratio", f"hops.{h}.K")
        if hd.get("position") is not None:
            try:
                pos = [parse_quantity(v, "length", f"hops.{h}.position", ctx) for v in hd["position"]]
                angles[h] = angles_towards(pos, h)
            except (TypeError, ValueError) as exc:
                if isinstance(exc, ConfigError):
                    raise
                raise ConfigError(f"hops.{h}.position", str(exc)) from exc
        else:
            az = parse_quantity(hd.get("azimuth", 0.0), "angle", f"hops.{h}.azimuth")
            el = parse_quantity(hd.get("elevation", 0.0), "angle", f"hops.{h}.elevation")
            angles[h] = (az, el)
    kw["K"], kw["angles"] = K, angles

    pe = raw.get("phase_error", {}) or {}
    if isinstance(pe, dict) and "model" in pe:
        pe = {"r": pe, "t": pe}
    for side in ("r", "t"):
        if side in pe:
            kw[f"phase_{side}"] = _phase_model(pe[side], f"phase_error.{side}")

    tg = raw.get("targets", {}) or {}
    for k in ("R_r", "R_t"):
        if _get(tg, k, "targets") is not None:
            kw[k] = parse_quantity(tg[k], "rate", f"targets.{k}")

    for k, allowed in (("mode", ("oma", "noma", "both", "es")), ("surface", ("fires", "star", "both")),
                       ("noma_method", ("exact", "grid"))):
        if k in raw:
            if raw[k] not in allowed:
                raise ConfigError(k, f"expected one of {allowed}, got {raw[k]!r}")
            kw[k] = raw[k]
    for k in ("tau", "beta_r", "p_r", "min_radius"):
        if k in raw:
            kw[k] = parse_quantity(raw[k], "number" if k != "min_radius" else "length", k, ctx)
    if "timing" in raw:
        kw["timing"] = bool(raw["timing"])
    if "jobs" in raw:
        kw["jobs"] = int(raw["jobs"])
    if "out" in raw:
        kw["out"] = str(raw["out"])
    if "seeds" in raw:
        seeds = raw["seeds"]
        if not isinstance(seeds, list) or not seeds or not all(isinstance(s, int) for s in seeds):
            raise ConfigError("seeds", "expected a non-empty list of integers")
        kw["seeds"] = tuple(seeds)

    ps = raw.get("pso", {}) or {}
    if ps:
        if not isinstance(ps, dict):
            raise ConfigError("pso", "expected an object")
        known = set(PsoConfig.__dataclass_fields__)
        bad = set(ps) - known - {"w"}
        if bad:
            raise ConfigError(f"pso.{sorted(bad)[0]}", "unknown PSO setting")
        pkw = dict(ps)
        if "w" in pkw:  # constant inertia
            w = pkw.pop("w")
            pkw["w_max"] = pkw["w_min"] = w
        try:
            kw["pso"] = PsoConfig(**pkw)
        except (TypeError, ValueError) as exc:
            raise ConfigError("pso", str(exc)) from exc

    sw = raw.get("sweep")
    if sw is not None:
        if not isinstance(sw, dict) or "axis" not in sw:
            raise ConfigError("sweep", "expected an object with 'axis' and 'values'")
        if sw["axis"] not in AXES:
            raise ConfigError("sweep.axis", f"unknown axis {sw['axis']!r}; choose from {AXES}")
        vals = sw.get("values")
        if not isinstance(vals, list) or not vals:
            raise ConfigError("sweep.values", "expected a non-empty list")
        kw["axis"], kw["values"] = sw["axis"], tuple(vals)

    if "bench" in raw:
        kw["bench"] = dict(raw["bench"])

    try:
        out = replace(cfg, **kw)
        out.aperture()
        out.budget()
        out.targets()
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError("<config>", str(exc)) from exc
    if out.axis is not None:
        for v in out.values:  # fail early on values the axis cannot take
            try:
                out.with_axis(out.axis, v).budget()
            except ConfigError:
                raise
            except (TypeError, ValueError) as exc:
                raise ConfigError("sweep.values", f"{v!r}: {exc}") from exc
    return out


def load_config(path: str | Path | None) -> ExperimentConfig:
    if path is None:
        return ExperimentConfig()
    try:
        raw = json.loads(Path(path).read_text(encoding="utf-8"))
    except OSError as exc:
        raise ConfigError("--config", f"cannot read {path}: {exc.strerror}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError("--config", f"invalid JSON at line {exc.lineno}: {exc.msg}") from exc
    return from_dict(raw)
