"""Experiment configuration: INI-style ``[section]`` files with ``key = value``
(or ``key: value``) lines, validated with every error reported at once."""
from __future__ import annotations

import configparser
import math
import os
from dataclasses import dataclass, field, replace
from pathlib import Path

from .baselines import KINDS, ConfigError, ControllerVariant, FtgParams
from .centerline import SmoothingWeights
from .control import ControllerConfig, FallbackPolicy, PidGains, PursuitParams, VehicleParams
from .sim import SensorConfig, SimConfig
from .tracks import get_track
from .triangulate import ExtractionParams


class ConfigErrors(ConfigError):
    def __init__(self, errors):
        self.errors = list(errors)
        super().__init__("\n".join(self.errors))


def _pos(v):
    return v > 0


def _nonneg(v):
    return v >= 0


def _any(v):
    return True


def _bool(text):
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _int(text):
    return int(text.strip())


def _float(text):
    v = float(text.strip())
    if math.isnan(v):
        raise ValueError("nan is not allowed")
    return v


def _words(text):
    return [w for w in text.replace(",", " ").split() if w]


def _ints(text):
    return [int(w) for w in _words(text)]


def _odd5(v):
    return v >= 5 and v % 2 == 1


# section -> key -> (parser, check, check description)
SCHEMA = {
    "experiment": {
        "controllers": (_words, lambda v: len(v) > 0, "a non-empty list"),
        "tracks": (_words, lambda v: len(v) > 0, "a non-empty list"),
        "seeds": (_ints, lambda v: len(v) > 0 and all(s >= 0 for s in v), "a non-empty list of non-negative integers"),
        "laps": (_int, lambda v: v >= 1, "at least 1"),
        "output_dir": (str.strip, lambda v: len(v) > 0, "non-empty"),
        "trace": (_bool, _any, ""),
        "jobs": (_int, lambda v: v >= 0, "non-negative (0 = all cores)"),
        "record_timing": (_bool, _any, ""),
    },
    "sim": {
        "dt": (_float, lambda v: 0 < v <= 0.1, "in (0, 0.1]"),
        "beams": (_int, lambda v: v >= 16, "at least 16"),
        "fov": (_float, lambda v: 0 < v <= 2 * math.pi, "in (0, 2*pi]"),
        "range_max": (_float, _pos, "positive"),
        "noise_sigma": (_float, _nonneg, "non-negative"),
        "sensor_mode": (str.strip, lambda v: v in ("2d", "3d"), "2d or 3d"),
        "actuation_mode": (str.strip, lambda v: v in ("DIRECT_VELOCITY", "THROTTLE_BRAKE"),
                           "DIRECT_VELOCITY or THROTTLE_BRAKE"),
        "velocity_lag_tau": (_float, _pos, "positive"),
        "throttle_gain": (_float, _nonneg, "non-negative"),
        "brake_gain": (_float, _nonneg, "non-negative"),
        "drag": (_float, _nonneg, "non-negative"),
        "footprint_radius": (_float, _pos, "positive"),
        "max_ticks": (_int, lambda v: v >= 1, "at least 1"),
        "fallback_storm": (_int, lambda v: v >= 1, "at least 1"),
        "grip_limit": (_float, _pos, "positive"),
    },
    "vehicle": {
        "wheelbase": (_float, _pos, "positive"),
        "friction_mu": (_float, _pos, "positive"),
        "a_max_lat": (_float, _pos, "positive"),
        "v_max": (_float, _pos, "positive"),
        "v_min": (_float, _pos, "positive"),
        "max_steer": (_float, lambda v: 0 < v < math.pi / 2, "in (0, pi/2)"),
        "kappa_floor": (_float, _pos, "positive"),
    },
    "pursuit": {
        "k_v": (_float, _nonneg, "non-negative"),
        "l_min": (_float, _pos, "positive"),
    },
    "extraction": {
        "box_size": (_float, _pos, "positive"),
        "faraway_threshold": (_float, _pos, "positive"),
        "side_epsilon": (_float, _nonneg, "non-negative"),
        "pseudo_margin": (_float, _nonneg, "non-negative"),
        "max_forward": (_float, _pos, "positive"),
    },
    "smoothing": {
        "lambda_vel": (_float, _nonneg, "non-negative"),
        "mu_curv": (_float, _nonneg, "non-negative"),
        "sg_window": (_int, _odd5, "odd and at least 5"),
        "sg_order": (_int, _nonneg, "non-negative"),
    },
    "pid": {
        "kp_throttle": (_float, _nonneg, "non-negative"),
        "ki_throttle": (_float, _nonneg, "non-negative"),
        "kd_throttle": (_float, _nonneg, "non-negative"),
        "kp_brake": (_float, _nonneg, "non-negative"),
        "ki_brake": (_float, _nonneg, "non-negative"),
        "kd_brake": (_float, _nonneg, "non-negative"),
        "integral_limit": (_float, _nonneg, "non-negative"),
    },
    "ftg": {
        "bubble_radius": (_float, _nonneg, "non-negative"),
        "min_gap_width": (_int, lambda v: v >= 1, "at least 1"),
        "clearance": (_float, _pos, "positive"),
        "horizon": (_float, _pos, "positive"),
        "half_fov": (_float, lambda v: 0 < v <= math.pi, "in (0, pi]"),
    },
    "fallback": {
        "mode": (str.strip, lambda v: v in ("BRAKE_STRAIGHT", "HOLD_LAST"), "BRAKE_STRAIGHT or HOLD_LAST"),
        "hold_ticks": (_int, _nonneg, "non-negative"),
    },
}
REQUIRED = {"experiment": ("controllers", "tracks", "seeds")}


@dataclass(frozen=True)
class ExperimentConfig:
    controllers: tuple = ("MCTR",)
    tracks: tuple = ("F",)
    seeds: tuple = (0,)
    laps: int = 1
    output_dir: str = "runs/experiment"
    trace: bool = False
    jobs: int = 1
    record_timing: bool = True
    sim: SimConfig = field(default_factory=SimConfig)
    controller: ControllerConfig = field(default_factory=ControllerConfig)
    ftg: FtgParams = field(default_factory=FtgParams)

    def variants(self):
        return [ControllerVariant(k, self.controller, self.ftg) for k in self.controllers]

    def sim_for_episode(self) -> SimConfig:
        return replace(self.sim, laps=self.laps)


def _dataclass_from(cls, values: dict, errors: list, section: str):
    try:
        return cls(**values)
    except (ValueError, TypeError) as exc:
        errors.append(f"[{section}] {exc}")
        return None


def parse_config(text: str, source: str = "<config>") -> ExperimentConfig:
    """Parse and validate config text; raises ConfigErrors listing every problem."""
    cp = configparser.ConfigParser(interpolation=None, delimiters=("=", ":"), comment_prefixes=("#", ";"),
                                   inline_comment_prefixes=("#",))
    cp.optionxform = str
    errors = []
    try:
        cp.read_string(text, source=source)
    except configparser.Error as exc:
        raise ConfigErrors([f"{source}: {exc}"]) from None
    values = {}
    for section in cp.sections():
        if section not in SCHEMA:
            errors.append(f"unknown section [{section}] (expected one of {', '.join(SCHEMA)})")
            continue
        values[section] = {}
        for key, raw in cp.items(section):
            if key not in SCHEMA[section]:
                errors.append(f"[{section}] unknown key {key!r}")
                continue
            parse, check, desc = SCHEMA[section][key]
            try:
                v = parse(raw)
            except ValueError as exc:
                errors.append(f"[{section}] {key}: cannot parse {raw!r} ({exc})")
                continue
            if not check(v):
                errors.append(f"[{section}] {key} = {raw.strip()} is out of range: must be {desc}")
                continue
            values[section][key] = v
    for section, keys in REQUIRED.items():
        if section not in cp.sections():
            errors.append(f"missing required section [{section}]")
            continue
        for k in keys:
            if k not in cp[section]:
                errors.append(f"[{section}] missing required key {k!r}")
    exp = values.get("experiment", {})
    for k in exp.get("controllers", []):
        if k not in KINDS:
            errors.append(f"[experiment] unknown controller {k!r} (expected one of {', '.join(KINDS)})")
    for t in exp.get("tracks", []):
        try:
            get_track(t)
        except (KeyError, ValueError) as exc:
            errors.append(f"[experiment] track {t!r}: {exc}")
    cfg = _build(values, errors)
    if errors:
        raise ConfigErrors(errors)
    return cfg


def _build(values, errors):
    g = values.get
    sim_v = dict(g("sim", {}))
    sensor_keys = {"beams": "beams", "fov": "fov", "range_max": "range_max", "noise_sigma": "noise_sigma",
                   "sensor_mode": "mode"}
    sensor_v = {dst: sim_v.pop(src) for src, dst in sensor_keys.items() if src in sim_v}
    veh_v = dict(g("vehicle", {}))
    kappa_floor = veh_v.pop("kappa_floor", None)
    vehicle = _dataclass_from(VehicleParams, veh_v, errors, "vehicle")
    # the plant and the pursuit geometry share one wheelbase
    wheelbase = vehicle.wheelbase if vehicle else VehicleParams().wheelbase
    sensor = _dataclass_from(SensorConfig, sensor_v, errors, "sim")
    sim = _dataclass_from(SimConfig, dict(sim_v, sensor=sensor or SensorConfig(), wheelbase=wheelbase),
                          errors, "sim")
    pursuit = _dataclass_from(PursuitParams, g("pursuit", {}), errors, "pursuit")
    ex_v = dict(g("extraction", {}))
    box = ex_v.pop("box_size", None)
    extraction = _dataclass_from(ExtractionParams, ex_v, errors, "extraction")
    smoothing = _dataclass_from(SmoothingWeights, g("smoothing", {}), errors, "smoothing")
    pid = _dataclass_from(PidGains, g("pid", {}), errors, "pid")
    fallback = _dataclass_from(FallbackPolicy, g("fallback", {}), errors, "fallback")
    ftg = _dataclass_from(FtgParams, g("ftg", {}), errors, "ftg")
    parts = (sensor, sim, vehicle, pursuit, extraction, smoothing, pid, fallback, ftg)
    if any(p is None for p in parts):
        return None
    extra = {}
    if kappa_floor is not None:
        extra["kappa_floor"] = kappa_floor
    if box is not None:
        extra["box_size"] = box
    longitudinal = "pid" if sim.actuation_mode == "THROTTLE_BRAKE" else "velocity"
    ctrl = _dataclass_from(ControllerConfig, dict(vehicle=vehicle, pursuit=pursuit, extraction=extraction,
                                                  smoothing=smoothing, pid=pid, fallback=fallback,
                                                  longitudinal=longitudinal, **extra), errors, "controller")
    exp = g("experiment", {})
    kw = {k: tuple(v) if isinstance(v, list) else v for k, v in exp.items()}
    if ctrl is None:
        return None
    return ExperimentConfig(sim=sim, controller=ctrl, ftg=ftg, **kw)


def validate_config(path) -> ExperimentConfig:
    p = Path(path)
    try:
        text = p.read_text()
    except OSError as exc:
        raise ConfigErrors([f"{path}: {exc.strerror}"]) from None
    return parse_config(text, str(path))


def dump_config(cfg: ExperimentConfig) -> str:
    """Fully resolved config text; parsing it back yields an equal config."""
    c = cfg.controller
    sec = {
        "experiment": dict(controllers=", ".join(cfg.controllers), tracks=", ".join(cfg.tracks),
                           seeds=", ".join(str(s) for s in cfg.seeds), laps=cfg.laps, output_dir=cfg.output_dir,
                           trace=cfg.trace, jobs=cfg.jobs, record_timing=cfg.record_timing),
        "sim": dict(dt=cfg.sim.dt, beams=cfg.sim.sensor.beams, fov=cfg.sim.sensor.fov,
                    range_max=cfg.sim.sensor.range_max, noise_sigma=cfg.sim.sensor.noise_sigma,
                    sensor_mode=cfg.sim.sensor.mode, actuation_mode=cfg.sim.actuation_mode,
                    velocity_lag_tau=cfg.sim.velocity_lag_tau, throttle_gain=cfg.sim.throttle_gain,
                    brake_gain=cfg.sim.brake_gain, drag=cfg.sim.drag, footprint_radius=cfg.sim.footprint_radius,
                    max_ticks=cfg.sim.max_ticks, fallback_storm=cfg.sim.fallback_storm,
                    grip_limit=cfg.sim.grip_limit),
        "vehicle": dict(vars(c.vehicle), kappa_floor=c.kappa_floor),
        "pursuit": vars(c.pursuit),
        "extraction": dict(box_size=c.box_size, **vars(c.extraction)),
        "smoothing": vars(c.smoothing),
        "pid": vars(c.pid),
        "ftg": vars(cfg.ftg),
        "fallback": vars(c.fallback),
    }
    out = []
    for name, kv in sec.items():
        out.append(f"[{name}]")
        for k, v in kv.items():
            if isinstance(v, bool):
                v = "true" if v else "false"
            elif isinstance(v, float):
                v = repr(v)
            out.append(f"{k} = {v}")
        out.append("")
    return "\n".join(out)


def default_jobs(requested: int) -> int:
    return requested if requested > 0 else (os.cpu_count() or 1)


def section_keys():
    """Known keys per section, for documentation and tests."""
    return {s: tuple(k) for s, k in SCHEMA.items()}


__all__ = ["ConfigErrors", "ExperimentConfig", "parse_config", "validate_config", "dump_config",
           "default_jobs", "section_keys"]
