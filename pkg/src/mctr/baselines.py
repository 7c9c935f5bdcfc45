"""Comparison controllers sharing the pursuit and speed back-end: follow-the-gap,
a circumcentre triangulation variant, and the no-smoothing ablation."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .control import (ControlCommand, ControllerConfig, PidState, TriangulationController,
                      apply_fallback, lookahead_distance, pid_longitudinal, steering,
                      target_speed)
from .scan_frontend import Scan2D

KINDS = ("MCTR", "MCTR_NO_CCMA", "DTR", "FTG")


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class FtgParams:
    bubble_radius: float = 0.3
    min_gap_width: int = 10
    clearance: float = 2.0
    horizon: float = 3.0
    half_fov: float = 0.5 * math.pi

    def __post_init__(self):
        if not self.bubble_radius >= 0:
            raise ConfigError("bubble_radius must be non-negative")
        if self.min_gap_width < 1:
            raise ConfigError("min_gap_width must be at least 1")
        if not self.clearance > 0:
            raise ConfigError("clearance must be positive")
        if not self.horizon >= self.clearance:
            raise ConfigError("horizon must be at least clearance")
        if not 0 < self.half_fov <= math.pi:
            raise ConfigError("half_fov must be in (0, pi]")


@dataclass(frozen=True)
class ControllerVariant:
    kind: str = "MCTR"
    config: ControllerConfig = field(default_factory=ControllerConfig)
    ftg: FtgParams = field(default_factory=FtgParams)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigError(f"unknown controller kind {self.kind!r} (expected one of {', '.join(KINDS)})")


def widest_gap(free) -> tuple[int, int]:
    """Longest run of True as ``(start, stop)``; the earliest run wins ties. ``(0, 0)`` if none."""
    f = np.concatenate([[False], np.asarray(free, dtype=bool), [False]])
    edges = np.flatnonzero(np.diff(f.astype(np.int8)))
    if len(edges) == 0:
        return 0, 0
    starts, stops = edges[::2], edges[1::2]
    k = int(np.argmax(stops - starts))
    return int(starts[k]), int(stops[k])


def ftg_gap(scan: Scan2D, params: FtgParams):
    """Bubble the nearest obstacle, then pick the widest clear run of beams.

    Returns ``(gap_start, gap_stop, ranges)`` over the restricted window, with
    ``ranges`` the bubbled copy and indices relative to the full scan.
    """
    ang = scan.angles
    r = np.where(np.isfinite(scan.ranges), scan.ranges, scan.range_max)
    window = np.flatnonzero(np.abs(ang) <= params.half_fov)
    lo, hi = int(window[0]), int(window[-1]) + 1
    r = r.copy()
    w = r[lo:hi]
    near = int(np.argmin(w))
    if w[near] > 0:
        half = math.atan2(params.bubble_radius, w[near])
        w[np.abs(ang[lo:hi] - ang[lo + near]) <= half] = 0.0
    start, stop = widest_gap(w > params.clearance)
    return lo + start, lo + stop, r


def ftg_tick(scan: Scan2D, v_actual: float, config: ControllerConfig = ControllerConfig(),
             params: FtgParams = FtgParams()) -> ControlCommand:
    """Single stateless FTG frame. No usable gap gives a braking fallback command."""
    start, stop, r = ftg_gap(scan, params)
    if stop - start < params.min_gap_width:
        return ControlCommand(0.0, config.vehicle.v_min, 0.0, 1.0 if config.longitudinal == "pid" else 0.0, True)
    # ranges capped at the horizon: the deepest beams tie and the median one wins
    seg = np.minimum(r[start:stop], params.horizon)
    best = np.flatnonzero(seg == seg.max())
    i = start + int(best[len(best) // 2])
    alpha = float(scan.angles[i])
    ld = lookahead_distance(max(v_actual, 0.0), config.pursuit)
    delta = steering((math.cos(alpha), math.sin(alpha)), config.vehicle, ld)
    kappa = math.tan(delta) / config.vehicle.wheelbase
    return ControlCommand(delta, target_speed(kappa, config.vehicle, config.kappa_floor))


class FTGController:
    def __init__(self, config: ControllerConfig = ControllerConfig(), params: FtgParams = FtgParams(),
                 name="FTG"):
        self.config = config
        self.params = params
        self.name = name
        self.reset()

    def reset(self):
        self.pid_state = PidState()
        self.last_command = None
        self.fallback_run = 0
        self.last_lookahead_kappa = 0.0
        self.last_trace = None

    def tick(self, scan: Scan2D, v_actual: float, dt: float = 0.025) -> ControlCommand:
        cmd = ftg_tick(scan, v_actual, self.config, self.params)
        if cmd.fallback:
            return apply_fallback(self, v_actual, dt)
        self.fallback_run = 0
        self.last_lookahead_kappa = math.tan(cmd.steering) / self.config.vehicle.wheelbase
        if self.config.longitudinal == "pid":
            thr, brk, self.pid_state = pid_longitudinal(cmd.target_speed, v_actual, dt,
                                                        self.config.pid, self.pid_state)
            cmd = ControlCommand(cmd.steering, cmd.target_speed, thr, brk)
        self.last_command = cmd
        return cmd


def dtr_tick(scan: Scan2D, v_actual: float, config: ControllerConfig = ControllerConfig()) -> ControlCommand:
    """Single frame of the circumcentre variant from a fresh state."""
    ctrl = TriangulationController(config, use_ccma=False, centerpoints="circumcenter", name="DTR")
    return ctrl.tick(scan, v_actual)


def make_controller(variant: ControllerVariant | str, trace: bool = False):
    if isinstance(variant, str):
        variant = ControllerVariant(variant)
    cfg = variant.config
    if variant.kind == "MCTR":
        return TriangulationController(cfg, trace=trace, name="MCTR")
    if variant.kind == "MCTR_NO_CCMA":
        return TriangulationController(cfg, use_ccma=False, trace=trace, name="MCTR_NO_CCMA")
    if variant.kind == "DTR":
        return TriangulationController(cfg, use_ccma=False, centerpoints="circumcenter", trace=trace, name="DTR")
    return FTGController(cfg, variant.ftg)
