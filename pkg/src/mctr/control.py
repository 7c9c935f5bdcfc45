"""Pure-pursuit steering, curvature-limited speed, throttle/brake PID, and the
scan -> command pipeline."""
from __future__ import annotations

import functools
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .centerline import CenterlinePath, EmptyCenterline, SmoothingWeights, build_centerline
from .scan_frontend import Scan2D, subsample_scan
from .triangulate import (ExtractionParams, NotEnoughGeometry, delaunay, extract_circumcenters,
                          extract_midpoints, filter_pseudo, format_frame, opposing_edges)

KAPPA_FLOOR = 1e-3


@dataclass(frozen=True)
class VehicleParams:
    wheelbase: float = 0.33
    friction_mu: float = 0.8
    a_max_lat: float = 9.81
    v_max: float = 7.0
    v_min: float = 1.0
    max_steer: float = 0.4

    def __post_init__(self):
        for name in ("wheelbase", "friction_mu", "a_max_lat", "v_max", "v_min", "max_steer"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if not self.v_min < self.v_max:
            raise ValueError("v_min must be below v_max")


@dataclass(frozen=True)
class PursuitParams:
    k_v: float = 0.3
    l_min: float = 0.8

    def __post_init__(self):
        if self.k_v < 0:
            raise ValueError("k_v must be non-negative")
        if not self.l_min > 0:
            raise ValueError("l_min must be positive")


@dataclass(frozen=True)
class ControlCommand:
    steering: float
    target_speed: float
    throttle: float = 0.0
    brake: float = 0.0
    fallback: bool = False


@dataclass(frozen=True)
class PidGains:
    kp_throttle: float = 0.5
    ki_throttle: float = 0.01
    kd_throttle: float = 0.0
    kp_brake: float = 0.5
    ki_brake: float = 0.0
    kd_brake: float = 0.0
    integral_limit: float = 50.0

    def __post_init__(self):
        for k, v in vars(self).items():
            if v < 0:
                raise ValueError(f"{k} must be non-negative")


@dataclass(frozen=True)
class PidState:
    integral: float = 0.0
    prev_error: float = 0.0
    prev_time: float = 0.0


@dataclass(frozen=True)
class FallbackPolicy:
    mode: str = "BRAKE_STRAIGHT"
    hold_ticks: int = 5

    def __post_init__(self):
        if self.mode not in ("BRAKE_STRAIGHT", "HOLD_LAST"):
            raise ValueError(f"unknown fallback mode {self.mode!r}")
        if self.hold_ticks < 0:
            raise ValueError("hold_ticks must be non-negative")


@dataclass(frozen=True)
class ControllerConfig:
    vehicle: VehicleParams = field(default_factory=VehicleParams)
    pursuit: PursuitParams = field(default_factory=PursuitParams)
    extraction: ExtractionParams = field(default_factory=ExtractionParams)
    smoothing: SmoothingWeights = field(default_factory=SmoothingWeights)
    pid: PidGains = field(default_factory=PidGains)
    fallback: FallbackPolicy = field(default_factory=FallbackPolicy)
    box_size: float = 0.1
    kappa_floor: float = KAPPA_FLOOR
    longitudinal: str = "velocity"  # or "pid" (throttle/brake output)

    def __post_init__(self):
        if not self.box_size > 0:
            raise ValueError("box_size must be positive")
        if not self.kappa_floor > 0:
            raise ValueError("kappa_floor must be positive")
        if self.longitudinal not in ("velocity", "pid"):
            raise ValueError(f"unknown longitudinal mode {self.longitudinal!r}")


def lookahead_distance(v: float, p: PursuitParams) -> float:
    return p.k_v * v + p.l_min


def select_lookahead_point(path: CenterlinePath, lookahead: float):
    """First point along ``path`` at distance ``lookahead`` from the origin.

    Returns ``(point, sample_index)`` where the index is the path sample
    nearest to the returned point. Paths that stay inside the circle return
    their last point.
    """
    p = path.points
    if len(p) == 0:
        raise EmptyCenterline("empty path")
    d = np.hypot(p[:, 0], p[:, 1])
    beyond = np.flatnonzero(d >= lookahead)
    if len(beyond) == 0:
        return p[-1].copy(), len(p) - 1
    i = int(beyond[0])
    if i == 0:
        return p[0].copy(), 0
    a, b = p[i - 1], p[i]
    e = b - a
    # |a + t e| = lookahead, the root in (0, 1]
    qa = float(e @ e)
    qb = 2.0 * float(a @ e)
    qc = float(a @ a) - lookahead * lookahead
    t = (-qb + math.sqrt(max(qb * qb - 4.0 * qa * qc, 0.0))) / (2.0 * qa)
    t = min(max(t, 0.0), 1.0)
    pt = a + t * e
    return pt, (i - 1 if t < 0.5 else i)


def steering(target, vp: VehicleParams, lookahead: float) -> float:
    alpha = math.atan2(target[1], target[0])
    delta = math.atan(2.0 * vp.wheelbase * math.sin(alpha) / lookahead)
    return min(max(delta, -vp.max_steer), vp.max_steer)


def target_speed(kappa: float, vp: VehicleParams, kappa_floor: float = KAPPA_FLOOR) -> float:
    v = math.sqrt(vp.friction_mu * vp.a_max_lat / max(abs(kappa), kappa_floor))
    return min(max(v, vp.v_min), vp.v_max)


def pid_longitudinal(v_target: float, v_actual: float, dt: float, gains: PidGains,
                     state: PidState, now: float | None = None):
    """One throttle/brake PID update -> ``(throttle, brake, new_state)``.

    The integral is the running sum of errors (clamped to
    ``gains.integral_limit``); the brake channel acts on the negated error.
    Only one pedal is ever non-zero.
    """
    if not dt > 0:
        raise ValueError("dt must be positive")
    e = v_target - v_actual
    integral = min(max(state.integral + e, -gains.integral_limit), gains.integral_limit)
    deriv = (e - state.prev_error) / dt
    new_state = PidState(integral, e, state.prev_time + dt if now is None else now)
    if e >= 0.0:
        u = gains.kp_throttle * e + gains.ki_throttle * integral + gains.kd_throttle * deriv
        return min(max(u, 0.0), 1.0), 0.0, new_state
    u = -(gains.kp_brake * e + gains.ki_brake * integral + gains.kd_brake * deriv)
    return 0.0, min(max(u, 0.0), 1.0), new_state


class TriangulationController:
    """Reactive controller: scan -> boundary points -> triangulation ->
    centre points -> smoothed centreline -> pure pursuit.

    ``centerpoints`` picks opposing-edge midpoints (MCTR) or in-triangle
    circumcentres (the DTR reconstruction); ``use_ccma`` toggles the energy
    smoothing stage.
    """

    def __init__(self, config: ControllerConfig = ControllerConfig(), *, use_ccma=True,
                 centerpoints="midpoint", trace=False, name="MCTR"):
        if centerpoints not in ("midpoint", "circumcenter"):
            raise ValueError(f"unknown centre-point rule {centerpoints!r}")
        self.config = config
        self.use_ccma = use_ccma
        self.centerpoints = centerpoints
        self.trace = trace
        self.name = name
        self.reset()

    def reset(self):
        self.pid_state = PidState()
        self.last_command = None
        self.fallback_run = 0
        self.last_path = None
        self.last_lookahead_kappa = 0.0
        self._trace = None
        self.ticks = 0

    @property
    def last_trace(self):
        """Debug text of the latest frame (trace mode only), formatted on first access
        so that tick timing excludes it."""
        if callable(self._trace):
            self._trace = self._trace()
        return self._trace

    def perceive(self, scan: Scan2D) -> CenterlinePath:
        cfg = self.config
        bp = subsample_scan(scan, cfg.box_size)
        tri = delaunay(bp)
        if self.centerpoints == "midpoint":
            raw = extract_midpoints(tri, 0.0, cfg.extraction)
        else:
            raw = extract_circumcenters(tri, 0.0)
        raw = filter_pseudo(raw, scan, cfg.extraction)
        path = None
        try:
            path = build_centerline(raw, (0.0, 0.0, 0.0), cfg.extraction, cfg.smoothing,
                                    use_ccma=self.use_ccma)
        finally:
            if self.trace:
                self._trace = functools.partial(self._format_trace, self.ticks, tri, raw.points, path)
        return path

    def _format_trace(self, tick, tri, centers, path):
        opp = opposing_edges(tri, 0.0, self.config.extraction) if self.centerpoints == "midpoint" \
            else np.empty(0, dtype=np.int64)
        return format_frame(tick, tri, opp, centers, path)

    def tick(self, scan: Scan2D, v_actual: float, dt: float = 0.025) -> ControlCommand:
        cfg = self.config
        self._trace = None
        try:
            path = self.perceive(scan)
        except (NotEnoughGeometry, EmptyCenterline):
            if self.trace and self._trace is None:
                self._trace = format_frame(self.ticks, None, [], np.empty((0, 2)))
            cmd = self._fallback(v_actual, dt)
            self.ticks += 1
            return cmd
        self.fallback_run = 0
        self.last_path = path
        ld = lookahead_distance(max(v_actual, 0.0), cfg.pursuit)
        target, idx = select_lookahead_point(path, ld)
        dist = float(np.hypot(target[0], target[1]))
        if dist <= 1e-9:
            cmd = self._fallback(v_actual, dt)
            self.ticks += 1
            return cmd
        delta = steering(target, cfg.vehicle, dist)
        kappa = float(path.curvature[idx])
        self.last_lookahead_kappa = kappa
        v = target_speed(kappa, cfg.vehicle, cfg.kappa_floor)
        cmd = self._longitudinal(delta, v, v_actual, dt)
        self.last_command = cmd
        self.ticks += 1
        return cmd

    def _longitudinal(self, delta, v, v_actual, dt, fallback=False):
        if self.config.longitudinal == "pid":
            thr, brk, self.pid_state = pid_longitudinal(v, v_actual, dt, self.config.pid, self.pid_state)
            return ControlCommand(delta, v, thr, brk, fallback)
        return ControlCommand(delta, v, 0.0, 0.0, fallback)

    def _fallback(self, v_actual, dt) -> ControlCommand:
        return apply_fallback(self, v_actual, dt)


def apply_fallback(ctrl, v_actual, dt) -> ControlCommand:
    """Shared degraded-frame behaviour; ``ctrl`` carries config, last command and counters."""
    cfg = ctrl.config
    ctrl.fallback_run += 1
    pol = cfg.fallback
    if pol.mode == "HOLD_LAST" and ctrl.last_command is not None and ctrl.fallback_run <= pol.hold_ticks:
        return replace(ctrl.last_command, fallback=True)
    vmin = cfg.vehicle.v_min
    if cfg.longitudinal == "pid":
        ctrl.pid_state = PidState(0.0, vmin - v_actual, ctrl.pid_state.prev_time + dt)
        return ControlCommand(0.0, vmin, 0.0, 1.0, True)
    return ControlCommand(0.0, vmin, 0.0, 0.0, True)
