"""Deterministic closed-loop simulator: raycast LiDAR, kinematic bicycle,
collision and start-line lap detection."""
from __future__ import annotations

import csv
import math
import time
import zlib
from dataclasses import dataclass, field, replace

import numpy as np

from . import kernels
from .control import ControlCommand
from .scan_frontend import PointCloud3D, ProjectionBand, Scan2D, project_cloud
from .tracks import TrackMap, point_in_polygon, segment_distances

LAP_DEBOUNCE = 2.0
LOG_COLUMNS = ("tick", "time", "x", "y", "heading", "speed", "steer", "v_target",
               "throttle", "brake", "status")

RUNNING, FALLBACK = "RUNNING", "FALLBACK"
COMPLETED, COLLISION, TIMEOUT, FALLBACK_STORM = "COMPLETED", "COLLISION", "TIMEOUT", "FALLBACK_STORM"
TERMINAL = (COMPLETED, COLLISION, TIMEOUT, FALLBACK_STORM)


@dataclass(frozen=True)
class SensorConfig:
    beams: int = 1081
    fov: float = 1.5 * math.pi
    range_max: float = 10.0
    noise_sigma: float = 0.01
    mode: str = "2d"  # "3d": lifted multi-channel cloud fed through project_cloud
    mount_height: float = 0.2
    wall_height: float = 0.4
    channels: tuple = tuple(math.radians(a) for a in range(-15, 16, 2))
    z_band: tuple = (0.05, 0.30)

    def __post_init__(self):
        if self.beams < 16:
            raise ValueError("beams must be at least 16")
        if not 0 < self.fov <= 2 * math.pi:
            raise ValueError("fov must be in (0, 2*pi]")
        if self.mode not in ("2d", "3d"):
            raise ValueError(f"unknown sensor mode {self.mode!r}")

    @property
    def angle_min(self) -> float:
        return -0.5 * self.fov

    @property
    def angle_increment(self) -> float:
        return self.fov / (self.beams - 1)


@dataclass(frozen=True)
class SimConfig:
    dt: float = 0.025
    sensor: SensorConfig = field(default_factory=SensorConfig)
    rng_seed: int = 0
    actuation_mode: str = "DIRECT_VELOCITY"
    velocity_lag_tau: float = 0.25
    throttle_gain: float = 8.0
    brake_gain: float = 10.0
    drag: float = 0.2
    wheelbase: float = 0.33
    footprint_radius: float = 0.2
    grip_limit: float = math.inf  # lateral acceleration cap (m/s^2); inf is the pure kinematic plant
    max_ticks: int = 4000
    laps: int = 1
    fallback_storm: int = 40

    def __post_init__(self):
        if not 0 < self.dt <= 0.1:
            raise ValueError("dt must be in (0, 0.1]")
        if self.actuation_mode not in ("DIRECT_VELOCITY", "THROTTLE_BRAKE"):
            raise ValueError(f"unknown actuation mode {self.actuation_mode!r}")
        if not self.velocity_lag_tau > 0:
            raise ValueError("velocity_lag_tau must be positive")
        if not self.grip_limit > 0:
            raise ValueError("grip_limit must be positive")
        if self.max_ticks < 1 or self.laps < 1:
            raise ValueError("max_ticks and laps must be positive")


@dataclass(frozen=True)
class SimState:
    x: float
    y: float
    heading: float
    speed: float = 0.0
    time: float = 0.0
    tick_index: int = 0
    lap_count: int = 0
    lap_times: tuple = ()
    collided: bool = False

    @property
    def pose(self):
        return (self.x, self.y, self.heading)


def episode_rng(seed: int, track_name: str) -> np.random.Generator:
    """Noise stream shared by every controller on the same (seed, track)."""
    return np.random.default_rng([int(seed), zlib.crc32(track_name.encode())])


def raycast_scan(track: TrackMap, pose, sensor: SensorConfig = SensorConfig(), rng=None,
                 timestamp: float = 0.0) -> Scan2D:
    x, y, h = pose
    r = kernels.raycast(track.segments, float(x), float(y), float(h), sensor.angle_min,
                        sensor.angle_increment, sensor.beams, sensor.range_max)
    if sensor.mode == "3d":
        cloud = simulate_cloud(r, sensor, rng)
        band = ProjectionBand(sensor.z_band[0], sensor.z_band[1], sensor.angle_min,
                              sensor.angle_min + sensor.beams * sensor.angle_increment, sensor.beams)
        return project_cloud(cloud, band, sensor.range_max, timestamp)
    if sensor.noise_sigma > 0 and rng is not None:
        r = r + sensor.noise_sigma * rng.standard_normal(len(r))
    return Scan2D(sensor.angle_min, sensor.angle_increment, r, sensor.range_max, timestamp)


def simulate_cloud(wall_ranges, sensor: SensorConfig, rng=None) -> PointCloud3D:
    """Multi-channel 3D returns against vertical walls of ``wall_height`` on flat ground.

    Channels that dip below the mount height hit the ground before the wall;
    channels that clear the wall top see nothing.
    """
    r = np.asarray(wall_ranges, dtype=float)
    az = sensor.angle_min + np.arange(len(r)) * sensor.angle_increment
    pts = []
    for elev in sensor.channels:
        tz = math.tan(elev)
        with np.errstate(invalid="ignore"):
            z = sensor.mount_height + r * tz
        hit_wall = np.isfinite(r) & (z >= 0.0) & (z <= sensor.wall_height)
        rr = r.copy()
        zz = z.copy()
        if tz < 0:
            ground = sensor.mount_height / -tz
            hit_ground = (~np.isfinite(r) | (z < 0.0)) & (ground <= sensor.range_max)
            rr[hit_ground] = ground
            zz[hit_ground] = 0.0
            hit_wall |= hit_ground
        if sensor.noise_sigma > 0 and rng is not None:
            rr = rr + sensor.noise_sigma * rng.standard_normal(len(rr))
        sel = hit_wall
        pts.append(np.column_stack([rr[sel] * np.cos(az[sel]), rr[sel] * np.sin(az[sel]), zz[sel]]))
    return PointCloud3D(np.concatenate(pts))


def _derivs(s, steer, cmd, cfg: SimConfig):
    x, y, th, v = s
    if cfg.actuation_mode == "DIRECT_VELOCITY":
        a = (cmd.target_speed - v) / cfg.velocity_lag_tau
    else:
        a = cfg.throttle_gain * cmd.throttle - cfg.brake_gain * cmd.brake - cfg.drag * v
    yaw = v * math.tan(steer) / cfg.wheelbase
    # past the grip limit the tyres saturate and the car understeers
    cap = cfg.grip_limit / v if v > 0.0 else math.inf
    yaw = min(max(yaw, -cap), cap)
    return np.array([v * math.cos(th), v * math.sin(th), yaw, a])


def step(state: SimState, cmd: ControlCommand, cfg: SimConfig) -> SimState:
    """One RK4 step of the kinematic bicycle with the steering held constant.

    Yaw rate saturates at ``grip_limit / v``.
    """
    dt = cfg.dt
    s = np.array([state.x, state.y, state.heading, state.speed])
    k1 = _derivs(s, cmd.steering, cmd, cfg)
    k2 = _derivs(s + 0.5 * dt * k1, cmd.steering, cmd, cfg)
    k3 = _derivs(s + 0.5 * dt * k2, cmd.steering, cmd, cfg)
    k4 = _derivs(s + dt * k3, cmd.steering, cmd, cfg)
    s = s + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
    tick = state.tick_index + 1
    return replace(state, x=float(s[0]), y=float(s[1]), heading=float(s[2]),
                   speed=max(float(s[3]), 0.0), time=tick * dt, tick_index=tick)


def check_collision(track: TrackMap, pose, footprint_radius: float) -> bool:
    p = (float(pose[0]), float(pose[1]))
    if segment_distances(p, track.segments).min() < footprint_radius:
        return True
    return (not point_in_polygon(p, track.outer)) or point_in_polygon(p, track.inner)


def crossing_time(track_line, p0, p1, t0, t1):
    """Time at which the segment p0->p1 crosses the start line forwards, else None."""
    o, fwd, nrm, half = track_line
    s0 = (p0[0] - o[0]) * fwd[0] + (p0[1] - o[1]) * fwd[1]
    s1 = (p1[0] - o[0]) * fwd[0] + (p1[1] - o[1]) * fwd[1]
    if not (s0 < 0.0 <= s1):
        return None
    f = -s0 / (s1 - s0)
    lat = (p0[0] + f * (p1[0] - p0[0]) - o[0]) * nrm[0] + (p0[1] + f * (p1[1] - p0[1]) - o[1]) * nrm[1]
    if abs(lat) > half:
        return None
    return t0 + f * (t1 - t0)


def detect_crossings(x, y, t, track: TrackMap):
    """Start-line crossing times, starting with the launch at ``t[0]``."""
    line = track.start_line()
    out = [float(t[0])] if len(t) else []
    for k in range(1, len(t)):
        tc = crossing_time(line, (x[k - 1], y[k - 1]), (x[k], y[k]), t[k - 1], t[k])
        if tc is not None and tc - out[-1] >= LAP_DEBOUNCE:
            out.append(tc)
    return out


@dataclass
class EpisodeLog:
    controller: str
    track: str
    seed: int
    dt: float
    rows: list = field(default_factory=list)
    status: str = RUNNING
    crossings: list = field(default_factory=list)
    tick_micros: list = field(default_factory=list)
    lookahead_kappa: list = field(default_factory=list)
    traces: list = field(default_factory=list)

    def column(self, name) -> np.ndarray:
        i = LOG_COLUMNS.index(name)
        if name == "status":
            return np.array([r[i] for r in self.rows])
        return np.array([r[i] for r in self.rows], dtype=float)

    @property
    def lap_times(self):
        return list(np.diff(self.crossings)) if len(self.crossings) > 1 else []

    def __len__(self):
        return len(self.rows)

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(LOG_COLUMNS)
            for r in self.rows:
                w.writerow([r[0]] + [repr(float(v)) for v in r[1:10]] + [r[10]])

    @classmethod
    def from_csv(cls, path, controller="", track="", seed=0):
        with open(path, newline="") as fh:
            rd = csv.reader(fh)
            header = next(rd)
            if tuple(header) != LOG_COLUMNS:
                raise ValueError(f"{path}: unexpected header {header}")
            rows = [(int(r[0]), *[float(v) for v in r[1:10]], r[10]) for r in rd]
        dt = rows[1][1] - rows[0][1] if len(rows) > 1 else 0.0
        log = cls(controller, track, seed, dt, rows)
        log.status = rows[-1][10] if rows else RUNNING
        return log


def run_episode(track: TrackMap, controller, cfg: SimConfig = SimConfig(), seed: int = 0,
                trace: bool = False, start_speed: float = 0.0) -> EpisodeLog:
    """Sense -> act -> step until the lap target, a collision, a fallback storm
    or ``max_ticks``. Row ``k`` holds the state at ``k * dt`` and the command
    issued from it; terminal rows carry a zero command."""
    rng = episode_rng(seed, track.name)
    x, y, h = track.start_pose
    state = SimState(x, y, h, start_speed)
    line = track.start_line()
    log = EpisodeLog(getattr(controller, "name", type(controller).__name__), track.name, seed, cfg.dt)
    log.crossings = [0.0]
    if hasattr(controller, "reset"):
        controller.reset()
    prev = None
    fallback_run = 0
    for k in range(cfg.max_ticks):
        if prev is not None:
            tc = crossing_time(line, (prev.x, prev.y), (state.x, state.y), prev.time, state.time)
            if tc is not None and tc - log.crossings[-1] >= LAP_DEBOUNCE:
                log.crossings.append(tc)
                state = replace(state, lap_count=state.lap_count + 1,
                                lap_times=state.lap_times + (tc - log.crossings[-2],))
            terminal = None
            if check_collision(track, state.pose, cfg.footprint_radius):
                state = replace(state, collided=True)
                terminal = COLLISION
            elif state.lap_count >= cfg.laps:
                terminal = COMPLETED
            if terminal:
                log.rows.append((k, state.time, state.x, state.y, state.heading, state.speed,
                                 0.0, 0.0, 0.0, 0.0, terminal))
                log.status = terminal
                return log
        scan = raycast_scan(track, state.pose, cfg.sensor, rng, state.time)
        t0 = time.perf_counter_ns()
        cmd = controller.tick(scan, state.speed, cfg.dt)
        log.tick_micros.append((time.perf_counter_ns() - t0) / 1000.0)
        log.lookahead_kappa.append(float(getattr(controller, "last_lookahead_kappa", 0.0)))
        if trace and state.lap_count == 0 and getattr(controller, "last_trace", None):
            log.traces.append(controller.last_trace)
        fallback_run = fallback_run + 1 if cmd.fallback else 0
        status = FALLBACK if cmd.fallback else RUNNING
        if fallback_run >= cfg.fallback_storm:
            status = FALLBACK_STORM
        log.rows.append((k, state.time, state.x, state.y, state.heading, state.speed,
                         cmd.steering, cmd.target_speed, cmd.throttle, cmd.brake, status))
        if status == FALLBACK_STORM:
            log.status = FALLBACK_STORM
            return log
        prev = state
        state = step(state, cmd, cfg)
    last = log.rows[-1]
    log.rows[-1] = last[:10] + (TIMEOUT,)
    log.status = TIMEOUT
    return log
