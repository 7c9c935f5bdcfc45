"""Episode metrics: lap times, curvature error, lateral jerk, pass rate, tick timing."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import CubicSpline
from scipy.spatial import cKDTree

from .centerline import menger_curvature
from .sim import COMPLETED, COLLISION, detect_crossings
from .tracks import TrackMap

RESAMPLE_STEP = 0.05
JERK_PREFILTER = 5
METRICS_COLUMNS = ("controller", "track", "seed", "laps", "t_lap_mean", "t_lap_std", "eps_k", "j_lat",
                   "pass", "mean_tick_us", "max_tick_us")
SUMMARY_COLUMNS = ("controller", "track", "runs", "laps", "t_lap_mean", "t_lap_std", "eps_k_mean",
                   "eps_k_std", "j_lat_mean", "j_lat_std", "pass_pct", "mean_tick_us", "max_tick_us")


class DegenerateLog(ValueError):
    """The log does not move far enough to define a trajectory."""


def _xy(log):
    if isinstance(log, np.ndarray):
        return np.asarray(log, dtype=float)[:, :2]
    return np.column_stack([log.column("x"), log.column("y")])


def crossings(log, track: TrackMap):
    """Start-line crossing times recomputed from the logged poses."""
    return detect_crossings(log.column("x"), log.column("y"), log.column("time"), track)


def lap_times(log_or_crossings, track: TrackMap | None = None) -> list:
    """Differences of consecutive crossing times.

    Accepts an explicit list of crossing times, or a log (recomputed from its
    poses when ``track`` is given, else the log's recorded crossings).
    """
    if hasattr(log_or_crossings, "rows"):
        c = crossings(log_or_crossings, track) if track is not None else log_or_crossings.crossings
    else:
        c = list(log_or_crossings)
    return [float(b - a) for a, b in zip(c[:-1], c[1:])]


def resample_path(xy, step: float = RESAMPLE_STEP) -> np.ndarray:
    """Cubic-spline resampling of a polyline at uniform arc steps (chord parametrisation)."""
    p = np.asarray(xy, dtype=float).reshape(-1, 2)
    if len(p) > 1:
        keep = np.concatenate([[True], np.hypot(*np.diff(p, axis=0).T) > 1e-9])
        p = p[keep]
    if len(p) < 4:
        raise DegenerateLog("trajectory has fewer than four distinct poses")
    s = np.concatenate([[0.0], np.cumsum(np.hypot(*np.diff(p, axis=0).T))])
    if s[-1] < 3 * step:
        raise DegenerateLog("trajectory shorter than three resampling steps")
    spline = CubicSpline(s, p, axis=0)
    return spline(np.arange(0.0, s[-1], step))


def curvature_error(log_or_xy, track: TrackMap, step: float = RESAMPLE_STEP) -> float:
    """Mean |kappa_driven - kappa_truth| over the resampled trajectory, truth taken
    at the nearest centreline sample."""
    q = resample_path(_xy(log_or_xy), step)
    k_driven = menger_curvature(q)
    _, idx = cKDTree(track.center[:, :2]).query(q)
    return float(np.mean(np.abs(k_driven - track.center[idx, 2])))


def _arc_signed_distance(p, a, b, kappa):
    """Signed distance (left positive) from points ``p`` to the primitive a->b of curvature ``kappa``,
    plus the chord projection parameter for choosing between candidates."""
    e = b - a
    ee = (e * e).sum(axis=1)
    t = ((p - a) * e).sum(axis=1) / ee
    tc = np.clip(t, 0.0, 1.0)
    c = a + tc[:, None] * e
    cross = e[:, 0] * (p[:, 1] - a[:, 1]) - e[:, 1] * (p[:, 0] - a[:, 0])
    d = np.sign(cross) * np.hypot(p[:, 0] - c[:, 0], p[:, 1] - c[:, 1])
    curved = np.abs(kappa) > 1e-12
    if curved.any():
        k = kappa[curved]
        sk = np.sign(k)
        r = 1.0 / np.abs(k)
        half = 0.25 * ee[curved]
        h = np.sqrt(np.maximum(r * r - half, 0.0))
        ln = np.sqrt(ee[curved])
        nrm = np.stack([-e[curved, 1], e[curved, 0]], axis=1) / ln[:, None]
        centre = 0.5 * (a[curved] + b[curved]) + (sk * h)[:, None] * nrm
        pc, ac, bc = p[curved] - centre, a[curved] - centre, b[curved] - centre
        # the arc's span is the wedge a-centre-b, not the chord's perpendicular strip
        dist = np.hypot(pc[:, 0], pc[:, 1])
        tol = -1e-12 * r * dist
        wedge = ((sk * (ac[:, 0] * pc[:, 1] - ac[:, 1] * pc[:, 0]) >= tol)
                 & (sk * (pc[:, 0] * bc[:, 1] - pc[:, 1] * bc[:, 0]) >= tol))
        idx = np.flatnonzero(curved)
        d[idx[wedge]] = (sk * (r - dist))[wedge]
        t[idx[wedge]] = np.clip(t[idx[wedge]], 0.0, 1.0)
        out = idx[~wedge]
        da = np.hypot(*(p[out] - a[out]).T)
        db = np.hypot(*(p[out] - b[out]).T)
        d[out] = (sk * np.sign(r - dist))[~wedge] * np.minimum(da, db)
        t[out] = np.where(da <= db, -1.0, 2.0)
    return d, t


def lateral_error(log_or_xy, track: TrackMap) -> np.ndarray:
    """Signed distance from each pose to the truth centreline (left of travel positive),
    measured against the exact arcs rather than the sampled chords."""
    p = _xy(log_or_xy)
    c = track.center[:, :2]
    kap = track.center[:, 2]
    n = len(c)
    _, i = cKDTree(c).query(p)
    best = None
    for first in ((i - 1) % n, i):
        second = (first + 1) % n
        d, t = _arc_signed_distance(p, c[first], c[second], kap[second])
        # a primitive whose span contains the pose always beats one measured to an endpoint
        score = np.abs(d) + np.where((t < 0.0) | (t > 1.0), 1e6, 0.0)
        if best is None:
            best, best_score = d, score
        else:
            take = score < best_score
            best = np.where(take, d, best)
            best_score = np.where(take, score, best_score)
    return best


def third_derivative(e, dt: float, prefilter: int = JERK_PREFILTER) -> np.ndarray:
    e = np.asarray(e, dtype=float)
    if prefilter > 1:
        e = np.convolve(e, np.ones(prefilter) / prefilter, mode="valid")
    if len(e) < 5:
        raise DegenerateLog("too few samples for a third difference")
    return (e[4:] - 2.0 * e[3:-1] + 2.0 * e[1:-3] - e[:-4]) / (2.0 * dt ** 3)


def lateral_jerk(log_or_e, track: TrackMap | None = None, dt: float | None = None) -> float:
    """Mean |d^3 e_lat / dt^3| after a 5-sample moving average.

    ``log_or_e`` is an episode log (with ``track``) or a lateral-error series
    (with ``dt``).
    """
    if hasattr(log_or_e, "rows"):
        e = lateral_error(log_or_e, track)
        dt = log_or_e.dt if dt is None else dt
    else:
        e = np.asarray(log_or_e, dtype=float)
    if not dt or dt <= 0:
        raise ValueError("dt must be positive")
    return float(np.mean(np.abs(third_derivative(e, dt))))


@dataclass
class EpisodeMetrics:
    controller: str
    track: str
    seed: int
    lap_times: list = field(default_factory=list)
    eps_k: float = math.nan
    j_lat: float = math.nan
    passed: bool = False
    collided: bool = False
    mean_tick_us: float = math.nan
    max_tick_us: float = math.nan

    @property
    def laps(self) -> int:
        return len(self.lap_times)

    @property
    def t_lap_mean(self) -> float:
        return float(np.mean(self.lap_times)) if self.lap_times else math.nan

    @property
    def t_lap_std(self) -> float:
        return float(np.std(self.lap_times, ddof=1)) if len(self.lap_times) > 1 else (0.0 if self.lap_times else math.nan)

    def row(self, timing: bool = True):
        tm = (_fmt(self.mean_tick_us), _fmt(self.max_tick_us)) if timing else ("", "")
        return [self.controller, self.track, self.seed, self.laps, _fmt(self.t_lap_mean), _fmt(self.t_lap_std),
                _fmt(self.eps_k), _fmt(self.j_lat), int(self.passed), *tm]


def _fmt(v) -> str:
    return repr(float(v))


def episode_metrics(log, track: TrackMap, target_laps: int | None = None) -> EpisodeMetrics:
    """All metrics for one episode, from the logged poses only (plus tick timing
    when the log carries it)."""
    laps = lap_times(log, track)
    m = EpisodeMetrics(log.controller, track.name, int(log.seed), laps)
    try:
        m.eps_k = curvature_error(log, track)
        m.j_lat = lateral_jerk(log, track)
    except DegenerateLog:
        pass
    m.collided = log.status == COLLISION
    m.passed = log.status == COMPLETED and (target_laps is None or len(laps) >= target_laps)
    if log.tick_micros:
        m.mean_tick_us = float(np.mean(log.tick_micros))
        m.max_tick_us = float(np.max(log.tick_micros))
    return m


@dataclass(frozen=True)
class Stat:
    mean: float
    std: float
    n: int


def _stat(values) -> Stat:
    v = np.array([x for x in values if math.isfinite(x)], dtype=float)
    if len(v) == 0:
        return Stat(math.nan, math.nan, 0)
    return Stat(float(v.mean()), float(v.std(ddof=1)) if len(v) > 1 else 0.0, len(v))


@dataclass(frozen=True)
class Summary:
    controller: str
    track: str
    runs: int
    laps: int
    t_lap: Stat
    eps_k: Stat
    j_lat: Stat
    pass_pct: float
    mean_tick_us: float
    max_tick_us: float

    def row(self, timing: bool = True):
        tm = (_fmt(self.mean_tick_us), _fmt(self.max_tick_us)) if timing else ("", "")
        return [self.controller, self.track, self.runs, self.laps, _fmt(self.t_lap.mean), _fmt(self.t_lap.std),
                _fmt(self.eps_k.mean), _fmt(self.eps_k.std), _fmt(self.j_lat.mean), _fmt(self.j_lat.std),
                _fmt(self.pass_pct), *tm]


def aggregate(runs) -> Summary:
    """Sample statistics over runs. Lap times pool every completed lap;
    PASS counts runs that passed without a collision."""
    runs = list(runs)
    if not runs:
        raise ValueError("aggregate needs at least one run")
    laps = [t for r in runs for t in r.lap_times]
    clean = sum(1 for r in runs if r.passed and not r.collided)
    ticks = [r.mean_tick_us for r in runs if math.isfinite(r.mean_tick_us)]
    maxes = [r.max_tick_us for r in runs if math.isfinite(r.max_tick_us)]
    names = {r.controller for r in runs}
    tracks = {r.track for r in runs}
    return Summary(
        "+".join(sorted(names)), "+".join(sorted(tracks)), len(runs), len(laps), _stat(laps),
        _stat(r.eps_k for r in runs), _stat(r.j_lat for r in runs), 100.0 * clean / len(runs),
        float(np.mean(ticks)) if ticks else math.nan, float(np.max(maxes)) if maxes else math.nan)


def write_metrics_csv(path, metrics, timing: bool = True):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(METRICS_COLUMNS)
        for m in metrics:
            w.writerow(m.row(timing))


def read_metrics_csv(path) -> list:
    out = []
    with open(path, newline="") as fh:
        rd = csv.DictReader(fh)
        if tuple(rd.fieldnames or ()) != METRICS_COLUMNS:
            raise ValueError(f"{path}: unexpected header {rd.fieldnames}")
        for r in rd:
            out.append(r)
    return out


def write_summary_csv(path, summaries, timing: bool = True):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SUMMARY_COLUMNS)
        for s in summaries:
            w.writerow(s.row(timing))
