"""Turn raw centre points into an ordered, smoothed path with arc length and
signed curvature."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.signal import savgol_filter

from . import kernels
from .triangulate import ExtractionParams, RawCenterpoints, interpolate_faraway

SECOND_DIFF = np.array([1.0, -2.0, 1.0])
FOURTH_DIFF = np.array([1.0, -4.0, 6.0, -4.0, 1.0])


class EmptyCenterline(Exception):
    """Raised when a frame yields fewer than two usable path points."""


@dataclass(frozen=True)
class SmoothingWeights:
    lambda_vel: float = 2.0
    mu_curv: float = 1.0
    sg_window: int = 9
    sg_order: int = 3

    def __post_init__(self):
        if self.lambda_vel < 0 or self.mu_curv < 0:
            raise ValueError("smoothing weights must be non-negative")
        if self.sg_window < 5 or self.sg_window % 2 == 0:
            raise ValueError("sg_window must be odd and at least 5")
        if not 0 <= self.sg_order < self.sg_window:
            raise ValueError("sg_order must be below sg_window")


@dataclass(frozen=True, eq=False)
class CenterlinePath:
    points: np.ndarray
    arc_length: np.ndarray
    curvature: np.ndarray

    def __len__(self):
        return len(self.points)

    @property
    def length(self) -> float:
        return float(self.arc_length[-1]) if len(self.arc_length) else 0.0


def order_points(raw, vehicle_pose=(0.0, 0.0, 0.0), chain_break: float = 2.0) -> np.ndarray:
    """Greedy nearest-neighbour chain starting at the closest point ahead.

    Stops at the first hop longer than ``chain_break``. Ties go to the lower
    index.
    """
    pts = raw.points if isinstance(raw, RawCenterpoints) else np.asarray(raw, dtype=float)
    pts = pts.reshape(-1, 2)
    x0, y0, th = vehicle_pose
    if len(pts) == 0:
        return np.empty((0, 2))
    rel = pts - (x0, y0)
    ahead = rel[:, 0] * math.cos(th) + rel[:, 1] * math.sin(th) > 0.0
    if not ahead.any():
        return np.empty((0, 2))
    d0 = np.hypot(rel[:, 0], rel[:, 1])
    d0[~ahead] = np.inf
    cur = int(np.argmin(d0))
    visited = np.zeros(len(pts), dtype=bool)
    visited[cur] = True
    order = [cur]
    for _ in range(len(pts) - 1):
        d = np.hypot(pts[:, 0] - pts[cur, 0], pts[:, 1] - pts[cur, 1])
        d[visited] = np.inf
        nxt = int(np.argmin(d))
        if d[nxt] > chain_break:
            break
        visited[nxt] = True
        order.append(nxt)
        cur = nxt
    return pts[order].copy()


def truncate_foldback(ordered) -> np.ndarray:
    """Split an ordered chain at hops that turn back by more than 90 degrees
    and keep the longest piece.

    A greedy chain that starts mid-cluster runs to one end and then hops back
    (within the chain-break distance) to the leftovers on the other side of
    its start.
    """
    p = np.asarray(ordered, dtype=float).reshape(-1, 2)
    if len(p) < 3:
        return p
    hop = np.diff(p, axis=0)
    back = np.flatnonzero((hop[1:] * hop[:-1]).sum(axis=1) < 0.0) + 1
    if len(back) == 0:
        return p
    # piece k runs from point cuts[k] to cuts[k+1]-1; the reversing hop itself is dropped
    cuts = np.concatenate([[0], back + 1, [len(p)]])
    seglen = np.concatenate([[0.0], np.cumsum(np.hypot(hop[:, 0], hop[:, 1]))])
    lengths = seglen[cuts[1:] - 1] - seglen[cuts[:-1]]
    k = int(np.argmax(lengths))
    return p[cuts[k]:cuts[k + 1]]


def ccma_band(n: int, lambda_vel: float, mu_curv: float) -> np.ndarray:
    """Lower band (5, n) of I + lambda D2'D2 + mu D4'D4 for an open path."""
    ab = np.zeros((5, n))
    ab[0] = 1.0
    for stencil, weight in ((SECOND_DIFF, lambda_vel), (FOURTH_DIFF, mu_curv)):
        w = len(stencil)
        rows = n - w + 1
        if weight == 0.0 or rows <= 0:
            continue
        for a in range(w):
            for b in range(a + 1):
                # row r touches columns r..r+w-1; A[r+a, r+b] += weight * c_a * c_b
                ab[a - b, b:b + rows] += weight * stencil[a] * stencil[b]
    return ab


def ccma_energy(q, p, lambda_vel: float, mu_curv: float) -> float:
    q = np.asarray(q, dtype=float)
    p = np.asarray(p, dtype=float)
    e = float(((q - p) ** 2).sum())
    if len(q) >= 3:
        d2 = q[2:] - 2.0 * q[1:-1] + q[:-2]
        e += lambda_vel * float((d2 ** 2).sum())
    if len(q) >= 5:
        d4 = q[4:] - 4.0 * q[3:-1] + 6.0 * q[2:-2] - 4.0 * q[1:-3] + q[:-4]
        e += mu_curv * float((d4 ** 2).sum())
    return e


def ccma_smooth(path, w: SmoothingWeights) -> np.ndarray:
    """Exact minimiser of the fidelity + second-difference + fourth-difference energy.

    Both axes share one banded Cholesky factorisation. Paths shorter than three
    points come back unchanged.
    """
    p = np.asarray(path, dtype=float).reshape(-1, 2)
    if len(p) < 3 or (w.lambda_vel == 0.0 and w.mu_curv == 0.0):
        return p.copy()
    ab = ccma_band(len(p), w.lambda_vel, w.mu_curv)
    return kernels.solve_banded_spd(ab, np.ascontiguousarray(p))


def sg_smooth(path, w: SmoothingWeights) -> np.ndarray:
    p = np.asarray(path, dtype=float).reshape(-1, 2)
    if len(p) < w.sg_window:
        return p.copy()
    return savgol_filter(p, w.sg_window, w.sg_order, axis=0, mode="interp")


def menger_curvature(points) -> np.ndarray:
    """Signed curvature per point (left turns positive); endpoints copy neighbours."""
    p = np.asarray(points, dtype=float).reshape(-1, 2)
    n = len(p)
    k = np.zeros(n)
    if n < 3:
        return k
    a = p[1:-1] - p[:-2]
    b = p[2:] - p[1:-1]
    c = p[2:] - p[:-2]
    cross = a[:, 0] * b[:, 1] - a[:, 1] * b[:, 0]
    den = np.hypot(a[:, 0], a[:, 1]) * np.hypot(b[:, 0], b[:, 1]) * np.hypot(c[:, 0], c[:, 1])
    with np.errstate(divide="ignore", invalid="ignore"):
        k[1:-1] = np.where(den > 0.0, 2.0 * cross / den, 0.0)
    k[0] = k[1]
    k[-1] = k[-2]
    return k


def finalize(path) -> CenterlinePath:
    p = np.asarray(path, dtype=float).reshape(-1, 2)
    if len(p) > 1:
        keep = np.ones(len(p), dtype=bool)
        keep[1:] = np.any(np.diff(p, axis=0) != 0.0, axis=1)
        p = p[keep]
    if len(p) < 2:
        raise EmptyCenterline("fewer than two distinct points")
    seg = np.hypot(*np.diff(p, axis=0).T)
    s = np.concatenate([[0.0], np.cumsum(seg)])
    return CenterlinePath(p, s, menger_curvature(p))


def build_centerline(raw: RawCenterpoints, pose=(0.0, 0.0, 0.0),
                     params: ExtractionParams = ExtractionParams(),
                     weights: SmoothingWeights = SmoothingWeights(),
                     use_ccma: bool = True) -> CenterlinePath:
    """order -> fold-back cut -> faraway interpolation -> CCMA -> Savitzky-Golay -> finalize."""
    ordered = truncate_foldback(order_points(raw, pose, chain_break=2.0 * params.faraway_threshold))
    if len(ordered) < 2:
        raise EmptyCenterline("fewer than two ordered points")
    path = interpolate_faraway(ordered, params.faraway_threshold)
    if use_ccma:
        path = ccma_smooth(path, weights)
    path = sg_smooth(path, weights)
    return finalize(path)
