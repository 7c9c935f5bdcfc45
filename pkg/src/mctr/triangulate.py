"""Delaunay triangulation of boundary points and raw centre-point extraction."""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from . import kernels
from .scan_frontend import BoundaryPoints, Scan2D

INCIRCLE_EPS = 1e-12
MERGE_TOL = 1e-9


class NotEnoughGeometry(ValueError):
    """Fewer than three distinct points, or all of them collinear."""


class SideLabel(enum.IntEnum):
    RIGHT = -1
    ON = 0
    LEFT = 1


@dataclass(frozen=True)
class ExtractionParams:
    faraway_threshold: float = 1.0
    side_epsilon: float = 1e-6
    pseudo_margin: float = 0.3
    max_forward: float = 8.0

    def __post_init__(self):
        if not self.faraway_threshold > 0:
            raise ValueError("faraway_threshold must be positive")
        if self.side_epsilon < 0:
            raise ValueError("side_epsilon must be non-negative")
        if self.pseudo_margin < 0:
            raise ValueError("pseudo_margin must be non-negative")
        if not self.max_forward > 0:
            raise ValueError("max_forward must be positive")


@dataclass(frozen=True, eq=False)
class Triangulation:
    vertices: np.ndarray
    triangles: np.ndarray
    edges: np.ndarray

    @classmethod
    def from_triangles(cls, vertices, triangles):
        tri = np.asarray(triangles, dtype=np.int64).reshape(-1, 3)
        e = np.concatenate([tri[:, [0, 1]], tri[:, [1, 2]], tri[:, [2, 0]]])
        e.sort(axis=1)
        edges = np.unique(e, axis=0) if len(e) else np.empty((0, 2), dtype=np.int64)
        return cls(np.asarray(vertices, dtype=float).reshape(-1, 2), tri, edges)


@dataclass(frozen=True, eq=False)
class RawCenterpoints:
    """Unordered centre-point candidates; ``provenance`` indexes the source
    edge (midpoints) or triangle (circumcentres)."""

    points: np.ndarray
    provenance: np.ndarray

    def __len__(self):
        return len(self.points)

    @classmethod
    def empty(cls):
        return cls(np.empty((0, 2)), np.empty(0, dtype=np.int64))

    def subset(self, mask):
        return RawCenterpoints(self.points[mask], self.provenance[mask])


def delaunay(points) -> Triangulation:
    """Bowyer-Watson triangulation in input order (ties: earlier vertices win)."""
    p = points.points if isinstance(points, BoundaryPoints) else np.asarray(points, dtype=float)
    p = np.ascontiguousarray(p, dtype=float).reshape(-1, 2)
    if len(p) < 3:
        raise NotEnoughGeometry(f"need at least 3 points, got {len(p)}")
    tri = kernels.delaunay(p, INCIRCLE_EPS)
    if len(tri) == 0:
        raise NotEnoughGeometry("points are collinear or coincident")
    return Triangulation.from_triangles(p, tri)


def side_labels(points, heading: float, side_epsilon: float) -> np.ndarray:
    p = np.asarray(points, dtype=float).reshape(-1, 2)
    cross = math.cos(heading) * p[:, 1] - math.sin(heading) * p[:, 0]
    tol = side_epsilon * np.hypot(p[:, 0], p[:, 1])
    out = np.zeros(len(p), dtype=np.int64)
    out[cross > tol] = SideLabel.LEFT
    out[cross < -tol] = SideLabel.RIGHT
    return out


def classify_side(point, heading: float, side_epsilon: float = 1e-6) -> SideLabel:
    return SideLabel(int(side_labels(point, heading, side_epsilon)[0]))


def _merge_close(points, provenance, tol=MERGE_TOL):
    if len(points) < 2:
        return points, provenance
    d = np.hypot(points[:, None, 0] - points[None, :, 0], points[:, None, 1] - points[None, :, 1])
    dup = np.tril(d <= tol, k=-1).any(axis=1)
    return points[~dup], provenance[~dup]


def opposing_edges(tri: Triangulation, heading: float, params: ExtractionParams) -> np.ndarray:
    """Indices into ``tri.edges`` whose endpoints sit strictly on opposite sides."""
    lab = side_labels(tri.vertices, heading, params.side_epsilon)
    if len(tri.edges) == 0:
        return np.empty(0, dtype=np.int64)
    prod = lab[tri.edges[:, 0]] * lab[tri.edges[:, 1]]
    return np.flatnonzero(prod == -1)


def extract_midpoints(tri: Triangulation, heading: float, params: ExtractionParams) -> RawCenterpoints:
    idx = opposing_edges(tri, heading, params)
    if len(idx) == 0:
        return RawCenterpoints.empty()
    e = tri.edges[idx]
    mid = 0.5 * (tri.vertices[e[:, 0]] + tri.vertices[e[:, 1]])
    mid, idx = _merge_close(mid, idx)
    return RawCenterpoints(mid, idx)


def circumcenters(vertices, triangles):
    """Circumcentres (m, 2) of the given triangles; degenerate ones are ``nan``."""
    v = np.asarray(vertices, dtype=float)
    t = np.asarray(triangles, dtype=np.int64).reshape(-1, 3)
    a, b, c = v[t[:, 0]], v[t[:, 1]], v[t[:, 2]]
    bx, by = b[:, 0] - a[:, 0], b[:, 1] - a[:, 1]
    cx, cy = c[:, 0] - a[:, 0], c[:, 1] - a[:, 1]
    d = 2.0 * (bx * cy - by * cx)
    b2 = bx * bx + by * by
    c2 = cx * cx + cy * cy
    with np.errstate(divide="ignore", invalid="ignore"):
        ux = (cy * b2 - by * c2) / d
        uy = (bx * c2 - cx * b2) / d
    out = np.stack([a[:, 0] + ux, a[:, 1] + uy], axis=1)
    out[d == 0] = np.nan
    return out


def inside_triangle(points, vertices, triangles, tol=1e-12) -> np.ndarray:
    """Strict containment of ``points[k]`` in triangle ``triangles[k]``."""
    v = np.asarray(vertices, dtype=float)
    t = np.asarray(triangles, dtype=np.int64).reshape(-1, 3)
    p = np.asarray(points, dtype=float).reshape(-1, 2)
    inside = np.ones(len(p), dtype=bool)
    area = _cross(v[t[:, 0]], v[t[:, 1]], v[t[:, 2]])
    for i, j in ((0, 1), (1, 2), (2, 0)):
        s = _cross(v[t[:, i]], v[t[:, j]], p) * np.sign(area)
        inside &= s > tol * np.abs(area)
    return inside & np.isfinite(p).all(axis=1)


def _cross(a, b, c):
    return (b[:, 0] - a[:, 0]) * (c[:, 1] - a[:, 1]) - (b[:, 1] - a[:, 1]) * (c[:, 0] - a[:, 0])


def extract_circumcenters(tri: Triangulation, heading: float) -> RawCenterpoints:
    """Circumcentres that fall inside their own triangle and ahead of the vehicle."""
    if len(tri.triangles) == 0:
        return RawCenterpoints.empty()
    cc = circumcenters(tri.vertices, tri.triangles)
    keep = inside_triangle(cc, tri.vertices, tri.triangles)
    fwd = cc[:, 0] * math.cos(heading) + cc[:, 1] * math.sin(heading)
    keep &= np.nan_to_num(fwd, nan=-1.0) > 0.0
    idx = np.flatnonzero(keep)
    pts, idx = _merge_close(cc[idx], idx)
    return RawCenterpoints(pts, idx)


def filter_pseudo(points: RawCenterpoints, scan: Scan2D, params: ExtractionParams,
                  heading: float = 0.0) -> RawCenterpoints:
    """Drop candidates behind the vehicle, past ``max_forward``, or within
    ``pseudo_margin`` of the scan's end along their own bearing (no-return
    bearings count as ``range_max``)."""
    if len(points) == 0:
        return points
    p = points.points
    fwd = p[:, 0] * math.cos(heading) + p[:, 1] * math.sin(heading)
    dist = np.hypot(p[:, 0], p[:, 1])
    beam = scan.range_at(np.arctan2(p[:, 1], p[:, 0]))
    beam = np.where(np.isfinite(beam), beam, scan.range_max)
    keep = (fwd > 0.0) & (fwd <= params.max_forward) & (dist <= beam - params.pseudo_margin)
    return points.subset(keep)


def interpolate_faraway(ordered, threshold: float) -> np.ndarray:
    """Insert evenly spaced points into every gap longer than ``threshold``."""
    if not threshold > 0:
        raise ValueError("threshold must be positive")
    p = np.asarray(ordered, dtype=float).reshape(-1, 2)
    if len(p) < 2:
        return p.copy()
    out = [p[:1]]
    for a, b in zip(p[:-1], p[1:]):
        gap = float(np.hypot(*(b - a)))
        k = max(1, math.ceil(gap / threshold))
        if k > 1:
            s = np.arange(1, k)[:, None] / k
            out.append(a + s * (b - a))
        out.append(b[None])
    return np.concatenate(out)


def format_frame(tick: int, tri: Triangulation | None, opposing, centers, path=None) -> str:
    """Plain-text debug record for one controller frame."""
    lines = [f"FRAME {tick}"]
    verts = np.empty((0, 2)) if tri is None else tri.vertices
    tris = np.empty((0, 3), dtype=np.int64) if tri is None else tri.triangles
    lines.append(f"VERTICES {len(verts)}")
    lines += [f"{float(x)!r} {float(y)!r}" for x, y in verts]
    lines.append(f"TRIANGLES {len(tris)}")
    lines += [f"{a} {b} {c}" for a, b, c in tris]
    opp = np.empty((0, 2), dtype=np.int64) if tri is None else tri.edges[np.asarray(opposing, dtype=np.int64)]
    lines.append(f"OPPOSING {len(opp)}")
    lines += [f"{a} {b}" for a, b in opp]
    cp = np.asarray(centers, dtype=float).reshape(-1, 2)
    lines.append(f"CENTERPOINTS {len(cp)}")
    lines += [f"{float(x)!r} {float(y)!r}" for x, y in cp]
    if path is not None:
        lines.append(f"CENTERLINE {len(path.points)}")
        lines += [f"{float(x)!r} {float(y)!r} {float(k)!r}" for (x, y), k in zip(path.points, path.curvature)]
    lines.append("END")
    return "\n".join(lines) + "\n"
