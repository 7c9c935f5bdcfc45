"""Sensor normalisation: 2D range scans, 3D clouds, and the sparse boundary
points the triangulation works on."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import kernels

NO_RETURN = math.inf


class CloudFormatError(ValueError):
    """Malformed XYZ cloud file."""


def _frozen(a, dtype=float):
    a = np.array(a, dtype=dtype)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class Scan2D:
    """Polar range scan in the vehicle frame; ``inf`` marks a beam with no return.

    Beam ``i`` points at ``angle_min + i * angle_increment``.
    """

    angle_min: float
    angle_increment: float
    ranges: np.ndarray
    range_max: float
    timestamp: float = 0.0

    def __post_init__(self):
        if not self.angle_increment > 0:
            raise ValueError("angle_increment must be positive")
        if not self.range_max > 0:
            raise ValueError("range_max must be positive")
        r = np.array(self.ranges, dtype=float).ravel()
        r[~np.isfinite(r) | (r <= 0.0) | (r > self.range_max)] = NO_RETURN
        object.__setattr__(self, "ranges", _frozen(r))

    def __len__(self):
        return len(self.ranges)

    @property
    def angles(self) -> np.ndarray:
        return self.angle_min + np.arange(len(self.ranges)) * self.angle_increment

    @property
    def finite(self) -> np.ndarray:
        return np.isfinite(self.ranges)

    def to_xy(self):
        """(N, 2) Cartesian beam endpoints; rows of no-return beams are ``nan``."""
        a = self.angles
        with np.errstate(invalid="ignore"):
            xy = np.stack([self.ranges * np.cos(a), self.ranges * np.sin(a)], axis=1)
        xy[~self.finite] = np.nan
        return xy

    def range_at(self, azimuth):
        """Range of the beam nearest to ``azimuth`` (vectorised); ``inf`` outside the scan."""
        az = np.asarray(azimuth, dtype=float)
        idx = np.rint((az - self.angle_min) / self.angle_increment).astype(np.int64)
        inside = (idx >= 0) & (idx < len(self.ranges))
        out = np.full(az.shape, NO_RETURN)
        out[inside] = self.ranges[idx[inside]]
        return out

    def mirrored(self) -> "Scan2D":
        """Scan of the world reflected about the heading axis (beam order reversed).

        Only meaningful for scans symmetric about zero (``angle_min = -fov/2``).
        """
        return Scan2D(self.angle_min, self.angle_increment, self.ranges[::-1],
                      self.range_max, self.timestamp)

    def dumps(self) -> str:
        lines = [f"{float(self.angle_min)!r} {float(self.angle_increment)!r} {float(self.range_max)!r} {len(self.ranges)}"]
        lines += [repr(float(r)) for r in self.ranges]
        return "\n".join(lines) + "\n"

    @classmethod
    def loads(cls, text: str) -> "Scan2D":
        tok = text.split()
        if len(tok) < 4:
            raise ValueError("scan dump needs a 4-field header")
        amin, inc, rmax, n = float(tok[0]), float(tok[1]), float(tok[2]), int(tok[3])
        vals = tok[4:]
        if len(vals) != n:
            raise ValueError(f"scan dump declares {n} ranges, found {len(vals)}")
        return cls(amin, inc, np.array([float(v) for v in vals]), rmax)


@dataclass(frozen=True, eq=False)
class PointCloud3D:
    """Vehicle-frame points (x forward, y left, z up). Non-finite rows are
    dropped on construction and counted in ``rejected``."""

    points: np.ndarray
    rejected: int = 0

    def __post_init__(self):
        p = np.asarray(self.points, dtype=float).reshape(-1, 3)
        ok = np.isfinite(p).all(axis=1)
        object.__setattr__(self, "points", _frozen(p[ok]))
        object.__setattr__(self, "rejected", int(self.rejected + (~ok).sum()))

    def __len__(self):
        return len(self.points)


@dataclass(frozen=True, eq=False)
class BoundaryPoints:
    """Sparse track-boundary samples in the vehicle frame, in beam order.

    ``source_beam`` is the first beam of each point's cluster (-1: unknown).
    """

    points: np.ndarray
    source_beam: np.ndarray = field(default=None)

    def __post_init__(self):
        p = np.asarray(self.points, dtype=float).reshape(-1, 2)
        sb = self.source_beam
        sb = np.full(len(p), -1, dtype=np.int64) if sb is None else np.asarray(sb, dtype=np.int64)
        if len(sb) != len(p):
            raise ValueError("source_beam length mismatch")
        if len(p):
            _, first = np.unique(p, axis=0, return_index=True)
            keep = np.sort(first)
            p, sb = p[keep], sb[keep]
        object.__setattr__(self, "points", _frozen(p))
        object.__setattr__(self, "source_beam", _frozen(sb, np.int64))

    def __len__(self):
        return len(self.points)


@dataclass(frozen=True)
class ProjectionBand:
    z_low: float = 0.05
    z_high: float = 0.30
    azimuth_min: float = -0.75 * math.pi
    azimuth_max: float = 0.75 * math.pi
    num_bins: int = 1081

    def __post_init__(self):
        if not self.z_low < self.z_high:
            raise ValueError("z_low must be below z_high")
        if not self.azimuth_min < self.azimuth_max:
            raise ValueError("azimuth_min must be below azimuth_max")
        if self.num_bins < 8:
            raise ValueError("num_bins must be at least 8")

    @property
    def increment(self) -> float:
        return (self.azimuth_max - self.azimuth_min) / self.num_bins

    @classmethod
    def matching(cls, scan: Scan2D, z_low=0.05, z_high=0.30) -> "ProjectionBand":
        """Band whose bin centres coincide with the beams of ``scan``."""
        n = len(scan)
        return cls(z_low, z_high, scan.angle_min, scan.angle_min + n * scan.angle_increment, n)


def subsample_scan(scan: Scan2D, box_size: float) -> BoundaryPoints:
    """Collapse runs of neighbouring beams into cluster centroids.

    A cluster grows along the beam order while each new point is closer than
    ``box_size`` both to the previous point and to the cluster's first point,
    so every centroid stays within ``box_size`` of a raw return. No-return
    beams close the open cluster.
    """
    if not box_size > 0:
        raise ValueError("box_size must be positive")
    xy = scan.to_xy()
    valid = scan.finite.astype(np.uint8)
    xy = np.nan_to_num(xy)
    cent, seeds = kernels.cluster_beams(np.ascontiguousarray(xy[:, 0]),
                                        np.ascontiguousarray(xy[:, 1]), valid, float(box_size))
    return BoundaryPoints(cent, seeds)


def project_cloud(cloud: PointCloud3D, band: ProjectionBand, range_max: float = 10.0,
                  timestamp: float = 0.0) -> Scan2D:
    """Flatten the points inside ``band`` into a pseudo-2D scan.

    Bins are centred on ``azimuth_min + i * increment`` so the output scan's
    beam angles are the bin centres; each bin keeps its nearest return.
    """
    p = cloud.points
    inc = band.increment
    ranges = np.full(band.num_bins, NO_RETURN)
    if len(p):
        z_ok = (p[:, 2] >= band.z_low) & (p[:, 2] <= band.z_high)
        p = p[z_ok]
        r = np.hypot(p[:, 0], p[:, 1])
        az = np.arctan2(p[:, 1], p[:, 0])
        ok = (az >= band.azimuth_min) & (az <= band.azimuth_max) & (r > 0.0) & (r <= range_max)
        r, az = r[ok], az[ok]
        idx = np.floor((az - band.azimuth_min) / inc + 0.5).astype(np.int64)
        full_circle = band.azimuth_max - band.azimuth_min >= 2.0 * math.pi - 1e-12
        if full_circle:
            idx %= band.num_bins
        else:
            keep = idx < band.num_bins
            idx, r = idx[keep], r[keep]
        np.minimum.at(ranges, idx, r)
    return Scan2D(band.azimuth_min, inc, ranges, range_max, timestamp)


def lift_scan(scan: Scan2D, z_levels=(0.1, 0.2)) -> PointCloud3D:
    """3D cloud with each finite beam endpoint repeated at every ``z`` in ``z_levels``."""
    xy = scan.to_xy()[scan.finite]
    pts = [np.column_stack([xy, np.full(len(xy), z)]) for z in z_levels]
    return PointCloud3D(np.concatenate(pts) if pts else np.empty((0, 3)))


def load_cloud_file(path) -> PointCloud3D:
    """Read an XYZ text cloud: three whitespace-separated numbers per line, ``#`` comments."""
    rows = []
    rejected = 0
    text = Path(path).read_text()
    for lineno, line in enumerate(text.splitlines(), start=1):
        s = line.strip()
        if not s or s.startswith("#"):
            continue
        fields = s.split()
        if len(fields) != 3:
            raise CloudFormatError(f"{path}:{lineno}: expected 3 fields, got {len(fields)}")
        try:
            xyz = [float(f) for f in fields]
        except ValueError as exc:
            raise CloudFormatError(f"{path}:{lineno}: {exc}") from None
        if not all(math.isfinite(v) for v in xyz):
            rejected += 1
            continue
        rows.append(xyz)
    if not rows and not rejected:
        raise CloudFormatError(f"{path}: no points")
    return PointCloud3D(np.array(rows, dtype=float).reshape(-1, 3), rejected=rejected)


def save_cloud_file(cloud: PointCloud3D, path) -> None:
    with open(path, "w") as fh:
        fh.write("# x y z\n")
        for x, y, z in cloud.points:
            fh.write(f"{float(x)!r} {float(y)!r} {float(z)!r}\n")
