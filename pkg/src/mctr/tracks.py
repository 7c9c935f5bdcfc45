"""Closed-loop desk tracks built from straights and circular arcs.

Every built-in track is a counter-clockwise centreline made of primitives;
the inner (left) and outer (right) walls are its exact offsets. Truth
centreline samples carry the curvature of the primitive that ends at them,
so segment ``[k, k+1]`` always has curvature ``kappa[k+1]``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

HALF_WIDTH = 1.1
# polygon layouts are drawn on a unit grid and scaled so every corner has a 2 m radius
LAYOUT_SCALE = 4.0 / 3.0
CORNER_RADIUS = 1.5
TRUTH_STEP = 0.05
WALL_ARC_STEP = math.radians(3.0)


class TrackFormatError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class TrackMap:
    name: str
    inner: np.ndarray
    outer: np.ndarray
    center: np.ndarray  # (k, 3): x, y, kappa
    start_pose: tuple

    def __post_init__(self):
        for attr, cols in (("inner", 2), ("outer", 2), ("center", 3)):
            a = np.array(getattr(self, attr), dtype=float).reshape(-1, cols)
            a.setflags(write=False)
            object.__setattr__(self, attr, a)
        object.__setattr__(self, "start_pose", tuple(float(v) for v in self.start_pose))
        segs = np.concatenate([_closed_segments(self.inner), _closed_segments(self.outer)])
        object.__setattr__(self, "segments", np.ascontiguousarray(segs))

    @property
    def truth_length(self) -> float:
        c = self.center[:, :2]
        return float(np.hypot(*np.diff(np.vstack([c, c[:1]]), axis=0).T).sum())

    def start_line(self):
        """(origin, heading unit, normal unit, half length) of the start/finish line."""
        x, y, h = self.start_pose
        o = np.array([x, y])
        half = 1.5 * max(polyline_distance(o, self.inner), polyline_distance(o, self.outer))
        return o, np.array([math.cos(h), math.sin(h)]), np.array([-math.sin(h), math.cos(h)]), half

    def dumps(self) -> str:
        out = [f"TRACK {self.name}", f"INNER {len(self.inner)}"]
        out += [f"{float(x)!r} {float(y)!r}" for x, y in self.inner]
        out.append(f"OUTER {len(self.outer)}")
        out += [f"{float(x)!r} {float(y)!r}" for x, y in self.outer]
        out.append(f"CENTER {len(self.center)}")
        out += [f"{float(x)!r} {float(y)!r} {float(k)!r}" for x, y, k in self.center]
        x, y, h = self.start_pose
        out.append(f"START {x!r} {y!r} {h!r}")
        return "\n".join(out) + "\n"

    @classmethod
    def loads(cls, text: str) -> "TrackMap":
        lines = [ln.strip() for ln in text.splitlines() if ln.strip() and not ln.lstrip().startswith("#")]
        it = iter(enumerate(lines, start=1))
        name = None
        blocks = {}
        start = None
        for no, ln in it:
            head, _, rest = ln.partition(" ")
            if head == "TRACK":
                name = rest.strip()
            elif head in ("INNER", "OUTER", "CENTER"):
                try:
                    count = int(rest)
                except ValueError:
                    raise TrackFormatError(f"line {no}: bad count in {ln!r}") from None
                cols = 3 if head == "CENTER" else 2
                rows = []
                for _ in range(count):
                    try:
                        no2, row = next(it)
                    except StopIteration:
                        raise TrackFormatError(f"{head}: expected {count} rows") from None
                    vals = row.split()
                    if len(vals) != cols:
                        raise TrackFormatError(f"line {no2}: expected {cols} values")
                    rows.append([float(v) for v in vals])
                blocks[head] = rows
            elif head == "START":
                vals = rest.split()
                if len(vals) != 3:
                    raise TrackFormatError(f"line {no}: START needs x y heading")
                start = tuple(float(v) for v in vals)
            else:
                raise TrackFormatError(f"line {no}: unknown record {head!r}")
        missing = [k for k in ("INNER", "OUTER", "CENTER") if k not in blocks]
        if name is None or start is None or missing:
            raise TrackFormatError(f"incomplete track file (missing {missing or 'TRACK/START'})")
        return cls(name, blocks["INNER"], blocks["OUTER"], blocks["CENTER"], start)

    def save(self, path):
        Path(path).write_text(self.dumps())

    @classmethod
    def load(cls, path) -> "TrackMap":
        return cls.loads(Path(path).read_text())


def _closed_segments(poly):
    p = np.asarray(poly, dtype=float)
    return np.concatenate([p, np.roll(p, -1, axis=0)], axis=1)


def segment_distances(point, segments) -> np.ndarray:
    p = np.asarray(point, dtype=float)
    a = segments[:, :2]
    e = segments[:, 2:] - a
    ee = (e * e).sum(axis=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        t = np.where(ee > 0, ((p - a) * e).sum(axis=1) / ee, 0.0)
    t = np.clip(t, 0.0, 1.0)
    c = a + t[:, None] * e
    return np.hypot(c[:, 0] - p[0], c[:, 1] - p[1])


def polyline_distance(point, poly) -> float:
    """Distance from ``point`` to a closed polyline."""
    return float(segment_distances(point, _closed_segments(poly)).min())


def point_in_polygon(point, poly) -> bool:
    x, y = float(point[0]), float(point[1])
    p = np.asarray(poly, dtype=float)
    q = np.roll(p, -1, axis=0)
    crosses = (p[:, 1] > y) != (q[:, 1] > y)
    with np.errstate(divide="ignore", invalid="ignore"):
        xint = p[:, 0] + (y - p[:, 1]) * (q[:, 0] - p[:, 0]) / (q[:, 1] - p[:, 1])
    return bool(np.count_nonzero(crosses & (x < xint)) % 2)


# --- procedural construction -------------------------------------------------

def _fillet_turtle(vertices, radius, start_edge=0):
    """Turtle program for a polygon with every corner rounded to ``radius``.

    Starts halfway along edge ``start_edge`` (vertex k -> k+1).
    """
    v = np.asarray(vertices, dtype=float)
    n = len(v)
    v = np.roll(v, -start_edge, axis=0)
    dirs = np.roll(v, -1, axis=0) - v
    lengths = np.hypot(dirs[:, 0], dirs[:, 1])
    units = dirs / lengths[:, None]
    turn = np.empty(n)  # turn at vertex k (from edge k-1 to edge k)
    for k in range(n):
        a, b = units[k - 1], units[k]
        turn[k] = math.atan2(a[0] * b[1] - a[1] * b[0], a @ b)
    tang = radius * np.tan(np.abs(turn) / 2.0)
    prog = []
    for k in range(n):
        k1 = (k + 1) % n
        straight = lengths[k] - tang[k] - tang[k1]
        if straight < -1e-9:
            raise ValueError(f"edge {k} too short for radius {radius}")
        if k == 0:
            prog.append(("S", (lengths[0] - tang[0] - tang[1]) / 2.0 + 0.0))
        else:
            prog.append(("S", straight))
        prog.append(("A", radius, turn[k1]))
    # close with the first half of edge 0
    prog.append(("S", (lengths[0] - tang[0] - tang[1]) / 2.0))
    start = v[0] + units[0] * (tang[0] + (lengths[0] - tang[0] - tang[1]) / 2.0)
    heading = math.atan2(units[0, 1], units[0, 0])
    return (float(start[0]), float(start[1]), heading), prog


def _run_turtle(start, prog, step, arc_step=None):
    """Sample the turtle path -> (xy (k,2), heading (k,), kappa (k,)).

    Straights use spacing ``step`` (or just their end point when ``arc_step``
    is given: the coarse wall sampling); arcs use ``arc_step`` radians or
    ``step`` metres. The closing point is not repeated.
    """
    x, y, h = start
    pts, hs, ks = [(x, y)], [h], [None]
    for prim in prog:
        if prim[0] == "S":
            length = prim[1]
            if length <= 1e-12:
                continue
            m = 1 if arc_step is not None else max(1, math.ceil(length / step - 1e-9))
            for i in range(1, m + 1):
                s = length * i / m
                pts.append((x + s * math.cos(h), y + s * math.sin(h)))
                hs.append(h)
                ks.append(0.0)
            x, y = x + length * math.cos(h), y + length * math.sin(h)
        else:
            _, r, ang = prim
            sgn = 1.0 if ang > 0 else -1.0
            cx, cy = x - sgn * r * math.sin(h), y + sgn * r * math.cos(h)
            m = max(1, math.ceil((abs(ang) / arc_step) if arc_step else abs(ang) * r / step - 1e-9))
            for i in range(1, m + 1):
                hh = h + ang * i / m
                pts.append((cx + sgn * r * math.sin(hh), cy - sgn * r * math.cos(hh)))
                hs.append(hh)
                ks.append(sgn / r)
            h = h + ang
            x, y = pts[-1]
    end = np.array(pts[-1])
    if np.hypot(*(end - pts[0])) > 1e-6:
        raise ValueError("turtle program does not close")
    ks[0] = ks[-1]
    return np.array(pts[:-1]), np.array(hs[:-1]), np.array(ks[:-1], dtype=float)


def build_track(name, start, prog, half_width=HALF_WIDTH) -> TrackMap:
    xy, _, kappa = _run_turtle(start, prog, TRUTH_STEP)
    wxy, wh, _ = _run_turtle(start, prog, TRUTH_STEP, arc_step=WALL_ARC_STEP)
    normal = np.stack([-np.sin(wh), np.cos(wh)], axis=1)
    inner = wxy + half_width * normal
    outer = wxy - half_width * normal
    center = np.column_stack([xy, kappa])
    return TrackMap(name, inner, outer, center, start)


def _o_track():
    r = 4.0
    return build_track("O", (r, 0.0, math.pi / 2), [("A", r, 2 * math.pi)])


F_VERTICES = [(0, 0), (3, 0), (3, 5), (8, 5), (8, 8), (3, 8), (3, 11), (10, 11), (10, 14), (0, 14)]
M_VERTICES = [(0, 0), (15, 0), (15, 10), (12, 10), (12, 5), (9, 5), (9, 10), (6, 10),
              (6, 5), (3, 5), (3, 10), (0, 10)]
W_VERTICES = [(0, 0), (21, 0), (21, 8), (18, 8), (18, 4), (15, 4), (15, 8), (12, 8), (12, 4),
              (9, 4), (9, 8), (6, 8), (6, 4), (3, 4), (3, 8), (0, 8)]


def _polygon_track(name, vertices, radius, start_edge, scale=1.0):
    v = [(scale * x, scale * y) for x, y in vertices]
    start, prog = _fillet_turtle(v, radius * scale, start_edge)
    return build_track(name, start, prog)


_BUILDERS = {
    "O": _o_track,
    "F": lambda: _polygon_track("F", F_VERTICES, CORNER_RADIUS, 9, LAYOUT_SCALE),
    "M": lambda: _polygon_track("M", M_VERTICES, CORNER_RADIUS, 0, LAYOUT_SCALE),
    "W": lambda: _polygon_track("W", W_VERTICES, CORNER_RADIUS, 0, LAYOUT_SCALE),
}


def builtin_tracks() -> dict:
    """Name -> TrackMap for the O, F, M and W desk layouts (ordered by difficulty)."""
    return {name: build() for name, build in _BUILDERS.items()}


def get_track(name_or_path) -> TrackMap:
    if name_or_path in _BUILDERS:
        return _BUILDERS[name_or_path]()
    p = Path(str(name_or_path))
    if p.exists():
        return TrackMap.load(p)
    raise KeyError(f"unknown track {name_or_path!r}")
