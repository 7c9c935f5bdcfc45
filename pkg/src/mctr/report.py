"""Hand-written SVG plots: per-track trajectory overlays coloured by lookahead
curvature, and driven curvature against arc length."""
from __future__ import annotations

import logging
from xml.sax.saxutils import escape, quoteattr

import numpy as np

from .centerline import menger_curvature
from .metrics import DegenerateLog, resample_path

log = logging.getLogger(__name__)

# blue -> teal -> yellow -> red, by |kappa| / kappa_max
_STOPS = ((0.0, (49, 54, 149)), (0.33, (69, 170, 160)), (0.66, (240, 200, 40)), (1.0, (215, 48, 39)))
_CONTROLLER_COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b")
_COLOR_BINS = 16


def kappa_color(u: float) -> str:
    u = min(max(u, 0.0), 1.0)
    for (u0, c0), (u1, c1) in zip(_STOPS[:-1], _STOPS[1:]):
        if u <= u1:
            f = (u - u0) / (u1 - u0)
            rgb = [round(a + f * (b - a)) for a, b in zip(c0, c1)]
            return "#{:02x}{:02x}{:02x}".format(*rgb)
    return "#{:02x}{:02x}{:02x}".format(*_STOPS[-1][1])


def _num(v: float) -> str:
    return f"{v:.4f}".rstrip("0").rstrip(".")


def _points(xy) -> str:
    return " ".join(f"{_num(x)},{_num(y)}" for x, y in xy)


class _Svg:
    def __init__(self, width, height):
        self.width, self.height = width, height
        self.parts = []

    def add(self, s):
        self.parts.append(s)

    def text(self, x, y, s, size=12, anchor="start", cls="label"):
        self.add(f'<text class="{cls}" x="{_num(x)}" y="{_num(y)}" font-size="{size}" '
                 f'text-anchor="{anchor}" font-family="sans-serif">{escape(s)}</text>')

    def render(self) -> str:
        head = ('<?xml version="1.0" encoding="UTF-8"?>\n'
                f'<svg xmlns="http://www.w3.org/2000/svg" width="{self.width}" height="{self.height}" '
                f'viewBox="0 0 {self.width} {self.height}">\n'
                '<rect width="100%" height="100%" fill="white"/>\n')
        return head + "\n".join(self.parts) + "\n</svg>\n"


def _frame(points, width, height, margin):
    lo = points.min(axis=0)
    hi = points.max(axis=0)
    span = np.maximum(hi - lo, 1e-9)
    s = min((width - 2 * margin) / span[0], (height - 2 * margin) / span[1])

    def to_px(xy):
        xy = np.asarray(xy, dtype=float).reshape(-1, 2)
        return np.column_stack([margin + (xy[:, 0] - lo[0]) * s, height - margin - (xy[:, 1] - lo[1]) * s])
    return to_px


def trajectory_svg(track, episodes, width=900, height=700, kappa_max=None) -> str:
    """Boundaries plus every driven path, segments coloured by |lookahead kappa|.

    ``episodes`` is a list of ``(label, xy (n, 2), lookahead_kappa (n,))``.
    """
    margin = 40
    pts = np.vstack([track.outer, track.inner])
    to_px = _frame(pts, width, height - 60, margin)
    svg = _Svg(width, height)
    svg.text(margin, 24, f"track {track.name}: driven paths coloured by lookahead curvature", 14, cls="title")
    for cls, poly in (("outer", track.outer), ("inner", track.inner)):
        ring = np.vstack([poly, poly[:1]])
        svg.add(f'<polyline class="boundary {cls}" fill="none" stroke="#333" stroke-width="2" '
                f'points="{_points(to_px(ring))}"/>')
    svg.add(f'<polyline class="truth" fill="none" stroke="#999" stroke-width="1" stroke-dasharray="4 4" '
            f'points="{_points(to_px(np.vstack([track.center[:, :2], track.center[:1, :2]])))}"/>')
    ks = [np.abs(np.asarray(k, dtype=float)) for _, _, k in episodes if len(k)]
    if kappa_max is None:
        finite = np.concatenate(ks) if ks else np.zeros(1)
        finite = finite[np.isfinite(finite)]
        kappa_max = float(np.percentile(finite, 99)) if len(finite) else 1.0
    kappa_max = kappa_max if kappa_max > 0 else 1.0
    for label, xy, kap in episodes:
        xy = np.asarray(xy, dtype=float).reshape(-1, 2)
        kap = np.abs(np.asarray(kap, dtype=float))
        if len(xy) < 2:
            log.warning("trajectory plot: episode %s has no motion, skipped", label)
            continue
        if len(kap) < len(xy):
            kap = np.concatenate([kap, np.full(len(xy) - len(kap), kap[-1] if len(kap) else 0.0)])
        bins = np.minimum((np.nan_to_num(kap) / kappa_max * _COLOR_BINS).astype(int), _COLOR_BINS - 1)
        px = to_px(xy)
        svg.add(f'<g class="episode" data-episode={quoteattr(label)}>')
        # one polyline per run of equal colour bin keeps the file small
        start = 0
        for i in range(1, len(xy) + 1):
            if i == len(xy) or bins[i] != bins[start]:
                seg = px[start:min(i + 1, len(xy))]
                if len(seg) >= 2:
                    color = kappa_color((bins[start] + 0.5) / _COLOR_BINS)
                    svg.add(f'<polyline fill="none" stroke="{color}" stroke-width="2" '
                            f'points="{_points(seg)}"/>')
                start = i
        svg.add("</g>")
    # colour bar
    x0, y0 = margin, height - 40
    for b in range(_COLOR_BINS):
        svg.add(f'<rect x="{_num(x0 + 12 * b)}" y="{y0}" width="12" height="10" '
                f'fill="{kappa_color((b + 0.5) / _COLOR_BINS)}"/>')
    svg.text(x0, y0 + 26, "0", 10)
    svg.text(x0 + 12 * _COLOR_BINS, y0 + 26, f"|kappa| {kappa_max:.2f} 1/m", 10, anchor="end")
    svg.text(x0 + 12 * _COLOR_BINS + 20, y0 + 10, ", ".join(lbl for lbl, _, _ in episodes), 11)
    return svg.render()


def curvature_svg(track, episodes, width=900, height=420) -> str:
    """Driven curvature versus arc length, one polyline per episode, truth dashed.

    ``episodes`` is a list of ``(label, xy (n, 2))``. Each episode polyline has
    exactly as many vertices as the resampled trajectory.
    """
    margin_l, margin_r, margin_t, margin_b = 60, 20, 40, 50
    profiles = []
    for i, (label, xy) in enumerate(episodes):
        try:
            q = resample_path(xy)
        except DegenerateLog as exc:
            log.warning("curvature plot: episode %s skipped (%s)", label, exc)
            continue
        seg = np.hypot(*np.diff(q, axis=0).T)
        s = np.concatenate([[0.0], np.cumsum(seg)])
        profiles.append((label, s, menger_curvature(q), _CONTROLLER_COLORS[i % len(_CONTROLLER_COLORS)]))
    c = track.center
    ts = np.concatenate([[0.0], np.cumsum(np.hypot(*np.diff(c[:, :2], axis=0).T))])
    s_max = max([ts[-1]] + [p[1][-1] for p in profiles])
    k_all = np.concatenate([c[:, 2]] + [p[2] for p in profiles])
    k_lim = float(np.percentile(np.abs(k_all), 99.5)) * 1.1
    k_lim = k_lim if k_lim > 0 else 1.0
    w = width - margin_l - margin_r
    h = height - margin_t - margin_b

    def to_px(s, k):
        k = np.clip(k, -k_lim, k_lim)
        return np.column_stack([margin_l + s / s_max * w, margin_t + (0.5 - 0.5 * k / k_lim) * h])

    svg = _Svg(width, height)
    svg.text(margin_l, 24, f"track {track.name}: curvature along the driven path", 14, cls="title")
    svg.add(f'<rect x="{margin_l}" y="{margin_t}" width="{w}" height="{h}" fill="none" stroke="#333"/>')
    zero = to_px(np.array([0.0, s_max]), np.zeros(2))
    svg.add(f'<polyline class="axis" stroke="#bbb" points="{_points(zero)}"/>')
    svg.add(f'<polyline class="truth" fill="none" stroke="#777" stroke-dasharray="5 4" '
            f'points="{_points(to_px(ts, c[:, 2]))}"/>')
    for label, s, k, color in profiles:
        svg.add(f'<polyline class="episode" data-episode={quoteattr(label)} data-samples="{len(s)}" '
                f'fill="none" stroke="{color}" stroke-width="1.2" points="{_points(to_px(s, k))}"/>')
    svg.text(margin_l - 6, margin_t + 4, f"{k_lim:.2f}", 10, anchor="end")
    svg.text(margin_l - 6, margin_t + h, f"{-k_lim:.2f}", 10, anchor="end")
    svg.text(margin_l + w, margin_t + h + 18, f"{s_max:.1f} m", 10, anchor="end")
    svg.text(margin_l, margin_t + h + 18, "arc length", 10)
    for j, (label, _, _, color) in enumerate(profiles):
        svg.add(f'<rect x="{margin_l + 150 * j}" y="{height - 20}" width="14" height="4" fill="{color}"/>')
        svg.text(margin_l + 150 * j + 18, height - 14, label, 10)
    return svg.render()
