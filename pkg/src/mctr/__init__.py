"""Reactive racing controller from a single LiDAR scan: boundary clustering,
Delaunay opposing-edge midpoints, energy plus Savitzky-Golay smoothing, and
pure pursuit. Ships a desk-scale simulator, baselines and an experiment CLI."""

__version__ = "0.1.0"
