"""Backend selection for the hot loops.

The compiled ``_core`` extension is used when importable; otherwise (or with
``MCTR_PURE_PYTHON=1`` in the environment) the numpy twins in ``_fallback``.
"""
import os

from . import _fallback

BACKEND = "python"
_impl = _fallback

if not os.environ.get("MCTR_PURE_PYTHON"):
    try:
        from . import _core as _impl  # noqa: F811
        BACKEND = "compiled"
    except ImportError:
        _impl = _fallback

delaunay = _impl.delaunay
cluster_beams = _impl.cluster_beams
raycast = _impl.raycast
solve_banded_spd = _impl.solve_banded_spd


def backends():
    """Mapping of available backend name -> module, for tests and benchmarks."""
    out = {"python": _fallback}
    try:
        from . import _core
        out["compiled"] = _core
    except ImportError:
        pass
    return out
