import os
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.linalg import solveh_banded

from mctr import kernels
from mctr.tracks import get_track

from oracles import empty_circle_violations

BACKENDS = kernels.backends()
compiled_only = pytest.mark.skipif("compiled" not in BACKENDS, reason="extension not built")


@compiled_only
@given(st.integers(3, 150), st.integers(0, 2 ** 32 - 1))
def test_delaunay_backends_agree(n, seed):
    pts = np.random.default_rng(seed).random((n, 2))
    a = BACKENDS["compiled"].delaunay(pts)
    b = BACKENDS["python"].delaunay(pts)
    assert np.array_equal(a, b)


@pytest.mark.parametrize("name", list(BACKENDS))
def test_delaunay_each_backend_is_valid(name):
    rng = np.random.default_rng(17)
    for _ in range(10):
        pts = rng.normal(size=(60, 2))
        tris = BACKENDS[name].delaunay(pts)
        assert empty_circle_violations(pts, tris) == 0


@compiled_only
@given(st.lists(st.tuples(st.floats(-5, 5), st.floats(-5, 5), st.booleans()), max_size=200),
       st.floats(0.01, 1.0))
def test_cluster_backends_agree(beams, box):
    xs = np.array([b[0] for b in beams], dtype=float)
    ys = np.array([b[1] for b in beams], dtype=float)
    valid = np.array([b[2] for b in beams], dtype=np.uint8)
    ca, sa = BACKENDS["compiled"].cluster_beams(xs, ys, valid, box)
    cb, sb = BACKENDS["python"].cluster_beams(xs, ys, valid, box)
    assert np.array_equal(sa, sb)
    assert np.allclose(ca, cb, rtol=0, atol=1e-12)


@compiled_only
@given(st.integers(0, 2 ** 32 - 1))
def test_raycast_backends_agree(seed):
    rng = np.random.default_rng(seed)
    track = get_track("W")
    c = track.center[rng.integers(len(track.center))]
    args = (track.segments, float(c[0]), float(c[1]), float(rng.uniform(-3, 3)), -2.35, 4.7 / 540, 541, 10.0)
    a = BACKENDS["compiled"].raycast(*args)
    b = BACKENDS["python"].raycast(*args)
    assert np.array_equal(np.isfinite(a), np.isfinite(b))
    fin = np.isfinite(a)
    assert np.max(np.abs(a[fin] - b[fin]), initial=0.0) <= 1e-12


def _banded(n, p, rng):
    m = rng.normal(size=(n, n))
    band = np.abs(np.subtract.outer(np.arange(n), np.arange(n))) <= p
    a = np.where(band, m + m.T, 0.0) + 4 * (p + 1) * np.eye(n)
    ab = np.zeros((p + 1, n))
    for d in range(p + 1):
        ab[d, :n - d] = np.diagonal(a, -d)
    return ab


@pytest.mark.parametrize("name", list(BACKENDS))
@pytest.mark.parametrize("n,p", [(1, 0), (5, 2), (40, 4), (200, 4), (7, 6)])
def test_banded_solve_matches_scipy(name, n, p):
    rng = np.random.default_rng(n * 10 + p)
    ab = _banded(n, p, rng)
    rhs = rng.normal(size=(n, 2))
    got = BACKENDS[name].solve_banded_spd(np.ascontiguousarray(ab), np.ascontiguousarray(rhs))
    assert np.allclose(got, solveh_banded(ab, rhs, lower=True), rtol=0, atol=1e-10)


@pytest.mark.parametrize("name", list(BACKENDS))
def test_banded_rejects_indefinite(name):
    ab = np.array([[1.0, -1.0], [0.0, 0.0]])
    with pytest.raises(np.linalg.LinAlgError):
        BACKENDS[name].solve_banded_spd(ab, np.ones((2, 1)))


def test_env_var_forces_fallback():
    code = "from mctr import kernels; print(kernels.BACKEND)"
    env = dict(os.environ, MCTR_PURE_PYTHON="1")
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "python"
    env.pop("MCTR_PURE_PYTHON")
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == ("compiled" if "compiled" in BACKENDS else "python")
