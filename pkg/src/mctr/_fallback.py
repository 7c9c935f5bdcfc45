"""Pure-Python/numpy versions of the compiled kernels in ``_core.pyx``.

Same signatures and results; used when the extension is not built or when
``MCTR_PURE_PYTHON=1`` is set.
"""
import numpy as np

SUPER = 1.0e3


def _incircle_many(q, tri, px, py):
    a = q[tri[:, 0]] - (px, py)
    b = q[tri[:, 1]] - (px, py)
    c = q[tri[:, 2]] - (px, py)
    a2 = (a * a).sum(axis=1)
    b2 = (b * b).sum(axis=1)
    c2 = (c * c).sum(axis=1)
    return (a2 * (b[:, 0] * c[:, 1] - c[:, 0] * b[:, 1])
            - b2 * (a[:, 0] * c[:, 1] - c[:, 0] * a[:, 1])
            + c2 * (a[:, 0] * b[:, 1] - b[:, 0] * a[:, 1]))


def _orient(q, a, b, px, py):
    ax, ay = q[a]
    bx, by = q[b]
    return (bx - ax) * (py - ay) - (by - ay) * (px - ax)


def delaunay(points, eps=1e-12):
    points = np.ascontiguousarray(points, dtype=float)
    n = len(points)
    if n < 3:
        return np.empty((0, 3), dtype=np.int64)
    lo = points.min(axis=0)
    hi = points.max(axis=0)
    scale = float((hi - lo).max())
    if scale <= 0.0:
        return np.empty((0, 3), dtype=np.int64)
    q = np.empty((n + 3, 2))
    q[:n] = (points - 0.5 * (lo + hi)) / scale
    q[n:] = [(-2.0 * SUPER, -SUPER), (2.0 * SUPER, -SUPER), (0.0, 2.0 * SUPER)]

    tri = np.array([[n, n + 1, n + 2]], dtype=np.int64)
    for i in range(n):
        px, py = q[i]
        bad = _incircle_many(q, tri, px, py) > eps
        if not bad.any():
            continue
        skip = False
        while True:
            bad_idx = np.flatnonzero(bad)
            directed = {}
            for t in bad_idx:
                v = tri[t]
                for k in range(3):
                    directed[(int(v[k]), int(v[(k + 1) % 3]))] = t
            boundary = [e for e in directed if (e[1], e[0]) not in directed]
            broken = next((e for e in boundary if _orient(q, e[0], e[1], px, py) <= eps), None)
            if broken is None:
                break
            a, b = broken
            hit = np.flatnonzero(~bad & (
                ((tri[:, 0] == b) & (tri[:, 1] == a))
                | ((tri[:, 1] == b) & (tri[:, 2] == a))
                | ((tri[:, 2] == b) & (tri[:, 0] == a))))
            if len(hit) == 0:
                skip = True
                break
            bad[hit[0]] = True
        if skip:
            continue
        # keep the same boundary order as the compiled kernel: triangle order, then edge k
        order = []
        for t in np.flatnonzero(bad):
            v = tri[t]
            for k in range(3):
                e = (int(v[k]), int(v[(k + 1) % 3]))
                if (e[1], e[0]) not in directed:
                    order.append((e[0], e[1], i))
        tri = np.concatenate([tri[~bad], np.array(order, dtype=np.int64).reshape(-1, 3)])

    keep = (tri < n).all(axis=1)
    return np.ascontiguousarray(tri[keep])


def cluster_beams(xs, ys, valid, box):
    box2 = box * box
    cent, seeds = [], []
    count = 0
    sx = sy = ax = ay = lx = ly = 0.0
    seed = -1
    for i in range(len(xs)):
        x, y = float(xs[i]), float(ys[i])
        if not valid[i]:
            if count:
                cent.append((sx / count, sy / count))
                seeds.append(seed)
                count = 0
            continue
        if count:
            if (x - lx) ** 2 + (y - ly) ** 2 < box2 and (x - ax) ** 2 + (y - ay) ** 2 < box2:
                sx += x
                sy += y
                count += 1
                lx, ly = x, y
                continue
            cent.append((sx / count, sy / count))
            seeds.append(seed)
        sx, sy, count, seed = x, y, 1, i
        ax = lx = x
        ay = ly = y
    if count:
        cent.append((sx / count, sy / count))
        seeds.append(seed)
    return np.array(cent, dtype=float).reshape(-1, 2), np.array(seeds, dtype=np.int64)


def raycast(segments, ox, oy, heading, angle_min, angle_increment, n_beams, range_max):
    """Vectorised beams x segments intersection, chunked over beams."""
    seg = np.asarray(segments, dtype=float).reshape(-1, 4)
    a = seg[:, :2] - (ox, oy)
    e = seg[:, 2:] - seg[:, :2]
    theta = heading + angle_min + np.arange(n_beams) * angle_increment
    out = np.full(n_beams, np.inf)
    if len(seg) == 0:
        return out
    for start in range(0, n_beams, 256):
        d = np.stack([np.cos(theta[start:start + 256]), np.sin(theta[start:start + 256])], axis=1)
        denom = d[:, 0:1] * e[None, :, 1] - d[:, 1:2] * e[None, :, 0]
        with np.errstate(divide="ignore", invalid="ignore"):
            t = (a[None, :, 0] * e[None, :, 1] - a[None, :, 1] * e[None, :, 0]) / denom
            u = (a[None, :, 0] * d[:, 1:2] - a[None, :, 1] * d[:, 0:1]) / denom
        ok = (denom != 0.0) & (t > 0.0) & (u >= 0.0) & (u <= 1.0)
        t = np.where(ok, t, np.inf)
        out[start:start + 256] = t.min(axis=1)
    out[out > range_max] = np.inf
    return out


def solve_banded_spd(ab, rhs):
    ab = np.asarray(ab, dtype=float)
    rhs = np.asarray(rhs, dtype=float)
    p = ab.shape[0] - 1
    n = ab.shape[1]
    L = np.zeros((p + 1, n))
    for j in range(n):
        k0 = max(0, j - p)
        ks = np.arange(k0, j)
        s = ab[0, j] - np.dot(L[j - ks, ks], L[j - ks, ks])
        if s <= 0.0:
            raise np.linalg.LinAlgError("matrix is not positive definite")
        ljj = np.sqrt(s)
        L[0, j] = ljj
        for i in range(j + 1, min(n, j + p + 1)):
            ks = np.arange(max(0, i - p), j)
            L[i - j, j] = (ab[i - j, j] - np.dot(L[i - ks, ks], L[j - ks, ks])) / ljj
    x = np.empty((n, rhs.shape[1]))
    y = np.empty(n)
    for c in range(rhs.shape[1]):
        for i in range(n):
            ks = np.arange(max(0, i - p), i)
            y[i] = (rhs[i, c] - np.dot(L[i - ks, ks], y[ks])) / L[0, i]
        for i in range(n - 1, -1, -1):
            ks = np.arange(i + 1, min(n, i + p + 1))
            x[i, c] = (y[i] - np.dot(L[ks - i, i], x[ks, c])) / L[0, i]
    return x
