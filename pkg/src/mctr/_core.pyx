# cython: language_level=3
"""Compiled hot loops: Bowyer-Watson Delaunay, scan clustering, polyline
raycasting and the banded SPD solve.

Every function here has a behavioural twin in :mod:`mctr._fallback`; the two
are checked against each other in ``tests/test_kernels.py``.
"""
import numpy as np

cimport numpy as cnp
from libc.math cimport INFINITY, atan2, ceil, cos, floor, sin, sqrt

cnp.import_array()

cdef double TWO_PI = 6.283185307179586
cdef double PI = 3.141592653589793
cdef double SUPER = 1.0e3


cdef inline double _orient(double ax, double ay, double bx, double by,
                           double cx, double cy) noexcept nogil:
    return (bx - ax) * (cy - ay) - (by - ay) * (cx - ax)


cdef inline double _incircle(double ax, double ay, double bx, double by,
                             double cx, double cy, double dx, double dy) noexcept nogil:
    cdef double adx = ax - dx, ady = ay - dy
    cdef double bdx = bx - dx, bdy = by - dy
    cdef double cdx = cx - dx, cdy = cy - dy
    return ((adx * adx + ady * ady) * (bdx * cdy - cdx * bdy)
            - (bdx * bdx + bdy * bdy) * (adx * cdy - cdx * ady)
            + (cdx * cdx + cdy * cdy) * (adx * bdy - bdx * ady))


cdef inline bint _has_edge(cnp.int64_t[:, ::1] tri, Py_ssize_t u,
                           cnp.int64_t a, cnp.int64_t b) noexcept nogil:
    cdef int m
    for m in range(3):
        if tri[u, m] == a and tri[u, (m + 1) % 3] == b:
            return True
    return False


def delaunay(const double[:, ::1] points, double eps=1e-12):
    """Triangles (m, 3) of counter-clockwise vertex indices into ``points``."""
    cdef Py_ssize_t n = points.shape[0]
    cdef Py_ssize_t i, t, u, e, w, k, nbad, nb, ntri, nbl, bt, bu
    cdef double xmin, xmax, ymin, ymax, cx0, cy0, scale, px, py
    cdef cnp.int64_t a, b, v0, v1, v2
    cdef bint shared, fixed, skip

    if n < 3:
        return np.empty((0, 3), dtype=np.int64)

    xmin = xmax = points[0, 0]
    ymin = ymax = points[0, 1]
    for i in range(n):
        xmin = min(xmin, points[i, 0]); xmax = max(xmax, points[i, 0])
        ymin = min(ymin, points[i, 1]); ymax = max(ymax, points[i, 1])
    scale = max(xmax - xmin, ymax - ymin)
    if scale <= 0.0:
        return np.empty((0, 3), dtype=np.int64)
    cx0 = 0.5 * (xmin + xmax)
    cy0 = 0.5 * (ymin + ymax)

    cdef double[:, ::1] q = np.empty((n + 3, 2))
    for i in range(n):
        q[i, 0] = (points[i, 0] - cx0) / scale
        q[i, 1] = (points[i, 1] - cy0) / scale
    q[n, 0] = -2.0 * SUPER; q[n, 1] = -SUPER
    q[n + 1, 0] = 2.0 * SUPER; q[n + 1, 1] = -SUPER
    q[n + 2, 0] = 0.0; q[n + 2, 1] = 2.0 * SUPER

    cdef Py_ssize_t cap = 2 * n + 16
    cdef cnp.int64_t[:, ::1] tri = np.empty((cap, 3), dtype=np.int64)
    cdef unsigned char[::1] bad = np.zeros(cap, dtype=np.uint8)
    cdef Py_ssize_t[::1] bl = np.empty(cap, dtype=np.intp)
    cdef cnp.int64_t[::1] ea = np.empty(3 * cap, dtype=np.int64)
    cdef cnp.int64_t[::1] eb = np.empty(3 * cap, dtype=np.int64)

    tri[0, 0] = n; tri[0, 1] = n + 1; tri[0, 2] = n + 2
    ntri = 1

    for i in range(n):
        px = q[i, 0]; py = q[i, 1]
        nbad = 0
        for t in range(ntri):
            v0 = tri[t, 0]; v1 = tri[t, 1]; v2 = tri[t, 2]
            if _incircle(q[v0, 0], q[v0, 1], q[v1, 0], q[v1, 1],
                         q[v2, 0], q[v2, 1], px, py) > eps:
                bad[t] = 1
                nbad += 1
            else:
                bad[t] = 0
        if nbad == 0:
            continue  # duplicate of an existing vertex

        skip = False
        while True:
            # cavity triangles only; the boundary search never looks further
            nbl = 0
            for t in range(ntri):
                if bad[t]:
                    bl[nbl] = t
                    nbl += 1
            nb = 0
            for bt in range(nbl):
                t = bl[bt]
                for k in range(3):
                    a = tri[t, k]; b = tri[t, (k + 1) % 3]
                    shared = False
                    for bu in range(nbl):
                        u = bl[bu]
                        if u != t and _has_edge(tri, u, b, a):
                            shared = True
                            break
                    if not shared:
                        ea[nb] = a; eb[nb] = b
                        nb += 1
            # cavity must be star-shaped from p; otherwise grow it
            fixed = True
            for e in range(nb):
                a = ea[e]; b = eb[e]
                if _orient(q[a, 0], q[a, 1], q[b, 0], q[b, 1], px, py) <= eps:
                    fixed = False
                    for u in range(ntri):
                        if not bad[u] and _has_edge(tri, u, b, a):
                            bad[u] = 1
                            break
                    else:
                        skip = True
                    break
            if fixed or skip:
                break
        if skip:
            continue

        w = 0
        for t in range(ntri):
            if not bad[t]:
                tri[w, 0] = tri[t, 0]; tri[w, 1] = tri[t, 1]; tri[w, 2] = tri[t, 2]
                w += 1
        for e in range(nb):
            tri[w, 0] = ea[e]; tri[w, 1] = eb[e]; tri[w, 2] = i
            w += 1
        ntri = w

    out = np.empty((ntri, 3), dtype=np.int64)
    cdef cnp.int64_t[:, ::1] o = out
    w = 0
    for t in range(ntri):
        if tri[t, 0] < n and tri[t, 1] < n and tri[t, 2] < n:
            o[w, 0] = tri[t, 0]; o[w, 1] = tri[t, 1]; o[w, 2] = tri[t, 2]
            w += 1
    return out[:w].copy()


def cluster_beams(const double[::1] xs, const double[::1] ys, const unsigned char[::1] valid, double box):
    """Greedy consecutive clustering; returns (centroids (k, 2), seed beam index (k,))."""
    cdef Py_ssize_t n = xs.shape[0]
    cdef Py_ssize_t i, k = 0, count = 0, seed = -1
    cdef double box2 = box * box
    cdef double sx = 0.0, sy = 0.0, ax = 0.0, ay = 0.0, lx = 0.0, ly = 0.0
    cdef double dx, dy, gx, gy
    cent = np.empty((n, 2))
    seeds = np.empty(n, dtype=np.int64)
    cdef double[:, ::1] c = cent
    cdef cnp.int64_t[::1] s = seeds

    for i in range(n):
        if not valid[i]:
            if count > 0:
                c[k, 0] = sx / count; c[k, 1] = sy / count; s[k] = seed
                k += 1
                count = 0
            continue
        if count > 0:
            gx = xs[i] - lx; gy = ys[i] - ly
            dx = xs[i] - ax; dy = ys[i] - ay
            if gx * gx + gy * gy < box2 and dx * dx + dy * dy < box2:
                sx += xs[i]; sy += ys[i]; count += 1
                lx = xs[i]; ly = ys[i]
                continue
            c[k, 0] = sx / count; c[k, 1] = sy / count; s[k] = seed
            k += 1
        sx = xs[i]; sy = ys[i]; count = 1; seed = i
        ax = lx = xs[i]; ay = ly = ys[i]
    if count > 0:
        c[k, 0] = sx / count; c[k, 1] = sy / count; s[k] = seed
        k += 1
    return cent[:k].copy(), seeds[:k].copy()


def raycast(const double[:, ::1] segments, double ox, double oy, double heading,
            double angle_min, double angle_increment, Py_ssize_t n_beams,
            double range_max):
    """Nearest hit per beam against world-frame segments (x1, y1, x2, y2).

    Each segment only visits the beams inside its angular shadow, so cost
    scales with segments + hits rather than segments * beams.
    """
    cdef Py_ssize_t m = segments.shape[0]
    cdef Py_ssize_t j, i, i0, i1, sh
    cdef double ax, ay, bx, by, ex, ey, a0, a1, d, lo, span, l
    cdef double denom, t, uu, dirx, diry, ee, proj, cx, cy
    cdef double rmax2 = range_max * range_max
    ranges = np.full(n_beams, np.inf)
    cdef double[::1] r = ranges
    cdef double[::1] cs = np.empty(n_beams)
    cdef double[::1] sn = np.empty(n_beams)
    for i in range(n_beams):
        cs[i] = cos(heading + angle_min + i * angle_increment)
        sn[i] = sin(heading + angle_min + i * angle_increment)

    for j in range(m):
        ax = segments[j, 0] - ox; ay = segments[j, 1] - oy
        bx = segments[j, 2] - ox; by = segments[j, 3] - oy
        ex = bx - ax; ey = by - ay
        ee = ex * ex + ey * ey
        if ee > 0.0:
            proj = -(ax * ex + ay * ey) / ee
            proj = min(1.0, max(0.0, proj))
        else:
            proj = 0.0
        cx = ax + proj * ex; cy = ay + proj * ey
        if cx * cx + cy * cy > rmax2:
            continue
        a0 = atan2(ay, ax) - heading
        a1 = atan2(by, bx) - heading
        d = a1 - a0
        while d > PI:
            d -= TWO_PI
        while d < -PI:
            d += TWO_PI
        lo = a0 if d >= 0.0 else a1
        span = d if d >= 0.0 else -d
        for sh in range(-2, 3):
            l = lo + sh * TWO_PI - angle_min
            i0 = <Py_ssize_t>ceil(l / angle_increment - 1e-9)
            i1 = <Py_ssize_t>floor((l + span) / angle_increment + 1e-9)
            if i0 < 0:
                i0 = 0
            if i1 > n_beams - 1:
                i1 = n_beams - 1
            for i in range(i0, i1 + 1):
                dirx = cs[i]; diry = sn[i]
                denom = dirx * ey - diry * ex
                if denom == 0.0:
                    continue
                t = (ax * ey - ay * ex) / denom
                uu = (ax * diry - ay * dirx) / denom
                if t > 0.0 and uu >= 0.0 and uu <= 1.0 and t < r[i]:
                    r[i] = t
    for i in range(n_beams):
        if r[i] > range_max:
            r[i] = INFINITY
    return ranges


def solve_banded_spd(const double[:, ::1] ab, const double[:, ::1] rhs):
    """Solve A x = rhs with A SPD in lower band storage ``ab[d, j] = A[j + d, j]``."""
    cdef Py_ssize_t p = ab.shape[0] - 1
    cdef Py_ssize_t n = ab.shape[1]
    cdef Py_ssize_t ncol = rhs.shape[1]
    cdef Py_ssize_t i, j, k, c, k0
    cdef double s, ljj
    Lb = np.zeros((p + 1, n))
    cdef double[:, ::1] L = Lb
    for j in range(n):
        s = ab[0, j]
        k0 = j - p if j > p else 0
        for k in range(k0, j):
            s -= L[j - k, k] * L[j - k, k]
        if s <= 0.0:
            raise np.linalg.LinAlgError("matrix is not positive definite")
        ljj = sqrt(s)
        L[0, j] = ljj
        for i in range(j + 1, min(n, j + p + 1)):
            s = ab[i - j, j]
            k0 = i - p if i > p else 0
            for k in range(k0, j):
                s -= L[i - k, k] * L[j - k, k]
            L[i - j, j] = s / ljj

    out = np.empty((n, ncol))
    cdef double[:, ::1] x = out
    cdef double[::1] y = np.empty(n)
    for c in range(ncol):
        for i in range(n):
            s = rhs[i, c]
            k0 = i - p if i > p else 0
            for k in range(k0, i):
                s -= L[i - k, k] * y[k]
            y[i] = s / L[0, i]
        for i in range(n - 1, -1, -1):
            s = y[i]
            for k in range(i + 1, min(n, i + p + 1)):
                s -= L[k - i, i] * x[k, c]
            x[i, c] = s / L[0, i]
    return out
