# cython: language_level=3, boundscheck=False, wraparound=False
"""Compiled footprint kernels.

Operation-for-operation mirror of ``_kernels_py``; see that module for the
contract. Keep the two in lockstep: the parity tests compare them bitwise.
"""

from libc.math cimport ceil, floor, sqrt, INFINITY

import numpy as np

BACKEND = "cython"


cdef struct Geom:
    double ox, oy, oz, cs, r
    long ex, ey, ez


cdef Geom _unpack(tuple geom):
    cdef Geom g
    g.ox = geom[0]
    g.oy = geom[1]
    g.oz = geom[2]
    g.cs = geom[3]
    g.ex = geom[4]
    g.ey = geom[5]
    g.ez = geom[6]
    g.r = geom[7]
    return g


cdef inline void _axis_range(double c, double r, double o, double cs, long n,
                             long* lo, long* hi):
    lo[0] = <long>ceil((c - r - o) / cs) - 1
    hi[0] = <long>floor((c + r - o) / cs)
    if lo[0] < 0:
        lo[0] = 0
    if hi[0] > n - 1:
        hi[0] = n - 1


cdef inline double _gap(double c, double lo, double hi):
    if c < lo:
        return lo - c
    elif c > hi:
        return c - hi
    return 0.0


cdef void _ball_into(double cx, double cy, double cz, Geom* g, list out, set seen):
    cdef double r2 = g.r * g.r
    cdef long i0, i1, j0, j1, k0, k1, i, j, k
    cdef double lo, d, dx2, dxy2
    _axis_range(cx, g.r, g.ox, g.cs, g.ex, &i0, &i1)
    _axis_range(cy, g.r, g.oy, g.cs, g.ey, &j0, &j1)
    _axis_range(cz, g.r, g.oz, g.cs, g.ez, &k0, &k1)
    for i in range(i0, i1 + 1):
        lo = g.ox + i * g.cs
        d = _gap(cx, lo, lo + g.cs)
        dx2 = d * d
        if dx2 > r2:
            continue
        for j in range(j0, j1 + 1):
            lo = g.oy + j * g.cs
            d = _gap(cy, lo, lo + g.cs)
            dxy2 = dx2 + d * d
            if dxy2 > r2:
                continue
            for k in range(k0, k1 + 1):
                lo = g.oz + k * g.cs
                d = _gap(cz, lo, lo + g.cs)
                if dxy2 + d * d <= r2:
                    cell = (i, j, k)
                    if cell not in seen:
                        seen.add(cell)
                        out.append(cell)


cdef long _n_substeps(double x0, double y0, double z0,
                      double x1, double y1, double z1, double cs):
    cdef double dx = x1 - x0
    cdef double dy = y1 - y0
    cdef double dz = z1 - z0
    cdef double length = sqrt(dx * dx + dy * dy + dz * dz)
    cdef long n
    if length == 0.0:
        return 0
    n = <long>ceil(length / (cs * 0.5))
    if n < 2:
        n = 2
    return n


def n_substeps(double x0, double y0, double z0, double x1, double y1, double z1, double cs):
    return _n_substeps(x0, y0, z0, x1, y1, z1, cs)


cdef void _sweep_into(double x0, double y0, double z0,
                      double x1, double y1, double z1,
                      Geom* g, list out, set seen):
    cdef long n = _n_substeps(x0, y0, z0, x1, y1, z1, g.cs)
    cdef long s
    cdef double f
    cdef double dx = x1 - x0
    cdef double dy = y1 - y0
    cdef double dz = z1 - z0
    if n == 0:
        _ball_into(x0, y0, z0, g, out, seen)
        return
    for s in range(n + 1):
        if s == n:
            _ball_into(x1, y1, z1, g, out, seen)
        else:
            f = <double>s / <double>n
            _ball_into(x0 + dx * f, y0 + dy * f, z0 + dz * f, g, out, seen)


def ball_cells(double cx, double cy, double cz, tuple geom):
    cdef Geom g = _unpack(geom)
    cdef list out = []
    _ball_into(cx, cy, cz, &g, out, set())
    return out


def swept_cells(double x0, double y0, double z0, double x1, double y1, double z1, tuple geom):
    cdef Geom g = _unpack(geom)
    cdef list out = []
    _sweep_into(x0, y0, z0, x1, y1, z1, &g, out, set())
    return out


cdef list _trajectory_tiles(const double[:, ::1] pts, long t_start, Geom* g):
    cdef Py_ssize_t m = pts.shape[0]
    cdef Py_ssize_t j
    cdef list tiles = []
    cdef list cells
    cdef long t
    for j in range(m - 1):
        cells = []
        _sweep_into(pts[j, 0], pts[j, 1], pts[j, 2],
                    pts[j + 1, 0], pts[j + 1, 1], pts[j + 1, 2], g, cells, set())
        t = t_start + j
        for c in cells:
            tiles.append((c[0], c[1], c[2], t))
    if m:
        cells = []
        _ball_into(pts[m - 1, 0], pts[m - 1, 1], pts[m - 1, 2], g, cells, set())
        t = t_start + m - 1
        for c in cells:
            tiles.append((c[0], c[1], c[2], t))
    return tiles


def trajectory_tiles(points, long t_start, tuple geom):
    cdef Geom g = _unpack(geom)
    cdef const double[:, ::1] pts = np.ascontiguousarray(points, dtype=np.float64).reshape(-1, 3)
    return _trajectory_tiles(pts, t_start, &g)


def accumulate_counts(dict counts, points, long t_start, tuple geom):
    cdef Geom g = _unpack(geom)
    cdef const double[:, ::1] pts = np.ascontiguousarray(points, dtype=np.float64).reshape(-1, 3)
    for tile in _trajectory_tiles(pts, t_start, &g):
        counts[tile] = counts.get(tile, 0) + 1


def edge_cost(double x0, double y0, double z0, double x1, double y1, double z1,
              long t, tuple geom, dict log_safe, blocked):
    cdef Geom g = _unpack(geom)
    cdef list cells = []
    cdef double total = 0.0
    cdef double ls
    _sweep_into(x0, y0, z0, x1, y1, z1, &g, cells, set())
    check_blocked = blocked is not None
    for c in cells:
        tile = (c[0], c[1], c[2], t)
        if check_blocked and tile in blocked:
            return -1.0
        v = log_safe.get(tile)
        if v is not None:
            ls = v
            if ls == -INFINITY:
                return -1.0
            total -= ls
    return total
