"""Pure-Python footprint kernels.

Reference implementation of the hot loops. ``_kernels.pyx`` mirrors every
function here operation for operation, so both backends return identical
cells in identical order and bitwise-identical costs.

``geom`` is the flat tuple ``(ox, oy, oz, cell_size, ex, ey, ez, radius)``.
Tiles are plain ``(ix, iy, iz, t)`` tuples.
"""

from __future__ import annotations

from math import ceil, floor, sqrt

BACKEND = "python"


def _axis_range(c, r, o, cs, n):
    lo = ceil((c - r - o) / cs) - 1
    hi = floor((c + r - o) / cs)
    if lo < 0:
        lo = 0
    if hi > n - 1:
        hi = n - 1
    return lo, hi


def _ball_into(cx, cy, cz, geom, out, seen):
    ox, oy, oz, cs, ex, ey, ez, r = geom
    r2 = r * r
    i0, i1 = _axis_range(cx, r, ox, cs, ex)
    j0, j1 = _axis_range(cy, r, oy, cs, ey)
    k0, k1 = _axis_range(cz, r, oz, cs, ez)
    for i in range(i0, i1 + 1):
        lo = ox + i * cs
        hi = lo + cs
        if cx < lo:
            d = lo - cx
        elif cx > hi:
            d = cx - hi
        else:
            d = 0.0
        dx2 = d * d
        if dx2 > r2:
            continue
        for j in range(j0, j1 + 1):
            lo = oy + j * cs
            hi = lo + cs
            if cy < lo:
                d = lo - cy
            elif cy > hi:
                d = cy - hi
            else:
                d = 0.0
            dxy2 = dx2 + d * d
            if dxy2 > r2:
                continue
            for k in range(k0, k1 + 1):
                lo = oz + k * cs
                hi = lo + cs
                if cz < lo:
                    d = lo - cz
                elif cz > hi:
                    d = cz - hi
                else:
                    d = 0.0
                if dxy2 + d * d <= r2:
                    cell = (i, j, k)
                    if cell not in seen:
                        seen.add(cell)
                        out.append(cell)


def n_substeps(x0, y0, z0, x1, y1, z1, cs):
    """Sample count for one swept step: ``max(2, ceil(length / (cs / 2)))``."""
    dx = x1 - x0
    dy = y1 - y0
    dz = z1 - z0
    length = sqrt(dx * dx + dy * dy + dz * dz)
    if length == 0.0:
        return 0
    n = ceil(length / (cs * 0.5))
    if n < 2:
        n = 2
    return n


def _sweep_into(x0, y0, z0, x1, y1, z1, geom, out, seen):
    n = n_substeps(x0, y0, z0, x1, y1, z1, geom[3])
    if n == 0:
        _ball_into(x0, y0, z0, geom, out, seen)
        return
    dx = x1 - x0
    dy = y1 - y0
    dz = z1 - z0
    for s in range(n + 1):
        if s == n:
            _ball_into(x1, y1, z1, geom, out, seen)
        else:
            f = s / n
            _ball_into(x0 + dx * f, y0 + dy * f, z0 + dz * f, geom, out, seen)


def ball_cells(cx, cy, cz, geom):
    out = []
    _ball_into(cx, cy, cz, geom, out, set())
    return out


def swept_cells(x0, y0, z0, x1, y1, z1, geom):
    out = []
    _sweep_into(x0, y0, z0, x1, y1, z1, geom, out, set())
    return out


def trajectory_tiles(points, t_start, geom):
    """Tiles of a sampled trajectory.

    Segment ``j`` (pose ``j`` to ``j + 1``) is swept and labeled ``t_start + j``;
    the last pose is labeled with its own time.
    """
    pts = points.tolist() if hasattr(points, "tolist") else [tuple(p) for p in points]
    tiles = []
    m = len(pts)
    for j in range(m - 1):
        a = pts[j]
        b = pts[j + 1]
        cells = []
        _sweep_into(a[0], a[1], a[2], b[0], b[1], b[2], geom, cells, set())
        t = t_start + j
        for c in cells:
            tiles.append((c[0], c[1], c[2], t))
    if m:
        a = pts[m - 1]
        cells = []
        _ball_into(a[0], a[1], a[2], geom, cells, set())
        t = t_start + m - 1
        for c in cells:
            tiles.append((c[0], c[1], c[2], t))
    return tiles


def accumulate_counts(counts, points, t_start, geom):
    """Add one to ``counts[tile]`` for every tile of the trajectory."""
    for tile in trajectory_tiles(points, t_start, geom):
        counts[tile] = counts.get(tile, 0) + 1


def edge_cost(x0, y0, z0, x1, y1, z1, t, geom, log_safe, blocked):
    """``-sum(log(1 - Pr))`` over the swept tiles at time ``t``; ``-1.0`` if rejected.

    ``log_safe`` maps tile -> ``log1p(-Pr)`` (``-inf`` where Pr = 1); missing
    tiles have Pr = 0. Any tile in ``blocked`` rejects the edge.
    """
    cells = []
    _sweep_into(x0, y0, z0, x1, y1, z1, geom, cells, set())
    total = 0.0
    for c in cells:
        tile = (c[0], c[1], c[2], t)
        if blocked is not None and tile in blocked:
            return -1.0
        ls = log_safe.get(tile)
        if ls is not None:
            if ls == float("-inf"):
                return -1.0
            total -= ls
    return total
