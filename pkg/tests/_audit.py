"""Independent oracles shared by the unit and acceptance tests.

Nothing here imports the code under test except plain data types, so each
function is a second implementation of the quantity it checks.
"""

from __future__ import annotations

import itertools
import math

import numpy as np
from scipy import integrate
from scipy.stats import norm


def gaussian_cell_mass(mu, sd, lo, hi, r):
    """P(|X - box| <= r) for X ~ N(mu, sd^2 I) in 2D and the box [lo, hi].

    The dilated box is a rounded rectangle: a cross of two rectangles whose
    masses come from normal CDFs, plus four quarter discs integrated
    numerically.
    """
    mx, my = mu
    (ax, ay), (bx, by) = lo, hi

    def rect(x0, x1, y0, y1):
        px = norm.cdf(x1, mx, sd) - norm.cdf(x0, mx, sd)
        py = norm.cdf(y1, my, sd) - norm.cdf(y0, my, sd)
        return px * py

    if rect(ax - r, bx + r, ay - r, by + r) < 1e-13:
        # the dilated box's bounding square already holds negligible mass
        return 0.0
    mass = rect(ax - r, bx + r, ay, by) + rect(ax, bx, ay - r, ay) + rect(ax, bx, by, by + r)
    for cx, sx in ((ax, -1), (bx, 1)):
        for cy, sy in ((ay, -1), (by, 1)):
            if rect(min(cx, cx + sx * r), max(cx, cx + sx * r),
                    min(cy, cy + sy * r), max(cy, cy + sy * r)) < 1e-13:
                continue
            def f(y, x, cx=cx, cy=cy, sx=sx, sy=sy):
                return norm.pdf(cx + sx * x, mx, sd) * norm.pdf(cy + sy * y, my, sd)
            m, _ = integrate.dblquad(f, 0.0, r, 0.0, lambda x: math.sqrt(max(r * r - x * x, 0.0)),
                                     epsabs=1e-10)
            mass += m
    return mass


def random_layered_dag(rng, n_layers, width, p_edge, max_weight=3.0):
    """Vertices grouped by layer; edges only go from layer t to t + 1.

    Returns ``(layers, edges)`` where ``layers[i]`` is vertex i's layer and
    ``edges`` maps u to a list of ``(w, weight)``. Vertex 0 is the root in
    layer 0; every other vertex has at least one incoming edge.
    """
    layers = [0]
    by_layer = [[0]]
    edges: dict[int, list] = {0: []}
    for t in range(1, n_layers):
        k = int(rng.integers(1, width + 1))
        cur = []
        for _ in range(k):
            v = len(layers)
            layers.append(t)
            edges[v] = []
            prev = by_layer[t - 1]
            parents = [u for u in prev if rng.random() < p_edge] or [prev[int(rng.integers(len(prev)))]]
            for u in parents:
                edges[u].append((v, float(rng.uniform(0.0, max_weight))))
            cur.append(v)
        by_layer.append(cur)
    return layers, edges


def enumerate_paths(edges, root=0):
    """All root-to-vertex paths as ``(vertex, cost, path)`` by depth-first search."""
    out = []
    stack = [(root, 0.0, (root,))]
    while stack:
        u, c, path = stack.pop()
        out.append((u, c, path))
        for w, wt in edges.get(u, ()):
            stack.append((w, c + wt, path + (w,)))
    return out


def brute_assignment(cost):
    """Minimum-cost assignment by trying every injection of rows into columns."""
    cost = np.asarray(cost, dtype=float)
    n, m = cost.shape
    best = math.inf
    if n <= m:
        for perm in itertools.permutations(range(m), n):
            best = min(best, math.fsum(cost[i, perm[i]] for i in range(n)))
    else:
        for perm in itertools.permutations(range(n), m):
            best = min(best, math.fsum(cost[perm[j], j] for j in range(m)))
    return best


def direct_safe_product(tiles, probs):
    """Plain product of ``1 - p`` over a tile set."""
    q = 1.0
    for t in tiles:
        q *= 1.0 - probs.get(tuple(t), 0.0)
    return q
