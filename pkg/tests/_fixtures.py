"""Small hand-built scenes shared by several test modules."""

from __future__ import annotations

import numpy as np

from droneparking.dynamics import Action, DroneState
from droneparking.grid import CellSet, StageConfig, ZoneSet
from droneparking.occupancy import IncidentZones, combine_occupancy, compute_zones, estimate_occupancy
from droneparking.predictor import PhysicsEnsemblePredictor, PoseHistory
from droneparking.planner import PlanGraph

SMALL = StageConfig(extent=(10, 10, 8), t_last=60)
PARK_Z = 1


def falling_scene(cfg=SMALL, fail_at=((5.0, 5.0, 6.0),), t0=4, n=300, seed=0, band=(1, 3)):
    """Occupancy and zones for drones failing at rest at ``fail_at``."""
    pred = PhysicsEnsemblePredictor(cfg)
    fields = {}
    for i, p in enumerate(fail_at):
        hist = PoseHistory(100 + i, t0 - 1, np.tile(p, (2, 1)))
        fields[100 + i] = estimate_occupancy(pred.predict_rollouts(hist, n, seed + i), 0.3, cfg)
    zones = compute_zones(fields, cfg, t0, band)
    return combine_occupancy(fields), zones


def dag_to_plan_graph(layers, edges, park, cfg=SMALL, t0=0):
    """Embed an abstract layered DAG as a :class:`PlanGraph`.

    Vertices in ``park`` sit at rest in the centre of a parking cell on
    level ``PARK_Z``; all others sit high above it. Returns the graph and
    matching zones.
    """
    ex, ey, _ = cfg.extent

    def pos(v):
        x, y = v % ex, (v // ex) % ey
        return (x + 0.5, y + 0.5, PARK_Z + 0.5 if v in park else 6.5)

    g = PlanGraph(DroneState(0, pos(0)), t0, cfg, capacity=len(layers))
    for v in range(1, len(layers)):
        g.add_vertex(pos(v), (0.0, 0.0, 0.0), t0 + layers[v])
    for u, lst in edges.items():
        for w, wt in lst:
            g.add_edge(u, w, wt, Action((0.0, 0.0, 0.0)))
    cells = CellSet((i, j, PARK_Z) for i in range(ex) for j in range(ey))
    zones = IncidentZones(t0, t0 + max(layers), {}, ZoneSet(), cells)
    return g, zones
