"""Evacuation planning over a random space-time graph.

Each evacuee grows an RRT rooted at its state at the failure time. Vertices
carry ``(position, velocity, t)`` and every edge advances time by one step,
so the graph is a DAG. An edge costs ``-log Psafe`` of the tiles swept
while flying it, so the cheapest root-to-parking path is the one with the
highest collision-free probability, ``Psafe = exp(-cost)``.

Velocity slack: a vertex stores the velocity it was created with. Extra
"cross" edges may arrive at a vertex with a velocity up to ``velocity_slack``
away from the stored one, and every edge leaving a vertex is checked against
an acceleration budget shrunk by the same slack. Any root-to-vertex path is
therefore flyable within the true acceleration limit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np

from . import kernels
from .dynamics import HOVER, Action, DroneState, KinematicLimits, Plan, Show, Trajectory
from .errors import DroneParkingError, PlannerCapacityError
from .grid import DEFAULT_RADIUS, CellSet, StageConfig, ZoneSet, footprint_of_trajectory
from .occupancy import IncidentZones, OccupancyField, safe_probability

Vec3 = tuple[float, float, float]


def select_evacuees(
    show: Show,
    hit: Iterable,
    t0: int,
    radius: float = DEFAULT_RADIUS,
    candidates: Iterable[int] | None = None,
) -> set[int]:
    """Drones that are in the hit zone at ``t0`` or would enter it by following their plan.

    A drone whose plan ends before the hit zone does keeps hovering at its
    last pose, and that hover is checked too.
    """
    hit = hit if isinstance(hit, (set, frozenset)) else set(hit)
    if not hit:
        return set()
    t_hi = max(t[3] for t in hit)
    geom = show.cfg.geom(radius)
    out = set()
    for i in sorted(show.ids if candidates is None else candidates):
        fp = show.footprint(i, radius, t0, t_hi)
        if not hit.isdisjoint(fp):
            out.add(i)
            continue
        t_last = show.end_time(i)
        if t_last < t_hi:
            p = show.trajectory(i).points[-1]
            if any(t in hit for t in _hover_tiles(p, max(t_last, t0), t_hi, geom)):
                out.add(i)
    return out


class RejectedEdge(DroneParkingError):
    """The edge sweeps a tile that is certainly occupied or reserved."""


@dataclass(frozen=True)
class PlannerSettings:
    budget: int = 1000
    goal_bias: float = 0.3
    goal_local: float = 0.5
    goal_neighbours: int = 32
    k_nearest: int = 5
    parking_target: int = 100
    velocity_slack: float = 0.5
    max_iter_factor: int = 20

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def edge_weight(footprint_of_action: Iterable, combined: OccupancyField,
                blocked: Iterable | None = None) -> float:
    """``-log Psafe`` of an action's swept tiles.

    Raises :class:`RejectedEdge` when a tile has occupancy 1 or is in ``blocked``.
    """
    ls = combined.log_safe()
    total = 0.0
    for tile in footprint_of_action:
        tile = tuple(tile)
        if blocked is not None and tile in blocked:
            raise RejectedEdge(f"tile {tile} is reserved")
        v = ls.get(tile)
        if v is not None:
            if v == -math.inf:
                raise RejectedEdge(f"tile {tile} is certainly occupied")
            total -= v
    return total


class PlanGraph:
    """Time-layered directed graph; vertex 0 is the root."""

    def __init__(self, root: DroneState, t0: int, cfg: StageConfig,
                 radius: float = DEFAULT_RADIUS, capacity: int = 16):
        self.drone_id = root.id
        self.cfg = cfg
        self.radius = radius
        self._pos = np.empty((max(capacity, 1), 3))
        self._vel = np.empty((max(capacity, 1), 3))
        self.times: list[int] = []
        self.parent: list[int] = []
        self.out_edges: list[list[tuple[int, float, Action]]] = []
        self.n = 0
        self.add_vertex(root.position, root.velocity, t0)

    def _grow(self):
        cap = len(self._pos) * 2
        for name in ("_pos", "_vel"):
            old = getattr(self, name)
            new = np.empty((cap, 3))
            new[: self.n] = old[: self.n]
            setattr(self, name, new)

    @property
    def positions(self) -> np.ndarray:
        return self._pos[: self.n]

    @property
    def velocities(self) -> np.ndarray:
        return self._vel[: self.n]

    @property
    def root_time(self) -> int:
        return self.times[0]

    def position(self, v: int) -> Vec3:
        return tuple(self._pos[v].tolist())

    def velocity(self, v: int) -> Vec3:
        return tuple(self._vel[v].tolist())

    def add_vertex(self, pos: Sequence[float], vel: Sequence[float], t: int,
                   parent: int = -1, weight: float | None = None,
                   action: Action | None = None) -> int:
        if self.n == len(self._pos):
            self._grow()
        i = self.n
        self._pos[i] = pos
        self._vel[i] = vel
        self.times.append(int(t))
        self.parent.append(parent)
        self.out_edges.append([])
        self.n += 1
        if parent >= 0:
            self.add_edge(parent, i, weight, action)
        return i

    def add_edge(self, u: int, w: int, weight: float, action: Action | None = None):
        if self.times[w] != self.times[u] + 1:
            raise ValueError("edges must advance time by exactly one step")
        if weight < 0:
            raise ValueError("edge weights must be non-negative")
        if action is None:
            a = (self._pos[w] - self._pos[u]) / self.cfg.dt - self._vel[u]
            action = Action(tuple(a.tolist()))
        self.out_edges[u].append((w, float(weight), action))

    def edges(self):
        for u, lst in enumerate(self.out_edges):
            for w, wt, a in lst:
                yield u, w, wt, a

    @property
    def n_edges(self) -> int:
        return sum(len(x) for x in self.out_edges)


class ParkingGoal:
    """Admissible parking vertices and goal-biased sampling.

    A vertex is admissible when its body lies inside parking cells, it can stop
    in one step, and it is not later than ``t_end``.
    """

    def __init__(self, parking: CellSet, t_end: int, cfg: StageConfig, radius: float,
                 stop_speed: float):
        self.parking = parking
        self.cells = sorted(parking)
        self.t_end = t_end
        self.cfg = cfg
        self.geom = cfg.geom(radius)
        self.radius = radius
        self.stop_speed = stop_speed

    def contains(self, pos: Sequence[float], vel: Sequence[float], t: int) -> bool:
        if t > self.t_end:
            return False
        if math.sqrt(vel[0] ** 2 + vel[1] ** 2 + vel[2] ** 2) > self.stop_speed + 1e-12:
            return False
        cells = kernels.ball_cells(pos[0], pos[1], pos[2], self.geom)
        return bool(cells) and all(c in self.parking for c in cells)

    def nearest_cells(self, point: Sequence[float], k: int) -> list:
        if not self.cells or k <= 0:
            return []
        c = np.array([self.cfg.cell_center(x) for x in self.cells])
        d = np.linalg.norm(c - np.asarray(point, dtype=float), axis=1)
        order = np.lexsort((np.arange(len(d)), d))[:k]
        return [self.cells[i] for i in order]

    def sample(self, rng: np.random.Generator, pool: Sequence | None = None) -> np.ndarray:
        pool = pool or self.cells
        cell = pool[int(rng.integers(len(pool)))]
        lo, hi = self.cfg.cell_box(cell)
        pad = min(self.radius, 0.5 * self.cfg.cell_size)
        return rng.uniform(lo + pad, hi - pad)


def _clip_norm(v: np.ndarray, limit: float) -> np.ndarray:
    n = float(np.sqrt(v @ v))
    if n > limit:
        return v * (limit / n)
    return v


def grow_graph(
    drone: DroneState,
    t0: int,
    zones: IncidentZones,
    combined: OccupancyField,
    cfg: StageConfig,
    rng_seed,
    budget: int,
    settings: PlannerSettings | None = None,
    limits: KinematicLimits | None = None,
    radius: float = DEFAULT_RADIUS,
    blocked: set | None = None,
) -> PlanGraph:
    """Grow the RRT, then add cross edges between consecutive time layers.

    Stops at ``budget`` vertices or once ``settings.parking_target``
    admissible parking vertices exist. Cross edges only link a vertex to
    earlier-inserted vertices, so a larger budget with the same seed yields
    a supergraph.
    """
    if budget < 1:
        raise ValueError("budget must be >= 1")
    settings = settings or PlannerSettings()
    limits = limits or KinematicLimits()
    dt = cfg.dt
    slack = settings.velocity_slack
    dv_nom = limits.dv_max(dt) - slack
    if dv_nom <= 0:
        raise ValueError("velocity_slack must be smaller than a_max * dt")
    vmax = limits.v_max
    t_end = zones.t_end
    geom = cfg.geom(radius)
    log_safe = combined.log_safe()
    goal = ParkingGoal(zones.parking_space, t_end, cfg, radius, dv_nom)
    rng = np.random.default_rng(rng_seed)
    local = goal.nearest_cells(drone.position, settings.goal_neighbours)

    g = PlanGraph(drone, t0, cfg, radius, capacity=budget)
    lo = np.asarray(cfg.origin, dtype=float)
    hi = np.asarray(cfg.upper, dtype=float)
    box_lo = lo + radius
    box_hi = hi - radius
    expandable = np.zeros(budget, dtype=bool)
    expandable[0] = t0 < t_end
    found = int(goal.contains(drone.position, drone.velocity, t0))
    iters = 0
    max_iter = settings.max_iter_factor * budget
    while g.n < budget and found < settings.parking_target and iters < max_iter:
        iters += 1
        if goal.cells and rng.random() < settings.goal_bias:
            near = local and rng.random() < settings.goal_local
            sample = goal.sample(rng, local if near else None)
        else:
            sample = rng.uniform(lo, hi)
        n = g.n
        d2 = ((g._pos[:n] - sample) ** 2).sum(axis=1)
        d2[~expandable[:n]] = np.inf
        u = int(np.argmin(d2))
        if not np.isfinite(d2[u]):
            break
        pu = g._pos[u]
        vu = g._vel[u]
        v_des = _clip_norm((sample - pu) / dt, vmax)
        v_new = _clip_norm(vu + _clip_norm(v_des - vu, dv_nom), vmax)
        p_new = pu + v_new * dt
        if np.any(p_new < box_lo) or np.any(p_new > box_hi):
            continue
        t_new = g.times[u] + 1
        w = kernels.edge_cost(pu[0], pu[1], pu[2], p_new[0], p_new[1], p_new[2],
                              g.times[u], geom, log_safe, blocked)
        if w < 0:
            continue
        a = Action(tuple((v_new - vu).tolist()))
        i = g.add_vertex(p_new, v_new, t_new, u, w, a)
        expandable[i] = t_new < t_end
        if goal.contains(g.position(i), g.velocity(i), t_new):
            found += 1
    _add_cross_edges(g, settings, limits, geom, log_safe, blocked)
    return g


def _add_cross_edges(g: PlanGraph, settings: PlannerSettings, limits: KinematicLimits,
                     geom: tuple, log_safe: dict, blocked):
    k = settings.k_nearest
    if k <= 0 or g.n < 3:
        return
    dt = g.cfg.dt
    slack = settings.velocity_slack
    dv_nom = limits.dv_max(dt) - slack
    vmax = limits.v_max + 1e-12
    P = g.positions
    V = g.velocities
    times = np.asarray(g.times)
    layers: dict[int, list[int]] = {}
    for i in range(g.n):
        t = g.times[i]
        for src, dst, other in ((True, False, t - 1), (False, True, t + 1)):
            cand = np.asarray(layers.get(other, ()), dtype=int)
            if cand.size == 0:
                continue
            if src:
                # earlier vertex j -> i
                arr = (P[i] - P[cand]) / dt
                ok = (np.linalg.norm(arr - V[i], axis=1) <= slack + 1e-12) & \
                     (np.linalg.norm(arr - V[cand], axis=1) <= dv_nom + 1e-12)
                ok &= np.array([g.parent[i] != j for j in cand], dtype=bool)
            else:
                # i -> earlier vertex j
                arr = (P[cand] - P[i]) / dt
                ok = (np.linalg.norm(arr - V[cand], axis=1) <= slack + 1e-12) & \
                     (np.linalg.norm(arr - V[i], axis=1) <= dv_nom + 1e-12)
                ok &= np.array([g.parent[j] != i for j in cand], dtype=bool)
            ok &= np.linalg.norm(arr, axis=1) <= vmax
            if not ok.any():
                continue
            picked = cand[ok]
            dist = np.linalg.norm(P[picked] - P[i], axis=1)
            order = np.lexsort((picked, dist))[:k]
            for j in picked[order]:
                j = int(j)
                u, w = (j, i) if src else (i, j)
                pu, pw = P[u], P[w]
                cost = kernels.edge_cost(pu[0], pu[1], pu[2], pw[0], pw[1], pw[2],
                                         g.times[u], geom, log_safe, blocked)
                if cost >= 0:
                    g.add_edge(u, w, cost)
        layers.setdefault(g.times[i], []).append(i)
    del times


@dataclass
class ShortestPaths:
    cost: list[float]
    parent: list[int]

    def path_to(self, v: int) -> list[int]:
        if not math.isfinite(self.cost[v]):
            raise ValueError(f"vertex {v} is unreachable")
        path = [v]
        while self.parent[path[-1]] >= 0:
            path.append(self.parent[path[-1]])
        return path[::-1]

    def __getitem__(self, v: int) -> tuple[float, int]:
        return self.cost[v], self.parent[v]


def shortest_paths(graph: PlanGraph) -> ShortestPaths:
    """Single-source shortest paths from the root by relaxing in time order.

    Equal costs keep the parent with the smaller insertion index.
    """
    n = graph.n
    cost = [math.inf] * n
    parent = [-1] * n
    cost[0] = 0.0
    order = sorted(range(n), key=lambda v: (graph.times[v], v))
    for u in order:
        cu = cost[u]
        if cu == math.inf:
            continue
        for w, wt, _ in graph.out_edges[u]:
            c = cu + wt
            if c < cost[w] or (c == cost[w] and u < parent[w]):
                cost[w] = c
                parent[w] = u
    return ShortestPaths(cost, parent)


@dataclass(frozen=True)
class EvacuationPlan:
    """Plan for one drone, flown from ``t_start`` and padded with hovering to ``t_end``.

    ``trajectory`` holds the planned poses from ``t_start`` to the end of the
    plan; ``cost`` is the path cost and ``psafe = exp(-cost)``.
    """

    drone_id: int
    plan: Plan
    t_start: int
    target: Vec3
    target_time: int
    cost: float
    psafe: float
    trajectory: Trajectory
    vertex: int = -1

    def footprint(self, radius: float, cfg: StageConfig) -> ZoneSet:
        return footprint_of_trajectory(self.trajectory.points, self.t_start, radius, cfg)


def _hover_tiles(pos, t_lo: int, t_hi: int, geom: tuple) -> list:
    cells = kernels.ball_cells(pos[0], pos[1], pos[2], geom)
    return [(c[0], c[1], c[2], t) for t in range(t_lo, t_hi + 1) for c in cells]


def _build_plan(graph: PlanGraph, path: list[int], t_end: int, cost: float,
                vertex: int) -> EvacuationPlan:
    dt = graph.cfg.dt
    P = graph.positions
    v_prev = np.asarray(graph.velocity(0))
    actions = []
    pts = [tuple(P[path[0]].tolist())]
    for u, w in zip(path, path[1:]):
        arr = (P[w] - P[u]) / dt
        actions.append(Action(tuple((arr - v_prev).tolist())))
        v_prev = arr
        pts.append(tuple(P[w].tolist()))
    t_target = graph.times[path[-1]]
    pad = t_end - t_target
    if pad > 0:
        actions.append(Action(tuple((-v_prev).tolist())))
        actions.extend([HOVER] * (pad - 1))
        pts.extend([pts[-1]] * pad)
    t0 = graph.root_time
    traj = Trajectory(t0, np.array(pts))
    return EvacuationPlan(
        drone_id=graph.drone_id,
        plan=Plan(tuple(actions)),
        t_start=t0,
        target=pts[len(path) - 1],
        target_time=t_target,
        cost=cost,
        psafe=math.exp(-cost),
        trajectory=traj,
        vertex=vertex,
    )


def extract_plan(
    graph: PlanGraph,
    sp: ShortestPaths,
    zones: IncidentZones,
    settings: PlannerSettings | None = None,
    limits: KinematicLimits | None = None,
    blocked: set | None = None,
) -> EvacuationPlan:
    """Cheapest admissible parking vertex and its hover-padded plan.

    Ties on cost go to the smaller vertex index. With ``blocked``, vertices
    whose hover padding would touch a reserved tile are skipped.
    """
    settings = settings or PlannerSettings()
    limits = limits or KinematicLimits()
    stop_speed = limits.dv_max(graph.cfg.dt) - settings.velocity_slack
    goal = ParkingGoal(zones.parking_space, zones.t_end, graph.cfg, graph.radius, stop_speed)
    geom = graph.cfg.geom(graph.radius)
    cands = []
    for v in range(graph.n):
        c = sp.cost[v]
        if c == math.inf:
            continue
        if goal.contains(graph.position(v), graph.velocity(v), graph.times[v]):
            cands.append((c, v))
    cands.sort()
    for c, v in cands:
        if blocked is not None:
            pos = graph.position(v)
            if any(t in blocked for t in _hover_tiles(pos, graph.times[v], zones.t_end, geom)):
                continue
        return _build_plan(graph, sp.path_to(v), zones.t_end, c, v)
    raise PlannerCapacityError(
        graph.drone_id,
        f"no admissible parking vertex among {graph.n} vertices; raise the planner budget",
    )


def plan_evacuation(
    drone: DroneState,
    t0: int,
    zones: IncidentZones,
    combined: OccupancyField,
    cfg: StageConfig,
    rng_seed,
    settings: PlannerSettings | None = None,
    limits: KinematicLimits | None = None,
    radius: float = DEFAULT_RADIUS,
    blocked: set | None = None,
) -> EvacuationPlan:
    """Grow, solve and extract for one drone."""
    settings = settings or PlannerSettings()
    g = grow_graph(drone, t0, zones, combined, cfg, rng_seed, settings.budget, settings,
                   limits, radius, blocked)
    return extract_plan(g, shortest_paths(g), zones, settings, limits, blocked)


@dataclass
class FormationPlan:
    plans: dict[int, EvacuationPlan] = field(default_factory=dict)
    score: float = 0.0
    order: list[int] = field(default_factory=list)
    failures: dict[int, str] = field(default_factory=dict)
    replanned: list[int] = field(default_factory=list)


SoloPlanner = Callable[[DroneState, "set | None"], EvacuationPlan]


def assemble_formation(
    evacuees: Sequence[DroneState],
    solo_planner: SoloPlanner,
    radius: float,
    cfg: StageConfig,
    weights: Mapping[int, float] | None = None,
    reserved: Iterable | None = None,
    strict: bool = True,
) -> FormationPlan:
    """Prioritized planning into a pairwise collision-free formation.

    Every drone is first planned alone (against ``reserved`` only). Drones
    are then taken riskiest first (lowest solo ``psafe``, then lowest id);
    a drone keeps its solo plan when it avoids all tiles reserved so far,
    otherwise it is replanned with those tiles blocked. The score is the
    ``weights``-weighted sum of ``psafe`` (default weight 1).
    """
    if not evacuees:
        raise ValueError("no evacuees")
    weights = dict(weights or {})
    if any(w <= 0 for w in weights.values()):
        raise ValueError("weights must be positive")
    base = set(reserved or ())
    solo: dict[int, EvacuationPlan] = {}
    failures: dict[int, str] = {}
    for d in sorted(evacuees, key=lambda d: d.id):
        try:
            solo[d.id] = solo_planner(d, base or None)
        except PlannerCapacityError as exc:
            failures[d.id] = str(exc)

    def risk(d: DroneState) -> tuple[float, int]:
        p = solo[d.id].psafe if d.id in solo else 0.0
        return (-(1.0 - p), d.id)

    order = [d for d in sorted(evacuees, key=risk)]
    table = set(base)
    out = FormationPlan(order=[d.id for d in order])
    for d in order:
        plan = solo.get(d.id)
        if plan is not None:
            fp = plan.footprint(radius, cfg)
            if not table.isdisjoint(fp):
                plan = None
        if plan is None:
            out.replanned.append(d.id)
            try:
                plan = solo_planner(d, table)
            except PlannerCapacityError as exc:
                failures[d.id] = str(exc)
                continue
            fp = plan.footprint(radius, cfg)
        failures.pop(d.id, None)
        out.plans[d.id] = plan
        table.update(fp)
    out.failures = failures
    out.score = sum(weights.get(i, 1.0) * p.psafe for i, p in sorted(out.plans.items()))
    if strict and failures:
        first = min(failures)
        raise PlannerCapacityError(first, failures[first].split(": ", 1)[-1])
    return out
