"""Position-level drone kinematics, plans, failure modes and show generation.

Live drones integrate with semi-implicit Euler: an action adds ``delta_v`` to
the velocity, then the position advances by the new velocity times ``dt``.
Failing drones follow one of three failure modes (drop, land, return to
launch); the drop mode integrates gravity plus quadratic drag with RK4.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from enum import Enum
from functools import lru_cache
from typing import Sequence

import numpy as np
from scipy.optimize import linear_sum_assignment

from .errors import InfeasibleActionError
from .grid import DEFAULT_RADIUS, StageConfig, footprint_of_trajectory

GRAVITY = 9.81
_TOL = 1e-9

Vec3 = tuple[float, float, float]


class Status(str, Enum):
    ACTIVE = "active"
    FALLEN = "fallen"
    HIDDEN = "hidden"
    PARKED = "parked"


class FailureKind(str, Enum):
    DROP = "drop"
    LAND = "land"
    RETURN_TO_LAUNCH = "return_to_launch"


FAILURE_KINDS = (FailureKind.DROP, FailureKind.LAND, FailureKind.RETURN_TO_LAUNCH)


@dataclass(frozen=True)
class KinematicLimits:
    v_max: float = 5.0
    a_max: float = 4.0

    def dv_max(self, dt: float) -> float:
        return self.a_max * dt


@dataclass(frozen=True)
class DroneState:
    id: int
    position: Vec3
    velocity: Vec3 = (0.0, 0.0, 0.0)
    status: Status = Status.ACTIVE

    def __post_init__(self):
        object.__setattr__(self, "position", tuple(float(v) for v in self.position))
        object.__setattr__(self, "velocity", tuple(float(v) for v in self.velocity))
        object.__setattr__(self, "status", Status(self.status))


@dataclass(frozen=True)
class Action:
    delta_v: Vec3

    def __post_init__(self):
        object.__setattr__(self, "delta_v", tuple(float(v) for v in self.delta_v))


HOVER = Action((0.0, 0.0, 0.0))


@dataclass(frozen=True)
class Plan:
    actions: tuple[Action, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "actions", tuple(self.actions))

    def __len__(self) -> int:
        return len(self.actions)

    def __add__(self, other: "Plan") -> "Plan":
        return Plan(self.actions + other.actions)

    @classmethod
    def hover(cls, k: int) -> "Plan":
        return cls((HOVER,) * k)


@dataclass(frozen=True)
class FailureMode:
    """Failure behaviour and its noise.

    ``sigma`` is the lateral position noise in m per sqrt(step). ``drag`` is the
    quadratic drag coefficient in kg/m and ``mass`` the body mass in kg.
    ``launch_point`` is only used by return-to-launch; ``None`` means the
    ground point below the failure position.
    """

    kind: FailureKind = FailureKind.DROP
    sigma: float = 0.0
    drag: float = 0.1
    descent_speed: float = 1.0
    mass: float = 1.0
    lateral_damping: float = 0.5
    launch_point: Vec3 | None = None

    def __post_init__(self):
        object.__setattr__(self, "kind", FailureKind(self.kind))
        if self.sigma < 0:
            raise ValueError("sigma must be non-negative")
        if self.descent_speed <= 0:
            raise ValueError("descent_speed must be positive")
        if self.mass <= 0:
            raise ValueError("mass must be positive")
        if self.drag < 0:
            raise ValueError("drag must be non-negative")
        if self.launch_point is not None:
            object.__setattr__(self, "launch_point", tuple(float(v) for v in self.launch_point))


@dataclass(frozen=True, eq=False)
class Trajectory:
    """Poses at consecutive time steps ``t_start, t_start + 1, ...``."""

    t_start: int
    points: np.ndarray
    velocities: np.ndarray | None = None
    mode: FailureKind | None = None

    def __post_init__(self):
        pts = np.ascontiguousarray(np.asarray(self.points, dtype=float).reshape(-1, 3))
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)

    def __len__(self) -> int:
        return len(self.points)

    def __eq__(self, other) -> bool:
        if not isinstance(other, Trajectory):
            return NotImplemented
        return (self.t_start == other.t_start and self.mode == other.mode
                and np.array_equal(self.points, other.points))

    __hash__ = None

    @property
    def t_stop(self) -> int:
        """Time of the last pose."""
        return self.t_start + len(self.points) - 1

    @property
    def poses(self) -> list[tuple[int, Vec3]]:
        return [(self.t_start + i, tuple(p)) for i, p in enumerate(self.points.tolist())]

    def at(self, t: int) -> np.ndarray:
        return self.points[t - self.t_start]

    def footprint(self, radius: float, cfg: StageConfig):
        return footprint_of_trajectory(self.points, self.t_start, radius, cfg)


def _norm(v: Sequence[float]) -> float:
    return math.sqrt(v[0] * v[0] + v[1] * v[1] + v[2] * v[2])


def step(
    state: DroneState, action: Action, dt: float, limits: KinematicLimits | None = None
) -> DroneState:
    """Advance one time step with semi-implicit Euler."""
    limits = limits or KinematicLimits()
    dv = action.delta_v
    if _norm(dv) > limits.dv_max(dt) + _TOL:
        raise InfeasibleActionError(
            f"|delta_v| = {_norm(dv):.6g} exceeds a_max*dt = {limits.dv_max(dt):.6g}"
        )
    v = state.velocity
    nv = (v[0] + dv[0], v[1] + dv[1], v[2] + dv[2])
    if _norm(nv) > limits.v_max + _TOL:
        raise InfeasibleActionError(f"speed {_norm(nv):.6g} exceeds v_max = {limits.v_max:.6g}")
    p = state.position
    np_ = (p[0] + nv[0] * dt, p[1] + nv[1] * dt, p[2] + nv[2] * dt)
    return replace(state, position=np_, velocity=nv)


def execute_plan(
    state: DroneState,
    plan: Plan,
    t_start: int,
    dt: float,
    limits: KinematicLimits | None = None,
) -> Trajectory:
    """Fold :func:`step` over the plan; returns all ``len(plan) + 1`` poses."""
    pts = [state.position]
    vels = [state.velocity]
    s = state
    for i, a in enumerate(plan.actions):
        try:
            s = step(s, a, dt, limits)
        except InfeasibleActionError as exc:
            raise InfeasibleActionError(str(exc), step_index=i) from None
        pts.append(s.position)
        vels.append(s.velocity)
    return Trajectory(t_start, np.array(pts), np.array(vels))


# ---------------------------------------------------------------------------
# failure simulation


def _drag_accel(v, k):
    s = math.sqrt(v[0] * v[0] + v[1] * v[1] + v[2] * v[2])
    return (-k * s * v[0], -k * s * v[1], -GRAVITY - k * s * v[2])


@lru_cache(maxsize=4096)
def _ballistic(pos: Vec3, vel: Vec3, k: float, dt: float, ground: float, z_top: float,
               max_steps: int, substeps: int) -> tuple[tuple[Vec3, ...], tuple[Vec3, ...]]:
    """Noise-free drop path at step resolution, RK4 with ``substeps`` per step."""
    h = dt / substeps
    x = list(pos)
    v = list(vel)
    xs = [tuple(x)]
    vs = [tuple(v)]
    for _ in range(max_steps):
        for _ in range(substeps):
            a1 = _drag_accel(v, k)
            v2 = [v[i] + 0.5 * h * a1[i] for i in range(3)]
            a2 = _drag_accel(v2, k)
            v3 = [v[i] + 0.5 * h * a2[i] for i in range(3)]
            a3 = _drag_accel(v3, k)
            v4 = [v[i] + h * a3[i] for i in range(3)]
            a4 = _drag_accel(v4, k)
            for i in range(3):
                x[i] += h / 6.0 * (v[i] + 2 * v2[i] + 2 * v3[i] + v4[i])
                v[i] += h / 6.0 * (a1[i] + 2 * a2[i] + 2 * a3[i] + a4[i])
        if x[2] <= ground:
            xs.append((x[0], x[1], ground))
            vs.append(tuple(v))
            break
        xs.append(tuple(x))
        vs.append(tuple(v))
        if x[2] >= z_top:
            break
    return tuple(xs), tuple(vs)


DROP_SUBSTEPS = 32


def simulate_failure(
    state: DroneState,
    mode: FailureMode,
    rng_seed,
    cfg: StageConfig,
    t_start: int = 0,
    limits: KinematicLimits | None = None,
) -> Trajectory:
    """Sample the trajectory of a drone that fails at ``t_start``.

    The path ends at ground contact (clamped to the ground plane), when the
    drone leaves the stage, or at the last step of the stage horizon.
    ``rng_seed`` is anything :func:`numpy.random.default_rng` accepts.
    """
    limits = limits or KinematicLimits()
    rng = np.random.default_rng(rng_seed)
    dt = cfg.dt
    ground = cfg.ground
    lo = cfg.origin
    hi = cfg.upper
    max_steps = max(cfg.t_last - 1 - t_start, 0)
    p0 = state.position
    sigma = mode.sigma

    def off_lateral(x, y):
        return not (lo[0] <= x < hi[0] and lo[1] <= y < hi[1])

    pts: list[Vec3] = [p0]
    if mode.kind is FailureKind.DROP:
        xs, _ = _ballistic(p0, state.velocity, mode.drag / mode.mass, dt, ground, hi[2],
                           max_steps, DROP_SUBSTEPS)
        ox = oy = 0.0
        for x, y, z in xs[1:]:
            if sigma > 0:
                ox += sigma * rng.standard_normal()
                oy += sigma * rng.standard_normal()
            pts.append((x + ox, y + oy, z))
            if off_lateral(x + ox, y + oy):
                break
    else:
        x, y, z = p0
        vx, vy = state.velocity[0], state.velocity[1]
        if mode.kind is FailureKind.RETURN_TO_LAUNCH:
            lp = mode.launch_point or (x, y, ground)
            homing = True
        else:
            homing = False
        k_desc = 0
        reach = limits.v_max * dt
        for _ in range(max_steps):
            if homing:
                gx, gy = lp[0] - x, lp[1] - y
                d = math.hypot(gx, gy)
                if d <= reach:
                    x, y = lp[0], lp[1]
                    homing = False
                else:
                    x += gx / d * reach
                    y += gy / d * reach
            else:
                vx *= mode.lateral_damping
                vy *= mode.lateral_damping
                x += vx * dt
                y += vy * dt
                k_desc += 1
                z = p0[2] - mode.descent_speed * dt * k_desc
            if sigma > 0:
                x += sigma * rng.standard_normal()
                y += sigma * rng.standard_normal()
            if z <= ground:
                pts.append((x, y, ground))
                break
            pts.append((x, y, z))
            if off_lateral(x, y):
                break
    return Trajectory(t_start, np.array(pts), mode=mode.kind)


# ---------------------------------------------------------------------------
# show generation


@dataclass(frozen=True)
class ShowParams:
    """Knobs of the synthetic light-show generator."""

    spacing: float = 3.0
    speed: float = 1.5
    hold_steps: tuple[int, int] = (4, 8)
    z_band: tuple[float, float] | None = None
    margin: float | None = None
    max_retries: int = 30


@dataclass
class Show:
    """An assigned formation plan: one plan per drone, all starting at ``t_start``."""

    cfg: StageConfig
    initial: dict[int, DroneState]
    plans: dict[int, Plan]
    launch_points: dict[int, Vec3]
    t_start: int
    limits: KinematicLimits = field(default_factory=KinematicLimits)
    _traj: dict[int, Trajectory] = field(default_factory=dict, repr=False)

    @property
    def ids(self) -> list[int]:
        return sorted(self.plans)

    def trajectory(self, drone_id: int) -> Trajectory:
        tr = self._traj.get(drone_id)
        if tr is None:
            tr = execute_plan(self.initial[drone_id], self.plans[drone_id], self.t_start,
                              self.cfg.dt, self.limits)
            self._traj[drone_id] = tr
        return tr

    def end_time(self, drone_id: int) -> int:
        return self.t_start + len(self.plans[drone_id])

    def state_at(self, drone_id: int, t: int) -> DroneState:
        tr = self.trajectory(drone_id)
        i = t - self.t_start
        return DroneState(drone_id, tuple(tr.points[i]), tuple(tr.velocities[i]))

    def plan_suffix(self, drone_id: int, t: int) -> Plan:
        return Plan(self.plans[drone_id].actions[t - self.t_start:])

    def footprint(self, drone_id: int, radius: float, t_lo: int | None = None,
                  t_hi: int | None = None):
        """Footprint of the assigned trajectory restricted to ``[t_lo, t_hi]``."""
        tr = self.trajectory(drone_id)
        a = 0 if t_lo is None else max(t_lo - self.t_start, 0)
        b = len(tr) - 1 if t_hi is None else min(t_hi - self.t_start, len(tr) - 1)
        if b < a:
            return footprint_of_trajectory(np.empty((0, 3)), 0, radius, self.cfg)
        return footprint_of_trajectory(tr.points[a:b + 1], self.t_start + a, radius, self.cfg)


def _lattice(cfg: StageConfig, params: ShowParams) -> np.ndarray:
    lo = np.asarray(cfg.origin)
    hi = np.asarray(cfg.upper)
    margin = params.margin if params.margin is not None else params.spacing
    if params.z_band is not None:
        zlo, zhi = params.z_band
    else:
        h = hi[2] - lo[2]
        zlo, zhi = lo[2] + 0.4 * h, lo[2] + 0.9 * h
    axes = []
    for a in range(2):
        axes.append(np.arange(lo[a] + margin, hi[a] - margin + 1e-9, params.spacing))
    axes.append(np.arange(zlo + 0.5, zhi - 0.5 + 1e-9, params.spacing))
    if any(len(ax) == 0 for ax in axes):
        return np.empty((0, 3))
    g = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, 3)
    return g


def _segment_tiles(starts: np.ndarray, vels: np.ndarray, move: int, hold: int, t0: int,
                   dt: float, radius: float, cfg: StageConfig) -> list[set]:
    out = []
    for p, v in zip(starts, vels):
        pts = [p + v * dt * k for k in range(move + 1)]
        pts += [pts[-1]] * hold
        out.append(set(footprint_of_trajectory(np.array(pts), t0, radius, cfg)))
    return out


def _tiles_disjoint(tile_sets: list[set]) -> bool:
    seen: set = set()
    total = 0
    for s in tile_sets:
        seen |= s
        total += len(s)
        if len(seen) != total:
            return False
    return True


def generate_show(
    n_drones: int,
    cfg: StageConfig,
    rng_seed,
    limits: KinematicLimits | None = None,
    radius: float = DEFAULT_RADIUS,
    params: ShowParams | None = None,
) -> Show:
    """Random collision-free show: constant-velocity moves between lattice formations.

    Each formation is a random subset of a spaced lattice shifted by a common
    offset; moves are assigned by minimum total squared distance and every
    drone arrives at the same step. A move whose footprints overlap is
    resampled, then replaced by a rigid translation, then by a hold.
    """
    limits = limits or KinematicLimits()
    params = params or ShowParams()
    rng = np.random.default_rng(rng_seed)
    dt = cfg.dt
    speed = min(params.speed, limits.v_max, limits.dv_max(dt))
    lattice = _lattice(cfg, params)
    if n_drones < 1 or len(lattice) < n_drones:
        raise ValueError(f"stage too small for {n_drones} drones ({len(lattice)} lattice slots)")
    lo = np.asarray(cfg.origin)
    hi = np.asarray(cfg.upper)

    def inside(pts: np.ndarray) -> bool:
        return bool(np.all(pts - radius >= lo) and np.all(pts + radius < hi))

    def random_formation(ref: np.ndarray | None) -> np.ndarray:
        idx = rng.choice(len(lattice), size=n_drones, replace=False)
        pts = lattice[np.sort(idx)]
        shift = rng.uniform(-1.0, 1.0, size=3)
        cand = pts + shift
        return cand if inside(cand) else pts

    pos = random_formation(None)
    horizon = cfg.t_last - 1 - cfg.t_first
    actions: list[list[Action]] = [[] for _ in range(n_drones)]
    initial = {i: DroneState(i, tuple(pos[i])) for i in range(n_drones)}
    launch = {i: (float(pos[i][0]), float(pos[i][1]), cfg.ground) for i in range(n_drones)}
    t = 0
    first_hold = int(rng.integers(params.hold_steps[0], params.hold_steps[1] + 1))
    for a in actions:
        a.extend([HOVER] * first_hold)
    t += first_hold
    while t < horizon:
        hold = int(rng.integers(params.hold_steps[0], params.hold_steps[1] + 1))
        chosen = None
        for attempt in range(params.max_retries + 2):
            if attempt < params.max_retries:
                target = random_formation(pos)
                cost = ((pos[:, None, :] - target[None, :, :]) ** 2).sum(-1)
                _, col = linear_sum_assignment(cost)
                target = target[col]
            elif attempt == params.max_retries:
                shift = rng.uniform(-params.spacing, params.spacing, size=3)
                target = pos + shift
                if not inside(target):
                    continue
            else:
                target = pos.copy()
            d = np.linalg.norm(target - pos, axis=1)
            move = max(1, int(math.ceil(d.max() / (speed * dt) - 1e-12)))
            vels = (target - pos) / (move * dt)
            tiles = _segment_tiles(pos, vels, move, hold, cfg.t_first + t, dt, radius, cfg)
            if _tiles_disjoint(tiles):
                chosen = (move, vels)
                break
        move, vels = chosen
        for i in range(n_drones):
            v = tuple(vels[i])
            seq = [Action(v)] + [HOVER] * (move - 1) + [Action(tuple(-x for x in v))]
            seq += [HOVER] * (hold - 1)
            actions[i].extend(seq)
        pos = pos + vels * move * dt
        t += move + hold
    plans = {i: Plan(tuple(a[:horizon])) for i, a in enumerate(actions)}
    return Show(cfg, initial, plans, launch, cfg.t_first, limits)
