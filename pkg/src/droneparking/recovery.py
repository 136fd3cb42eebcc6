"""Recovery after an incident: refill vacant show slots with hidden drones."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np
from scipy.optimize import linear_sum_assignment

from .dynamics import HOVER, Action, DroneState, KinematicLimits, Plan, Show, Status, execute_plan
from .errors import PlannerCapacityError
from .grid import DEFAULT_RADIUS, StageConfig
from .planner import EvacuationPlan, FormationPlan, assemble_formation

Vec3 = tuple[float, float, float]


@dataclass(frozen=True)
class Vacancy:
    """A show slot whose drone is missing, to be taken over at ``t_resume``.

    ``approach`` is the slot position one step before ``t_resume``; the
    replacement waits there at rest and joins with a single action.
    """

    drone_id: int
    t_resume: int
    position: Vec3
    velocity: Vec3
    approach: Vec3
    suffix: Plan


@dataclass
class RecoveryAssignment:
    pairs: dict[int, Vacancy] = field(default_factory=dict)
    unfilled: list[Vacancy] = field(default_factory=list)
    total_distance: float = 0.0


def find_vacancies(show: Show, missing: Iterable[int], t_resume: int) -> list[Vacancy]:
    """One vacancy per missing drone whose assigned plan runs past ``t_resume``."""
    out = []
    for i in sorted(set(missing)):
        if show.end_time(i) <= t_resume or t_resume <= show.t_start:
            continue
        st = show.state_at(i, t_resume)
        prev = show.state_at(i, t_resume - 1)
        out.append(Vacancy(i, t_resume, st.position, st.velocity, prev.position,
                           show.plan_suffix(i, t_resume)))
    return out


def assign_hidden(hidden: Sequence[DroneState], vacancies: Sequence[Vacancy]) -> RecoveryAssignment:
    """Minimum total Euclidean distance matching of hidden drones to vacancies."""
    hidden = sorted(hidden, key=lambda d: d.id)
    vacancies = sorted(vacancies, key=lambda v: v.drone_id)
    out = RecoveryAssignment()
    if not hidden or not vacancies:
        out.unfilled = list(vacancies)
        return out
    H = np.array([d.position for d in hidden], dtype=float)
    V = np.array([v.position for v in vacancies], dtype=float)
    cost = np.linalg.norm(H[:, None, :] - V[None, :, :], axis=2)
    rows, cols = linear_sum_assignment(cost)
    used = set()
    for r, c in sorted(zip(rows.tolist(), cols.tolist())):
        out.pairs[hidden[r].id] = vacancies[c]
        out.total_distance += float(cost[r, c])
        used.add(c)
    out.unfilled = [v for j, v in enumerate(vacancies) if j not in used]
    return out


def speed_profile(distance: float, dt: float, limits: KinematicLimits) -> list[float]:
    """Fewest-step speed sequence covering ``distance`` along a line from rest.

    Speeds change by at most ``a_max * dt`` per step, never exceed ``v_max``,
    and the last one is small enough to brake to rest in one step.
    """
    if distance <= 0.0:
        return []
    A = limits.dv_max(dt)
    n = 0
    while True:
        n += 1
        prof = [min(k * A, (n - k + 1) * A, limits.v_max) for k in range(1, n + 1)]
        reach = dt * math.fsum(prof)
        if reach >= distance:
            scale = distance / reach
            return [s * scale for s in prof]


def travel_steps(distance: float, dt: float, limits: KinematicLimits) -> int:
    """Steps to move ``distance`` from rest and be at rest again (0 when already there)."""
    prof = speed_profile(distance, dt, limits)
    return len(prof) + 1 if prof else 0


def straight_line_actions(start: Sequence[float], goal: Sequence[float], dt: float,
                          limits: KinematicLimits) -> list[Action]:
    """Actions flying from rest at ``start`` to rest at ``goal`` in minimum time."""
    p0 = np.asarray(start, dtype=float)
    d = np.asarray(goal, dtype=float) - p0
    dist = float(np.linalg.norm(d))
    prof = speed_profile(dist, dt, limits)
    if not prof:
        return []
    u = d / dist
    acts = []
    prev = 0.0
    for s in prof:
        acts.append(Action(tuple(((s - prev) * u).tolist())))
        prev = s
    acts.append(Action(tuple((-prev * u).tolist())))
    return acts


def stop_actions(velocity: Sequence[float], dt: float, limits: KinematicLimits) -> list[Action]:
    """Brake to rest as fast as the acceleration limit allows."""
    v = np.asarray(velocity, dtype=float)
    A = limits.dv_max(dt)
    acts = []
    while True:
        n = float(np.linalg.norm(v))
        if n == 0.0:
            return acts
        dv = -v if n <= A else -v * (A / n)
        acts.append(Action(tuple(dv.tolist())))
        v = v + dv
        if n <= A:
            return acts


def recovery_schedule(
    show: Show,
    hidden: Sequence[DroneState],
    missing: Iterable[int],
    t_start: int,
    limits: KinematicLimits | None = None,
    t_limit: int | None = None,
) -> tuple[int, list[Vacancy], RecoveryAssignment]:
    """Common resume time, vacancies and matching.

    ``t_resume`` is the earliest time at which every matched drone can fly
    from rest to its slot's approach point, wait, and join with one action.
    The matching depends on where slots are at ``t_resume``, so the two are
    iterated until they agree.
    """
    limits = limits or KinematicLimits()
    dt = show.cfg.dt
    A = limits.dv_max(dt)
    missing = sorted(set(missing))
    t_limit = show.cfg.t_last - 1 if t_limit is None else t_limit
    pos = {d.id: np.asarray(d.position, dtype=float) for d in hidden}
    t_r = t_start + 1
    while True:
        vac = find_vacancies(show, missing, t_r)
        asg = assign_hidden(hidden, vac)
        if t_r >= t_limit or not asg.pairs:
            return t_r, vac, asg
        if any(math.sqrt(sum(c * c for c in v.velocity)) > A + 1e-12 for v in asg.pairs.values()):
            t_r += 1
            continue
        need = max(
            travel_steps(float(np.linalg.norm(np.asarray(v.approach) - pos[h])), dt, limits)
            for h, v in asg.pairs.items()
        )
        if t_start + need + 1 <= t_r:
            return t_r, vac, asg
        t_r = t_start + need + 1


def _recovery_plan(drone: DroneState, vac: Vacancy, t_start: int, delay: int, cfg: StageConfig,
                   limits: KinematicLimits) -> Plan | None:
    move = straight_line_actions(drone.position, vac.approach, cfg.dt, limits)
    wait = vac.t_resume - 1 - t_start - delay - len(move)
    if wait < 0:
        return None
    acts = [HOVER] * delay + move + [HOVER] * wait + [Action(vac.velocity)]
    return Plan(tuple(acts))


def plan_recovery(
    assignment: RecoveryAssignment,
    hidden: Mapping[int, DroneState],
    t_start: int,
    cfg: StageConfig,
    limits: KinematicLimits | None = None,
    radius: float = DEFAULT_RADIUS,
    reserved: Iterable | None = None,
    strict: bool = False,
) -> FormationPlan:
    """Collision-free plans bringing each matched hidden drone into its slot.

    Flight happens after the incident, where no tile carries fall risk, so
    every plan has ``psafe = 1``. A drone blocked by reserved tiles departs
    later; it fails with a capacity error when no departure delay works.
    """
    limits = limits or KinematicLimits()
    if not assignment.pairs:
        return FormationPlan()

    def solo(drone: DroneState, blocked) -> EvacuationPlan:
        vac = assignment.pairs[drone.id]
        delay = 0
        while True:
            plan = _recovery_plan(drone, vac, t_start, delay, cfg, limits)
            if plan is None:
                raise PlannerCapacityError(
                    drone.id, f"cannot reach slot of drone {vac.drone_id} by t={vac.t_resume}"
                )
            traj = execute_plan(drone, plan, t_start, cfg.dt, limits)
            ev = EvacuationPlan(drone.id, plan, t_start, vac.position, vac.t_resume, 0.0, 1.0, traj)
            if not blocked or blocked.isdisjoint(ev.footprint(radius, cfg)):
                return ev
            delay += 1

    drones = [hidden[i] for i in sorted(assignment.pairs)]
    return assemble_formation(drones, solo, radius, cfg, reserved=reserved, strict=strict)


@dataclass
class ResumeResult:
    statuses: dict[int, Status]
    states: dict[int, DroneState]
    plans: dict[int, Plan]
    slots: dict[int, int]

    @property
    def active_count(self) -> int:
        return sum(1 for s in self.statuses.values() if s is Status.ACTIVE)


def resume_show(
    assignment: RecoveryAssignment,
    show: Show,
    t_resume: int,
    statuses: Mapping[int, Status],
    delivered: Iterable[int] | None = None,
) -> ResumeResult:
    """Activate matched hidden drones in their new slots from ``t_resume``.

    Each activated drone takes the missing drone's exact state at
    ``t_resume`` and the rest of its assigned plan. ``delivered`` restricts
    activation to drones whose recovery plan succeeded.
    """
    new = dict(statuses)
    states: dict[int, DroneState] = {}
    plans: dict[int, Plan] = {}
    slots: dict[int, int] = {}
    ok = set(assignment.pairs) if delivered is None else set(delivered)
    for h in sorted(assignment.pairs):
        if h not in ok:
            continue
        vac = assignment.pairs[h]
        st = show.state_at(vac.drone_id, t_resume)
        states[h] = DroneState(h, st.position, st.velocity, Status.ACTIVE)
        plans[h] = show.plan_suffix(vac.drone_id, t_resume)
        slots[h] = vac.drone_id
        new[h] = Status.ACTIVE
    return ResumeResult(new, states, plans, slots)
