"""Scenarios, end-to-end incident simulation, baselines and batch evaluation.

One incident runs: show up to ``t0`` -> failures injected -> rollout
prediction -> occupancy and zones -> evacuee selection -> evacuation
strategy -> ground-truth falls with cascading hits -> recovery. The
ground truth draws from its own seed stream, so the plan never sees it.
"""

from __future__ import annotations

import heapq
import json
import logging
import math
import multiprocessing as mp
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Any, Iterable, Mapping, Sequence

import numpy as np
from scipy.stats import binomtest

from . import kernels
from .dynamics import (
    FAILURE_KINDS,
    HOVER,
    DroneState,
    FailureKind,
    FailureMode,
    KinematicLimits,
    Plan,
    Show,
    ShowParams,
    Status,
    Action,
    Trajectory,
    execute_plan,
    generate_show,
    simulate_failure,
)
from .errors import DroneParkingError, ScenarioError
from .grid import DEFAULT_RADIUS, StageConfig, footprint_of_trajectory
from .occupancy import (
    IncidentZones,
    OccupancyField,
    combine_occupancy,
    compute_zones,
    estimate_occupancy,
    safe_probability,
)
from .planner import FormationPlan, PlannerSettings, assemble_formation, plan_evacuation, select_evacuees
from .predictor import PhysicsEnsemblePredictor, PoseHistory
from .recovery import (
    RecoveryAssignment,
    ResumeResult,
    plan_recovery,
    recovery_schedule,
    resume_show,
    stop_actions,
    straight_line_actions,
)

log = logging.getLogger(__name__)

SCHEMA_VERSION = 1
STRATEGIES = ("planner", "hover", "straight_to_park", "ignore")
BASELINES = ("hover", "straight_to_park", "ignore")
STREAMS = {"show": 1, "inject": 2, "predict": 3, "truth": 4, "truth_eval": 5, "planner": 6,
           "scenario": 7}
UNKNOWN = "unknown"


def derive_seed(master: int, stream: str, *extra: int) -> int:
    """Independent 64-bit seed for a named stream."""
    ss = np.random.SeedSequence([int(master), STREAMS[stream], *[int(e) for e in extra]])
    return int(ss.generate_state(1, np.uint64)[0])


# ---------------------------------------------------------------------------
# scenario spec


def _mode_to_json(m: FailureMode | None):
    if m is None:
        return UNKNOWN
    d = asdict(m)
    d["kind"] = m.kind.value
    if d["launch_point"] is None:
        del d["launch_point"]
    return d


def _mode_from_json(x) -> FailureMode | None:
    if x is None or x == UNKNOWN:
        return None
    if isinstance(x, str):
        return FailureMode(FailureKind(x))
    return FailureMode(**x)


@dataclass
class FailureSpec:
    """Injected failures at ``t0``: explicit ``ids`` or a random ``count``.

    ``modes`` maps drone ids to a known failure mode; other drones use
    ``default_mode``. ``None`` means unknown: the predictor uses its prior and
    the ground truth samples a mode from ``truth_prior``.
    """

    t0: int
    ids: list[int] | None = None
    count: int | None = None
    modes: dict[int, FailureMode | None] = field(default_factory=dict)
    default_mode: FailureMode | None = None
    truth_prior: dict[str, float] | None = None

    def to_dict(self) -> dict:
        return {
            "t0": self.t0,
            "ids": self.ids,
            "count": self.count,
            "modes": {str(k): _mode_to_json(v) for k, v in sorted(self.modes.items())},
            "default_mode": _mode_to_json(self.default_mode),
            "truth_prior": self.truth_prior,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "FailureSpec":
        return cls(
            t0=int(d["t0"]),
            ids=None if d.get("ids") is None else [int(i) for i in d["ids"]],
            count=None if d.get("count") is None else int(d["count"]),
            modes={int(k): _mode_from_json(v) for k, v in (d.get("modes") or {}).items()},
            default_mode=_mode_from_json(d.get("default_mode", UNKNOWN)),
            truth_prior=d.get("truth_prior"),
        )


@dataclass
class PredictorSpec:
    history: int = 8
    rollouts: int = 1000
    prior: dict[str, float] = field(default_factory=lambda: {k.value: 1.0 for k in FAILURE_KINDS})
    sigma: float = 0.15
    least_squares: bool = False


@dataclass
class ScenarioSpec:
    """Everything that defines one incident. Serialized as versioned JSON."""

    failure: FailureSpec
    stage: StageConfig = field(default_factory=StageConfig)
    limits: KinematicLimits = field(default_factory=KinematicLimits)
    radius: float = DEFAULT_RADIUS
    n_drones: int = 50
    show_seed: int | None = None
    show_params: ShowParams = field(default_factory=ShowParams)
    show_drones: list[dict] | None = None
    spares: list[tuple[float, float, float]] = field(default_factory=list)
    predictor: PredictorSpec = field(default_factory=PredictorSpec)
    planner: PlannerSettings = field(default_factory=PlannerSettings)
    alpha: dict[int, float] = field(default_factory=dict)
    parking_band: tuple[int, int] | None = None
    expected_hit_samples: int = 200
    seed: int = 0
    truth_seed: int | None = None
    schema_version: int = SCHEMA_VERSION

    def to_dict(self) -> dict:
        sp = asdict(self.show_params)
        sp["hold_steps"] = list(sp["hold_steps"])
        return {
            "schema_version": self.schema_version,
            "stage": self.stage.to_dict(),
            "limits": asdict(self.limits),
            "radius": self.radius,
            "show": {
                "n_drones": self.n_drones,
                "seed": self.show_seed,
                "params": sp,
                "drones": self.show_drones,
            },
            "spares": [list(p) for p in self.spares],
            "failure": self.failure.to_dict(),
            "predictor": asdict(self.predictor),
            "planner": {**self.planner.to_dict(),
                        "alpha": {str(k): v for k, v in sorted(self.alpha.items())}},
            "parking_band": None if self.parking_band is None else list(self.parking_band),
            "expected_hit_samples": self.expected_hit_samples,
            "seed": self.seed,
            "truth_seed": self.truth_seed,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2)

    @classmethod
    def from_dict(cls, d: Mapping) -> "ScenarioSpec":
        try:
            version = int(d.get("schema_version", SCHEMA_VERSION))
            if version != SCHEMA_VERSION:
                raise ScenarioError(f"unsupported schema_version {version}")
            show = dict(d.get("show") or {})
            params = dict(show.get("params") or {})
            if "hold_steps" in params:
                params["hold_steps"] = tuple(params["hold_steps"])
            if params.get("z_band") is not None:
                params["z_band"] = tuple(params["z_band"])
            planner = dict(d.get("planner") or {})
            alpha = {int(k): float(v) for k, v in (planner.pop("alpha", None) or {}).items()}
            band = d.get("parking_band")
            spec = cls(
                failure=FailureSpec.from_dict(d["failure"]),
                stage=StageConfig.from_dict(d["stage"]) if d.get("stage") else StageConfig(),
                limits=KinematicLimits(**(d.get("limits") or {})),
                radius=float(d.get("radius", DEFAULT_RADIUS)),
                n_drones=int(show.get("n_drones", 50)),
                show_seed=show.get("seed"),
                show_params=ShowParams(**params),
                show_drones=show.get("drones"),
                spares=[tuple(float(v) for v in p) for p in d.get("spares") or []],
                predictor=PredictorSpec(**(d.get("predictor") or {})),
                planner=PlannerSettings(**planner),
                alpha=alpha,
                parking_band=None if band is None else (int(band[0]), int(band[1])),
                expected_hit_samples=int(d.get("expected_hit_samples", 200)),
                seed=int(d.get("seed", 0)),
                truth_seed=d.get("truth_seed"),
                schema_version=version,
            )
        except ScenarioError:
            raise
        except (KeyError, TypeError, ValueError) as exc:
            raise ScenarioError(f"invalid scenario: {exc}") from exc
        return spec

    @classmethod
    def from_json(cls, text: str) -> "ScenarioSpec":
        try:
            d = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ScenarioError(f"scenario is not valid JSON: {exc}") from exc
        if not isinstance(d, dict):
            raise ScenarioError("scenario must be a JSON object")
        return cls.from_dict(d)

    @classmethod
    def load(cls, path) -> "ScenarioSpec":
        try:
            with open(path) as fh:
                text = fh.read()
        except OSError as exc:
            raise ScenarioError(f"cannot read scenario {path}: {exc}") from exc
        return cls.from_json(text)

    def with_seed(self, seed: int) -> "ScenarioSpec":
        d = self.to_dict()
        d["seed"] = int(seed)
        return ScenarioSpec.from_dict(d)


def random_scenario(
    seed: int,
    n_drones: int | tuple[int, int] = (30, 60),
    failures: int | tuple[int, int] = (1, 6),
    t0: int | tuple[int, int] = (8, 40),
    spares: int | tuple[int, int] = (0, 4),
    **overrides: Any,
) -> ScenarioSpec:
    """Seeded mixed scenario; each argument is a fixed value or an inclusive range."""
    rng = np.random.default_rng(derive_seed(seed, "scenario"))

    def pick(x):
        return int(x) if isinstance(x, int) else int(rng.integers(x[0], x[1] + 1))

    n = pick(n_drones)
    k = min(pick(failures), n)
    cfg = overrides.pop("stage", StageConfig())
    corners = [(0.5, 0.5), (cfg.extent[0] - 0.5, 0.5), (0.5, cfg.extent[1] - 0.5),
               (cfg.extent[0] - 0.5, cfg.extent[1] - 0.5)]
    z = cfg.origin[2] + 1.5 * cfg.cell_size
    sp = [(cfg.origin[0] + x * cfg.cell_size, cfg.origin[1] + y * cfg.cell_size, z)
          for x, y in corners[: pick(spares)]]
    spec = ScenarioSpec(
        failure=FailureSpec(t0=pick(t0), count=k),
        stage=cfg,
        n_drones=n,
        spares=sp,
        seed=int(seed),
    )
    for key, val in overrides.items():
        setattr(spec, key, val)
    return spec


# ---------------------------------------------------------------------------
# incident preparation (shared by every strategy)


def _show_from_drones(drones: list[dict], cfg: StageConfig, limits: KinematicLimits) -> Show:
    initial, plans, launch = {}, {}, {}
    for d in drones:
        i = int(d["id"])
        initial[i] = DroneState(i, d["position"], d.get("velocity", (0.0, 0.0, 0.0)))
        plans[i] = Plan(tuple(Action(a) for a in d.get("actions", [])))
        launch[i] = (float(d["position"][0]), float(d["position"][1]), cfg.ground)
    return Show(cfg, initial, plans, launch, cfg.t_first, limits)


@dataclass
class Incident:
    """Strategy-independent state of one scenario: prediction, zones, truth samples."""

    spec: ScenarioSpec
    show: Show
    cfg: StageConfig
    t0: int
    failing: list[int]
    states: dict[int, DroneState]
    spares: dict[int, DroneState]
    fields: dict[int, OccupancyField]
    combined: OccupancyField
    zones: IncidentZones | None
    evacuees: list[int]
    truth: dict[int, Any]
    eval_tiles: list[list]
    band: tuple[int, int]
    timings: dict[str, float] = field(default_factory=dict)

    @property
    def t_end(self) -> int:
        return self.zones.t_end if self.zones is not None else self.t0

    @property
    def truth_master(self) -> int:
        return self.spec.seed if self.spec.truth_seed is None else int(self.spec.truth_seed)

    def predictor_for(self, drone_id: int) -> PhysicsEnsemblePredictor:
        spec = self.spec
        known = spec.failure.modes.get(drone_id, spec.failure.default_mode)
        lp = {drone_id: self.show.launch_points[drone_id]}
        if known is not None:
            return PhysicsEnsemblePredictor(self.cfg, {known.kind: 1.0}, {known.kind: known},
                                            spec.limits, lp, spec.predictor.least_squares)
        modes = {k: FailureMode(k, sigma=spec.predictor.sigma) for k in FAILURE_KINDS}
        return PhysicsEnsemblePredictor(self.cfg, spec.predictor.prior, modes, spec.limits, lp,
                                        spec.predictor.least_squares)

    def truth_trajectory(self, drone_id: int, seed: int):
        """One ground-truth failure trajectory of an injected drone."""
        spec = self.spec
        rng = np.random.default_rng(seed)
        known = spec.failure.modes.get(drone_id, spec.failure.default_mode)
        pred = self.predictor_for(drone_id)
        if known is None:
            prior = spec.failure.truth_prior or spec.predictor.prior
            pred = PhysicsEnsemblePredictor(self.cfg, prior, pred.modes, spec.limits,
                                            pred.launch_points)
            kind = pred.sample_kind(rng)
        else:
            kind = known.kind
        mode = pred.mode_for(kind, drone_id)
        sub = int(rng.integers(0, 2**63 - 1))
        return simulate_failure(self.states[drone_id], mode, sub, self.cfg, self.t0, spec.limits)


def _validate(spec: ScenarioSpec, show: Show, failing: Sequence[int]):
    cfg = spec.stage
    t0 = spec.failure.t0
    if not cfg.t_first <= t0 < cfg.t_last:
        raise ScenarioError(f"t0={t0} outside [{cfg.t_first}, {cfg.t_last})")
    if t0 < show.t_start + 1:
        raise ScenarioError("t0 leaves no pose history before the failure")
    missing = sorted(set(failing) - set(show.ids))
    if missing:
        raise ScenarioError(f"injected ids do not exist: {missing}")
    if spec.failure.count is not None and spec.failure.count > len(show.ids):
        raise ScenarioError("failure count exceeds drone count")
    if spec.predictor.history < 2:
        raise ScenarioError("predictor history must be >= 2 poses")
    if spec.predictor.rollouts < 1:
        raise ScenarioError("predictor needs at least one rollout")
    for p in spec.spares:
        if not cfg.contains_point(p):
            raise ScenarioError(f"spare position {p} is off-stage")


def default_band(show: Show, radius: float) -> tuple[int, int]:
    """Cell layers strictly between the ground layer and the lowest show layer."""
    cfg = show.cfg
    zmin = min(float(show.trajectory(i).points[:, 2].min()) for i in show.ids)
    iz = int(math.floor((zmin - radius - cfg.origin[2]) / cfg.cell_size))
    return (1, max(2, iz - 1))


def prepare_incident(spec: ScenarioSpec) -> Incident:
    """Run everything that does not depend on the evacuation strategy."""
    tic = time.perf_counter()
    cfg = spec.stage
    try:
        if spec.show_drones is not None:
            show = _show_from_drones(spec.show_drones, cfg, spec.limits)
        else:
            seed = spec.show_seed if spec.show_seed is not None else derive_seed(spec.seed, "show")
            show = generate_show(spec.n_drones, cfg, seed, spec.limits, spec.radius, spec.show_params)
    except (ValueError, KeyError, TypeError) as exc:
        raise ScenarioError(f"cannot build show: {exc}") from exc
    f = spec.failure
    if f.ids is not None:
        failing = sorted(set(f.ids))
    elif f.count:
        if f.count > len(show.ids):
            raise ScenarioError("failure count exceeds drone count")
        rng = np.random.default_rng(derive_seed(spec.seed, "inject"))
        failing = sorted(int(i) for i in rng.choice(show.ids, size=f.count, replace=False))
    else:
        failing = []
    _validate(spec, show, failing)
    t0 = f.t0
    states = {i: show.state_at(i, min(t0, show.end_time(i))) for i in show.ids}
    for i in show.ids:
        if show.end_time(i) < t0:
            states[i] = DroneState(i, states[i].position, (0.0, 0.0, 0.0))
    spare_ids = range(max(show.ids) + 1, max(show.ids) + 1 + len(spec.spares))
    spares = {i: DroneState(i, p, (0.0, 0.0, 0.0), Status.HIDDEN)
              for i, p in zip(spare_ids, spec.spares)}
    band = spec.parking_band or default_band(show, spec.radius)

    inc = Incident(spec, show, cfg, t0, failing, states, spares, {}, OccupancyField(), None, [],
                   {}, [], band)
    fields = {}
    for i in failing:
        tr = show.trajectory(i)
        lo = max(t0 - spec.predictor.history + 1, show.t_start)
        pts = tr.points[lo - show.t_start: min(t0, tr.t_stop) - show.t_start + 1]
        if len(pts) < 2:
            raise ScenarioError(f"drone {i}: not enough pose history before t0")
        hist = PoseHistory(i, lo, pts)
        rs = inc.predictor_for(i).predict_rollouts(hist, spec.predictor.rollouts,
                                                   derive_seed(spec.seed, "predict", i))
        fields[i] = estimate_occupancy(rs, spec.radius, cfg, hist)
    inc.timings["predict"] = time.perf_counter() - tic
    inc.fields = fields
    if fields:
        inc.combined = combine_occupancy(fields)
        inc.zones = compute_zones(fields, cfg, t0, band)
        alive = [i for i in show.ids if i not in set(failing)]
        inc.evacuees = sorted(select_evacuees(show, inc.zones.hit_zone, t0, spec.radius, alive))
    inc.truth = {i: inc.truth_trajectory(i, derive_seed(inc.truth_master, "truth", i))
                 for i in failing}
    geom = cfg.geom(spec.radius)
    for m in range(spec.expected_hit_samples if failing else 0):
        tiles = []
        for i in failing:
            tr = inc.truth_trajectory(i, derive_seed(inc.truth_master, "truth_eval", m, i))
            tiles.extend(kernels.trajectory_tiles(tr.points, tr.t_start, geom))
        inc.eval_tiles.append(tiles)
    inc.timings["prepare"] = time.perf_counter() - tic
    return inc


# ---------------------------------------------------------------------------
# strategies


def _hover_plan(state: DroneState, t0: int, t_end: int, inc: Incident) -> Plan:
    acts = stop_actions(state.velocity, inc.cfg.dt, inc.spec.limits)
    acts += [HOVER] * max(t_end - t0 - len(acts), 0)
    return Plan(tuple(acts))


def _straight_to_park(inc: Incident) -> dict[int, Plan]:
    cfg = inc.cfg
    limits = inc.spec.limits
    t0, t_end = inc.t0, inc.t_end
    geom = cfg.geom(inc.spec.radius)
    taken = set()
    for s in inc.spares.values():
        taken.update(kernels.ball_cells(*s.position, geom))
    cells = sorted(inc.zones.parking_space)
    centers = np.array([cfg.cell_center(c) for c in cells]) if cells else np.empty((0, 3))
    plans = {}
    for i in inc.evacuees:
        st = inc.states[i]
        stop = stop_actions(st.velocity, cfg.dt, limits)
        p = execute_plan(st, Plan(tuple(stop)), t0, cfg.dt, limits).points[-1]
        avail = [k for k, c in enumerate(cells) if c not in taken]
        if not avail:
            plans[i] = _hover_plan(st, t0, t_end, inc)
            continue
        d = np.linalg.norm(centers[avail] - p, axis=1)
        k = avail[int(np.argmin(d))]
        taken.add(cells[k])
        acts = stop + straight_line_actions(p, centers[k], cfg.dt, limits)
        acts += [HOVER] * max(t_end - t0 - len(acts), 0)
        plans[i] = Plan(tuple(acts))
    return plans


def _tiles_between(show: Show, ids: Iterable[int], radius: float, t_lo: int, t_hi: int,
                   geom: tuple) -> set:
    out: set = set()
    for i in ids:
        out.update(show.footprint(i, radius, t_lo, t_hi))
        end = show.end_time(i)
        if end < t_hi:
            p = show.trajectory(i).points[-1]
            cells = kernels.ball_cells(p[0], p[1], p[2], geom)
            out.update((c[0], c[1], c[2], t) for t in range(max(end, t_lo), t_hi + 1) for c in cells)
    return out


def _hover_tiles(positions: Iterable, t_lo: int, t_hi: int, geom: tuple) -> set:
    out = set()
    for p in positions:
        cells = kernels.ball_cells(p[0], p[1], p[2], geom)
        out.update((c[0], c[1], c[2], t) for t in range(t_lo, t_hi + 1) for c in cells)
    return out


def _planner(inc: Incident) -> FormationPlan:
    spec = inc.spec
    t0, t_end = inc.t0, inc.t_end
    geom = inc.cfg.geom(spec.radius)
    others = [i for i in inc.show.ids if i not in set(inc.evacuees) | set(inc.failing)]
    reserved = _tiles_between(inc.show, others, spec.radius, t0, t_end, geom)
    reserved |= _hover_tiles([s.position for s in inc.spares.values()], t0, t_end, geom)

    def solo(drone: DroneState, blocked):
        return plan_evacuation(drone, t0, inc.zones, inc.combined, inc.cfg,
                               derive_seed(spec.seed, "planner", drone.id), spec.planner,
                               spec.limits, spec.radius, blocked)

    drones = [inc.states[i] for i in inc.evacuees]
    return assemble_formation(drones, solo, spec.radius, inc.cfg, spec.alpha, reserved,
                              strict=False)


# ---------------------------------------------------------------------------
# reports


@dataclass
class Metrics:
    expected_hits: float = 0.0
    realized_hits: int = 0
    cascade_count: int = 0
    score: float = 0.0
    fill_ratio: float = 1.0

    def __post_init__(self):
        if not 0.0 <= self.fill_ratio <= 1.0:
            raise ValueError("fill_ratio must lie in [0, 1]")
        if self.expected_hits < 0 or self.realized_hits < 0:
            raise ValueError("hit counts must be non-negative")


@dataclass
class IncidentReport:
    """Outcome of one incident under one strategy.

    ``formation``, ``recovery_plan``, ``incident``, ``assignment``,
    ``hidden``, ``resume`` and ``timings`` are kept for inspection but are
    not part of the exported JSON, which is deterministic for a given
    scenario.
    """

    strategy: str
    seed: int
    t0: int
    t_end: int
    t_recovery: int | None
    t_resume: int | None
    injected: list[int]
    evacuees: list[int]
    evacuated: int
    active_at_t0: int
    hits: dict[int, int]
    hit_by: dict[int, int]
    metrics: Metrics
    plans: dict[int, dict]
    capacity_failures: dict[int, str]
    outcomes: dict[int, str]
    recovery: dict
    formation: FormationPlan | None = field(default=None, repr=False)
    recovery_plan: FormationPlan | None = field(default=None, repr=False)
    incident: Incident | None = field(default=None, repr=False)
    assignment: RecoveryAssignment | None = field(default=None, repr=False)
    hidden: dict[int, DroneState] = field(default_factory=dict, repr=False)
    resume: ResumeResult | None = field(default=None, repr=False)
    timings: dict[str, float] = field(default_factory=dict, repr=False)

    @property
    def not_evacuated(self) -> int:
        return self.active_at_t0 - self.evacuated

    def to_dict(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "strategy": self.strategy,
            "seed": self.seed,
            "t0": self.t0,
            "t_end": self.t_end,
            "t_recovery": self.t_recovery,
            "t_resume": self.t_resume,
            "injected": self.injected,
            "evacuees": self.evacuees,
            "counts": {
                "active_at_t0": self.active_at_t0,
                "evacuated": self.evacuated,
                "not_evacuated": self.not_evacuated,
            },
            "hits": {str(k): v for k, v in sorted(self.hits.items())},
            "hit_by": {str(k): v for k, v in sorted(self.hit_by.items())},
            "metrics": asdict(self.metrics),
            "plans": {str(k): v for k, v in sorted(self.plans.items())},
            "capacity_failures": {str(k): v for k, v in sorted(self.capacity_failures.items())},
            "outcomes": {str(k): v for k, v in sorted(self.outcomes.items())},
            "recovery": self.recovery,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2)


# ---------------------------------------------------------------------------
# execution against ground truth


def _extend(points: np.ndarray, vels: np.ndarray, n: int) -> tuple[np.ndarray, np.ndarray]:
    """Truncate or pad by hovering so there are exactly ``n`` poses."""
    if len(points) >= n:
        return points[:n], vels[:n]
    k = n - len(points)
    return (np.vstack([points, np.repeat(points[-1:], k, axis=0)]),
            np.vstack([vels, np.zeros((k, 3))]))


def _cascade(inc: Incident, real: dict, index: dict, geom: tuple):
    """Time-ordered ground-truth hits; each hit drone starts its own drop."""
    heap: list = []
    falls = list(inc.truth.values())

    def push(tr, src):
        for tile in kernels.trajectory_tiles(tr.points, tr.t_start, geom):
            for d in index.get(tile, ()):
                heapq.heappush(heap, (tile[3], d, src))

    for i, tr in sorted(inc.truth.items()):
        push(tr, i)
    hits: dict[int, int] = {}
    hit_by: dict[int, int] = {}
    drop = FailureMode(FailureKind.DROP, sigma=inc.spec.predictor.sigma)
    while heap:
        t, d, src = heapq.heappop(heap)
        if d in hits:
            continue
        hits[d] = t
        hit_by[d] = src
        pts, vels = real[d]
        k = t - inc.t0
        st = DroneState(d, pts[k], vels[k])
        tr = simulate_failure(st, drop, derive_seed(inc.truth_master, "truth", 1 << 32, d),
                              inc.cfg, t, inc.spec.limits)
        falls.append(tr)
        push(tr, d)
    end = max((tr.t_stop for tr in falls), default=inc.t0)
    return hits, hit_by, end


def run_strategy(inc: Incident, strategy: str) -> IncidentReport:
    """Execute one evacuation strategy on a prepared incident."""
    if strategy not in STRATEGIES:
        raise ValueError(f"unknown strategy {strategy!r}; expected one of {STRATEGIES}")
    tic = time.perf_counter()
    spec, cfg, show = inc.spec, inc.cfg, inc.show
    t0, t_end = inc.t0, inc.t_end
    radius = spec.radius
    geom = cfg.geom(radius)
    failing = set(inc.failing)

    formation = None
    failures: dict[int, str] = {}
    plans: dict[int, Plan] = {}
    if inc.evacuees and strategy == "planner":
        formation = _planner(inc)
        failures = dict(formation.failures)
        plans = {i: p.plan for i, p in formation.plans.items()}
        for i in failures:
            plans[i] = _hover_plan(inc.states[i], t0, t_end, inc)
    elif inc.evacuees and strategy == "hover":
        plans = {i: _hover_plan(inc.states[i], t0, t_end, inc) for i in inc.evacuees}
    elif inc.evacuees and strategy == "straight_to_park":
        plans = _straight_to_park(inc)
    t_plan = time.perf_counter() - tic

    # nominal trajectories of every airborne drone over [t0, horizon]
    horizon = cfg.t_last - 1
    n = horizon - t0 + 1
    real: dict[int, tuple[np.ndarray, np.ndarray]] = {}
    for i in show.ids:
        if i in failing:
            continue
        if i in plans:
            tr = execute_plan(inc.states[i], plans[i], t0, cfg.dt, spec.limits)
        else:
            full = show.trajectory(i)
            a = min(t0, full.t_stop) - full.t_start
            tr = Trajectory(t0, full.points[a:], full.velocities[a:])
            if full.t_stop < t0:
                tr = Trajectory(t0, full.points[-1:], np.zeros((1, 3)))
        real[i] = _extend(tr.points, tr.velocities, n)
    for i, s in inc.spares.items():
        real[i] = _extend(np.array([s.position]), np.zeros((1, 3)), n)
    index: dict = {}
    for i, (pts, _) in real.items():
        for tile in kernels.trajectory_tiles(pts, t0, geom):
            index.setdefault(tile, []).append(i)

    hits, hit_by, fall_end = _cascade(inc, real, index, geom)
    expected = 0.0
    if inc.eval_tiles:
        total = 0
        for tiles in inc.eval_tiles:
            struck = set()
            for tile in tiles:
                struck.update(index.get(tile, ()))
            total += len(struck)
        expected = total / len(inc.eval_tiles)
    cascade = sum(1 for d, s in hit_by.items() if s not in failing)

    # score: weighted psafe of every evacuee's flown path up to t_end
    plan_info: dict[int, dict] = {}
    score = 0.0
    if inc.evacuees and inc.zones is not None:
        for i in inc.evacuees:
            if formation is not None and i in formation.plans:
                ep = formation.plans[i]
                ps, cost = ep.psafe, ep.cost
                info = {"psafe": ps, "cost": cost, "target": list(ep.target),
                        "target_time": ep.target_time, "replanned": i in formation.replanned}
            else:
                pts = real[i][0][: t_end - t0 + 1]
                ps = safe_probability(footprint_of_trajectory(pts, t0, radius, cfg), inc.combined)
                info = {"psafe": ps}
            plan_info[i] = info
            score += spec.alpha.get(i, 1.0) * ps

    evac_moved = set(plans) if strategy != "ignore" else set()
    plan_end = max((t0 + len(p) for p in plans.values()), default=t0)
    t_rec = min(max(t_end, fall_end, plan_end), horizon)

    # recovery
    lost = failing | set(hits)
    hidden = {i: DroneState(i, real[i][0][t_rec - t0], (0.0, 0.0, 0.0), Status.HIDDEN)
              for i in sorted((evac_moved | set(inc.spares)) - lost)}
    missing = sorted(lost | (evac_moved - lost))
    missing = [i for i in missing if i in set(show.ids)]
    t_resume = None
    rec_plan = None
    asg = None
    res = None
    filled: dict[int, int] = {}
    rec_failures: dict[int, str] = {}
    vacancies: list[int] = []
    if missing and t_rec < horizon:
        t_resume, vac, asg = recovery_schedule(show, list(hidden.values()), missing, t_rec,
                                               spec.limits)
        vacancies = [v.drone_id for v in vac]
        if asg.pairs:
            active = [i for i in show.ids if i not in set(missing)]
            reserved = _tiles_between(show, active, radius, t_rec, t_resume, geom)
            idle = [hidden[h].position for h in hidden if h not in asg.pairs]
            reserved |= _hover_tiles(idle, t_rec, t_resume, geom)
            rec_plan = plan_recovery(asg, hidden, t_rec, cfg, spec.limits, radius, reserved)
            rec_failures = dict(rec_plan.failures)
            statuses = {h: Status.HIDDEN for h in hidden}
            res = resume_show(asg, show, t_resume, statuses, rec_plan.plans.keys())
            filled = dict(res.slots)
    fill_ratio = len(filled) / len(vacancies) if vacancies else 1.0

    outcomes: dict[int, str] = {}
    for i in list(show.ids) + sorted(inc.spares):
        if i in failing:
            outcomes[i] = "failed"
        elif i in hits:
            outcomes[i] = "hit"
        elif i in filled:
            outcomes[i] = "recovered"
        elif i in inc.spares:
            outcomes[i] = "spare"
        elif i in evac_moved:
            outcomes[i] = "parked"
        else:
            outcomes[i] = "active"

    timings = dict(inc.timings)
    timings["plan"] = t_plan
    timings["execute"] = time.perf_counter() - tic - t_plan
    log.info("incident seed=%d strategy=%s timings=%s", spec.seed, strategy,
             {k: round(v, 4) for k, v in timings.items()})
    return IncidentReport(
        strategy=strategy,
        seed=spec.seed,
        t0=t0,
        t_end=t_end,
        t_recovery=t_rec if missing else None,
        t_resume=t_resume,
        injected=sorted(failing),
        evacuees=list(inc.evacuees),
        evacuated=len(evac_moved),
        active_at_t0=len(show.ids) - len(failing),
        hits=hits,
        hit_by=hit_by,
        metrics=Metrics(expected, len(hits), cascade, score, fill_ratio),
        plans=plan_info,
        capacity_failures=failures,
        outcomes=outcomes,
        recovery={
            "vacancies": vacancies,
            "filled": {str(k): v for k, v in sorted(filled.items())},
            "unfilled": sorted(set(vacancies) - set(filled.values())),
            "failures": {str(k): v for k, v in sorted(rec_failures.items())},
        },
        formation=formation,
        recovery_plan=rec_plan,
        incident=inc,
        assignment=asg,
        hidden=hidden,
        resume=res,
        timings=timings,
    )


def run_incident(spec: ScenarioSpec) -> IncidentReport:
    """Full pipeline with the parking planner."""
    return run_strategy(prepare_incident(spec), "planner")


def run_baseline(spec: ScenarioSpec, strategy: str) -> IncidentReport:
    """Same incident and ground truth as :func:`run_incident`, different evacuation."""
    if strategy not in BASELINES:
        raise ValueError(f"unknown baseline {strategy!r}; expected one of {BASELINES}")
    return run_strategy(prepare_incident(spec), strategy)


# ---------------------------------------------------------------------------
# batches


BATCH_COLUMNS = ("scenario", "seed", "strategy", "n_drones", "n_failures", "n_evacuees",
                 "realized_hits", "expected_hits", "cascade_count", "score", "fill_ratio",
                 "capacity_failures")


def _batch_rows(args) -> list[dict]:
    idx, spec, strategies = args
    inc = prepare_incident(spec)
    rows = []
    for s in strategies:
        rep = run_strategy(inc, s)
        m = rep.metrics
        rows.append({
            "scenario": idx,
            "seed": spec.seed,
            "strategy": s,
            "n_drones": len(inc.show.ids),
            "n_failures": len(inc.failing),
            "n_evacuees": len(inc.evacuees),
            "realized_hits": m.realized_hits,
            "expected_hits": m.expected_hits,
            "cascade_count": m.cascade_count,
            "score": m.score,
            "fill_ratio": m.fill_ratio,
            "capacity_failures": len(rep.capacity_failures),
        })
    return rows


@dataclass
class BatchResult:
    rows: list[dict]
    summary: dict[str, dict[str, float]]
    sign_tests: dict[str, dict[str, float]]

    def to_csv(self) -> str:
        lines = [",".join(BATCH_COLUMNS)]
        for r in self.rows:
            lines.append(",".join(repr(r[c]) if isinstance(r[c], float) else str(r[c])
                                  for c in BATCH_COLUMNS))
        return "\n".join(lines) + "\n"

    def to_dict(self) -> dict:
        return {"schema_version": SCHEMA_VERSION, "summary": self.summary,
                "sign_tests": self.sign_tests}


def paired_sign_test(a: Sequence[float], b: Sequence[float]) -> dict[str, float]:
    """One-sided sign test that ``a`` tends to be lower than ``b``; ties dropped."""
    wins = sum(1 for x, y in zip(a, b) if x < y)
    losses = sum(1 for x, y in zip(a, b) if x > y)
    n = wins + losses
    p = binomtest(wins, n, 0.5, alternative="greater").pvalue if n else 1.0
    return {"wins": wins, "losses": losses, "ties": len(a) - n, "p_value": float(p)}


def evaluate_batch(
    specs: Sequence[ScenarioSpec] | None = None,
    seed: int | None = None,
    count: int | None = None,
    strategies: Sequence[str] = ("planner", "hover", "straight_to_park"),
    workers: int = 1,
    **scenario_kw: Any,
) -> BatchResult:
    """Paired planner/baseline runs over a list of scenarios or ``count`` seeded ones.

    Scenario ``k`` of a seeded batch uses master seed ``seed + k``. Results
    are merged by scenario index, so the table does not depend on ``workers``.
    """
    if specs is None:
        if seed is None or count is None:
            raise ValueError("pass specs or both seed and count")
        specs = [random_scenario(seed + k, **scenario_kw) for k in range(count)]
    jobs = [(k, s, tuple(strategies)) for k, s in enumerate(specs)]
    if workers > 1 and len(jobs) > 1:
        ctx = mp.get_context("fork") if "fork" in mp.get_all_start_methods() else None
        with ProcessPoolExecutor(max_workers=workers, mp_context=ctx) as pool:
            chunks = list(pool.map(_batch_rows, jobs))
    else:
        chunks = [_batch_rows(j) for j in jobs]
    rows = [r for chunk in chunks for r in chunk]
    summary = {}
    for s in strategies:
        sel = [r for r in rows if r["strategy"] == s]
        summary[s] = {}
        for key in ("realized_hits", "expected_hits", "score", "fill_ratio"):
            v = np.array([r[key] for r in sel], dtype=float)
            # centring on the first value keeps identical rows at exactly zero spread
            d = v - v[0] if len(v) else v
            summary[s][f"{key}_mean"] = float(v[0] + d.mean()) if len(v) else 0.0
            summary[s][f"{key}_std"] = float(d.std()) if len(v) else 0.0
    tests = {}
    if "planner" in strategies:
        mine = [r["realized_hits"] for r in rows if r["strategy"] == "planner"]
        for s in strategies:
            if s != "planner":
                other = [r["realized_hits"] for r in rows if r["strategy"] == s]
                tests[s] = paired_sign_test(mine, other)
    return BatchResult(rows, summary, tests)
