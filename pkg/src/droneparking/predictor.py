"""Rollout-ensemble prediction of failing-drone trajectories.

:class:`PhysicsEnsemblePredictor` estimates the drone state from its recent
poses, then samples a failure mode and a noisy failure trajectory per
rollout. Anything with a matching ``predict_rollouts`` method can replace it
(for example a learned sequence model); downstream code only consumes the
resulting :class:`RolloutSet`.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Mapping, Protocol, Sequence

import numpy as np

from .dynamics import (
    FAILURE_KINDS,
    DroneState,
    FailureKind,
    FailureMode,
    KinematicLimits,
    Trajectory,
    simulate_failure,
)
from .errors import HistoryTooShortError
from .grid import StageConfig


@dataclass(frozen=True)
class PoseHistory:
    """Consecutive poses of one drone, the last one at the failure time."""

    drone_id: int
    t_start: int
    points: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "points", np.asarray(self.points, dtype=float).reshape(-1, 3))

    @property
    def t0(self) -> int:
        return self.t_start + len(self.points) - 1

    @property
    def poses(self) -> list[tuple[int, tuple]]:
        return [(self.t_start + i, tuple(p)) for i, p in enumerate(self.points.tolist())]

    @classmethod
    def from_poses(cls, drone_id: int, poses: Sequence[tuple[int, Sequence[float]]]):
        times = [int(t) for t, _ in poses]
        if any(b != a + 1 for a, b in zip(times, times[1:])):
            raise ValueError("pose times must be consecutive")
        return cls(drone_id, times[0] if times else 0, np.array([p for _, p in poses]))


@dataclass(frozen=True)
class RolloutSet:
    trajectories: tuple[Trajectory, ...]
    modes: tuple[FailureKind, ...] = ()

    def __post_init__(self):
        if not self.trajectories:
            raise ValueError("a rollout set needs at least one trajectory")
        starts = {tr.t_start for tr in self.trajectories}
        if len(starts) != 1:
            raise ValueError("all rollouts must start at the same time")

    @property
    def t0(self) -> int:
        return self.trajectories[0].t_start

    def __len__(self) -> int:
        return len(self.trajectories)


class Predictor(Protocol):
    def predict_rollouts(self, history: PoseHistory, n: int, rng_seed: int) -> RolloutSet: ...


def estimate_state(history: PoseHistory, dt: float, least_squares: bool = False):
    """Position and velocity at the last pose.

    Velocity is the backward difference of the last two poses, or the slope
    of a per-axis linear fit over the whole history when ``least_squares``.
    """
    pts = history.points
    if len(pts) < 2:
        raise HistoryTooShortError(f"drone {history.drone_id}: need >= 2 poses, got {len(pts)}")
    pos = tuple(float(v) for v in pts[-1])
    if least_squares:
        k = np.arange(len(pts), dtype=float)
        slope = np.polyfit(k, pts, 1)[0]
        vel = tuple(float(v) / dt for v in slope)
    else:
        vel = tuple(float(v) for v in (pts[-1] - pts[-2]) / dt)
    return pos, vel


def _default_modes() -> dict[FailureKind, FailureMode]:
    return {
        FailureKind.DROP: FailureMode(FailureKind.DROP, sigma=0.15),
        FailureKind.LAND: FailureMode(FailureKind.LAND, sigma=0.15),
        FailureKind.RETURN_TO_LAUNCH: FailureMode(FailureKind.RETURN_TO_LAUNCH, sigma=0.15),
    }


def _uniform_prior() -> dict[FailureKind, float]:
    return {k: 1.0 / len(FAILURE_KINDS) for k in FAILURE_KINDS}


@dataclass
class PhysicsEnsemblePredictor:
    """Samples failure trajectories from a mode prior with per-mode noise.

    ``launch_points`` gives return-to-launch targets per drone id.
    """

    cfg: StageConfig
    prior: Mapping[FailureKind, float] = field(default_factory=_uniform_prior)
    modes: Mapping[FailureKind, FailureMode] = field(default_factory=_default_modes)
    limits: KinematicLimits = field(default_factory=KinematicLimits)
    launch_points: Mapping[int, tuple] = field(default_factory=dict)
    least_squares: bool = False

    def __post_init__(self):
        prior = {FailureKind(k): float(v) for k, v in self.prior.items() if v > 0}
        total = sum(prior.values())
        if not prior or total <= 0:
            raise ValueError("prior needs at least one positive weight")
        self.prior = {k: prior[k] / total for k in FAILURE_KINDS if k in prior}
        self.modes = {FailureKind(k): v for k, v in self.modes.items()}
        self._kinds = list(self.prior)
        self._cum = np.cumsum([self.prior[k] for k in self._kinds])

    def sample_kind(self, rng: np.random.Generator) -> FailureKind:
        u = rng.random()
        i = int(np.searchsorted(self._cum, u, side="right"))
        return self._kinds[min(i, len(self._kinds) - 1)]

    def mode_for(self, kind: FailureKind, drone_id: int) -> FailureMode:
        mode = self.modes.get(kind) or FailureMode(kind)
        if kind is FailureKind.RETURN_TO_LAUNCH and drone_id in self.launch_points:
            mode = replace(mode, launch_point=self.launch_points[drone_id])
        return mode

    def predict_rollouts(self, history: PoseHistory, n: int, rng_seed: int) -> RolloutSet:
        """``n`` sampled futures starting at the last pose of ``history``.

        Rollout ``i`` draws everything from the seed ``(rng_seed, i)``, so the
        result does not depend on evaluation order.
        """
        if n < 1:
            raise ValueError("n must be >= 1")
        pos, vel = estimate_state(history, self.cfg.dt, self.least_squares)
        state = DroneState(history.drone_id, pos, vel)
        t0 = history.t0
        trajs = []
        kinds = []
        for i in range(n):
            rng = np.random.default_rng([int(rng_seed), i])
            kind = self.sample_kind(rng)
            sub = int(rng.integers(0, 2**63 - 1))
            trajs.append(simulate_failure(state, self.mode_for(kind, history.drone_id), sub,
                                          self.cfg, t0, self.limits))
            kinds.append(kind)
        return RolloutSet(tuple(trajs), tuple(kinds))


def predict_rollouts(history: PoseHistory, n: int, rng_seed: int,
                     predictor: Predictor) -> RolloutSet:
    """Functional entry point: delegate to any object implementing the predictor protocol."""
    return predictor.predict_rollouts(history, n, rng_seed)
