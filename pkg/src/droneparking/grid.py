"""Space-time grid: stage cells, tiles, zones and footprints.

A tile is an ``(ix, iy, iz, t)`` tuple. :class:`Tile` and :class:`GridCell`
are named views over those tuples and compare equal to plain tuples, so hot
paths build bare tuples and the public API can still hand out named ones.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import TYPE_CHECKING, Iterable, Iterator, NamedTuple, Sequence

import numpy as np

from . import kernels
from .errors import OffStageError

if TYPE_CHECKING:
    from .dynamics import DroneState, KinematicLimits, Plan

DEFAULT_RADIUS = 0.3


class GridCell(NamedTuple):
    ix: int
    iy: int
    iz: int


class Tile(NamedTuple):
    ix: int
    iy: int
    iz: int
    t: int

    @property
    def cell(self) -> GridCell:
        return GridCell(self.ix, self.iy, self.iz)


@dataclass(frozen=True)
class StageConfig:
    """Axis-aligned stage of ``extent`` cubic cells starting at ``origin``.

    Time steps run over ``[t_first, t_last)`` with ``dt`` seconds per step.
    The ground plane is ``z = origin[2]``.
    """

    origin: tuple[float, float, float] = (0.0, 0.0, 0.0)
    extent: tuple[int, int, int] = (24, 24, 16)
    cell_size: float = 1.0
    t_first: int = 0
    t_last: int = 120
    dt: float = 0.5

    def __post_init__(self):
        object.__setattr__(self, "origin", tuple(float(v) for v in self.origin))
        object.__setattr__(self, "extent", tuple(int(v) for v in self.extent))
        if len(self.origin) != 3 or len(self.extent) != 3:
            raise ValueError("origin and extent must have three components")
        if self.cell_size <= 0:
            raise ValueError("cell_size must be positive")
        if self.dt <= 0:
            raise ValueError("dt must be positive")
        if self.t_first >= self.t_last:
            raise ValueError("t_first must be smaller than t_last")
        if min(self.extent) < 1:
            raise ValueError("extent components must be >= 1")

    @property
    def upper(self) -> tuple[float, float, float]:
        return tuple(o + n * self.cell_size for o, n in zip(self.origin, self.extent))

    @property
    def ground(self) -> float:
        return self.origin[2]

    def geom(self, radius: float) -> tuple:
        ox, oy, oz = self.origin
        ex, ey, ez = self.extent
        return (ox, oy, oz, float(self.cell_size), ex, ey, ez, float(radius))

    def contains_point(self, p: Sequence[float]) -> bool:
        return all(o <= v < u for v, o, u in zip(p, self.origin, self.upper))

    def cell_box(self, cell: Sequence[int]) -> tuple[np.ndarray, np.ndarray]:
        lo = np.asarray(self.origin) + np.asarray(cell[:3], dtype=float) * self.cell_size
        return lo, lo + self.cell_size

    def cell_center(self, cell: Sequence[int]) -> tuple[float, float, float]:
        cs = self.cell_size
        return tuple(o + (i + 0.5) * cs for o, i in zip(self.origin, cell[:3]))

    def cells(self) -> Iterator[GridCell]:
        ex, ey, ez = self.extent
        for i in range(ex):
            for j in range(ey):
                for k in range(ez):
                    yield GridCell(i, j, k)

    def in_stage_zone(self, tile: Sequence[int]) -> bool:
        return (
            all(0 <= tile[a] < self.extent[a] for a in range(3))
            and self.t_first <= tile[3] < self.t_last
        )

    def to_dict(self) -> dict:
        return {
            "origin": list(self.origin),
            "extent": list(self.extent),
            "cell_size": self.cell_size,
            "t_first": self.t_first,
            "t_last": self.t_last,
            "dt": self.dt,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "StageConfig":
        return cls(
            origin=tuple(d.get("origin", (0.0, 0.0, 0.0))),
            extent=tuple(d.get("extent", (24, 24, 16))),
            cell_size=float(d.get("cell_size", 1.0)),
            t_first=int(d.get("t_first", 0)),
            t_last=int(d.get("t_last", 120)),
            dt=float(d.get("dt", 0.5)),
        )


class ZoneSet(frozenset):
    """Sparse set of tiles. Set operators keep the type."""

    def __or__(self, other):
        return ZoneSet(frozenset.__or__(self, other))

    def __and__(self, other):
        return ZoneSet(frozenset.__and__(self, other))

    def __sub__(self, other):
        return ZoneSet(frozenset.__sub__(self, other))

    union = __or__
    intersection = __and__
    difference = __sub__

    def cells(self) -> "CellSet":
        return CellSet((t[0], t[1], t[2]) for t in self)

    def times(self) -> set[int]:
        return {t[3] for t in self}

    def at(self, t: int) -> "ZoneSet":
        return ZoneSet(x for x in self if x[3] == t)

    def between(self, t_lo: int, t_hi: int) -> "ZoneSet":
        """Tiles with ``t_lo <= t <= t_hi``."""
        return ZoneSet(x for x in self if t_lo <= x[3] <= t_hi)


class CellSet(frozenset):
    """Set of ``(ix, iy, iz)`` grid cells."""

    def __or__(self, other):
        return CellSet(frozenset.__or__(self, other))

    def __and__(self, other):
        return CellSet(frozenset.__and__(self, other))

    def __sub__(self, other):
        return CellSet(frozenset.__sub__(self, other))


def cell_of_point(p: Sequence[float], cfg: StageConfig) -> GridCell | None:
    """Cell whose half-open box contains ``p``; ``None`` when ``p`` is off-stage."""
    idx = []
    for v, o, n in zip(p, cfg.origin, cfg.extent):
        i = math.floor((v - o) / cfg.cell_size)
        if i < 0 or i >= n:
            return None
        idx.append(i)
    return GridCell(*idx)


def footprint_of_pose(
    center: Sequence[float], radius: float, t: int, cfg: StageConfig
) -> ZoneSet:
    """Tiles at time ``t`` whose closed cell box meets the closed ball."""
    if radius <= 0:
        raise ValueError("radius must be positive")
    cells = kernels.ball_cells(float(center[0]), float(center[1]), float(center[2]), cfg.geom(radius))
    if not cells:
        raise OffStageError(f"drone at {tuple(center)} is entirely off-stage")
    return ZoneSet((c[0], c[1], c[2], t) for c in cells)


def footprint_of_trajectory(
    points: Iterable[Sequence[float]] | np.ndarray,
    t_start: int,
    radius: float,
    cfg: StageConfig,
) -> ZoneSet:
    """Swept footprint of consecutive poses starting at ``t_start``.

    The segment from pose ``j`` to ``j + 1`` is sampled at sub-step resolution
    and its tiles carry time ``t_start + j``; the final pose keeps its own time.
    """
    pts = np.ascontiguousarray(np.asarray(points, dtype=float).reshape(-1, 3))
    return ZoneSet(kernels.trajectory_tiles(pts, int(t_start), cfg.geom(radius)))


def footprint_of_plan(
    plan: "Plan",
    drone: "DroneState",
    t_start: int,
    cfg: StageConfig,
    radius: float = DEFAULT_RADIUS,
    limits: "KinematicLimits | None" = None,
) -> ZoneSet:
    """Footprint of ``drone`` executing ``plan`` from ``t_start``.

    Raises :class:`OffStageError` if any pose leaves the stage entirely.
    """
    from .dynamics import execute_plan

    traj = execute_plan(drone, plan, t_start, cfg.dt, limits)
    geom = cfg.geom(radius)
    for t, p in traj.poses:
        if not kernels.ball_cells(p[0], p[1], p[2], geom):
            raise OffStageError(f"drone {drone.id} leaves the stage at t={t}")
    return footprint_of_trajectory(traj.points, t_start, radius, cfg)


def plans_collide(f1: Iterable, f2: Iterable) -> bool:
    """True iff the two tile sets share a tile."""
    a = f1 if isinstance(f1, frozenset | set) else set(f1)
    return not a.isdisjoint(f2)
