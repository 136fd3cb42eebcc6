"""Occupancy probabilities over tiles and the zones derived from them."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Mapping, Sequence

from . import kernels
from .errors import EmptyOccupancyError
from .grid import CellSet, StageConfig, ZoneSet, footprint_of_trajectory
from .predictor import PoseHistory, RolloutSet


class OccupancyField:
    """Sparse map tile -> probability; tiles not stored have probability 0."""

    __slots__ = ("_probs", "_log_safe")

    def __init__(self, probs: Mapping | None = None):
        clean = {}
        for tile, p in (probs or {}).items():
            p = float(p)
            if not 0.0 <= p <= 1.0:
                raise ValueError(f"probability {p} out of [0, 1] at {tile}")
            if p > 0.0:
                clean[tuple(tile)] = p
        self._probs = clean
        self._log_safe = None

    def __getitem__(self, tile) -> float:
        return self._probs.get(tuple(tile), 0.0)

    def get(self, tile, default: float = 0.0) -> float:
        return self._probs.get(tuple(tile), default)

    def __len__(self) -> int:
        return len(self._probs)

    def __iter__(self) -> Iterator[tuple]:
        return iter(self._probs)

    def __eq__(self, other) -> bool:
        return isinstance(other, OccupancyField) and self._probs == other._probs

    def items(self):
        return self._probs.items()

    def support(self) -> ZoneSet:
        return ZoneSet(self._probs)

    def max_time(self) -> int | None:
        return max((t[3] for t in self._probs), default=None)

    def log_safe(self) -> dict:
        """Tile -> ``log1p(-Pr)``; ``-inf`` where Pr = 1. Cached."""
        if self._log_safe is None:
            self._log_safe = {
                t: (-math.inf if p >= 1.0 else math.log1p(-p)) for t, p in self._probs.items()
            }
        return self._log_safe

    def safe(self, tile) -> float:
        return 1.0 - self[tile]


@dataclass(frozen=True)
class IncidentZones:
    t0: int
    t_end: int
    fall_zones: dict[int, ZoneSet]
    hit_zone: ZoneSet
    parking_space: CellSet
    parking_band: tuple[int, int] | None = None

    def in_hit(self, tile) -> bool:
        return tuple(tile) in self.hit_zone

    def in_safe(self, tile) -> bool:
        return tuple(tile) not in self.hit_zone

    def parking_cell(self, cell) -> bool:
        return tuple(cell[:3]) in self.parking_space


def estimate_occupancy(
    rollouts: RolloutSet,
    radius: float,
    cfg: StageConfig,
    history: PoseHistory | None = None,
) -> OccupancyField:
    """Empirical occupancy ``C / N`` over the rollouts' swept footprints.

    With ``history``, tiles the drone occupied before the first rollout time
    get probability 1.
    """
    n = len(rollouts)
    counts: dict = {}
    geom = cfg.geom(radius)
    for tr in rollouts.trajectories:
        kernels.accumulate_counts(counts, tr.points, tr.t_start, geom)
    probs = {tile: c / n for tile, c in counts.items()}
    if history is not None and len(history.points) > 1:
        past = footprint_of_trajectory(history.points[:-1], history.t_start, radius, cfg)
        for tile in past:
            probs[tile] = 1.0
    return OccupancyField(probs)


def fall_zone(field: OccupancyField) -> ZoneSet:
    return field.support()


def incident_end_time(fields: Mapping[int, OccupancyField] | Sequence[OccupancyField]) -> int:
    values = fields.values() if isinstance(fields, Mapping) else fields
    ends = [f.max_time() for f in values if len(f)]
    if not ends:
        raise EmptyOccupancyError("no fallen drone has a non-empty occupancy field")
    return max(ends)


def hit_zone(fields: Mapping[int, OccupancyField] | Sequence[OccupancyField]) -> ZoneSet:
    values = fields.values() if isinstance(fields, Mapping) else fields
    out: set = set()
    for f in values:
        out.update(f.support())
    return ZoneSet(out)


def band_cells(cfg: StageConfig, band: tuple[int, int] | None = None) -> CellSet:
    """All stage cells with ``band[0] <= iz < band[1]`` (every cell when ``band`` is None)."""
    ex, ey, ez = cfg.extent
    lo, hi = (0, ez) if band is None else (max(band[0], 0), min(band[1], ez))
    return CellSet((i, j, k) for i in range(ex) for j in range(ey) for k in range(lo, hi))


def parking_space(
    hit: Iterable,
    cfg: StageConfig,
    t0: int,
    t_end: int,
    band: tuple[int, int] | None = None,
) -> CellSet:
    """Band cells with no hit tile anywhere in ``[t0, t_end]``."""
    if t0 > t_end:
        raise ValueError("t0 must not exceed t_end")
    blocked = {(x[0], x[1], x[2]) for x in hit if t0 <= x[3] <= t_end}
    return CellSet(c for c in band_cells(cfg, band) if c not in blocked)


def combine_occupancy(fields: Mapping[int, OccupancyField] | Sequence[OccupancyField]) -> OccupancyField:
    """``Pr = 1 - prod(1 - Pr_i)`` per tile.

    Factors are multiplied in sorted order so the result does not depend on
    the order of the drones.
    """
    values = list(fields.values() if isinstance(fields, Mapping) else fields)
    if len(values) == 1:
        return OccupancyField(dict(values[0].items()))
    per_tile: dict = {}
    for f in values:
        for tile, p in f.items():
            per_tile.setdefault(tile, []).append(p)
    out = {}
    for tile, ps in per_tile.items():
        if len(ps) == 1:
            out[tile] = ps[0]
            continue
        q = 1.0
        for p in sorted(ps):
            q *= 1.0 - p
        out[tile] = 1.0 - q
    return OccupancyField(out)


def safe_probability(tiles: Iterable, combined: OccupancyField) -> float:
    """Collision-free probability ``prod(1 - Pr)`` of a tile set, accumulated in log space."""
    ls = combined.log_safe()
    total = 0.0
    for tile in tiles:
        v = ls.get(tuple(tile))
        if v is not None:
            if v == -math.inf:
                return 0.0
            total += v
    return math.exp(total)


def compute_zones(
    fields: Mapping[int, OccupancyField],
    cfg: StageConfig,
    t0: int,
    band: tuple[int, int] | None = None,
) -> IncidentZones:
    """Fall zones, end time, hit zone and parking space for a set of fallen drones."""
    t_end = max(incident_end_time(fields), t0)
    hit = hit_zone(fields)
    return IncidentZones(
        t0=t0,
        t_end=t_end,
        fall_zones={k: fall_zone(f) for k, f in fields.items()},
        hit_zone=hit,
        parking_space=parking_space(hit, cfg, t0, t_end, band),
        parking_band=band,
    )
