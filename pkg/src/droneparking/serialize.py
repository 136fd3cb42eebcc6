"""Line-oriented text exports for graphs, plans and occupancy tables.

Floats are written with ``repr`` so a round trip is exact and two equal
objects always produce identical bytes.
"""

from __future__ import annotations

import io
from typing import Mapping, TextIO

from .dynamics import Action, Plan
from .occupancy import OccupancyField
from .planner import EvacuationPlan, FormationPlan, PlanGraph

OCCUPANCY_HEADER = "ix,iy,iz,t,prob"


def _f(x: float) -> str:
    return repr(float(x))


def _vec(v) -> str:
    return ",".join(_f(c) for c in v)


def graph_to_text(graph: PlanGraph) -> str:
    """``v id,x,y,z,t`` lines, then ``e from,to,weight,ax,ay,az`` lines."""
    out = io.StringIO()
    out.write(f"graph drone={graph.drone_id} vertices={graph.n} edges={graph.n_edges}\n")
    for i in range(graph.n):
        out.write(f"v {i},{_vec(graph.position(i))},{graph.times[i]}\n")
    for u, w, wt, a in graph.edges():
        out.write(f"e {u},{w},{_f(wt)},{_vec(a.delta_v)}\n")
    return out.getvalue()


def plan_to_text(plan: EvacuationPlan) -> str:
    lines = [
        f"plan drone={plan.drone_id} t_start={plan.t_start} target={_vec(plan.target)} "
        f"target_time={plan.target_time} cost={_f(plan.cost)} psafe={_f(plan.psafe)} "
        f"steps={len(plan.plan)}"
    ]
    lines += [f"a {_vec(a.delta_v)}" for a in plan.plan.actions]
    return "\n".join(lines) + "\n"


def formation_to_text(formation: FormationPlan | Mapping[int, EvacuationPlan]) -> str:
    if isinstance(formation, FormationPlan):
        head = f"formation plans={len(formation.plans)} score={_f(formation.score)}\n"
        plans = formation.plans
    else:
        head = f"formation plans={len(formation)}\n"
        plans = formation
    return head + "".join(plan_to_text(plans[i]) for i in sorted(plans))


def parse_plans(text: str) -> dict[int, Plan]:
    """Read back the actions of every plan in :func:`formation_to_text` output."""
    plans: dict[int, list[Action]] = {}
    current = None
    for line in text.splitlines():
        if line.startswith("plan "):
            fields = dict(kv.split("=", 1) for kv in line.split()[1:])
            current = int(fields["drone"])
            plans[current] = []
        elif line.startswith("a ") and current is not None:
            plans[current].append(Action(tuple(float(x) for x in line[2:].split(","))))
    return {k: Plan(tuple(v)) for k, v in plans.items()}


def write_occupancy(field: OccupancyField, fh: TextIO) -> int:
    """Write ``ix,iy,iz,t,prob`` rows sorted by tile; returns the row count."""
    fh.write(OCCUPANCY_HEADER + "\n")
    n = 0
    for tile in sorted(field):
        fh.write(f"{tile[0]},{tile[1]},{tile[2]},{tile[3]},{_f(field[tile])}\n")
        n += 1
    return n


def read_occupancy(fh: TextIO) -> OccupancyField:
    header = fh.readline().strip()
    if header != OCCUPANCY_HEADER:
        raise ValueError(f"unexpected occupancy header {header!r}")
    probs = {}
    for line in fh:
        line = line.strip()
        if not line:
            continue
        ix, iy, iz, t, p = line.split(",")
        probs[(int(ix), int(iy), int(iz), int(t))] = float(p)
    return OccupancyField(probs)
