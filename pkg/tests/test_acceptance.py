"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run directly with ``python3 tests/test_acceptance.py`` or through pytest.
Tolerances and sizes are the stated ones; nothing is relaxed to make a
criterion pass.
"""

from __future__ import annotations

import filecmp
import itertools
import math
import os
import sys
import time
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from droneparking.cli import main as cli_main
from droneparking.dynamics import DroneState, FailureKind, FailureMode, execute_plan
from droneparking.grid import StageConfig, plans_collide
from droneparking.harness import PredictorSpec, evaluate_batch, prepare_incident, random_scenario, run_strategy
from droneparking.occupancy import estimate_occupancy
from droneparking.planner import extract_plan, shortest_paths
from droneparking.predictor import PhysicsEnsemblePredictor, PoseHistory

from _audit import brute_assignment, direct_safe_product, enumerate_paths, gaussian_cell_mass, random_layered_dag
from _fixtures import dag_to_plan_graph

pytestmark = pytest.mark.slow

BATCH_SEED = 7000
BATCH_SIZE = 100
PAIRED_SEED = 5000
PAIRED_SIZE = 200


def report(capsys, n, ok, detail):
    with capsys.disabled():
        print(f"\nCRITERION {n} {'PASS' if ok else 'FAIL'}: {detail}")


@pytest.fixture(scope="module")
def incidents():
    """The shared 100-incident batch: 50 drones, 3 to 8 failures, planner strategy."""
    out = []
    for k in range(BATCH_SIZE):
        spec = random_scenario(BATCH_SEED + k, n_drones=50, failures=(3, 8))
        out.append(run_strategy(prepare_incident(spec), "planner"))
    return out


# -- 1 ---------------------------------------------------------------------


def test_criterion_1_occupancy_monte_carlo(capsys):
    cfg = StageConfig()
    tic = time.perf_counter()

    # deterministic fall: a {0,1} field equal to the trajectory footprint
    det = PhysicsEnsemblePredictor(cfg, prior={FailureKind.DROP: 1.0},
                                   modes={FailureKind.DROP: FailureMode(sigma=0.0)})
    hist = PoseHistory(0, 0, np.tile([12.3, 11.8, 12.0], (2, 1)))
    rs = det.predict_rollouts(hist, 200, 3)
    field = estimate_occupancy(rs, 0.3, cfg)
    fp = rs.trajectories[0].footprint(0.3, cfg)
    det_ok = set(field.support()) == set(fp) and {p for _, p in field.items()} == {1.0}

    # Gaussian lateral noise: landing offset is the sum of n per-step draws
    sigma, n_roll = 0.15, 10_000
    noisy = PhysicsEnsemblePredictor(cfg, prior={FailureKind.DROP: 1.0},
                                     modes={FailureKind.DROP: FailureMode(sigma=sigma)})
    rs = noisy.predict_rollouts(hist, n_roll, 4)
    field = estimate_occupancy(rs, 0.3, cfg)
    elapsed = time.perf_counter() - tic

    steps = len(det.predict_rollouts(hist, 1, 0).trajectories[0]) - 1
    t_land = hist.t0 + steps
    landed = all(len(tr) - 1 == steps for tr in rs.trajectories)
    sd = sigma * math.sqrt(steps)
    worst = 0.0
    for ix in range(cfg.extent[0]):
        for iy in range(cfg.extent[1]):
            lo, hi = cfg.cell_box((ix, iy, 0))
            want = gaussian_cell_mass((12.3, 11.8), sd, lo[:2], hi[:2], 0.3)
            worst = max(worst, abs(field[(ix, iy, 0, t_land)] - want))
    ok = det_ok and landed and worst <= 0.03 and elapsed < 10.0
    report(capsys, 1, ok, f"deterministic field exact={det_ok}; max |MC - Gaussian| over "
           f"{cfg.extent[0] * cfg.extent[1]} ground cells = {worst:.4f} (<= 0.03); "
           f"runtime {elapsed:.2f}s (< 10s)")
    assert ok


# -- 2 ---------------------------------------------------------------------


def _dag_instance(rng):
    while True:
        layers, edges = random_layered_dag(rng, int(rng.integers(3, 21)), int(rng.integers(2, 21)),
                                           float(rng.uniform(0.02, 0.3)))
        if len(layers) > 200:
            continue
        park = {v for v in range(1, len(layers)) if rng.random() < 0.3}
        # count root-to-park paths by dynamic programming before enumerating
        ways = [0] * len(layers)
        ways[0] = 1
        for u in sorted(range(len(layers)), key=lambda v: layers[v]):
            for w, _ in edges[u]:
                ways[w] += ways[u]
        n_paths = sum(ways[v] for v in park)
        if 1 <= n_paths <= 2000:
            return layers, edges, park


def test_criterion_2_shortest_path_oracle(capsys):
    rng = np.random.default_rng(2024)
    instances = [_dag_instance(rng) for _ in range(100)]
    tic = time.perf_counter()
    bad = 0
    for layers, edges, park in instances:
        g, zones = dag_to_plan_graph(layers, edges, park)
        ev = extract_plan(g, shortest_paths(g), zones)
        best = min((c, v) for v, c, _ in enumerate_paths(edges) if v in park)
        if abs(ev.cost - best[0]) > 1e-9 * max(best[0], 1e-300) or ev.vertex != best[1]:
            bad += 1
    elapsed = time.perf_counter() - tic
    sizes = [len(l) for l, _, _ in instances]
    ok = bad == 0 and elapsed < 5.0
    report(capsys, 2, ok, f"{100 - bad}/100 DAGs match enumeration (vertices {min(sizes)}-"
           f"{max(sizes)}); runtime {elapsed:.2f}s (< 5s)")
    assert ok


# -- 3 ---------------------------------------------------------------------


def test_criterion_3_probability_identity(incidents, capsys):
    n_plans = 0
    worst_exp = worst_direct = 0.0
    for rep in incidents:
        if rep.formation is None:
            continue
        inc = rep.incident
        probs = dict(inc.combined.items())
        for ev in rep.formation.plans.values():
            n_plans += 1
            direct = direct_safe_product(ev.footprint(inc.spec.radius, inc.cfg), probs)
            scale = ev.psafe if ev.psafe > 0 else 1.0
            worst_exp = max(worst_exp, abs(ev.psafe - math.exp(-ev.cost)) / scale)
            worst_direct = max(worst_direct, abs(ev.psafe - direct) / scale)
    ok = n_plans > 0 and worst_exp <= 1e-12 and worst_direct <= 1e-12
    report(capsys, 3, ok, f"{n_plans} plans; max rel |psafe - exp(-C*)| = {worst_exp:.2e}, "
           f"max rel |psafe - direct product| = {worst_direct:.2e} (<= 1e-12)")
    assert ok


# -- 4 ---------------------------------------------------------------------


def test_criterion_4_validity_and_collision_freedom(incidents, capsys):
    checked = skipped = violations = 0
    for rep in incidents:
        if rep.formation is None:
            continue
        if rep.capacity_failures:
            skipped += 1
            continue
        checked += 1
        inc = rep.incident
        zones = inc.zones
        fps = {i: p.footprint(inc.spec.radius, inc.cfg) for i, p in rep.formation.plans.items()}
        for i, fp in fps.items():
            last = fp.at(zones.t_end)
            if not last or any(t[:3] not in zones.parking_space for t in last):
                violations += 1
            if any(inc.combined[t] >= 1.0 for t in fp):
                violations += 1
        for a, b in itertools.combinations(sorted(fps), 2):
            if plans_collide(fps[a], fps[b]):
                violations += 1
    ok = checked > 0 and violations == 0
    report(capsys, 4, ok, f"{checked} incidents with sufficient capacity checked, {skipped} "
           f"skipped for capacity failures; {violations} violations")
    assert ok


# -- 5 ---------------------------------------------------------------------


def test_criterion_5_directional_superiority(capsys):
    workers = min(8, os.cpu_count() or 1)
    tic = time.perf_counter()
    res = evaluate_batch(seed=PAIRED_SEED, count=PAIRED_SIZE, workers=workers)
    elapsed = time.perf_counter() - tic
    mean = {s: v["realized_hits_mean"] for s, v in res.summary.items()}
    parts = []
    ok = elapsed < 600
    for base in ("hover", "straight_to_park"):
        st = res.sign_tests[base]
        lower = mean["planner"] < mean[base]
        sig = st["p_value"] < 0.01
        ok &= lower and sig
        parts.append(f"vs {base}: mean {mean['planner']:.3f} < {mean[base]:.3f} is {lower}, "
                     f"sign test {st['wins']}W/{st['losses']}L p={st['p_value']:.3g} "
                     f"(< 0.01 is {sig})")
    report(capsys, 5, ok, f"{PAIRED_SIZE} paired scenarios; " + "; ".join(parts)
           + f"; runtime {elapsed:.0f}s on {workers} worker(s)")
    assert ok


# -- 6 ---------------------------------------------------------------------


@pytest.fixture(scope="module")
def spare_rich():
    """Extra incidents with four spares and three failures, so supply often covers vacancies."""
    return [run_strategy(prepare_incident(
        random_scenario(BATCH_SEED + 500 + k, n_drones=50, failures=3, spares=4)), "planner")
        for k in range(20)]


def test_criterion_6_recovery_exactness(incidents, spare_rich, capsys):
    full = slots = exact_bad = 0
    asg_checked = asg_bad = 0
    for rep in incidents + spare_rich:
        asg = rep.assignment
        if asg is None:
            continue
        vacancies = list(asg.pairs.values()) + list(asg.unfilled)
        hidden = sorted(rep.hidden.values(), key=lambda d: d.id)
        if 0 < len(hidden) <= 7 and 0 < len(vacancies) <= 7:
            asg_checked += 1
            H = np.array([d.position for d in hidden])
            V = np.array([v.position for v in vacancies])
            cost = np.linalg.norm(H[:, None] - V[None], axis=2)
            if abs(asg.total_distance - brute_assignment(cost)) > 1e-9 * max(1.0, asg.total_distance):
                asg_bad += 1
        if rep.resume is None:
            continue
        if (len(hidden) >= len(vacancies) and not asg.unfilled
                and not rep.recovery_plan.failures):
            full += 1
        # every delivered drone is checked, whether or not its incident was fully covered
        inc = rep.incident
        show, t_r = inc.show, rep.t_resume
        for h, slot in rep.resume.slots.items():
            slots += 1
            ref = show.trajectory(slot).points[t_r - show.t_start:]
            flown = execute_plan(rep.resume.states[h], rep.resume.plans[h], t_r, inc.cfg.dt)
            arrived = rep.recovery_plan.plans[h].trajectory.points[-1]
            if not np.array_equal(flown.points, ref) or np.abs(arrived - ref[0]).max() > 1e-9:
                exact_bad += 1
    ok = full > 0 and exact_bad == 0 and asg_checked > 0 and asg_bad == 0
    report(capsys, 6, ok, f"{full} fully recoverable incidents among {len(incidents) + len(spare_rich)}; "
           f"{slots} filled slots checked, {exact_bad} inexact; {asg_checked} assignments "
           f"<= 7x7 vs enumeration, {asg_bad} mismatches")
    assert ok


# -- 7 ---------------------------------------------------------------------


def test_criterion_7_cli_determinism(tmp_path, capsys):
    spec = random_scenario(31, n_drones=50, failures=5, spares=2)
    path = tmp_path / "scenario.json"
    path.write_text(spec.to_json())
    commands = {
        "plan": [],
        "simulate": [],
        "baseline": ["--strategy", "straight_to_park"],
        "eval": ["--count", "2"],
        "export-occupancy": [],
    }
    differing = []
    for cmd, extra in commands.items():
        dirs = []
        for run in (0, 1):
            out = tmp_path / f"{cmd}-{run}"
            assert cli_main([cmd, "--spec", str(path), "--out", str(out), "--seed", "5"] + extra) == 0
            dirs.append(out)
        names = sorted(p.name for p in dirs[0].iterdir())
        assert names == sorted(p.name for p in dirs[1].iterdir())
        _, mismatch, errors = filecmp.cmpfiles(dirs[0], dirs[1], names, shallow=False)
        differing += [f"{cmd}/{n}" for n in mismatch + errors]
    ok = not differing
    report(capsys, 7, ok, f"{len(commands)} subcommands run twice; differing files: "
           f"{differing or 'none'}")
    assert ok


# -- 8 ---------------------------------------------------------------------


def test_criterion_8_parking_soundness(incidents, capsys):
    cells = tiles = bad = 0
    for rep in incidents:
        inc = rep.incident
        if inc.zones is None:
            continue
        z = inc.zones
        for c in z.parking_space:
            cells += 1
            for t in range(z.t0, z.t_end + 1):
                tiles += 1
                if inc.combined[(*c, t)] != 0.0:
                    bad += 1
    ok = cells > 0 and bad == 0
    report(capsys, 8, ok, f"{cells} parking cells, {tiles} tiles checked exhaustively; "
           f"{bad} with Pr > 0")
    assert ok


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-v"]))
