import itertools
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.optimize import linprog

from droneparking.dynamics import DroneState, KinematicLimits, Plan, Status, execute_plan, generate_show
from droneparking.grid import StageConfig, plans_collide
from droneparking.recovery import (
    RecoveryAssignment,
    Vacancy,
    assign_hidden,
    find_vacancies,
    plan_recovery,
    recovery_schedule,
    resume_show,
    speed_profile,
    stop_actions,
    straight_line_actions,
    travel_steps,
)
from _audit import brute_assignment

CFG = StageConfig()
LIM = KinematicLimits()
SHOW = generate_show(12, CFG, 21)


def vac(i, pos):
    return Vacancy(i, 10, tuple(pos), (0.0, 0.0, 0.0), tuple(pos), Plan())


class TestVacancies:
    def test_none(self):
        assert find_vacancies(SHOW, [], 20) == []

    def test_one(self):
        (v,) = find_vacancies(SHOW, [3], 20)
        assert v.drone_id == 3
        assert v.position == tuple(SHOW.trajectory(3).at(20))
        assert v.approach == tuple(SHOW.trajectory(3).at(19))
        assert v.suffix == SHOW.plan_suffix(3, 20)

    def test_plan_already_over(self):
        assert find_vacancies(SHOW, [3], SHOW.end_time(3)) == []


class TestAssign:
    def test_single(self):
        a = assign_hidden([DroneState(7, (0, 0, 0))], [vac(1, (3, 4, 0))])
        assert list(a.pairs) == [7] and a.pairs[7].drone_id == 1
        assert a.total_distance == 5.0 and a.unfilled == []

    def test_diagonal(self):
        hidden = [DroneState(0, (0, 0, 0)), DroneState(1, (10, 0, 0))]
        vacs = [vac(5, (1, 0, 0)), vac(6, (9, 0, 0))]
        a = assign_hidden(hidden, vacs)
        assert a.pairs[0].drone_id == 5 and a.pairs[1].drone_id == 6
        assert a.total_distance == 2.0

    def test_empty_sides(self):
        assert assign_hidden([], [vac(1, (0, 0, 0))]).unfilled == [vac(1, (0, 0, 0))]
        assert assign_hidden([DroneState(0, (0, 0, 0))], []).pairs == {}

    @given(st.integers(0, 2**31), st.integers(1, 7), st.integers(1, 7))
    def test_against_enumeration(self, seed, nh, nv):
        rng = np.random.default_rng(seed)
        H = rng.uniform(0, 20, (nh, 3))
        V = rng.uniform(0, 20, (nv, 3))
        hidden = [DroneState(i, H[i]) for i in range(nh)]
        vacs = [vac(10 + j, V[j]) for j in range(nv)]
        a = assign_hidden(hidden, vacs)
        cost = np.linalg.norm(H[:, None] - V[None], axis=2)
        assert a.total_distance == pytest.approx(brute_assignment(cost), rel=1e-9)
        assert len(a.pairs) == min(nh, nv)
        assert len({v.drone_id for v in a.pairs.values()}) == len(a.pairs)
        assert len(a.pairs) + len(a.unfilled) == nv


def max_reach_lp(n, dt, lim):
    """Largest rest-to-rest distance in n moving steps plus one braking step, by LP."""
    A = lim.dv_max(dt)
    # variables s_1..s_n; |s_k - s_{k-1}| <= A with s_0 = s_{n+1} = 0; 0 <= s_k <= v_max
    rows, rhs = [], []
    for k in range(n + 1):
        r = np.zeros(n)
        if k < n:
            r[k] = 1
        if k > 0:
            r[k - 1] -= 1
        rows += [r, -r]
        rhs += [A, A]
    res = linprog(-np.ones(n) * dt, A_ub=np.array(rows), b_ub=rhs, bounds=[(0, lim.v_max)] * n)
    return -res.fun


class TestMotion:
    @given(st.floats(0.01, 60.0))
    def test_travel_steps_minimal(self, d):
        n = travel_steps(d, 0.5, LIM)
        assert max_reach_lp(n - 1, 0.5, LIM) >= d - 1e-7
        if n > 2:
            assert max_reach_lp(n - 2, 0.5, LIM) < d + 1e-7
        # never faster than flying at top speed the whole way
        assert n >= math.ceil(d / (LIM.v_max * 0.5))

    def test_zero_distance(self):
        assert speed_profile(0.0, 0.5, LIM) == []
        assert straight_line_actions((1, 2, 3), (1, 2, 3), 0.5, LIM) == []

    @given(st.tuples(*[st.floats(2, 20)] * 3), st.tuples(*[st.floats(2, 20)] * 3))
    def test_straight_line_feasible_and_exact(self, a, b):
        acts = straight_line_actions(a, b, 0.5, LIM)
        tr = execute_plan(DroneState(0, a), Plan(tuple(acts)), 0, 0.5, LIM)
        np.testing.assert_allclose(tr.points[-1], b, atol=1e-9)
        np.testing.assert_allclose(tr.velocities[-1], 0.0, atol=1e-9)
        assert len(acts) == travel_steps(math.dist(a, b), 0.5, LIM)

    def test_stop(self):
        acts = stop_actions((4.0, 3.0, 0.0), 0.5, LIM)
        assert len(acts) == 3
        tr = execute_plan(DroneState(0, (10, 10, 10), (4.0, 3.0, 0.0)), Plan(tuple(acts)), 0, 0.5)
        np.testing.assert_allclose(tr.velocities[-1], 0.0, atol=1e-12)


def recover(missing, hidden_pos, t_start=30):
    hidden = [DroneState(100 + i, p, status=Status.HIDDEN) for i, p in enumerate(hidden_pos)]
    t_r, vacs, asg = recovery_schedule(SHOW, hidden, missing, t_start, LIM)
    form = plan_recovery(asg, {d.id: d for d in hidden}, t_start, CFG, LIM, 0.3)
    return hidden, t_r, vacs, asg, form


class TestPlanRecovery:
    def test_already_at_vacancy(self):
        t_r, (v,), _ = recovery_schedule(SHOW, [DroneState(0, (0, 0, 1))], [2], 30, LIM)
        d = DroneState(50, v.approach)
        asg = RecoveryAssignment({50: v})
        form = plan_recovery(asg, {50: d}, t_r - 1, CFG, LIM)
        assert len(form.plans[50].plan) == 1

    def test_single_straight_line(self):
        hidden, t_r, vacs, asg, form = recover([4], [(1.5, 1.5, 1.5)])
        ev = form.plans[100]
        d = math.dist((1.5, 1.5, 1.5), asg.pairs[100].approach)
        assert t_r == 30 + travel_steps(d, CFG.dt, LIM) + 1
        assert t_r - 30 >= math.ceil(d / (LIM.v_max * CFG.dt))
        assert ev.target_time == t_r
        np.testing.assert_allclose(ev.trajectory.points[-1], asg.pairs[100].position, atol=1e-9)

    def test_crossing_assignments_collision_free(self):
        hidden, t_r, vacs, asg, form = recover([0, 1, 5, 7],
                                               [(1.5, 1.5, 1.5), (22.5, 22.5, 1.5),
                                                (1.5, 22.5, 1.5), (22.5, 1.5, 1.5)])
        fps = {i: p.footprint(0.3, CFG) for i, p in form.plans.items()}
        assert len(fps) == 4
        for a, b in itertools.combinations(sorted(fps), 2):
            assert not plans_collide(fps[a], fps[b])
        for fp in fps.values():
            assert min(t[3] for t in fp) >= 30

    def test_resume_exact(self):
        missing = [0, 1, 5]
        hidden, t_r, vacs, asg, form = recover(missing, [(1.5, 1.5, 1.5), (22.5, 22.5, 1.5),
                                                         (1.5, 22.5, 1.5)])
        statuses = {i: Status.ACTIVE for i in SHOW.ids if i not in missing}
        statuses.update({d.id: Status.HIDDEN for d in hidden})
        res = resume_show(asg, SHOW, t_r, statuses, delivered=form.plans)
        assert res.active_count == len(SHOW.ids)
        for h, slot in res.slots.items():
            ref = SHOW.trajectory(slot).points[t_r - SHOW.t_start:]
            tr = execute_plan(res.states[h], res.plans[h], t_r, CFG.dt)
            assert np.array_equal(tr.points, ref)
            np.testing.assert_allclose(form.plans[h].trajectory.points[-1], ref[0], atol=1e-9)

    def test_resume_without_hidden(self):
        statuses = {i: Status.ACTIVE for i in SHOW.ids if i != 3}
        res = resume_show(RecoveryAssignment(), SHOW, 40, statuses)
        assert res.statuses == statuses and res.active_count == len(SHOW.ids) - 1

    def test_partial_fill(self):
        missing = [0, 1, 5]
        hidden, t_r, vacs, asg, form = recover(missing, [(1.5, 1.5, 1.5)])
        statuses = {i: Status.ACTIVE for i in SHOW.ids if i not in missing}
        statuses[100] = Status.HIDDEN
        res = resume_show(asg, SHOW, t_r, statuses, delivered=form.plans)
        assert len(asg.unfilled) == 2
        assert res.active_count == len(SHOW.ids) - len(asg.unfilled)
