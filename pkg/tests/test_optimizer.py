import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import random_instance, uniform_instance
from oran_energy.optimizer import (Allocation, ConstraintId, Infeasible, InfeasibleLinkError,
                                   Optimality, OracleTooLarge, ProblemInstance, StructuralError,
                                   all_on_objective, assoc_distance, build_allocation,
                                   check_feasible, min_bandwidth, objective, solve_bruteforce,
                                   solve_exact, solve_greedy)


def one_by_one(demand=1e6, levels=(1e-3, 0.5, 1.0)):
    return ProblemInstance(ue_ids=(0,), demand=np.array([demand]), oru_ids=(0,),
                           max_power=np.array([1.0]), max_bandwidth=np.array([100e6]),
                           static_power=np.array([11.4757]), efficiency=np.array([0.25]),
                           gain=np.array([[1e-10]]), noise_sigma2=1e-12, epsilon=1e-3,
                           power_levels=(levels,))


def calibrated(m):
    return ProblemInstance(ue_ids=(), demand=np.zeros(0), oru_ids=tuple(range(m)),
                           max_power=np.ones(m), max_bandwidth=np.full(m, 100e6),
                           static_power=np.full(m, 11.4757), efficiency=np.full(m, 0.25),
                           gain=np.zeros((0, m)), noise_sigma2=1e-12, epsilon=1e-3,
                           power_levels=((1.0,),) * m)


# ---------------------------------------------------------------- objective

def test_objective_all_off_is_zero():
    inst = calibrated(3)
    alloc = Allocation({}, {}, {0: 0.0, 1: 0.0, 2: 0.0}, frozenset(), 0.0)
    assert objective(inst, alloc) == 0.0


def test_objective_one_calibrated_node():
    inst = calibrated(1)
    alloc = Allocation({}, {}, {0: 1.0}, frozenset({0}), 0.0)
    assert objective(inst, alloc) == pytest.approx(15.4757, rel=1e-12)


def test_objective_seventeen_calibrated_nodes():
    inst = calibrated(17)
    alloc = Allocation({}, {}, {r: 1.0 for r in range(17)}, frozenset(range(17)), 0.0)
    assert objective(inst, alloc) == pytest.approx(263.0869, rel=1e-12)
    assert all_on_objective(inst) == objective(inst, alloc)


def test_objective_unknown_oru():
    with pytest.raises(StructuralError):
        objective(calibrated(1), Allocation({}, {}, {5: 1.0}, frozenset({5}), 0.0))


# ---------------------------------------------------------------- min_bandwidth

def test_min_bandwidth_examples():
    assert min_bandwidth(0.0, 7.0) == 0.0
    assert min_bandwidth(1e6, 1.0) == pytest.approx(1e6)
    assert min_bandwidth(1e6, 3.0) == pytest.approx(5e5)


def test_min_bandwidth_zero_snr():
    with pytest.raises(InfeasibleLinkError):
        min_bandwidth(1e6, 0.0)


@given(st.floats(0, 1e9), st.floats(1e-6, 1e6))
def test_min_bandwidth_meets_rate_exactly(demand, s):
    y = min_bandwidth(demand, s)
    assert y * math.log2(1 + s) == pytest.approx(demand, rel=1e-12, abs=1e-9)


# ---------------------------------------------------------------- check_feasible

def feasible_1x1():
    inst = one_by_one()
    return inst, build_allocation(inst, {0: 0}, {0: 1.0})


def test_check_feasible_accepts_hand_built():
    inst, alloc = feasible_1x1()
    assert check_feasible(inst, alloc) == []


def test_check_feasible_inactive_with_user():
    inst, alloc = feasible_1x1()
    off = Allocation(alloc.assoc_x, alloc.bandwidth_y, {0: 0.0}, frozenset(), 0.0)
    v = check_feasible(inst, off)
    assert [x.constraint_id for x in v] == [ConstraintId.NO_USERS_WHEN_OFF]


def test_check_feasible_bandwidth_overrun_by_one_hz():
    inst = one_by_one(demand=0.0)
    alloc = Allocation({0: 0}, {(0, 0): 100e6 + 1}, {0: 1.0}, frozenset({0}), 15.4757)
    v = check_feasible(inst, alloc)
    assert [x.constraint_id for x in v] == [ConstraintId.BANDWIDTH_CAP]
    assert v[0].magnitude == pytest.approx(1.0)


def test_check_feasible_each_variant():
    inst, alloc = feasible_1x1()
    cases = {
        ConstraintId.ASSOC: Allocation({}, {}, alloc.power_w, alloc.active_z, 0.0),
        ConstraintId.POWER_BOUND: build_allocation(inst, {0: 0}, {0: 1.5}),
        ConstraintId.POWER_FLOOR_WHEN_ON: build_allocation(inst, {0: 0}, {0: 5e-4}),
        ConstraintId.RATE_DEMAND: Allocation(alloc.assoc_x, {(0, 0): 1.0}, alloc.power_w,
                                             alloc.active_z, 0.0),
    }
    for cid, bad in cases.items():
        got = [v.constraint_id for v in check_feasible(inst, bad)]
        assert got == [cid], (cid, got)
    two = calibrated(2)
    stray = Allocation({}, {}, {0: 1.0, 1: 0.5}, frozenset({0}), 0.0)
    assert [v.constraint_id for v in check_feasible(two, stray)] == [
        ConstraintId.POWER_ZERO_WHEN_OFF]


def test_violation_magnitudes_positive(rng):
    for _ in range(50):
        inst = random_instance(rng, 3, 5, 2)
        assoc = {u: int(rng.integers(0, 3)) for u in inst.ue_ids}
        powers = {r: float(rng.choice(inst.power_levels[r])) for r in inst.oru_ids
                  if rng.random() < 0.6}
        alloc = build_allocation(inst, assoc, {r: p for r, p in powers.items()}) \
            if set(assoc.values()) <= set(powers) else None
        if alloc is None:
            continue
        assert all(v.magnitude > 0 for v in check_feasible(inst, alloc))


# ---------------------------------------------------------------- brute force

def test_brute_single_link_lowest_level():
    inst = one_by_one(demand=1e3)
    a = solve_bruteforce(inst).allocation
    assert a.active_z == {0}
    assert a.power_w[0] == 1e-3
    assert a.objective_watts == pytest.approx(1e-3 / 0.25 + 11.4757)


def test_brute_two_identical_nodes_one_active():
    inst = uniform_instance(2, 2, per_node=2, levels=(1e-3, 1.0))
    rep = solve_bruteforce(inst)
    assert rep.allocation.active_count == 1
    assert rep.optimality is Optimality.PROVED_OPTIMAL


def test_brute_infeasible_single_ue():
    with pytest.raises(Infeasible):
        solve_bruteforce(one_by_one(demand=1e12))


def test_brute_guard():
    with pytest.raises(OracleTooLarge):
        solve_bruteforce(uniform_instance(9, 2, per_node=9))
    with pytest.raises(OracleTooLarge):
        solve_bruteforce(uniform_instance(2, 5, per_node=2))


# ---------------------------------------------------------------- exact

def test_exact_matches_brute_small_sweep(rng):
    for _ in range(150):
        inst = random_instance(rng, int(rng.integers(1, 4)), int(rng.integers(1, 7)),
                               int(rng.integers(1, 3)))
        try:
            b = solve_bruteforce(inst)
        except Infeasible:
            with pytest.raises(Infeasible):
                solve_exact(inst)
            continue
        e = solve_exact(inst)
        assert e.allocation.objective_watts == b.allocation.objective_watts
        assert e.allocation.active_z == b.allocation.active_z
        assert check_feasible(inst, e.allocation) == []


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 40), st.integers(1, 8))
def test_exact_uniform_coverage_counts(n, k):
    m = math.ceil(n / k) + 1
    rep = solve_exact(uniform_instance(n, m, per_node=k))
    assert rep.allocation.active_count == math.ceil(n / k)


def test_exact_uniform_counts_match_oracle():
    for n, k in [(3, 1), (5, 2), (8, 3), (6, 6)]:
        inst = uniform_instance(n, min(4, math.ceil(n / k) + 1), per_node=k)
        if inst.n_orus <= 4:
            assert (solve_exact(inst).allocation.active_count
                    == solve_bruteforce(inst).allocation.active_count)


def test_exact_dominated_node_off():
    gain = np.array([[1e-9, 1e-11], [2e-9, 1e-11], [5e-10, 1e-12]])
    inst = ProblemInstance(ue_ids=(0, 1, 2), demand=np.full(3, 5e6), oru_ids=(0, 1),
                           max_power=np.ones(2), max_bandwidth=np.full(2, 100e6),
                           static_power=np.full(2, 11.4757), efficiency=np.full(2, 0.25),
                           gain=gain, noise_sigma2=1e-12, epsilon=1e-3,
                           power_levels=((1e-3, 0.5, 1.0),) * 2)
    a = solve_exact(inst).allocation
    assert a.active_z == {0}
    assert solve_bruteforce(inst).allocation.active_z == {0}


def test_exact_infeasible():
    with pytest.raises(Infeasible):
        solve_exact(one_by_one(demand=1e12))


def test_exact_deterministic_and_thread_independent(rng):
    inst = random_instance(rng, 6, 40, 5, max_demand=15e6)
    a = solve_exact(inst)
    for threads in (1, 2, 4):
        b = solve_exact(inst, threads=threads)
        assert b.allocation == a.allocation
        assert b.nodes_explored == a.nodes_explored


def test_exact_prefers_fewer_handovers():
    inst = uniform_instance(4, 3, per_node=4)
    prev = {u: 2 for u in inst.ue_ids}
    a = solve_exact(inst, prev=prev).allocation
    assert a.active_z == {2}
    assert assoc_distance(build_allocation(inst, prev, {2: 1.0}), a) == 0
    assert solve_bruteforce(inst, prev=prev).allocation.active_z == {2}


# ---------------------------------------------------------------- greedy

def test_greedy_feasible_and_dominated_by_exact(rng):
    for _ in range(150):
        inst = random_instance(rng, int(rng.integers(1, 5)), int(rng.integers(1, 9)),
                               int(rng.integers(1, 4)))
        try:
            e = solve_exact(inst)
        except Infeasible:
            continue
        g = solve_greedy(inst)
        assert g.optimality is Optimality.HEURISTIC
        assert check_feasible(inst, g.allocation) == []
        assert g.allocation.objective_watts >= e.allocation.objective_watts - 1e-9


def test_greedy_single_ue_equals_exact(rng):
    # greedy opens by SNR, so node cost parameters are kept identical
    for _ in range(100):
        inst = random_instance(rng, int(rng.integers(1, 5)), 1, int(rng.integers(1, 4)),
                               homogeneous=True)
        try:
            e = solve_exact(inst)
        except Infeasible:
            with pytest.raises(Infeasible):
                solve_greedy(inst)
            continue
        g = solve_greedy(inst)
        assert g.allocation.objective_watts == e.allocation.objective_watts


def test_greedy_128_uniform_two_nodes():
    inst = uniform_instance(128, 17, per_node=64)
    assert solve_greedy(inst).allocation.active_count == 2


# ---------------------------------------------------------------- assoc_distance

def test_assoc_distance():
    inst = uniform_instance(3, 2, per_node=3)
    a = build_allocation(inst, {0: 0, 1: 0, 2: 0}, {0: 1.0, 1: 1.0})
    b = build_allocation(inst, {0: 1, 1: 0, 2: 0}, {0: 1.0, 1: 1.0})
    c = build_allocation(inst, {0: 1, 1: 1, 2: 1}, {0: 1.0, 1: 1.0})
    assert assoc_distance(a, a) == 0
    assert assoc_distance(a, b) == 1
    assert assoc_distance(a, c) == 3
    with pytest.raises(StructuralError):
        assoc_distance(a, Allocation({0: 0}, {}, {}, frozenset(), 0.0))


# ---------------------------------------------------------------- properties

def _permuted(inst, rng):
    pu = rng.permutation(inst.n_ues)
    pr = rng.permutation(inst.n_orus)
    return ProblemInstance(
        ue_ids=inst.ue_ids, demand=inst.demand[pu], oru_ids=inst.oru_ids,
        max_power=inst.max_power[pr], max_bandwidth=inst.max_bandwidth[pr],
        static_power=inst.static_power[pr], efficiency=inst.efficiency[pr],
        gain=inst.gain[np.ix_(pu, pr)], noise_sigma2=inst.noise_sigma2, epsilon=inst.epsilon,
        power_levels=tuple(inst.power_levels[j] for j in pr))


def test_relabeling_invariance(rng):
    for _ in range(60):
        inst = random_instance(rng, 3, 5, 2)
        try:
            a = solve_exact(inst).allocation.objective_watts
        except Infeasible:
            continue
        b = solve_exact(_permuted(inst, rng)).allocation.objective_watts
        assert a == pytest.approx(b, rel=1e-12)


def _drop_last_ue(inst):
    n = inst.n_ues - 1
    return ProblemInstance(inst.ue_ids[:n], inst.demand[:n], inst.oru_ids, inst.max_power,
                           inst.max_bandwidth, inst.static_power, inst.efficiency,
                           inst.gain[:n], inst.noise_sigma2, inst.epsilon, inst.power_levels)


def _drop_last_oru(inst):
    m = inst.n_orus - 1
    return ProblemInstance(inst.ue_ids, inst.demand, inst.oru_ids[:m], inst.max_power[:m],
                           inst.max_bandwidth[:m], inst.static_power[:m], inst.efficiency[:m],
                           inst.gain[:, :m], inst.noise_sigma2, inst.epsilon,
                           inst.power_levels[:m])


def _opt(inst):
    try:
        return solve_exact(inst).allocation.objective_watts
    except Infeasible:
        return math.inf


def test_monotonicity(rng):
    for _ in range(80):
        inst = random_instance(rng, 3, 5, 3)
        full = _opt(inst)
        assert _opt(_drop_last_ue(inst)) <= full
        assert _opt(_drop_last_oru(inst)) >= full


def test_power_floor_and_all_on_bound(rng):
    for _ in range(80):
        inst = random_instance(rng, 4, 6, 3)
        try:
            a = solve_exact(inst).allocation
        except Infeasible:
            continue
        for j, r in enumerate(inst.oru_ids):
            if r in a.active_z:
                assert inst.epsilon <= a.power_w[r] <= inst.max_power[j]
            else:
                assert a.power_w[r] == 0 and r not in a.assoc_x.values()
        forced = build_allocation(inst, a.assoc_x,
                                  {r: float(g) for r, g in zip(inst.oru_ids, inst.max_power)})
        assert a.objective_watts <= forced.objective_watts


def test_repeat_solves_identical(rng):
    inst = random_instance(rng, 4, 8, 3)
    for solver in (solve_exact, solve_greedy, solve_bruteforce):
        try:
            first = solver(inst).allocation
        except Infeasible:
            continue
        assert solver(inst).allocation == first
