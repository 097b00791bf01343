import math
from collections import Counter
from fractions import Fraction

import numpy as np
import pytest
from scipy import linalg, stats

from lipart.errors import DomainError
from lipart.measures import (
    ArrayMeasure,
    Cyclic,
    DirichletSimplex,
    DiscreteOperators,
    OneColumn,
    ProductColumns,
    SelfSimilar,
    exact_level_measure,
    nonidentity_mass,
    point,
    sample_labeled_paintbox,
)
from lipart.operators import op_apply, op_identity, op_multiply, parse_operator
from lipart.partitions import LabeledPartition, SetPartition, enumerate_partitions, parse_labeled, restrict
from lipart.simulate import (
    SimplexPoint,
    StochasticMatrix,
    Trajectory,
    child_rng,
    estimate_semigroup,
    event_stream,
    frequency,
    iterate_maps,
    operator_frequency,
    project_blocks,
    restrict_trajectory,
    run_replicates,
    simplex_chain,
    simulate_counterexample,
    simulate_ct,
    simulate_dt,
    simulate_flow,
    simulate_selfsimilar,
)

H = Fraction(1, 2)
THIRD = Fraction(1, 3)
PRODUCT = ProductColumns((point(H, H), point(H, H)))


def variants():
    return [
        PRODUCT,
        OneColumn(point(2 * THIRD, THIRD)),
        Cyclic(point(H, H)),
        SelfSimilar(point(H, H)),
        ArrayMeasure((point(1, 0), point(1, 0), point(H, H))),
        ProductColumns((DirichletSimplex((1.0, 1.0)),) * 2, total_mass=2),
    ]


def test_identity_measure_gives_no_events():
    ident = op_identity(3, 2)
    mu = DiscreteOperators(((ident, 4),))
    lam = parse_labeled("121")
    traj = simulate_ct(mu, 3, lam, 10.0, child_rng(1, 0))
    assert traj.events == [] and traj.final == lam and traj.applications == 0


def test_idempotent_atom_first_event_is_exponential():
    const = parse_operator("{1,2},{1,2};{},{}", 2)
    assert op_multiply(const, const) == const
    mu = DiscreteOperators(((const, 1),))
    lam = parse_labeled("12")
    times = []
    for i in range(10**4):
        traj = simulate_ct(mu, 2, lam, 50.0, child_rng(2, i))
        assert len(traj.events) == 1 and traj.final.text() == "11"
        times.append(traj.events[0].time)
    assert abs(np.mean(times) - 1) < 3 / math.sqrt(10**4)


@pytest.mark.parametrize("mu", variants())
def test_trajectory_invariants(mu):
    for i in range(30):
        n = 3
        lam = sample_labeled_paintbox(point(H, H), n, child_rng(3, i))
        traj = simulate_ct(mu, n, lam, 5.0, child_rng(4, i))
        states = traj.states
        assert all(a != b for a, b in zip(states, states[1:]))
        times = traj.times
        assert all(0 < t <= 5.0 for t in times)
        assert all(a < b for a, b in zip(times, times[1:]))
        assert traj.applications >= len(traj.events)


def test_trajectory_rejects_unordered_events():
    from lipart.simulate import Event

    lam = parse_labeled("1")
    with pytest.raises(DomainError):
        Trajectory(1, 1, lam, [Event(2.0, None, lam), Event(1.0, None, lam)])


def test_state_at_is_cadlag():
    mu = Cyclic(point(H, H))
    traj = simulate_ct(mu, 3, parse_labeled("111", 2), 10.0, child_rng(5, 0))
    assert traj.events
    e = traj.events[0]
    assert traj.state_at(e.time) == e.state
    assert traj.state_at(e.time - 1e-12) == traj.initial


@pytest.mark.parametrize("mu", [PRODUCT, Cyclic(point(2 * THIRD, THIRD)), SelfSimilar(point(H, H))])
def test_thinned_counts_are_poisson(mu):
    n, t_max, reps = 2, 3.0, 3000
    rate = float(nonidentity_mass(mu, n).value) * t_max
    lam = parse_labeled("12")
    counts = [simulate_ct(mu, n, lam, t_max, child_rng(6, i)).applications for i in range(reps)]
    top = int(rate + 4 * math.sqrt(rate)) + 1
    obs = np.bincount(np.minimum(counts, top), minlength=top + 1)
    probs = stats.poisson.pmf(np.arange(top + 1), rate)
    probs[-1] = stats.poisson.sf(top - 1, rate)
    assert stats.chisquare(obs, probs * reps).pvalue > 0.001


def test_t_max_must_be_positive():
    with pytest.raises(DomainError):
        simulate_ct(PRODUCT, 2, parse_labeled("12"), 0.0, child_rng(0, 0))


# -- flows ------------------------------------------------------------------


def test_flow_reproduces_chain():
    for i in range(100):
        mu = [PRODUCT, Cyclic(point(H, H)), SelfSimilar(point(2 * THIRD, THIRD))][i % 3]
        lam = sample_labeled_paintbox(point(H, H), 4, child_rng(7, i))
        traj = simulate_ct(mu, 4, lam, 4.0, child_rng(8, i))
        flow = simulate_flow(mu, 4, 4.0, child_rng(8, i))
        for e in traj.events:
            assert op_apply(flow.composed_at(e.time), lam) == e.state
        for t, _ in flow.events:
            assert op_apply(flow.composed_at(t), lam) == traj.state_at(t)


def test_flow_composes_newest_on_the_left():
    a = parse_operator("{1,2},{2};{},{1}", 2)
    b = parse_operator("{2},{1,2};{1},{}", 2)
    mu = DiscreteOperators(((a, 1), (b, 1)))
    flow = simulate_flow(mu, 2, 5.0, child_rng(9, 0))
    stream = list(event_stream(mu, 2, 5.0, child_rng(9, 0)))
    assert len(stream) == len(flow.events) >= 2
    composed = op_identity(2, 2)
    for (t, op), (t2, got) in zip(stream, flow.events):
        composed = op_multiply(op, composed)
        assert t == t2 and got == composed


def test_flow_without_events_is_identity():
    flow = simulate_flow(DiscreteOperators(((op_identity(2, 2), 1),)), 2, 3.0, child_rng(0, 0))
    assert flow.events == [] and flow.composed_at(3.0) == op_identity(2, 2)


def test_flow_needs_operators():
    with pytest.raises(DomainError):
        simulate_flow(ArrayMeasure((point(H, H),)), 2, 1.0, child_rng(0, 0))


# -- discrete time ------------------------------------------------------------


def test_dt_identity_chain_is_constant():
    mu = DiscreteOperators(((op_identity(3, 2), 1),))
    lam = parse_labeled("112")
    traj = simulate_dt(mu, lam, 10, child_rng(0, 0))
    assert len(traj.events) == 10 and all(e.state == lam for e in traj.events)


def test_dt_requires_probability():
    with pytest.raises(DomainError):
        simulate_dt(ProductColumns((point(H, H),) * 2, total_mass=2), parse_labeled("12"), 3, child_rng(0, 0))


def test_dt_two_step_law_matches_exact_kernel():
    mu = Cyclic(point(2 * THIRD, THIRD))
    states = list(enumerate_partitions(1, 2))
    idx = {s: i for i, s in enumerate(states)}
    p = np.zeros((2, 2))
    for op, w in exact_level_measure(mu, 1):
        for s in states:
            p[idx[op_apply(op, s)], idx[s]] += float(w)
    two = p @ p
    reps = 20000
    start = parse_labeled("1", 2)
    hits = sum(simulate_dt(mu, start, 2, child_rng(10, i)).final.text() == "1" for i in range(reps))
    expected = two[0, 0]
    assert abs(hits / reps - expected) < 3 * math.sqrt(expected * (1 - expected) / reps)


def test_dt_replays_ct_operator_stream():
    lam = parse_labeled("1212")
    for i in range(20):
        traj = simulate_ct(PRODUCT, 4, lam, 5.0, child_rng(11, i))
        ops = [op for _, op in event_stream(PRODUCT, 4, 5.0, child_rng(11, i))]
        if not ops:
            continue
        dt = simulate_dt(PRODUCT, lam, len(ops), operators=ops)
        assert dt.final == traj.final
        assert iterate_maps(ops, lam)[-1] == traj.final


# -- self-similar process -------------------------------------------------------


def test_selfsimilar_single_colour_single_class_is_constant():
    traj = simulate_selfsimilar(point(1), 5, SetPartition.one(5), 10.0, child_rng(0, 0))
    assert traj.events == []


def test_selfsimilar_rejects_too_many_blocks():
    with pytest.raises(DomainError):
        simulate_selfsimilar(point(H, H), 3, SetPartition.zero(3), 1.0, child_rng(0, 0))


def test_selfsimilar_split_rate_is_half():
    one = SetPartition.one(2)
    jumps = 0
    exposure = 0.0
    for i in range(4000):
        traj = simulate_selfsimilar(point(H, H), 2, one, 1.0, child_rng(12, i))
        first = traj.events[0].time if traj.events else 1.0
        exposure += first
        jumps += bool(traj.events)
    rate = jumps / exposure
    assert abs(rate - 0.5) < 3 * math.sqrt(0.5 / exposure)


def test_selfsimilar_without_fragmentation_only_merges():
    pi = SetPartition.from_blocks([[1, 3], [2]], 3)
    traj = simulate_selfsimilar(point(1, 0), 3, pi, 20.0, child_rng(13, 0))
    for e in traj.events:
        assert len(e.state) <= len(pi)


# -- restrictions and projections -------------------------------------------


def test_restrict_trajectory_drops_invisible_events():
    traj = simulate_ct(PRODUCT, 4, parse_labeled("1111", 2), 20.0, child_rng(14, 0))
    small = restrict_trajectory(traj, 1)
    assert all(a != b for a, b in zip(small.states, small.states[1:]))
    for t in np.linspace(0, 20, 50):
        assert small.state_at(t) == restrict(traj.state_at(t), 1)


def test_project_blocks():
    traj = simulate_ct(Cyclic(point(H, H)), 3, parse_labeled("111", 2), 20.0, child_rng(15, 0))
    proj = project_blocks(traj)
    assert all(isinstance(s, SetPartition) for s in proj.states)
    assert all(a != b for a, b in zip(proj.states, proj.states[1:]))


# -- counterexample ---------------------------------------------------------


def test_counterexample_holding_times():
    full, restricted = simulate_counterexample(2, 200, math.inf, child_rng(16, 0), max_events=20000)
    one = SetPartition.one(200)
    trivial, other = [], []
    for state, hold, ended in full.sojourns():
        if ended:
            (trivial if state == one else other).append(hold)
    # rate 2 out of the one-block state, rate 1 otherwise
    assert abs(np.mean(trivial) - 0.5) < 3 * 0.5 / math.sqrt(len(trivial))
    assert abs(np.mean(other) - 1.0) < 3 * 1.0 / math.sqrt(len(other))
    assert restricted.n == 2
    assert restricted.states == restrict_trajectory(full, 2).states


def test_counterexample_jump_law():
    full, _ = simulate_counterexample(2, 50, math.inf, child_rng(17, 0), max_events=4000)
    one = SetPartition.one(50)
    states = full.states
    for a, b in zip(states, states[1:]):
        assert (a == one) != (b == one)


def test_counterexample_domain():
    with pytest.raises(DomainError):
        simulate_counterexample(5, 5, 1.0, child_rng(0, 0))


# -- frequencies ------------------------------------------------------------


def test_frequency_examples():
    assert frequency(LabeledPartition.constant(4, 3, 1)).weights == (1, 0, 0)
    assert frequency(parse_labeled("1212")).weights == (H, H)


def test_frequency_of_paintbox_draw():
    n = 10**5
    f = frequency(sample_labeled_paintbox(point(2 * THIRD, THIRD), n, child_rng(18, 0)))
    assert abs(float(f.weights[0]) - 2 / 3) < 3 * math.sqrt(2 / 9 / n)


def test_operator_frequency_examples():
    assert operator_frequency(op_identity(5, 3)) == StochasticMatrix.identity(3)
    m = parse_operator("{2,3},{2,4,5,6};{1,4,5,6},{1,3}", 6)
    s = operator_frequency(m)
    assert s.entries == ((Fraction(2, 6), Fraction(4, 6)), (Fraction(4, 6), Fraction(2, 6)))


def test_operator_frequency_mean_for_product_columns():
    mu = ProductColumns((point(2 * THIRD, THIRD), point(Fraction(1, 4), Fraction(3, 4))))
    n = 10**4
    draws = np.array([operator_frequency(mu.sample(n, child_rng(19, i))).as_array() for i in range(100)])
    mean = draws.mean(axis=0)
    want = np.array([[2 / 3, 1 / 4], [1 / 3, 3 / 4]])
    sd = np.sqrt(want * (1 - want) / (n * 100))
    assert np.all(np.abs(mean - want) < 3 * sd)


def test_simplex_chain_basics():
    d0 = SimplexPoint((Fraction(1, 5), Fraction(4, 5)))
    ident = StochasticMatrix.identity(2)
    assert simplex_chain([ident] * 3, d0) == [d0] * 4
    c = (Fraction(1, 3), Fraction(2, 3))
    rank_one = StochasticMatrix(((c[0], c[0]), (c[1], c[1])))
    assert simplex_chain([rank_one], d0)[1].weights == c
    with pytest.raises(DomainError):
        simplex_chain([StochasticMatrix.identity(3)], d0)


def test_stochastic_validation():
    with pytest.raises(DomainError):
        StochasticMatrix(((H, H), (H, 0)))
    with pytest.raises(DomainError):
        SimplexPoint((H, THIRD))


def test_frequency_coupling_single_run():
    mu = ProductColumns((DirichletSimplex((1.0, 1.0)),) * 2)
    n = 10**4
    lam0 = sample_labeled_paintbox(point(H, H), n, child_rng(20, 0))
    traj = simulate_dt(mu, lam0, 20, child_rng(20, 1))
    pred = simplex_chain([operator_frequency(e.jump) for e in traj.events], frequency(lam0))
    gap = max(np.abs(frequency(s).as_array() - p.as_array()).max() for s, p in zip(traj.states, pred))
    assert gap < 0.02


# -- semigroup and replicates ----------------------------------------------------


def test_semigroup_trivial_cases():
    lam = parse_labeled("12")
    assert estimate_semigroup(PRODUCT, 2, lam, 0.0, lambda s: s(1), 5) == (1.0, 0.0)
    value, err = estimate_semigroup(PRODUCT, 2, lam, 1.0, lambda s: 1.0, 50)
    assert value == 1.0 and err == 0.0


def test_semigroup_matches_matrix_exponential():
    op = parse_operator("{1},{1,2};{2},{}", 2)
    mu = DiscreteOperators(((op, Fraction(3, 2)),))
    states = list(enumerate_partitions(2, 2))
    idx = {s: i for i, s in enumerate(states)}
    q = np.zeros((4, 4))
    for o, w in exact_level_measure(mu, 2):
        for s in states:
            t = op_apply(o, s)
            if t != s:
                q[idx[s], idx[t]] += float(w)
                q[idx[s], idx[s]] -= float(w)
    start = parse_labeled("22")
    g = np.array([float(s.text() == "11") for s in states])
    exact = (linalg.expm(0.8 * q) @ g)[idx[start]]
    value, err = estimate_semigroup(mu, 2, start, 0.8, lambda s: float(s.text() == "11"), 4000, seed=21)
    assert abs(value - exact) < 3 * err + 1e-12


def _draw(rng):
    return float(rng.random())


def test_replicates_are_ordered_and_worker_independent():
    serial = run_replicates(_draw, 5, 12, workers=1)
    parallel = run_replicates(_draw, 5, 12, workers=2)
    assert serial == parallel
    assert len(set(serial)) == 12
    assert serial[3] == float(child_rng(5, 3).random())
