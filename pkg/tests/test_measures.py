import itertools
import math
from collections import Counter
from fractions import Fraction

import numpy as np
import pytest
from scipy import stats

from lipart.errors import CapacityError, ConfigurationError, DomainError
from lipart.measures import (
    ArrayMeasure,
    Cyclic,
    DirichletSimplex,
    DiscreteOperators,
    DiscreteSimplex,
    OneColumn,
    ProductColumns,
    RankedSimplexPoint,
    SelfSimilar,
    as_number,
    exact_level_map_measure,
    exact_level_measure,
    measure_from_spec,
    measure_to_spec,
    nonidentity_mass,
    paintbox_law,
    point,
    sample_labeled_paintbox,
    sample_lipschitz_map,
    sample_operator,
    sample_ranked_paintbox,
    sample_simplex,
)
from lipart.operators import MapTable, PartitionOperator, op_identity, op_multiply, op_relabel, op_restrict, op_transpose, parse_operator
from lipart.partitions import LabeledPartition, Permutation, SetPartition, enumerate_partitions

H = Fraction(1, 2)
THIRD = Fraction(1, 3)


def rng(seed=0):
    return np.random.default_rng(seed)


def exchangeable_variants():
    return [
        ProductColumns((point(H, H), point(H, H))),
        ProductColumns((DiscreteSimplex((((1, 0), 1), ((THIRD, 2 * THIRD), 2))),) * 2),
        OneColumn(point(2 * THIRD, THIRD)),
        Cyclic(point(H, H)),
        Cyclic(point(THIRD, 2 * THIRD)),
        SelfSimilar(point(H, H)),
        SelfSimilar(DiscreteSimplex((((2 * THIRD, THIRD), 1), ((1, 0), 1))), total_mass=3),
    ]


# -- simplex laws ----------------------------------------------------------


def test_as_number():
    assert as_number("2/3") == Fraction(2, 3)
    assert as_number("0.25") == Fraction(1, 4)
    assert as_number(0.1) == Fraction(1, 10)
    with pytest.raises(ConfigurationError):
        as_number("x")
    with pytest.raises(ConfigurationError):
        as_number(float("nan"))


def test_simplex_validation():
    with pytest.raises(ConfigurationError):
        point(H, THIRD)
    with pytest.raises(ConfigurationError):
        point(Fraction(3, 2), -H)
    with pytest.raises(ConfigurationError):
        DirichletSimplex((1.0, 0.0))
    with pytest.raises(ConfigurationError):
        DiscreteSimplex(())
    # float noise within 1e-12 is accepted
    point(0.1, 0.2, 0.7)


def test_point_and_single_atom_draws_are_exact():
    r = rng()
    assert list(sample_simplex(point(H, H), r)) == [0.5, 0.5]
    nu = DiscreteSimplex((((THIRD, 2 * THIRD), 5),))
    for _ in range(5):
        assert np.allclose(sample_simplex(nu, r), [1 / 3, 2 / 3])


def test_dirichlet_mean_within_three_sigma():
    k, draws = 3, 10**5
    r = rng(1)
    nu = DirichletSimplex((1.0,) * k)
    xs = np.array([sample_simplex(nu, r) for _ in range(draws)])
    # Var of a Dirichlet(1,1,1) coordinate: (1/3)(2/3)/(3+1)
    sd = math.sqrt((1 / 3) * (2 / 3) / 4 / draws)
    assert np.all(np.abs(xs.mean(axis=0) - 1 / 3) < 3 * sd)


def test_ranked_point_validation():
    with pytest.raises(ConfigurationError):
        RankedSimplexPoint((THIRD, H))
    assert RankedSimplexPoint((H, Fraction(1, 4))).dust == Fraction(1, 4)


# -- paintboxes ------------------------------------------------------------


def test_degenerate_labeled_paintbox():
    r = rng()
    for _ in range(10):
        assert sample_labeled_paintbox(point(1, 0, 0), 5, r) == LabeledPartition.constant(5, 3, 1)


def test_labeled_paintbox_uniform_chi_square():
    r = rng(2)
    counts = Counter(sample_labeled_paintbox(point(H, H), 2, r).text() for _ in range(10**5))
    obs = [counts[x] for x in ("11", "12", "21", "22")]
    assert stats.chisquare(obs).pvalue > 0.01


def test_labeled_paintbox_frequency_at_large_n():
    n = 10**5
    lam = sample_labeled_paintbox(point(2 * THIRD, THIRD), n, rng(3))
    sd = math.sqrt((2 / 9) / n)
    assert abs(lam.sizes[0] / n - 2 / 3) < 3 * sd


def test_paintbox_law_matches_formula():
    nu = DiscreteSimplex((((1, 0), 1), ((H, H), 1)))
    law = paintbox_law(nu, 2)
    assert law[LabeledPartition.from_labels([1, 1], 2)] == H * 1 + H * Fraction(1, 4)
    assert law[LabeledPartition.from_labels([2, 1], 2)] == H * Fraction(1, 4)
    assert sum(law.values()) == 1


def test_ranked_paintbox_degenerate_cases():
    r = rng()
    assert sample_ranked_paintbox(RankedSimplexPoint((1,)), 6, r) == SetPartition.one(6)
    assert sample_ranked_paintbox(RankedSimplexPoint(()), 6, r) == SetPartition.zero(6)
    assert sample_ranked_paintbox(RankedSimplexPoint((0, 0)), 4, r) == SetPartition.zero(4)


def test_ranked_paintbox_pair_probability():
    r = rng(4)
    s = RankedSimplexPoint((H, H))
    draws = 10**5
    joined = sum(len(sample_ranked_paintbox(s, 2, r)) == 1 for _ in range(draws))
    sd = math.sqrt(0.25 / draws)
    assert abs(joined / draws - 0.5) < 3 * sd


def test_ranked_paintbox_large_n_with_dust():
    pi = sample_ranked_paintbox(RankedSimplexPoint((H, Fraction(1, 4))), 400, rng(5))
    sizes = sorted((b.bit_count() for b in pi.blocks), reverse=True)
    assert sizes[0] > 150 and sizes[2] == 1


# -- operator samplers ----------------------------------------------------


def test_product_columns_degenerate():
    mu = ProductColumns((point(1, 0), point(1, 0)))
    op = sample_operator(mu, 4, rng())
    assert op.columns == (LabeledPartition.constant(4, 2, 1),) * 2


def test_one_column_identity_probability_half():
    mu = OneColumn(point(H, H))
    law = exact_level_measure(mu, 1)
    # outcomes (U, label) uniform on 4; identity iff label == U
    assert sum(w for op, w in law if op.is_identity()) == H
    r = rng(6)
    draws = 20000
    hits = sum(sample_operator(mu, 1, r).is_identity() for _ in range(draws))
    assert abs(hits / draws - 0.5) < 3 * math.sqrt(0.25 / draws)


def test_cyclic_samples_are_orthogonal():
    r = rng(7)
    mu = Cyclic(point(H, H))
    for _ in range(200):
        op = sample_operator(mu, 5, r)
        assert op_multiply(op, op_transpose(op)) == op_identity(5, 2)


def test_array_measure_is_not_operator_valued():
    mu = ArrayMeasure((point(H, H),))
    with pytest.raises(DomainError):
        sample_operator(mu, 2, rng())
    with pytest.raises(DomainError):
        sample_lipschitz_map(ProductColumns((point(H, H),) * 2), 2, rng())


def test_constant_array_is_a_fixed_operator():
    mu = ArrayMeasure((point(1, 0),))
    arr = sample_lipschitz_map(mu, 3, rng())
    e1 = LabeledPartition.constant(3, 2, 1)
    assert all(e == e1 for row in arr.entries for e in row)
    for lam in enumerate_partitions(3, 2):
        assert arr(lam) == e1


def test_array_entry_marginals_chi_square():
    mu = ArrayMeasure((point(H, H), point(H, H), point(2 * THIRD, THIRD), point(H, H)))
    r = rng(8)
    n, k, draws = 3, 2, 4000
    counts = Counter()
    for _ in range(draws):
        arr = sample_lipschitz_map(mu, n, r)
        for i in range(k):
            counts[arr.entries[i][2]] += 1
    law = paintbox_law(point(2 * THIRD, THIRD), n)
    keys = list(enumerate_partitions(n, k))
    obs = [counts[x] for x in keys]
    exp = [float(law[x]) * draws * k for x in keys]
    assert stats.chisquare(obs, exp).pvalue > 0.01


def test_selfsimilar_sampler_matches_exact_law():
    mu = SelfSimilar(point(2 * THIRD, THIRD))
    law = dict(exact_level_measure(mu, 2))
    r = rng(9)
    draws = 20000
    counts = Counter(sample_operator(mu, 2, r) for _ in range(draws))
    assert set(counts) <= set(law)
    keys = list(law)
    assert stats.chisquare([counts[x] for x in keys], [float(law[x]) * draws for x in keys]).pvalue > 0.01


# -- exact level measures ----------------------------------------------------


def _selfsimilar_bruteforce(s, n, k):
    """Per column: colour each element by the ranked masses, list blocks by least element, place them by a permutation."""
    ranked = sorted(s, reverse=True)
    col_law = Counter()
    for colours in itertools.product(range(k), repeat=n):
        p = Fraction(1)
        for c in colours:
            p *= ranked[c]
        if not p:
            continue
        groups = {}
        for elem, c in enumerate(colours, start=1):
            groups.setdefault(c, set()).add(elem)
        ordered = sorted(groups.values(), key=min) + [set()] * (k - len(groups))
        perms = list(itertools.permutations(range(k)))
        for perm in perms:
            classes = [ordered[perm[j]] for j in range(k)]
            col_law[LabeledPartition.from_classes(classes, n)] += p / len(perms)
    out = Counter()
    for cols in itertools.product(col_law.items(), repeat=k):
        w = Fraction(1)
        for _, p in cols:
            w *= p
        out[PartitionOperator.from_columns([c for c, _ in cols])] += w
    return dict(out)


@pytest.mark.parametrize("n", [1, 2, 3])
@pytest.mark.parametrize("s", [(H, H), (2 * THIRD, THIRD), (1, 0)])
def test_selfsimilar_exact_measure_matches_bruteforce(n, s):
    mu = SelfSimilar(point(*s))
    assert dict(exact_level_measure(mu, n)) == _selfsimilar_bruteforce(s, n, 2)


def test_product_columns_level_one():
    law = exact_level_measure(ProductColumns((point(H, H), point(H, H))), 1)
    assert len(law) == 4 and all(w == Fraction(1, 4) for _, w in law)


def test_discrete_atoms_restricted_and_merged():
    a = parse_operator("{1,2},{2};{},{1}", 2)
    b = parse_operator("{1},{2};{2},{1}", 2)
    mu = DiscreteOperators(((a, 1), (b, 2), (a, Fraction(1, 2))))
    law = dict(exact_level_measure(mu, 1))
    assert law == {op_restrict(a, 1): Fraction(3, 2) + 2}
    assert dict(exact_level_measure(mu, 2)) == {a: Fraction(3, 2), b: 2}


@pytest.mark.parametrize("mu", exchangeable_variants())
def test_masses_sum_to_total(mu):
    for n in (1, 2, 3):
        assert sum(w for _, w in exact_level_measure(mu, n)) == mu.total_mass


@pytest.mark.parametrize("mu", exchangeable_variants())
def test_pushforward_consistency(mu):
    high = exact_level_measure(mu, 3)
    for m in (1, 2):
        merged = Counter()
        for op, w in high:
            merged[op_restrict(op, m)] += w
        assert dict(merged) == dict(exact_level_measure(mu, m))


@pytest.mark.parametrize("mu", exchangeable_variants())
def test_exact_measure_relabel_invariant(mu):
    for n in (2, 3):
        law = dict(exact_level_measure(mu, n))
        for sigma in Permutation.all(n):
            moved = Counter()
            for op, w in law.items():
                moved[op_relabel(op, sigma)] += w
            assert dict(moved) == law


def test_capacity_guard():
    with pytest.raises(CapacityError):
        exact_level_measure(ProductColumns((point(H, H),) * 2), 12)
    with pytest.raises(DomainError):
        exact_level_measure(ProductColumns((DirichletSimplex((1.0, 1.0)),) * 2), 1)


# -- non-identity mass ------------------------------------------------------


def test_nonidentity_mass_examples():
    m = parse_operator("{1},{};{},{1}", 1)
    not_id = parse_operator("{1},{1};{},{}", 1)
    assert nonidentity_mass(DiscreteOperators(((not_id, 3),)), 1) == (3, True)
    assert nonidentity_mass(DiscreteOperators(((m, 5),)), 1).value == 0
    assert nonidentity_mass(ProductColumns((point(H, H),) * 2, total_mass=2), 1) == (Fraction(3, 2), True)


def test_cyclic_nonidentity_by_enumeration():
    # M_lam is the identity at level 2 exactly when lam restricted to [2] is 11
    oracle = sum(Fraction(1, 4) for labels in itertools.product((1, 2), repeat=2) if labels != (1, 1))
    assert nonidentity_mass(Cyclic(point(H, H)), 2).value == oracle == Fraction(3, 4)


@pytest.mark.parametrize(
    "mu",
    exchangeable_variants()
    + [ArrayMeasure((point(1, 0), point(1, 0), point(H, H))), ArrayMeasure((point(H, H), point(THIRD, 2 * THIRD)))],
)
def test_closed_form_matches_enumeration(mu):
    for n in (1, 2):
        law = exact_level_map_measure(mu, n)
        enum = sum((w for t, w in law.items() if not t.is_identity()), Fraction(0))
        assert nonidentity_mass(mu, n) == (enum, True)


@pytest.mark.parametrize("mu", exchangeable_variants())
def test_regularity_bound(mu):
    m2 = nonidentity_mass(mu, 2).value
    for n in range(1, 9):
        mn, exact = nonidentity_mass(mu, n)
        assert exact and mn <= mu.total_mass
        if n >= 2:
            assert mn <= math.factorial(n) * m2


def test_dirichlet_mass_is_a_bound():
    mu = ProductColumns((DirichletSimplex((1.0, 1.0)),) * 2, total_mass=2)
    assert nonidentity_mass(mu, 3) == (2, False)


def test_nonidentity_mass_rejects_bad_level():
    with pytest.raises(DomainError):
        nonidentity_mass(Cyclic(point(H, H)), 0)


def test_map_measure_of_operator_variant_matches_tables():
    mu = Cyclic(point(H, H))
    law = exact_level_map_measure(mu, 2)
    assert law == {MapTable.from_operator(op): w for op, w in exact_level_measure(mu, 2)}


# -- specs -------------------------------------------------------------------


@pytest.mark.parametrize(
    "mu",
    exchangeable_variants()
    + [
        ArrayMeasure((point(1, 0), point(H, H))),
        DiscreteOperators(((parse_operator("{1},{1,2};{2},{}", 2), Fraction(3, 2)),)),
        ProductColumns((DirichletSimplex((1.0, 2.0)),) * 2),
    ],
)
def test_spec_roundtrip(mu):
    assert measure_from_spec(measure_to_spec(mu)) == mu


def test_spec_errors_name_the_field():
    with pytest.raises(ConfigurationError, match="variant"):
        measure_from_spec({"k": 2})
    with pytest.raises(ConfigurationError, match="unknown measure variant"):
        measure_from_spec({"variant": "nope"})
    with pytest.raises(ConfigurationError, match="'k'"):
        measure_from_spec({"variant": "cyclic", "k": 3, "parameters": {"nu": {"kind": "point", "s": ["1/2", "1/2"]}}})


def test_spec_accepts_decimals_and_shared_nu():
    mu = measure_from_spec(
        {"variant": "product_columns", "k": 2, "total_mass": "0.5", "parameters": {"nu": {"kind": "point", "s": [0.25, 0.75]}}}
    )
    assert mu.total_mass == H and mu.columns[1].s == (Fraction(1, 4), Fraction(3, 4))
