"""Directing measures: simplex laws, paintbox samplers and operator rate measures.

Simplex laws are restricted to point masses, finitely supported mixtures
and Dirichlet distributions.  The first two keep every level-n law exactly
computable in rational arithmetic; Dirichlet laws are simulation-only.

Each operator rate measure carries ``total_mass``, the rate of the Poisson
process of candidate events.  The simplex laws inside it are normalized
before use.
"""

from __future__ import annotations

import itertools
import math
from collections import namedtuple
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache
from typing import Callable, Union

import numpy as np

from .errors import CapacityError, ConfigurationError, DomainError
from .operators import ColumnArray, MapTable, PartitionOperator, op_cyclic, op_identity, op_restrict, parse_operator
from .partitions import LabeledPartition, SetPartition, elements_of, enumerate_partitions, labels_to_masks

LEVEL_LIMIT = 10**6
SIMPLEX_TOL = 1e-12

Number = Union[Fraction, float]
RateMass = namedtuple("RateMass", ["value", "exact"])


def as_number(x) -> Fraction:
    """Parse "p/q", decimal strings, ints and floats as exact rationals."""
    if isinstance(x, Fraction):
        return x
    if isinstance(x, bool):
        raise ConfigurationError(f"not a number: {x!r}")
    if isinstance(x, int):
        return Fraction(x)
    if isinstance(x, float):
        if not math.isfinite(x):
            raise ConfigurationError(f"not a finite number: {x!r}")
        return Fraction(repr(x))
    if isinstance(x, str):
        try:
            return Fraction(x.strip())
        except (ValueError, ZeroDivisionError):
            raise ConfigurationError(f"not a rational number: {x!r}") from None
    raise ConfigurationError(f"not a number: {x!r}")


def _check_simplex_vector(s: tuple[Fraction, ...]) -> None:
    if any(x < 0 for x in s):
        raise ConfigurationError(f"simplex vector {s} has a negative entry")
    if abs(float(sum(s)) - 1.0) > SIMPLEX_TOL:
        raise ConfigurationError(f"simplex vector {[str(x) for x in s]} does not sum to 1")


def _categorical(s: np.ndarray, n: int, rng: np.random.Generator) -> np.ndarray:
    """n i.i.d. labels in 1..len(s) with probabilities s."""
    cum = np.cumsum(s)
    cum[-1] = np.inf
    return np.searchsorted(cum, rng.random(n), side="right") + 1


# -- simplex laws -----------------------------------------------------------


class SimplexDistribution:
    """A finite measure on the (k-1)-simplex."""

    k: int
    total_mass: Fraction

    def sample(self, rng: np.random.Generator) -> np.ndarray:
        raise NotImplementedError

    def atoms(self) -> list[tuple[tuple[Fraction, ...], Fraction]] | None:
        """Normalized support as (vector, probability) pairs; None if not finite."""
        return None

    @property
    def exact(self) -> bool:
        return self.atoms() is not None

    def moment(self, f: Callable[[tuple[Fraction, ...]], Fraction]) -> Fraction:
        """E f(s) under the normalized law (finite support only)."""
        atoms = self.atoms()
        if atoms is None:
            raise DomainError("exact moments need a point or discrete law")
        return sum((w * f(s) for s, w in atoms), Fraction(0))

    def mean(self) -> np.ndarray:
        return np.array([float(self.moment(lambda s, i=i: s[i])) for i in range(self.k)])


@dataclass(frozen=True)
class PointSimplex(SimplexDistribution):
    s: tuple[Fraction, ...]
    total_mass: Fraction = Fraction(1)

    def __post_init__(self):
        object.__setattr__(self, "s", tuple(as_number(x) for x in self.s))
        object.__setattr__(self, "total_mass", as_number(self.total_mass))
        _check_simplex_vector(self.s)
        if self.total_mass <= 0:
            raise ConfigurationError("total_mass must be positive")

    @property
    def k(self) -> int:
        return len(self.s)

    def sample(self, rng):
        return np.array([float(x) for x in self.s])

    def atoms(self):
        return [(self.s, Fraction(1))]


@dataclass(frozen=True)
class DiscreteSimplex(SimplexDistribution):
    support: tuple[tuple[tuple[Fraction, ...], Fraction], ...]

    def __post_init__(self):
        support = tuple((tuple(as_number(x) for x in s), as_number(w)) for s, w in self.support)
        if not support:
            raise ConfigurationError("discrete simplex law needs at least one atom")
        ks = {len(s) for s, _ in support}
        if len(ks) != 1:
            raise ConfigurationError("atoms must share dimension")
        for s, w in support:
            _check_simplex_vector(s)
            if w <= 0:
                raise ConfigurationError("atom masses must be positive")
        object.__setattr__(self, "support", support)

    @property
    def k(self) -> int:
        return len(self.support[0][0])

    @property
    def total_mass(self) -> Fraction:
        return sum((w for _, w in self.support), Fraction(0))

    def sample(self, rng):
        probs = np.array([float(w / self.total_mass) for _, w in self.support])
        idx = int(_categorical(probs, 1, rng)[0]) - 1
        return np.array([float(x) for x in self.support[idx][0]])

    def atoms(self):
        total = self.total_mass
        return [(s, w / total) for s, w in self.support]


@dataclass(frozen=True)
class DirichletSimplex(SimplexDistribution):
    alpha: tuple[float, ...]
    total_mass: Fraction = Fraction(1)

    def __post_init__(self):
        object.__setattr__(self, "alpha", tuple(float(a) for a in self.alpha))
        object.__setattr__(self, "total_mass", as_number(self.total_mass))
        if any(a <= 0 for a in self.alpha):
            raise ConfigurationError("Dirichlet parameters must be positive")
        if self.total_mass <= 0:
            raise ConfigurationError("total_mass must be positive")

    @property
    def k(self) -> int:
        return len(self.alpha)

    def sample(self, rng):
        return rng.dirichlet(self.alpha)

    def mean(self):
        a = np.array(self.alpha)
        return a / a.sum()


def point(*s) -> PointSimplex:
    return PointSimplex(tuple(s))


@dataclass(frozen=True)
class RankedSimplexPoint:
    """A ranked mass partition s_1 >= s_2 >= ... >= 0 with dust 1 - sum(s)."""

    s: tuple[Fraction, ...]

    def __post_init__(self):
        s = tuple(as_number(x) for x in self.s)
        if any(x < 0 for x in s) or any(a < b for a, b in zip(s, s[1:])):
            raise ConfigurationError(f"{[str(x) for x in s]} is not ranked and non-negative")
        if float(sum(s)) > 1 + SIMPLEX_TOL:
            raise ConfigurationError("ranked masses exceed 1")
        object.__setattr__(self, "s", s)

    @property
    def dust(self) -> Fraction:
        return max(Fraction(1) - sum(self.s, Fraction(0)), Fraction(0))


# -- paintbox samplers ------------------------------------------------------


def sample_simplex(nu: SimplexDistribution, rng: np.random.Generator) -> np.ndarray:
    if nu.total_mass <= 0:
        raise DomainError("cannot sample from a zero measure")
    return nu.sample(rng)


def sample_labeled_paintbox(nu: SimplexDistribution, n: int, rng: np.random.Generator) -> LabeledPartition:
    """Draw s from nu, then n i.i.d. labels with P{label = j} = s_j."""
    s = sample_simplex(nu, rng)
    labels = _categorical(s, n, rng)
    return LabeledPartition(n, nu.k, labels_to_masks(labels if n > 64 else labels.tolist(), nu.k))


def sample_ranked_paintbox(s: RankedSimplexPoint, n: int, rng: np.random.Generator) -> SetPartition:
    """Kingman paintbox: shared colors form blocks, dust falls into singletons."""
    masses = np.array([float(x) for x in s.s] + [float(s.dust)])
    colors = _categorical(masses, n, rng)
    dust_color = len(s.s) + 1
    masks = list(labels_to_masks(colors if n > 64 else colors.tolist(), dust_color))
    dust = masks.pop()
    singles = [1 << (e - 1) for e in elements_of(dust)]
    return SetPartition.from_masks(n, [m for m in masks if m] + singles)


def _sample_ranked_column(nu: SimplexDistribution, n: int, rng: np.random.Generator) -> LabeledPartition:
    """Paintbox partition of [n] from sorted(s), blocks labeled by a uniform permutation."""
    s = np.sort(sample_simplex(nu, rng))[::-1]
    k = nu.k
    colors = _categorical(s, n, rng)
    pi = SetPartition.from_masks(n, labels_to_masks(colors if n > 64 else colors.tolist(), k))
    perm = rng.permutation(k)
    return LabeledPartition(n, k, tuple(pi.blocks[p] if p < len(pi.blocks) else 0 for p in perm))


# -- exact level-n laws -----------------------------------------------------


@lru_cache(maxsize=256)
def paintbox_law(nu: SimplexDistribution, n: int) -> dict[LabeledPartition, Fraction]:
    """Exact law of the labeled paintbox at level n (point/discrete nu)."""
    atoms = nu.atoms()
    if atoms is None:
        raise DomainError("exact paintbox laws need a point or discrete simplex law")
    law: dict[LabeledPartition, Fraction] = {}
    for lam in enumerate_partitions(n, nu.k):
        sizes = lam.sizes
        p = Fraction(0)
        for s, w in atoms:
            term = w
            for sj, c in zip(s, sizes):
                term *= sj**c
            p += term
        if p:
            law[lam] = p
    return law


def ranked_paintbox_prob(s: tuple[Fraction, ...], block_sizes: list[int]) -> Fraction:
    """P{paintbox with ranked masses s (no dust) yields a given partition}."""
    total = Fraction(0)
    for colors in itertools.permutations(range(len(s)), len(block_sizes)):
        term = Fraction(1)
        for c, size in zip(colors, block_sizes):
            term *= s[c] ** size
        total += term
    return total


@lru_cache(maxsize=256)
def ranked_column_law(nu: SimplexDistribution, n: int) -> dict[LabeledPartition, Fraction]:
    """Exact law of one self-similar column: paintbox partition with uniformly permuted labels."""
    atoms = nu.atoms()
    if atoms is None:
        raise DomainError("exact laws need a point or discrete simplex law")
    k = nu.k
    perms = list(itertools.permutations(range(k)))
    law: dict[LabeledPartition, Fraction] = {}
    for colors in itertools.product(range(k), repeat=n):
        p = Fraction(0)
        for s, w in atoms:
            ranked = sorted(s, reverse=True)
            term = w
            for c in colors:
                term *= ranked[c]
            p += term
        if not p:
            continue
        masks = [0] * k
        for pos, c in enumerate(colors):
            masks[c] |= 1 << pos
        pi = SetPartition.from_masks(n, masks)
        share = p / len(perms)
        for perm in perms:
            col = LabeledPartition(n, k, tuple(pi.blocks[q] if q < len(pi.blocks) else 0 for q in perm))
            law[col] = law.get(col, Fraction(0)) + share
    return law


# -- operator rate measures -------------------------------------------------


class OperatorRateMeasure:
    """Finite-activity description of a directing measure."""

    k: int
    total_mass: Fraction
    operator_valued = True
    variant = ""

    def sample(self, n: int, rng: np.random.Generator):
        raise NotImplementedError

    def simplex_laws(self) -> tuple[SimplexDistribution, ...]:
        return ()

    @property
    def exact(self) -> bool:
        return all(nu.exact for nu in self.simplex_laws())


def _check_law_dimension(laws, k):
    for nu in laws:
        if nu.k != k:
            raise ConfigurationError(f"simplex law has dimension {nu.k}, expected {k}")


@dataclass(frozen=True)
class ProductColumns(OperatorRateMeasure):
    """Columns drawn independently, column i from the labeled paintbox of nu_i."""

    columns: tuple[SimplexDistribution, ...]
    total_mass: Fraction = Fraction(1)
    variant = "product_columns"

    def __post_init__(self):
        object.__setattr__(self, "total_mass", as_number(self.total_mass))
        _check_law_dimension(self.columns, len(self.columns))

    @property
    def k(self) -> int:
        return len(self.columns)

    def simplex_laws(self):
        return self.columns

    def sample(self, n, rng):
        return PartitionOperator.from_columns([sample_labeled_paintbox(nu, n, rng) for nu in self.columns])


@dataclass(frozen=True)
class OneColumn(OperatorRateMeasure):
    """A single uniformly placed random column; the others are E_i."""

    nu: SimplexDistribution
    total_mass: Fraction = Fraction(1)
    variant = "one_column"

    def __post_init__(self):
        object.__setattr__(self, "total_mass", as_number(self.total_mass))

    @property
    def k(self) -> int:
        return self.nu.k

    def simplex_laws(self):
        return (self.nu,)

    def build(self, n: int, position: int, column: LabeledPartition) -> PartitionOperator:
        cols = [LabeledPartition.constant(n, self.k, i) for i in range(1, self.k + 1)]
        cols[position - 1] = column
        return PartitionOperator.from_columns(cols)

    def sample(self, n, rng):
        position = int(rng.integers(1, self.k + 1))
        return self.build(n, position, sample_labeled_paintbox(self.nu, n, rng))


@dataclass(frozen=True)
class Cyclic(OperatorRateMeasure):
    """The cyclic-shift operator M_lam with lam from the labeled paintbox of nu."""

    nu: SimplexDistribution
    total_mass: Fraction = Fraction(1)
    variant = "cyclic"

    def __post_init__(self):
        object.__setattr__(self, "total_mass", as_number(self.total_mass))

    @property
    def k(self) -> int:
        return self.nu.k

    def simplex_laws(self):
        return (self.nu,)

    def sample(self, n, rng):
        return op_cyclic(sample_labeled_paintbox(self.nu, n, rng))


@dataclass(frozen=True)
class SelfSimilar(OperatorRateMeasure):
    """Column i: a paintbox partition from nu (ranked) with blocks placed by a uniform permutation.

    Applied to the block labeling of a set partition, row unions reproduce
    the fragment-and-relabel jump of the self-similar process on partitions
    with at most k blocks.
    """

    nu: SimplexDistribution
    total_mass: Fraction = Fraction(1)
    variant = "self_similar"

    def __post_init__(self):
        object.__setattr__(self, "total_mass", as_number(self.total_mass))
        for s, _ in self.nu.atoms() or ():
            RankedSimplexPoint(tuple(sorted(s, reverse=True)))

    @property
    def k(self) -> int:
        return self.nu.k

    def simplex_laws(self):
        return (self.nu,)

    def sample(self, n, rng):
        return PartitionOperator.from_columns([_sample_ranked_column(self.nu, n, rng) for _ in range(self.k)])


OperatorSource = Union[PartitionOperator, Callable[[int], PartitionOperator]]


@dataclass(frozen=True)
class DiscreteOperators(OperatorRateMeasure):
    """Finitely many operators with explicit masses.

    An atom is a PartitionOperator over some [N] (restricted to the working
    level) or a callable returning the operator at a requested level.
    """

    atoms: tuple[tuple[OperatorSource, Fraction], ...]
    k_: int | None = None
    variant = "discrete"

    def __post_init__(self):
        atoms = tuple((op, as_number(w)) for op, w in self.atoms)
        for _, w in atoms:
            if w < 0:
                raise ConfigurationError("atom masses must be non-negative")
        object.__setattr__(self, "atoms", atoms)
        if self.k_ is None:
            ks = {op.k for op, _ in atoms if isinstance(op, PartitionOperator)}
            if len(ks) != 1:
                raise ConfigurationError("cannot infer k from the atoms; pass k_")
            object.__setattr__(self, "k_", ks.pop())

    @property
    def k(self) -> int:
        return self.k_

    @property
    def total_mass(self) -> Fraction:
        return sum((w for _, w in self.atoms), Fraction(0))

    def operator_at(self, index: int, n: int) -> PartitionOperator:
        op = self.atoms[index][0]
        if isinstance(op, PartitionOperator):
            if op.n < n:
                raise DomainError(f"atom operator is over [{op.n}], level {n} requested")
            return op_restrict(op, n)
        return op(n)

    def sample(self, n, rng):
        probs = np.array([float(w / self.total_mass) for _, w in self.atoms])
        idx = int(_categorical(probs, 1, rng)[0]) - 1
        return self.operator_at(idx, n)


@dataclass(frozen=True)
class ArrayMeasure(OperatorRateMeasure):
    """Random column arrays: entry (i, j) drawn from the labeled paintbox of nu_j.

    ``columns[j]`` is the law for least-element index j (0 for empty
    classes); indices past the end reuse the last law.
    """

    columns: tuple[SimplexDistribution, ...]
    total_mass: Fraction = Fraction(1)
    operator_valued = False
    variant = "array"

    def __post_init__(self):
        object.__setattr__(self, "total_mass", as_number(self.total_mass))
        if not self.columns:
            raise ConfigurationError("array measure needs at least one column law")
        _check_law_dimension(self.columns, self.columns[0].k)

    @property
    def k(self) -> int:
        return self.columns[0].k

    def law(self, j: int) -> SimplexDistribution:
        return self.columns[min(j, len(self.columns) - 1)]

    def simplex_laws(self):
        return self.columns

    def sample(self, n, rng):
        return sample_lipschitz_map(self, n, rng)


def sample_operator(mu: OperatorRateMeasure, n: int, rng: np.random.Generator) -> PartitionOperator:
    if not mu.operator_valued:
        raise DomainError(f"{mu.variant} measures produce Lipschitz maps, use sample_lipschitz_map")
    return mu.sample(n, rng)


def sample_lipschitz_map(mu: ArrayMeasure, n: int, rng: np.random.Generator) -> ColumnArray:
    if not isinstance(mu, ArrayMeasure):
        raise DomainError("sample_lipschitz_map needs an array measure")
    entries = tuple(
        tuple(sample_labeled_paintbox(mu.law(j), n, rng) for j in range(n + 1)) for _ in range(mu.k)
    )
    return ColumnArray(mu.k, n, entries)


def _product_law(laws: list[dict], combine):
    out: dict = {}
    for combo in itertools.product(*(list(l.items()) for l in laws)):
        p = Fraction(1)
        for _, w in combo:
            p *= w
        key = combine([x for x, _ in combo])
        out[key] = out.get(key, Fraction(0)) + p
    return out


def _level_size(mu: OperatorRateMeasure, n: int) -> int:
    k = mu.k
    if isinstance(mu, (ProductColumns, SelfSimilar)):
        return (k**n) ** k
    if isinstance(mu, OneColumn):
        return k * k**n
    if isinstance(mu, Cyclic):
        return k**n
    if isinstance(mu, DiscreteOperators):
        return len(mu.atoms)
    if isinstance(mu, ArrayMeasure):
        return (k**n) ** (k * n)
    raise DomainError(f"unknown measure {mu!r}")


def exact_level_measure(mu: OperatorRateMeasure, n: int) -> list[tuple[PartitionOperator, Fraction]]:
    """Pushforward of mu to operators over [n], merged by equality; masses sum to total_mass."""
    if not mu.operator_valued:
        raise DomainError("array measures are not operator-valued, use exact_level_map_measure")
    if _level_size(mu, n) > LEVEL_LIMIT:
        raise CapacityError(f"level-{n} outcome space of {mu.variant} exceeds {LEVEL_LIMIT}")
    if not mu.exact:
        raise DomainError("exact level measures need point or discrete simplex laws")
    k = mu.k
    if isinstance(mu, ProductColumns):
        law = _product_law([paintbox_law(nu, n) for nu in mu.columns], PartitionOperator.from_columns)
    elif isinstance(mu, SelfSimilar):
        col = ranked_column_law(mu.nu, n)
        law = _product_law([col] * k, PartitionOperator.from_columns)
    elif isinstance(mu, OneColumn):
        law = {}
        for position in range(1, k + 1):
            for col, p in paintbox_law(mu.nu, n).items():
                op = mu.build(n, position, col)
                law[op] = law.get(op, Fraction(0)) + p / k
    elif isinstance(mu, Cyclic):
        law = {}
        for lam, p in paintbox_law(mu.nu, n).items():
            op = op_cyclic(lam)
            law[op] = law.get(op, Fraction(0)) + p
    else:
        law = {}
        for idx, (_, w) in enumerate(mu.atoms):
            op = mu.operator_at(idx, n)
            law[op] = law.get(op, Fraction(0)) + w
        return [(op, w) for op, w in law.items() if w]
    return [(op, p * mu.total_mass) for op, p in law.items()]


def exact_level_map_measure(mu: OperatorRateMeasure, n: int) -> dict[MapTable, Fraction]:
    """Pushforward of mu to level-n map tables (works for every variant)."""
    if mu.operator_valued:
        out: dict[MapTable, Fraction] = {}
        for op, w in exact_level_measure(mu, n):
            t = MapTable.from_operator(op)
            out[t] = out.get(t, Fraction(0)) + w
        return out
    # entries with index 0 only ever meet the empty set, so they are skipped
    k = mu.k
    if (k**n) ** (k * n) > LEVEL_LIMIT:
        raise CapacityError(f"level-{n} array outcome space exceeds {LEVEL_LIMIT}")
    if not mu.exact:
        raise DomainError("exact level measures need point or discrete simplex laws")
    dummy = LabeledPartition.constant(n, k, 1)
    per_slot = [list(paintbox_law(mu.law(j), n).items()) for _ in range(k) for j in range(1, n + 1)]
    out = {}
    for combo in itertools.product(*per_slot):
        p = mu.total_mass
        for _, w in combo:
            p *= w
        rows = tuple((dummy,) + tuple(combo[i * n + j][0] for j in range(n)) for i in range(k))
        t = MapTable.from_function(ColumnArray(k, n, rows), n, k)
        out[t] = out.get(t, Fraction(0)) + p
    return out


def identity_probability(mu: OperatorRateMeasure, n: int) -> Fraction:
    """P{a draw from mu acts as the identity on k-partitions of [n]} (closed form)."""
    k = mu.k
    if isinstance(mu, ProductColumns):
        p = Fraction(1)
        for i, nu in enumerate(mu.columns):
            p *= nu.moment(lambda s, i=i: s[i] ** n)
        return p
    if isinstance(mu, OneColumn):
        return mu.nu.moment(lambda s: sum((x**n for x in s), Fraction(0)) / k)
    if isinstance(mu, Cyclic):
        if k == 1:
            return Fraction(1)
        return mu.nu.moment(lambda s: s[0] ** n)
    if isinstance(mu, SelfSimilar):
        one_block = mu.nu.moment(lambda s: sum((x**n for x in s), Fraction(0)))
        return (one_block / k) ** k
    if isinstance(mu, ArrayMeasure):
        if k == 1:
            return Fraction(1)
        p = Fraction(1)
        for i in range(k):
            for j in range(1, n + 1):
                p *= mu.law(j).moment(lambda s, i=i, j=j: s[i] ** (n - j + 1))
        return p
    raise DomainError(f"no closed form for {mu.variant}")


def nonidentity_mass(mu: OperatorRateMeasure, n: int) -> RateMass:
    """Mass of draws that are not the identity at level n.

    Exact for point/discrete laws; otherwise ``total_mass`` as an upper bound
    (``exact=False``), in which case simulation thins identity draws.
    """
    total = mu.total_mass
    if isinstance(total, float) and not math.isfinite(total):
        raise ConfigurationError("total mass must be finite")
    if total < 0:
        raise ConfigurationError("total mass must be non-negative")
    if n < 1:
        raise DomainError("level must be at least 1")
    if isinstance(mu, DiscreteOperators):
        ident = op_identity(n, mu.k)
        return RateMass(
            sum((w for idx, (_, w) in enumerate(mu.atoms) if mu.operator_at(idx, n) != ident), Fraction(0)),
            True,
        )
    if mu.exact:
        return RateMass(total * (1 - identity_probability(mu, n)), True)
    return RateMass(total, False)


# -- structured specs -------------------------------------------------------


def simplex_from_spec(spec: dict) -> SimplexDistribution:
    kind = spec.get("kind")
    mass = spec.get("total_mass", 1)
    if kind == "point":
        return PointSimplex(tuple(spec["s"]), as_number(mass))
    if kind == "discrete":
        return DiscreteSimplex(tuple((tuple(a["s"]), a["mass"]) for a in spec["atoms"]))
    if kind == "dirichlet":
        return DirichletSimplex(tuple(float(a) for a in spec["alpha"]), as_number(mass))
    raise ConfigurationError(f"unknown simplex law kind {kind!r}")


def simplex_to_spec(nu: SimplexDistribution) -> dict:
    if isinstance(nu, PointSimplex):
        return {"kind": "point", "s": [str(x) for x in nu.s], "total_mass": str(nu.total_mass)}
    if isinstance(nu, DiscreteSimplex):
        return {"kind": "discrete", "atoms": [{"s": [str(x) for x in s], "mass": str(w)} for s, w in nu.support]}
    return {"kind": "dirichlet", "alpha": list(nu.alpha), "total_mass": str(nu.total_mass)}


def measure_from_spec(spec: dict) -> OperatorRateMeasure:
    """Build a measure from its structured description.

    ``{"variant": ..., "k": ..., "parameters": {...}, "total_mass": ...}``
    """
    try:
        variant = spec["variant"]
        params = spec.get("parameters", {})
        mass = as_number(spec.get("total_mass", 1))
        if variant in ("product_columns", "array"):
            if "columns" in params:
                laws = tuple(simplex_from_spec(c) for c in params["columns"])
            else:
                laws = (simplex_from_spec(params["nu"]),) * int(spec["k"])
            mu = ProductColumns(laws, mass) if variant == "product_columns" else ArrayMeasure(laws, mass)
        elif variant == "one_column":
            mu = OneColumn(simplex_from_spec(params["nu"]), mass)
        elif variant == "cyclic":
            mu = Cyclic(simplex_from_spec(params["nu"]), mass)
        elif variant == "self_similar":
            mu = SelfSimilar(simplex_from_spec(params["nu"]), mass)
        elif variant == "discrete":
            atoms = tuple((parse_operator(a["operator"], a.get("n")), a["mass"]) for a in params["atoms"])
            mu = DiscreteOperators(atoms, spec.get("k"))
        else:
            raise ConfigurationError(f"unknown measure variant {variant!r}")
    except KeyError as exc:
        raise ConfigurationError(f"measure config is missing field {exc.args[0]!r}") from None
    if "k" in spec and int(spec["k"]) != mu.k:
        raise ConfigurationError(f"field 'k' is {spec['k']} but the parameters have dimension {mu.k}")
    return mu


def measure_to_spec(mu: OperatorRateMeasure) -> dict:
    spec: dict = {"variant": mu.variant, "k": mu.k, "total_mass": str(mu.total_mass)}
    if isinstance(mu, (ProductColumns, ArrayMeasure)):
        spec["parameters"] = {"columns": [simplex_to_spec(nu) for nu in mu.columns]}
    elif isinstance(mu, DiscreteOperators):
        spec["parameters"] = {
            "atoms": [{"operator": op.text(), "n": op.n, "mass": str(w)} for op, w in mu.atoms]
        }
        del spec["total_mass"]
    else:
        spec["parameters"] = {"nu": simplex_to_spec(mu.nu)}
    return spec
