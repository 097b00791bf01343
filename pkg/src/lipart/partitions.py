"""Labeled k-partitions and set partitions of [n].

Subsets of [n] are stored as Python integers used as bit vectors: element
``e`` (1-based) is bit ``e - 1``.  Union and intersection are then single
word-level operations regardless of ``n``.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from functools import cached_property
from typing import Iterable, Iterator, Sequence

import numpy as np

from .errors import CapacityError, DomainError, InvariantError

ENUMERATION_LIMIT = 10**7

# above this size label/mask conversion goes through numpy
_VECTOR_THRESHOLD = 64


def full_mask(n: int) -> int:
    return (1 << n) - 1


def mask_of(elements: Iterable[int]) -> int:
    mask = 0
    for e in elements:
        if e < 1:
            raise DomainError(f"elements are 1-based, got {e}")
        mask |= 1 << (e - 1)
    return mask


def elements_of(mask: int) -> list[int]:
    """Ascending 1-based elements of a bit-vector subset."""
    out = []
    while mask:
        low = mask & -mask
        out.append(low.bit_length())
        mask ^= low
    return out


def least_element(mask: int) -> int:
    """Least 1-based element of a non-empty subset."""
    return (mask & -mask).bit_length()


def _mask_to_bool(mask: int, n: int) -> np.ndarray:
    raw = np.frombuffer(mask.to_bytes((n + 7) // 8, "little"), dtype=np.uint8)
    return np.unpackbits(raw, bitorder="little")[:n].astype(bool)


def _bool_to_mask(flags: np.ndarray) -> int:
    return int.from_bytes(np.packbits(flags, bitorder="little").tobytes(), "little")


def labels_to_masks(labels: Sequence[int] | np.ndarray, k: int) -> tuple[int, ...]:
    n = len(labels)
    if n > _VECTOR_THRESHOLD:
        arr = np.asarray(labels)
        if arr.size and (arr.min() < 1 or arr.max() > k):
            raise InvariantError(f"labels must lie in 1..{k}")
        return tuple(_bool_to_mask(arr == j) for j in range(1, k + 1))
    masks = [0] * k
    for pos, lab in enumerate(labels):
        if not 1 <= lab <= k:
            raise InvariantError(f"label {lab} at position {pos + 1} not in 1..{k}")
        masks[lab - 1] |= 1 << pos
    return tuple(masks)


@dataclass(frozen=True)
class LabeledPartition:
    """A k-partition of [n]: an assignment of every element to one of k classes.

    ``masks[i]`` is the bit vector of class ``i + 1``.  Empty classes are
    allowed.  Equality and hashing are structural.
    """

    n: int
    k: int
    masks: tuple[int, ...]

    def __post_init__(self):
        if self.n < 0 or self.k < 1:
            raise InvariantError(f"need n >= 0 and k >= 1, got n={self.n}, k={self.k}")
        if len(self.masks) != self.k:
            raise InvariantError(f"expected {self.k} classes, got {len(self.masks)}")
        union = 0
        count = 0
        for m in self.masks:
            union |= m
            count += m.bit_count()
        if union != full_mask(self.n) or count != self.n:
            raise InvariantError("classes must be disjoint and cover [n]")

    @classmethod
    def from_labels(cls, labels: Sequence[int] | np.ndarray, k: int) -> LabeledPartition:
        return cls(len(labels), k, labels_to_masks(labels, k))

    @classmethod
    def from_classes(cls, classes: Sequence[Iterable[int]], n: int) -> LabeledPartition:
        return cls(n, len(classes), tuple(mask_of(c) for c in classes))

    @classmethod
    def constant(cls, n: int, k: int, j: int) -> LabeledPartition:
        """The labeling E_j sending every element to class j."""
        if not 1 <= j <= k:
            raise DomainError(f"class {j} not in 1..{k}")
        return cls(n, k, tuple(full_mask(n) if i == j - 1 else 0 for i in range(k)))

    @cached_property
    def labels(self) -> tuple[int, ...]:
        if self.n > _VECTOR_THRESHOLD:
            arr = np.zeros(self.n, dtype=np.int64)
            for i, m in enumerate(self.masks):
                if m:
                    arr[_mask_to_bool(m, self.n)] = i + 1
            return tuple(arr.tolist())
        out = [0] * self.n
        for i, m in enumerate(self.masks):
            for e in elements_of(m):
                out[e - 1] = i + 1
        return tuple(out)

    def label_array(self) -> np.ndarray:
        return np.asarray(self.labels, dtype=np.int64)

    @property
    def classes(self) -> tuple[frozenset[int], ...]:
        return tuple(frozenset(elements_of(m)) for m in self.masks)

    @property
    def sizes(self) -> tuple[int, ...]:
        return tuple(m.bit_count() for m in self.masks)

    def __call__(self, element: int) -> int:
        """The label of ``element`` (the map view [n] -> [k])."""
        return self.labels[element - 1]

    def restrict(self, m: int) -> LabeledPartition:
        return restrict(self, m)

    def text(self) -> str:
        return format_labeled(self)

    def __str__(self) -> str:
        return self.text()


@dataclass(frozen=True)
class SetPartition:
    """A partition of [n] into non-empty blocks ordered by least element."""

    n: int
    blocks: tuple[int, ...]

    def __post_init__(self):
        union = 0
        count = 0
        prev = 0
        for b in self.blocks:
            if b == 0:
                raise InvariantError("blocks must be non-empty")
            low = least_element(b)
            if low <= prev:
                raise InvariantError("blocks must be listed in increasing order of least element")
            prev = low
            union |= b
            count += b.bit_count()
        if union != full_mask(self.n) or count != self.n:
            raise InvariantError("blocks must be disjoint and cover [n]")

    @classmethod
    def from_masks(cls, n: int, masks: Iterable[int]) -> SetPartition:
        """Canonicalize: drop empty sets, sort by least element."""
        return cls(n, tuple(sorted((m for m in masks if m), key=least_element)))

    @classmethod
    def from_blocks(cls, blocks: Iterable[Iterable[int]], n: int | None = None) -> SetPartition:
        masks = [mask_of(b) for b in blocks]
        if n is None:
            n = max((m.bit_length() for m in masks), default=0)
        return cls.from_masks(n, masks)

    @classmethod
    def one(cls, n: int) -> SetPartition:
        """The single-block partition 1_[n]."""
        return cls(n, (full_mask(n),) if n else ())

    @classmethod
    def zero(cls, n: int) -> SetPartition:
        """The partition 0_[n] into singletons."""
        return cls(n, tuple(1 << i for i in range(n)))

    def __len__(self) -> int:
        return len(self.blocks)

    def block_sets(self) -> list[list[int]]:
        return [elements_of(b) for b in self.blocks]

    def as_labeled(self, k: int | None = None) -> LabeledPartition:
        """Label block i (least-element order) with class i, padding with empty classes."""
        k = len(self.blocks) if k is None else k
        if k < len(self.blocks):
            raise DomainError(f"{len(self.blocks)} blocks do not fit in {k} classes")
        return LabeledPartition(self.n, k, self.blocks + (0,) * (k - len(self.blocks)))

    def text(self) -> str:
        return format_set_partition(self)

    def __str__(self) -> str:
        return self.text()


@dataclass(frozen=True)
class Permutation:
    """A bijection of [n], stored as the 1-based image tuple."""

    images: tuple[int, ...]

    def __post_init__(self):
        if sorted(self.images) != list(range(1, len(self.images) + 1)):
            raise InvariantError(f"{self.images} is not a permutation")

    @property
    def n(self) -> int:
        return len(self.images)

    @classmethod
    def identity(cls, n: int) -> Permutation:
        return cls(tuple(range(1, n + 1)))

    @classmethod
    def transposition(cls, n: int, a: int, b: int) -> Permutation:
        images = list(range(1, n + 1))
        images[a - 1], images[b - 1] = b, a
        return cls(tuple(images))

    @classmethod
    def all(cls, n: int) -> Iterator[Permutation]:
        for p in itertools.permutations(range(1, n + 1)):
            yield cls(p)

    def __call__(self, i: int) -> int:
        return self.images[i - 1]

    def inverse(self) -> Permutation:
        inv = [0] * self.n
        for i, j in enumerate(self.images, start=1):
            inv[j - 1] = i
        return Permutation(tuple(inv))


@dataclass(frozen=True)
class Injection:
    """An injective map [m] -> [n]."""

    n: int
    images: tuple[int, ...]

    def __post_init__(self):
        if len(set(self.images)) != len(self.images):
            raise InvariantError(f"{self.images} is not injective")
        if any(not 1 <= x <= self.n for x in self.images):
            raise InvariantError(f"images must lie in 1..{self.n}")

    @property
    def m(self) -> int:
        return len(self.images)

    @classmethod
    def inclusion(cls, m: int, n: int) -> Injection:
        return cls(n, tuple(range(1, m + 1)))

    @classmethod
    def all(cls, m: int, n: int) -> Iterator[Injection]:
        for p in itertools.permutations(range(1, n + 1), m):
            yield cls(n, p)


# -- operations on labeled partitions ---------------------------------------


def restrict(lam: LabeledPartition, m: int) -> LabeledPartition:
    if not 1 <= m <= lam.n:
        raise DomainError(f"cannot restrict a partition of [{lam.n}] to [{m}]")
    if m == lam.n:
        return lam
    low = full_mask(m)
    return LabeledPartition(m, lam.k, tuple(c & low for c in lam.masks))


def relabel(lam: LabeledPartition, sigma: Permutation) -> LabeledPartition:
    """Element i of the result carries the label of element sigma(i)."""
    if sigma.n != lam.n:
        raise DomainError(f"permutation of [{sigma.n}] cannot relabel a partition of [{lam.n}]")
    labels = lam.labels
    return LabeledPartition.from_labels([labels[j - 1] for j in sigma.images], lam.k)


def project_injection(lam: LabeledPartition, psi: Injection) -> LabeledPartition:
    """Pull back along psi: the composition lam o psi."""
    if psi.n != lam.n:
        raise DomainError(f"injection into [{psi.n}] does not match a partition of [{lam.n}]")
    labels = lam.labels
    return LabeledPartition.from_labels([labels[j - 1] for j in psi.images], lam.k)


def blocks(lam: LabeledPartition) -> SetPartition:
    """Forget labels: the non-empty classes as a set partition."""
    return SetPartition.from_masks(lam.n, lam.masks)


def overlap(lam: LabeledPartition, other: LabeledPartition) -> int:
    """Bit vector of the elements on which two k-partitions agree."""
    out = 0
    for a, b in zip(lam.masks, other.masks):
        out |= a & b
    return out


def distance_exponent(lam: LabeledPartition, other: LabeledPartition) -> int | float:
    """Length of the longest common label prefix; ``math.inf`` when equal.

    The ultrametric distance is ``2 ** -distance_exponent``.
    """
    if lam.n != other.n or lam.k != other.k:
        raise DomainError("distance needs partitions of the same shape")
    diff = 0
    for a, b in zip(lam.masks, other.masks):
        diff |= a ^ b
    if not diff:
        return math.inf
    return least_element(diff) - 1


def enumerate_partitions(n: int, k: int) -> Iterator[LabeledPartition]:
    """All k**n labeled k-partitions of [n], lexicographic in labels."""
    if k**n > ENUMERATION_LIMIT:
        raise CapacityError(f"{k}**{n} labelings exceed the enumeration limit")
    for labels in itertools.product(range(1, k + 1), repeat=n):
        yield LabeledPartition.from_labels(labels, k)


# -- operations on set partitions -------------------------------------------


def restrict_set(pi: SetPartition, m: int) -> SetPartition:
    if not 1 <= m <= pi.n:
        raise DomainError(f"cannot restrict a partition of [{pi.n}] to [{m}]")
    low = full_mask(m)
    return SetPartition.from_masks(m, (b & low for b in pi.blocks))


def project_injection_set(pi: SetPartition, psi: Injection) -> SetPartition:
    """i ~ j in the result iff psi(i) ~ psi(j) in pi."""
    if psi.n != pi.n:
        raise DomainError(f"injection into [{psi.n}] does not match a partition of [{pi.n}]")
    owner = {}
    for idx, b in enumerate(pi.blocks):
        for e in elements_of(b):
            owner[e] = idx
    groups: dict[int, int] = {}
    for i, target in enumerate(psi.images, start=1):
        groups[owner[target]] = groups.get(owner[target], 0) | (1 << (i - 1))
    return SetPartition.from_masks(psi.m, groups.values())


def set_distance_exponent(pi: SetPartition, other: SetPartition) -> int | float:
    """max{m : pi|[m] = other|[m]}, ``math.inf`` when equal."""
    if pi.n != other.n:
        raise DomainError("distance needs partitions of the same ground set")
    if pi == other:
        return math.inf
    m = 0
    while m < pi.n and restrict_set(pi, m + 1) == restrict_set(other, m + 1):
        m += 1
    return m


def coag(pi: SetPartition, merger: SetPartition) -> SetPartition:
    """Coagulate the blocks of ``pi`` according to ``merger``.

    Block i of the result is the union of the blocks of ``pi`` indexed by
    the i-th block of ``merger``; indices beyond ``len(pi)`` are ignored.
    """
    r = len(pi.blocks)
    if merger.n < r:
        raise DomainError(f"merger partitions [{merger.n}] but pi has {r} blocks")
    merged = []
    for b in merger.blocks:
        u = 0
        for j in elements_of(b):
            if j > r:
                break
            u |= pi.blocks[j - 1]
        merged.append(u)
    return SetPartition.from_masks(pi.n, merged)


def all_set_partitions(n: int, max_blocks: int | None = None) -> Iterator[SetPartition]:
    """Every partition of [n] with at most ``max_blocks`` blocks (restricted growth strings)."""
    cap = n if max_blocks is None else max_blocks

    def grow(prefix: list[int], top: int):
        if len(prefix) == n:
            masks = [0] * (top + 1)
            for pos, b in enumerate(prefix):
                masks[b] |= 1 << pos
            yield SetPartition(n, tuple(masks))
            return
        for b in range(min(top + 2, cap)):
            yield from grow(prefix + [b], max(top, b))

    if n == 0:
        yield SetPartition(0, ())
        return
    yield from grow([0], 0)


# -- canonical text forms ---------------------------------------------------


def format_labeled(lam: LabeledPartition) -> str:
    if lam.k <= 9:
        return "".join(str(x) for x in lam.labels)
    return ",".join(str(x) for x in lam.labels)


def parse_labeled(text: str, k: int | None = None) -> LabeledPartition:
    text = text.strip()
    try:
        labels = [int(x) for x in text.split(",")] if "," in text else [int(c) for c in text]
    except ValueError:
        raise DomainError(f"malformed labeled partition {text!r}") from None
    if not labels:
        raise DomainError("empty labeled partition")
    k = max(labels) if k is None else k
    return LabeledPartition.from_labels(labels, k)


def format_set_partition(pi: SetPartition) -> str:
    sep = "" if pi.n <= 9 else ","
    return "/".join(sep.join(str(e) for e in elements_of(b)) for b in pi.blocks)


def parse_set_partition(text: str, n: int | None = None) -> SetPartition:
    try:
        blocks_ = [
            [int(x) for x in part.split(",")] if "," in part else [int(c) for c in part]
            for part in text.strip().split("/")
        ]
    except ValueError:
        raise DomainError(f"malformed set partition {text!r}") from None
    return SetPartition.from_blocks(blocks_, n)
