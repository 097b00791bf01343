"""Set-valued matrices acting on labeled partitions.

A k x k matrix over [n] holds subsets of [n] (bit vectors).  Products use
union for addition and intersection for multiplication::

    (M M')_ij = U_l (M_il & M'_lj)        (M lam)_i = U_j (M_ij & lam_j)

A *partition operator* is a matrix whose every column is a k-partition of
[n]; these are closed under the product and act on k-partitions.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Callable, Iterator, Sequence

from .errors import CapacityError, DomainError, InvariantError, NotStronglyLipschitz
from .partitions import (
    ENUMERATION_LIMIT,
    LabeledPartition,
    Permutation,
    SetPartition,
    elements_of,
    enumerate_partitions,
    full_mask,
    least_element,
    mask_of,
    relabel,
    restrict,
)

Entries = tuple[tuple[int, ...], ...]


def set_matmul(a: Entries, b: Entries) -> Entries:
    k = len(a)
    out = []
    for i in range(k):
        row = a[i]
        new_row = []
        for j in range(k):
            acc = 0
            for l in range(k):
                acc |= row[l] & b[l][j]
            new_row.append(acc)
        out.append(tuple(new_row))
    return tuple(out)


@dataclass(frozen=True)
class SetMatrix:
    """A k x k matrix of subsets of [n]; ``entries[i][j]`` is M_{i+1, j+1}."""

    n: int
    k: int
    entries: Entries

    def __post_init__(self):
        if len(self.entries) != self.k or any(len(r) != self.k for r in self.entries):
            raise InvariantError(f"entries must form a {self.k}x{self.k} grid")
        cap = full_mask(self.n)
        for row in self.entries:
            for e in row:
                if e & ~cap:
                    raise InvariantError(f"entry {elements_of(e)} not inside [{self.n}]")

    def entry(self, i: int, j: int) -> frozenset[int]:
        return frozenset(elements_of(self.entries[i - 1][j - 1]))

    def transposed_entries(self) -> Entries:
        return tuple(zip(*self.entries))

    def text(self) -> str:
        return format_operator(self)

    def __str__(self) -> str:
        return self.text()


@dataclass(frozen=True)
class PartitionOperator(SetMatrix):
    """A set-valued matrix whose columns are k-partitions of [n]."""

    def __post_init__(self):
        super().__post_init__()
        cap = full_mask(self.n)
        for j in range(self.k):
            union = 0
            count = 0
            for i in range(self.k):
                e = self.entries[i][j]
                union |= e
                count += e.bit_count()
            if union != cap or count != self.n:
                raise InvariantError(f"column {j + 1} is not a {self.k}-partition of [{self.n}]")

    @classmethod
    def from_columns(cls, columns: Sequence[LabeledPartition]) -> PartitionOperator:
        k = len(columns)
        if k == 0:
            raise DomainError("an operator needs at least one column")
        n = columns[0].n
        for c in columns:
            if c.n != n or c.k != k:
                raise DomainError("columns must be k-partitions of a common [n]")
        return cls(n, k, tuple(tuple(columns[j].masks[i] for j in range(k)) for i in range(k)))

    @property
    def columns(self) -> tuple[LabeledPartition, ...]:
        return tuple(self.column(j) for j in range(1, self.k + 1))

    def column(self, j: int) -> LabeledPartition:
        return LabeledPartition(self.n, self.k, tuple(row[j - 1] for row in self.entries))

    def is_identity(self) -> bool:
        cap = full_mask(self.n)
        return all(
            e == (cap if i == j else 0)
            for i, row in enumerate(self.entries)
            for j, e in enumerate(row)
        )

    def __call__(self, lam: LabeledPartition) -> LabeledPartition:
        return op_apply(self, lam)


def restriction_matrix(n: int, m: int, k: int) -> SetMatrix:
    """I_m^k viewed as a matrix over [n]: diagonal [m], empty elsewhere."""
    d = full_mask(m)
    return SetMatrix(n, k, tuple(tuple(d if i == j else 0 for j in range(k)) for i in range(k)))


def op_identity(n: int, k: int) -> PartitionOperator:
    if n < 1 or k < 1:
        raise DomainError(f"need n >= 1 and k >= 1, got n={n}, k={k}")
    d = full_mask(n)
    return PartitionOperator(n, k, tuple(tuple(d if i == j else 0 for j in range(k)) for i in range(k)))


def _same_shape(a: SetMatrix, b) -> None:
    if a.n != b.n or a.k != b.k:
        raise DomainError(f"shape mismatch: (n={a.n}, k={a.k}) vs (n={b.n}, k={b.k})")


def op_multiply(left: PartitionOperator, right: PartitionOperator) -> PartitionOperator:
    _same_shape(left, right)
    # the constructor re-checks the column invariant, so closure is asserted here
    return PartitionOperator(left.n, left.k, set_matmul(left.entries, right.entries))


def op_apply(op: PartitionOperator, lam: LabeledPartition) -> LabeledPartition:
    _same_shape(op, lam)
    out = []
    for row in op.entries:
        acc = 0
        for e, c in zip(row, lam.masks):
            acc |= e & c
        out.append(acc)
    return LabeledPartition(lam.n, lam.k, tuple(out))


def op_restrict(op: PartitionOperator, m: int) -> PartitionOperator:
    if not 1 <= m <= op.n:
        raise DomainError(f"cannot restrict an operator over [{op.n}] to [{m}]")
    if m == op.n:
        return op
    low = full_mask(m)
    return PartitionOperator(m, op.k, tuple(tuple(e & low for e in row) for row in op.entries))


def op_relabel(op: PartitionOperator, sigma: Permutation) -> PartitionOperator:
    """M^sigma: every column relabeled by sigma."""
    return PartitionOperator.from_columns([relabel(c, sigma) for c in op.columns])


def op_from_coag(merger: SetPartition, n: int, k: int) -> PartitionOperator:
    """The operator M with M_ij = [n] when j is in the i-th block of ``merger``."""
    if merger.n != k:
        raise DomainError(f"merger must partition [{k}], got a partition of [{merger.n}]")
    cap = full_mask(n)
    rows = []
    for i in range(k):
        b = merger.blocks[i] if i < len(merger.blocks) else 0
        rows.append(tuple(cap if b >> j & 1 else 0 for j in range(k)))
    return PartitionOperator(n, k, tuple(rows))


def op_cyclic(lam: LabeledPartition) -> PartitionOperator:
    """M_lam: column j is the (j-1)-th cyclic shift of the classes of lam."""
    k = lam.k
    return PartitionOperator(
        lam.n, k, tuple(tuple(lam.masks[(i - j) % k] for j in range(k)) for i in range(k))
    )


def op_transpose(op: SetMatrix) -> PartitionOperator:
    """The usual transpose; raises InvariantError if it is not a partition operator."""
    return PartitionOperator(op.n, op.k, op.transposed_entries())


def operator_space(n: int, k: int) -> Iterator[PartitionOperator]:
    """Every partition operator over [n] (k**(n*k) of them)."""
    if k ** (n * k) > ENUMERATION_LIMIT:
        raise CapacityError(f"{k}**{n * k} operators exceed the enumeration limit")
    cols = list(enumerate_partitions(n, k))
    for combo in itertools.product(cols, repeat=k):
        yield PartitionOperator.from_columns(combo)


# -- map tables -------------------------------------------------------------


def partition_index(lam: LabeledPartition) -> int:
    """Position of lam in ``enumerate_partitions(lam.n, lam.k)``."""
    idx = 0
    for lab in lam.labels:
        idx = idx * lam.k + (lab - 1)
    return idx


@dataclass(frozen=True)
class MapTable:
    """A total map on k-partitions of [n], stored in enumeration order of its inputs."""

    n: int
    k: int
    images: tuple[LabeledPartition, ...]

    def __post_init__(self):
        if len(self.images) != self.k**self.n:
            raise InvariantError(f"table must have {self.k}**{self.n} images")
        for im in self.images:
            if im.n != self.n or im.k != self.k:
                raise InvariantError("images must be k-partitions of [n]")

    @classmethod
    def from_function(cls, f: Callable[[LabeledPartition], LabeledPartition], n: int, k: int) -> MapTable:
        return cls(n, k, tuple(f(lam) for lam in enumerate_partitions(n, k)))

    @classmethod
    def from_operator(cls, op: PartitionOperator) -> MapTable:
        return cls.from_function(op, op.n, op.k)

    def __call__(self, lam: LabeledPartition) -> LabeledPartition:
        if lam.n != self.n or lam.k != self.k:
            raise DomainError("input shape does not match the table")
        return self.images[partition_index(lam)]

    def items(self) -> Iterator[tuple[LabeledPartition, LabeledPartition]]:
        return zip(enumerate_partitions(self.n, self.k), self.images)

    def is_identity(self) -> bool:
        return all(a == b for a, b in self.items())

    def conjugate(self, sigma: Permutation) -> MapTable:
        """sigma* F sigma*^-1, i.e. lam -> (F(lam^(sigma^-1)))^sigma."""
        inv = sigma.inverse()
        return MapTable.from_function(lambda lam: relabel(self(relabel(lam, inv)), sigma), self.n, self.k)


def strong_lipschitz_witness(table: MapTable) -> tuple[LabeledPartition, LabeledPartition] | None:
    """A pair whose images lose part of their overlap, or None.

    Strong Lipschitz at level n means the image label of element i depends
    only on the input label of i, so each input is compared against the
    constant labeling E_j sharing its label at the first disagreement.
    """
    n, k = table.n, table.k
    consts = [LabeledPartition.constant(n, k, j) for j in range(1, k + 1)]
    op = PartitionOperator.from_columns([table(c) for c in consts])
    for lam, image in table.items():
        expected = op_apply(op, lam)
        if expected != image:
            diff = 0
            for a, b in zip(expected.masks, image.masks):
                diff |= a ^ b
            i = least_element(diff)
            return lam, consts[lam(i) - 1]
    return None


def is_strongly_lipschitz(table: MapTable) -> bool:
    return strong_lipschitz_witness(table) is None


def op_from_table(table: MapTable) -> PartitionOperator:
    """Recover the operator whose j-th column is the image of E_j."""
    witness = strong_lipschitz_witness(table)
    if witness is not None:
        a, b = witness
        raise NotStronglyLipschitz(f"table is not strongly Lipschitz: witness pair {a}, {b}", witness)
    return PartitionOperator.from_columns(
        [table(LabeledPartition.constant(table.n, table.k, j)) for j in range(1, table.k + 1)]
    )


def is_lipschitz_tables(tables: Sequence[MapTable]) -> bool:
    """Check that a family of level tables is Lipschitz and mutually compatible.

    Within each level, the image restricted to [m] must depend only on the
    input restricted to [m]; across levels, a lower table must equal the
    restriction of a higher one.
    """
    tables = sorted(tables, key=lambda t: t.n)
    if len({t.k for t in tables}) > 1:
        raise DomainError("tables must share k")
    for t in tables:
        for m in range(1, t.n):
            seen: dict[LabeledPartition, LabeledPartition] = {}
            for lam, image in t.items():
                key = restrict(lam, m)
                val = restrict(image, m)
                if seen.setdefault(key, val) != val:
                    return False
    for lo, hi in zip(tables, tables[1:]):
        for lam, image in hi.items():
            if lo(restrict(lam, lo.n)) != restrict(image, lo.n):
                return False
    return True


# -- column arrays (general Lipschitz maps) ---------------------------------


@dataclass(frozen=True)
class ColumnArray:
    """Array of k-partitions indexed by class i in [k] and least element j in 0..n.

    ``entries[i][j]`` is the column used for class i + 1 when that class has
    least element j (j = 0 for an empty class).
    """

    k: int
    n: int
    entries: tuple[tuple[LabeledPartition, ...], ...]

    def __post_init__(self):
        if len(self.entries) != self.k or any(len(r) != self.n + 1 for r in self.entries):
            raise InvariantError(f"array must be {self.k} x {self.n + 1}")
        for row in self.entries:
            for e in row:
                if e.n != self.n or e.k != self.k:
                    raise InvariantError("array entries must be k-partitions of [n]")

    def restrict(self, m: int) -> ColumnArray:
        if not 1 <= m <= self.n:
            raise DomainError(f"cannot restrict an array over [{self.n}] to [{m}]")
        return ColumnArray(self.k, m, tuple(tuple(restrict(e, m) for e in row[: m + 1]) for row in self.entries))

    def selected_operator(self, lam: LabeledPartition) -> PartitionOperator:
        """A_lam: column i is the entry indexed by the least element of class i."""
        cols = []
        for i, c in enumerate(lam.masks):
            m_i = least_element(c) if c else 0
            cols.append(self.entries[i][m_i])
        return PartitionOperator.from_columns(cols)

    def is_identity(self) -> bool:
        """Whether the induced map is the identity on k-partitions of [n]."""
        if self.k == 1:
            return True
        for i, row in enumerate(self.entries):
            for j in range(1, self.n + 1):
                tail = full_mask(self.n) & ~full_mask(j - 1)
                if row[j].masks[i] & tail != tail:
                    return False
        return True

    def __call__(self, lam: LabeledPartition) -> LabeledPartition:
        return array_apply(self, lam)

    def text(self) -> str:
        return " | ".join(",".join(e.text() for e in row) for row in self.entries)


def array_apply(arr: ColumnArray, lam: LabeledPartition) -> LabeledPartition:
    if lam.k != arr.k:
        raise DomainError(f"array has k={arr.k}, partition has k={lam.k}")
    if lam.n > arr.n:
        raise DomainError(f"array indexes minima up to {arr.n}, partition is over [{lam.n}]")
    if lam.n < arr.n:
        arr = arr.restrict(lam.n)
    return op_apply(arr.selected_operator(lam), lam)


# -- operator text form -----------------------------------------------------


def format_operator(op: SetMatrix) -> str:
    return ";".join(
        ",".join("{" + ",".join(str(e) for e in elements_of(x)) + "}" for x in row) for row in op.entries
    )


def _parse_row(row: str) -> list[frozenset[int]]:
    row = row.strip()
    out = []
    pos = 0
    while pos < len(row):
        if row[pos] in ", ":
            pos += 1
            continue
        if row[pos] != "{":
            raise DomainError(f"malformed operator row {row!r}")
        end = row.index("}", pos)
        body = row[pos + 1 : end].strip()
        out.append(frozenset(int(x) for x in body.split(",")) if body else frozenset())
        pos = end + 1
    return out


def parse_operator(text: str, n: int | None = None) -> PartitionOperator:
    try:
        rows = [_parse_row(r) for r in text.strip().split(";")]
    except ValueError as exc:
        raise DomainError(f"malformed operator {text!r}: {exc}") from None
    k = len(rows)
    if any(len(r) != k for r in rows):
        raise DomainError(f"operator text is not a square grid: {text!r}")
    if n is None:
        n = max((max(e) for r in rows for e in r if e), default=0)
    return PartitionOperator(n, k, tuple(tuple(mask_of(e) for e in r) for r in rows))
