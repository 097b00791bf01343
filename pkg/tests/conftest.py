from fractions import Fraction

import pytest
from hypothesis import strategies as st

from lipart.partitions import LabeledPartition, Permutation

HALF = Fraction(1, 2)


@st.composite
def labeled(draw, n=None, k=None, max_n=6, max_k=4):
    k = draw(st.integers(1, max_k)) if k is None else k
    n = draw(st.integers(1, max_n)) if n is None else n
    labels = draw(st.lists(st.integers(1, k), min_size=n, max_size=n))
    return LabeledPartition.from_labels(labels, k)


@st.composite
def permutations(draw, n):
    return Permutation(tuple(draw(st.permutations(list(range(1, n + 1))))))


def set_apply(entries, classes):
    """Operator action on plain Python sets, used as an oracle for the bitmask code."""
    k = len(entries)
    return tuple(
        frozenset().union(*(set(entries[i][j]) & set(classes[j]) for j in range(k))) for i in range(k)
    )


@pytest.fixture
def half():
    return HALF
