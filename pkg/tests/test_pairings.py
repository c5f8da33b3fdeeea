import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from qrough.errors import DomainError
from qrough.pairings import (CovarianceSpec, Pairing, crossing_number, double_factorial, enumerate_pairings,
                             pairing_table, q_moment, q_moment_batch)


def test_pairing_counts():
    assert len(enumerate_pairings(4)) == 3
    assert len(enumerate_pairings(8)) == 105


def test_canonical_order_for_four_points():
    blocks = [p.blocks for p in enumerate_pairings(4)]
    assert blocks == [((1, 2), (3, 4)), ((1, 3), (2, 4)), ((1, 4), (2, 3))]
    assert [p.crossings for p in enumerate_pairings(4)] == [0, 1, 0]


def test_fully_crossing_pairing():
    assert crossing_number(Pairing(((1, 4), (2, 5), (3, 6)), 6)) == 3


def test_rejects_bad_sizes():
    with pytest.raises(DomainError):
        enumerate_pairings(5)
    with pytest.raises(DomainError):
        enumerate_pairings(14)
    with pytest.raises(DomainError):
        Pairing(((1, 2), (2, 3)), 4)


@pytest.mark.parametrize("q", [0.0, 0.3, 0.6])
def test_fourth_moment(q):
    spec = CovarianceSpec(("x",), [[1.0]])
    assert q_moment(("x",) * 4, spec, q) == pytest.approx(2 + q, abs=1e-15)


def test_free_moments_are_catalan():
    spec = CovarianceSpec(("x",), [[1.0]])
    assert [q_moment(("x",) * r, spec, 0.0) for r in (2, 4, 6, 8)] == [1, 2, 5, 14]


def test_odd_and_empty_words():
    spec = CovarianceSpec(("a", "b"), np.eye(2))
    assert q_moment((), spec, 0.4) == 1.0
    assert q_moment(("a", "b", "a"), spec, 0.4) == 0.0


def test_q_outside_range_is_rejected():
    spec = CovarianceSpec(("x",), [[1.0]])
    with pytest.raises(DomainError, match="positivity"):
        q_moment(("x", "x"), spec, -0.5)
    with pytest.raises(DomainError):
        q_moment(("x", "x"), spec, 1.0)


def test_covariance_validation():
    with pytest.raises(DomainError):
        CovarianceSpec(("a", "b"), [[1.0, 2.0], [2.0, 1.0]])
    with pytest.raises(DomainError):
        CovarianceSpec(("a", "b"), [[1.0, 0.1], [0.0, 1.0]])
    with pytest.raises(DomainError):
        CovarianceSpec(("a",), [[1.0]]).index("b")


def test_brownian_covariance_and_table():
    spec = CovarianceSpec.brownian([0.25, 0.5, 1.0])
    assert spec.cov(0.25, 1.0) == 0.25
    table = pairing_table((0.5, 1.0, 0.5, 1.0), spec, 0.5)
    assert len(table) == 3
    assert sum(w for _, _, w in table) == pytest.approx(q_moment((0.5, 1.0, 0.5, 1.0), spec, 0.5))


@settings(max_examples=30, deadline=None)
@given(st.integers(min_value=1, max_value=5))
def test_count_is_double_factorial(k):
    assert len(enumerate_pairings(2 * k)) == double_factorial(2 * k - 1)


@settings(max_examples=30, deadline=None)
@given(st.integers(min_value=1, max_value=4))
def test_crossing_generating_function_at_q_one(k):
    # at q = 1 every pairing has weight one
    r = 2 * k
    cross = np.array([p.crossings for p in enumerate_pairings(r)])
    assert np.sum(1.0 ** cross) == double_factorial(r - 1)
    assert cross.min() == 0


@settings(max_examples=40, deadline=None)
@given(st.lists(st.integers(0, 2), min_size=2, max_size=6).filter(lambda w: len(w) % 2 == 0),
       st.floats(0.0, 0.95))
def test_reversal_invariance(word, q):
    # the vacuum state is tracial on self-adjoint words only up to reversal: phi(w) = phi(reverse w)
    spec = CovarianceSpec(range(3), [[1.0, 0.3, 0.1], [0.3, 2.0, 0.2], [0.1, 0.2, 0.5]])
    assert q_moment(word, spec, q) == pytest.approx(q_moment(word[::-1], spec, q), rel=1e-12, abs=1e-14)


@settings(max_examples=25, deadline=None)
@given(st.floats(0.0, 0.95), st.floats(0.1, 3.0))
def test_scaling(q, lam):
    spec = CovarianceSpec(("x",), [[1.0]])
    scaled = CovarianceSpec(("x",), [[lam ** 2]])
    for r in (2, 4, 6):
        assert q_moment(("x",) * r, scaled, q) == pytest.approx(lam ** r * q_moment(("x",) * r, spec, q), rel=1e-12)


def test_batch_matches_scalar():
    spec = CovarianceSpec(range(2), [[1.0, 0.4], [0.4, 0.8]])
    words = np.array(list(itertools.product(range(2), repeat=4)))
    batch = q_moment_batch(words, spec.matrix, 0.35)
    single = [q_moment(tuple(w), spec, 0.35) for w in words]
    assert np.allclose(batch, single, atol=1e-15)
