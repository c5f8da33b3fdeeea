import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from qrough.errors import DomainError, ResourceError
from qrough.fock import (FockSpace, TimeGrid, annihilation, build_fock, conditional_expectation, creation,
                         scalar_space)
from qrough.pairings import q_moment_batch


def test_annihilation_on_repeated_letter():
    sp = build_fock(2, 3, 0.4, backend="lazy")
    vec = np.zeros(sp.dim)
    vec[sp.index((0, 0))] = 1.0
    out = sp.annihilation_matrix(0) @ vec
    expected = np.zeros(sp.dim)
    expected[sp.index((0,))] = 1.4
    assert np.allclose(out, expected, atol=1e-15)


def test_two_letter_gram_block():
    q = 0.35
    sp = build_fock(2, 2, q, backend="dense")
    G = sp.gram_block(2)
    i, j = sp.index((0, 1)) - sp.offsets[2], sp.index((1, 0)) - sp.offsets[2]
    assert G[i, j] == pytest.approx(q)
    assert G[i, i] == pytest.approx(1.0)
    aa = sp.index((0, 0)) - sp.offsets[2]
    assert G[aa, aa] == pytest.approx(1 + q)


def test_annihilation_is_adjoint_of_creation_in_q_inner_product():
    sp = build_fock(3, 3, 0.6, backend="lazy")
    rng = np.random.default_rng(1)
    u, v = rng.standard_normal(sp.dim), rng.standard_normal(sp.dim)
    for i in range(3):
        lhs = sp.inner(sp.creation_matrix(i) @ u, v)
        rhs = sp.inner(u, sp.annihilation_matrix(i) @ v)
        assert lhs == pytest.approx(rhs, rel=1e-12)


@pytest.mark.parametrize("q", [0.0, 0.3, 0.6])
@pytest.mark.parametrize("backend", ["dense", "lazy"])
def test_fourth_moment_of_position(q, backend):
    sp = build_fock(4, 3, q, backend=backend)
    X = sp.position(1.0)
    assert (X @ X @ X @ X).state() == pytest.approx(2 + q, abs=1e-12)
    assert (X @ X).state() == pytest.approx(1.0, abs=1e-13)


def test_whitening_squares_to_gram():
    sp = build_fock(3, 3, 0.45, backend="dense")
    W, Winv = sp.whitening_matrices
    assert np.allclose(W @ W.conj().T if np.iscomplexobj(W) else W @ W.T, sp.gram_matrix(), atol=1e-12)
    assert np.allclose(W @ Winv, np.eye(sp.dim), atol=1e-10)


def test_backends_agree():
    grid = TimeGrid.uniform(3)
    dense = FockSpace(3, 0.5, grid, backend="dense")
    lazy = FockSpace(3, 0.5, grid, backend="lazy")

    def build(sp):
        X, Y = sp.position(1 / 3), sp.increment(1 / 3, 1.0)
        return X @ Y @ X + Y * 0.5j

    a, b = build(dense), build(lazy)
    assert a.state() == pytest.approx(b.state(), abs=1e-12)
    assert a.l2_norm() == pytest.approx(b.l2_norm(), rel=1e-10)
    assert a.op_norm() == pytest.approx(b.op_norm(), rel=1e-8)
    assert np.allclose(a.to_dense().mat, b.to_dense().mat, atol=1e-10)


def test_fields_are_self_adjoint():
    sp = build_fock(3, 3, 0.3, backend="dense")
    assert sp.position(2 / 3).adjoint_defect() < 1e-13
    c = creation(1, sp)
    assert np.allclose(c.adjoint().mat, annihilation(1, sp).mat, atol=1e-12)


def test_word_moments_match_oracle():
    q = 0.45
    sp = build_fock(2, 3, q, backend="lazy")
    for r in (2, 4, 6):
        words = np.array(list(itertools.product(range(2), repeat=r)))
        oracle = q_moment_batch(words, np.eye(2), q)
        assert np.allclose(sp.word_moments(r), oracle, atol=1e-13)
    with pytest.raises(DomainError):
        sp.word_moments(8)


@settings(max_examples=20, deadline=None)
@given(st.lists(st.integers(0, 2), min_size=1, max_size=6), st.floats(0.0, 0.9))
def test_operator_products_match_pairings(word, q):
    sp = build_fock(3, 3, q, backend="dense")
    op = sp.identity()
    for w in word:
        op = op @ sp.field(w)
    oracle = q_moment_batch(np.array([word]), np.eye(3), q)[0] if len(word) % 2 == 0 else 0.0
    assert op.state() == pytest.approx(oracle, abs=1e-11)


@pytest.fixture(scope="module")
def space():
    return build_fock(4, 3, 0.3, backend="dense")


class TestConditionalExpectation:
    def test_future_increment_projects_to_zero(self, space):
        Z = conditional_expectation(space.increment(0.5, 1.0), 0.5)
        assert Z.l2_norm() < 1e-12

    def test_past_is_fixed(self, space):
        X = space.position(0.5)
        A = X @ X @ X
        assert (conditional_expectation(A, 0.5) - A).l2_norm() < 1e-10

    def test_state_is_preserved(self, space):
        X, Y = space.position(0.25), space.increment(0.25, 1.0)
        A = X @ Y @ Y @ X + Y
        Z = conditional_expectation(A, 0.25)
        assert Z.state() == pytest.approx(A.state(), abs=1e-12)
        assert Z.time == 0.25

    def test_idempotent(self, space):
        X, Y = space.position(0.5), space.increment(0.5, 0.75)
        Z = conditional_expectation(X @ Y @ Y @ X @ X, 0.5)
        assert (conditional_expectation(Z, 0.5) - Z).l2_norm() < 1e-10

    def test_sandwiched_future_pair(self, space):
        # CE(X Y^2 X) = (t - s) X^2 when Y is a future increment over (s, t]
        X, Y = space.position(0.5), space.increment(0.5, 1.0)
        Z = conditional_expectation(X @ Y @ Y @ X, 0.5)
        assert (Z - X @ X * 0.5).l2_norm() < 1e-10

    def test_info(self, space):
        _, info = conditional_expectation(space.position(0.5), 0.5, return_info=True)
        assert info["rank"] + info["dropped"] == info["span_size"]


def test_size_caps():
    with pytest.raises(ResourceError):
        build_fock(12, 6, 0.3)
    with pytest.raises(ResourceError):
        build_fock(8, 4, 0.3, backend="dense")


def test_invalid_inputs():
    with pytest.raises(DomainError):
        build_fock(2, 2, -0.2)
    with pytest.raises(DomainError):
        build_fock(0, 2, 0.3)
    with pytest.raises(DomainError):
        build_fock(3, 2, 0.3, grid=[0.0, 0.5, 1.0])
    sp = build_fock(2, 2, 0.3)
    with pytest.raises(DomainError):
        sp.index((0, 0, 0))
    with pytest.raises(DomainError):
        sp.position(0.3)


def test_adaptedness_times():
    sp = build_fock(4, 2, 0.3)
    assert sp.position(0.5).time == 0.5
    assert (sp.position(0.25) @ sp.increment(0.5, 0.75)).time == 0.75


def test_scalar_space_is_one_dimensional():
    sp = scalar_space()
    assert sp.dim == 1
    assert sp.identity().state() == 1.0
