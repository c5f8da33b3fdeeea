import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from qrough.algebra import (FourierFunction, TensorValue, apply_function, elementary, extend_left, extend_right,
                            one_tensor, second_tensor_derivative, sharp3_left, sharp3_right, simplex_rule,
                            tensor_derivative, zero_tensor)
from qrough.errors import DomainError
from qrough.fock import build_fock


@pytest.fixture(scope="module")
def space():
    return build_fock(3, 2, 0.4, backend="dense")


@pytest.fixture(scope="module")
def ops(space):
    X = space.position(1.0)
    Y = space.increment(1 / 3, 1.0)
    Z = space.position(1 / 3) @ Y + 0.3j * space.identity()
    return X, Y, Z


F = FourierFunction([(1.0, 0.7), (0.5 - 0.2j, -1.3), (0.25, 2.0)])


def _close(a, b, tol):
    return (a - b).l2_norm() <= tol * max(1.0, b.l2_norm())


def test_function_of_scalar_multiple_of_identity(space):
    out = apply_function(F, space.identity() * 0.8)
    assert _close(out, space.identity() * complex(F(0.8)), 1e-13)


def test_unitary_group_law(ops):
    X = ops[0]
    e = apply_function(FourierFunction([(1.0, 1.1)]), X)
    e_inv = apply_function(FourierFunction([(1.0, -1.1)]), X)
    assert _close(e @ e_inv, X.space.identity(), 1e-12)


def test_first_derivative_matches_finite_difference(ops):
    X, Y, _ = ops
    eps = 1e-5
    fd = (apply_function(F, X + Y * eps) - apply_function(F, X - Y * eps)) * (1 / (2 * eps))
    assert _close(tensor_derivative(F, X).sharp(Y), fd, 1e-8)


def test_first_derivative_commuting_direction(ops):
    X = ops[0]
    deriv = tensor_derivative(F, X).sharp(X)
    expected = apply_function(FourierFunction([(c * 1j * xi, xi) for c, xi in F.atoms]), X) @ X
    assert _close(deriv, expected, 1e-10)


def test_first_derivative_summands_agree_with_action(ops):
    X, _, Z = ops
    T = tensor_derivative(F, X, M=24)
    explicit = TensorValue(2, T.summands)
    assert _close(explicit.sharp(Z), T.sharp(Z), 1e-10)
    assert T.norm_bound == pytest.approx(sum(abs(c) * abs(xi) for c, xi in F.atoms))


def test_second_derivative_is_half_the_second_variation(ops):
    X, Y, _ = ops
    eps = 1e-3
    fd = (apply_function(F, X + Y * eps) - apply_function(F, X) * 2 + apply_function(F, X - Y * eps)) * (1 / eps ** 2)
    second = second_tensor_derivative(F, X).contract(Y, Y)
    assert _close(second * 2, fd, 1e-5)


def test_second_derivative_summands_agree_with_action(ops):
    X, Y, Z = ops
    T = second_tensor_derivative(F, X, M=20)
    explicit = TensorValue(3, T.summands)
    assert _close(explicit.contract(Y, Z), T.contract(Y, Z), 1e-9)


def test_simplex_rule_integrates_polynomials():
    a, b, w = simplex_rule(8)
    assert w.sum() == pytest.approx(0.5)
    assert np.dot(w, a * b) == pytest.approx(1 / 24)
    assert np.dot(w, a ** 2) == pytest.approx(1 / 12)


def test_adjoint_swap_identity(ops):
    X, Y, Z = ops
    T = TensorValue(2, [(X, Z), (Z.adjoint(), Y @ X)])
    lhs = T.adjoint_swap().sharp(Y)
    rhs = T.sharp(Y.adjoint()).adjoint()
    assert _close(lhs, rhs, 1e-12)
    lazy = tensor_derivative(F, X)
    assert _close(lazy.adjoint_swap().sharp(Z), lazy.sharp(Z.adjoint()).adjoint(), 1e-11)


def test_compose_is_iterated_sharp(ops):
    X, Y, Z = ops
    S = elementary(X, Z)
    T = elementary(Y, Z.adjoint())
    assert _close(S.compose(T).sharp(Y), S.sharp(T.sharp(Y)), 1e-12)


def test_order_three_reductions(ops):
    X, Y, Z = ops
    T = TensorValue(3, [(X, Y, Z), (Z, X, Y)])
    assert _close(sharp3_left(Z, T).sharp(Y), T.contract(Z, Y), 1e-12)
    assert _close(sharp3_right(T, Z).sharp(Y), T.contract(Y, Z), 1e-12)
    S = elementary(X, Y)
    assert _close(extend_right(S, Z).contract(Y, X), S.sharp(Y) @ X @ Z, 1e-12)
    assert _close(extend_left(Z, S).contract(Y, X), Z @ Y @ S.sharp(X), 1e-12)


def test_linear_structure(ops, space):
    X, Y, _ = ops
    T = elementary(X, Y) + elementary(Y, X) * 2.0
    expected = X @ X @ Y + (Y @ X @ X) * 2.0
    assert _close(T.sharp(X), expected, 1e-12)
    assert _close((T - T).sharp(X), space.identity() * 0.0, 1e-14)
    assert zero_tensor(2, space).is_zero
    assert _close(one_tensor(space).sharp(Y), Y, 1e-15)


def test_tensor_validation(ops):
    X, Y, _ = ops
    with pytest.raises(DomainError):
        TensorValue(4, [(X,) * 4])
    with pytest.raises(DomainError):
        TensorValue(2, [(X, Y, X)])
    with pytest.raises(DomainError):
        elementary(X, Y).contract(X, Y)
    other = build_fock(3, 2, 0.4, backend="dense")
    with pytest.raises(DomainError):
        elementary(X, Y).sharp(other.position(1.0))


def test_non_self_adjoint_argument_rejected(ops):
    with pytest.raises(DomainError):
        apply_function(F, ops[2])


def test_fourier_function_basics():
    g = FourierFunction([(2.0, 1.0), (1j, -3.0)], k=1)
    assert g.norm(1) == pytest.approx(2 + 1 + 2 + 3)
    xs = np.linspace(-2, 2, 7)
    assert np.allclose(g.conjugate()(xs), np.conj(g(xs)))
    with pytest.raises(DomainError):
        g.require(2)
    assert FourierFunction([(0.0, 1.0)]).is_zero


@settings(max_examples=20, deadline=None)
@given(st.floats(-2, 2), st.floats(-2, 2), st.floats(-1, 1))
def test_derivative_on_commuting_scalars(c1, xi, x):
    sp = build_fock(1, 1, 0.0, backend="dense")
    f = FourierFunction([(c1, xi)])
    X = sp.identity() * x
    H = sp.identity()
    val = tensor_derivative(f, X).sharp(H).state()
    assert val == pytest.approx(complex(f.derivative(x)), abs=1e-12)
