import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from qrough.algebra import FourierFunction, TensorValue, elementary, one_tensor
from qrough.errors import DomainError
from qrough.fock import TimeGrid, build_fock
from qrough.ito import (StepBiprocess, contraction_ratio, correction_check, dyadic_subdivision, field_norm,
                        fresh_interval, gamma_middle, ito_formula_residual, ito_isometry_rhs, ito_sum, q_bracket,
                        quadratic_limit, quadratic_sum, random_adapted_operator, random_step_biprocess,
                        second_quantization, transition_residual, trapezoid_sum)
from qrough.rough import BrownianPath, LevyAreaApprox, ScalarPath, make_controlled_from_functions, \
    path_as_controlled

COS = FourierFunction([(0.5, 1.0), (0.5, -1.0)])
CONST = FourierFunction([(1.0, 0.0)])


@pytest.fixture(scope="module", params=[0.0, 0.4])
def space(request):
    # four dyadic increments, depth four: exact for operands of degree <= 2
    return build_fock(None, 4, request.param, grid=TimeGrid.dyadic(2), backend="dense")


def test_ito_sum_of_unit_tensor_is_the_increment(space):
    res = ito_sum(one_tensor(space), [0.0, 0.25, 0.5, 0.75, 1.0], space, diagnostics=True)
    assert (res.value - space.position(1.0)).l2_norm() < 1e-13
    assert res.value.l2_norm() ** 2 == pytest.approx(1.0)
    assert res.value.state() == pytest.approx(0.0, abs=1e-14)
    assert [n for n, _ in res.diagnostics] == [4, 2]


def test_ito_sum_is_centred(space):
    rng = np.random.default_rng(7)
    U = random_step_biprocess(space, [0.0, 0.25, 0.5, 0.75], rng, terms=2)
    assert ito_sum(U, [0.0, 0.25, 0.5, 0.75], space).value.state() == pytest.approx(0.0, abs=1e-12)


def test_ito_sum_rejects_anticipating_integrand(space):
    future = elementary(space.position(0.5), space.identity())
    with pytest.raises(DomainError):
        ito_sum(future, [0.0, 0.25, 0.5], space)
    with pytest.raises(DomainError):
        ito_sum(one_tensor(space), [0.5, 0.25], space)


def test_step_biprocess_validation(space):
    with pytest.raises(DomainError):
        StepBiprocess([0.0, 0.5], [one_tensor(space), one_tensor(space)])
    step = StepBiprocess([0.0, 0.5, 1.0], [one_tensor(space), elementary(space.position(0.5), space.identity())])
    assert step.at(0.75).time == 0.5
    with pytest.raises(DomainError):
        step.at(1.0)


def test_second_quantization_on_low_degrees(space):
    q = space.q
    X = space.position(0.5)
    one = space.identity()
    assert (second_quantization(one.with_time(0.5), 0.5) - one).l2_norm() < 1e-13
    assert (second_quantization(X, 0.5) - X * q).l2_norm() < 1e-13
    expected = (X @ X - one * 0.5) * q ** 2 + one * 0.5
    assert (second_quantization(X @ X, 0.5) - expected).l2_norm() < 1e-12


def test_second_quantization_independent_of_fresh_interval(space):
    X = space.position(0.25)
    A = X @ X + X * 0.5j
    g1 = second_quantization(A, 0.25)
    g2 = second_quantization(A, 0.25, start=0.5, h=0.5)
    assert (g1 - g2).l2_norm() < 1e-12


def test_second_quantization_needs_room_on_the_grid(space):
    with pytest.raises(DomainError, match="extend the grid"):
        fresh_interval(space, 1.0)
    with pytest.raises(DomainError):
        second_quantization(space.position(0.5), 0.25)


def test_contraction_bound(space):
    rng = np.random.default_rng(11)
    A = random_adapted_operator(space, 0.5, rng, degree=2)
    assert 0 <= contraction_ratio(A, 0.5) <= 1.0
    assert field_norm(0.0) == pytest.approx(2.0)


def test_bracket_examples(space):
    X = space.position(0.25)
    one = space.identity()
    assert q_bracket(one_tensor(space), one_tensor(space)) == pytest.approx(1.0)
    assert q_bracket(elementary(one, X), elementary(one, X), 0.25) == pytest.approx(0.25)
    A = X @ X + X * 1j
    assert q_bracket(elementary(A, one), elementary(X, one), 0.25) == pytest.approx(A.inner(X), abs=1e-13)


def test_ito_isometry_small_instance(space):
    rng = np.random.default_rng(3)
    pts = [0.0, 0.25, 0.5]
    U = random_step_biprocess(space, pts, rng, terms=1)
    V = random_step_biprocess(space, pts, rng, terms=1)
    lhs = ito_sum(U, pts, space).value.inner(ito_sum(V, pts, space).value)
    rhs = ito_isometry_rhs(U, V, pts, pts)
    assert abs(lhs - rhs) <= 1e-10 * max(1.0, abs(rhs))


def test_quadratic_limit_of_unit_triple(space):
    T = TensorValue(3, [(space.identity(),) * 3])
    assert (quadratic_limit(T, 0.0, 1.0) - space.identity()).l2_norm() < 1e-13
    coarse = (quadratic_sum(T, [0.0, 0.5, 1.0], space) - space.identity()).l2_norm()
    fine = (quadratic_sum(T, dyadic_subdivision(0.0, 1.0, 2), space) - space.identity()).l2_norm()
    assert fine ** 2 == pytest.approx(coarse ** 2 / 2, rel=1e-10)


def test_quadratic_limit_step_quadrature(space):
    X = space.position(0.25)
    T = TensorValue(3, [(X, space.identity(), X)])
    step = lambda t: T if t >= 0.25 else TensorValue(3, [(space.identity(),) * 3])
    val = quadratic_limit(step, 0.0, 0.5, subdivision=[0.0, 0.25, 0.5])
    expected = space.identity() * 0.25 + X @ X * 0.25
    assert (val - expected).l2_norm() < 1e-12


def test_free_correction_uses_the_state():
    # at q = 0 the middle second quantization reduces to the vacuum state
    sp = build_fock(None, 4, 0.0, grid=TimeGrid.dyadic(2), backend="dense")
    X = sp.position(0.25)
    V = X @ X + sp.identity() * 0.5
    T = elementary(X, V)
    mid = gamma_middle(T, 0.25)
    assert (mid - X * V.state()).l2_norm() < 1e-12


def test_correction_report_shape():
    sp = build_fock(None, 2, 0.3, grid=TimeGrid.dyadic(3), backend="lazy")
    rep = correction_check(one_tensor(sp), 0.0, 1.0, [1, 2, 3], BrownianPath(sp), L_cond=2)
    assert rep.levels == [1, 2, 3]
    assert rep.decreasing
    # ratios of consecutive residuals are exactly 2^(-1/2) for the unit tensor
    for a, b in zip(rep.eps[:-1], rep.eps[1:]):
        assert b / a == pytest.approx(2 ** -0.5, rel=1e-9)
    assert rep.correction_l2 == pytest.approx(0.5)


def test_trapezoid_sum_is_exact_for_unit_tensor_on_scalar_path():
    path = ScalarPath(lambda t: t ** 3)
    sp = path.space
    val = trapezoid_sum(one_tensor(sp), [0.0, 0.3, 1.0], sp, path)
    assert val.state() == pytest.approx(1.0)


def test_trapezoid_matches_stratonovich_integral_on_scalar_path():
    # 1/2 sum (x_a + x_b)(x_b - x_a) telescopes to 1/2 x^2
    path = ScalarPath(np.sin)
    sp = path.space
    U = lambda t: elementary(path.at(t).with_time(0.0), sp.identity())
    val = trapezoid_sum(U, np.linspace(0, 1, 7), sp, path)
    assert val.state() == pytest.approx(0.5 * np.sin(1.0) ** 2)


@pytest.mark.parametrize("q", [0.0, 0.3])
def test_ito_formula_residual_decays(q):
    sp = build_fock(None, 3, q, grid=TimeGrid.dyadic(2), backend="dense")
    res = [ito_formula_residual(COS, BrownianPath(sp), 0.0, 1.0, n) for n in (0, 1, 2)]
    assert res[0] > res[1] > res[2]
    assert res[2] / res[0] < 0.6


@pytest.mark.parametrize("q", [0.0, 0.3])
def test_transition_residual_decays(q):
    sp = build_fock(None, 3, q, grid=TimeGrid.dyadic(2), backend="dense")
    P = BrownianPath(sp)
    U = make_controlled_from_functions(COS, CONST, path_as_controlled(P, dyadic_subdivision(0.0, 1.0, 2)))
    area = LevyAreaApprox(P, 2)
    res = [transition_residual(U, area, 0.0, 1.0, dyadic_subdivision(0.0, 1.0, n)) for n in (1, 2)]
    assert res[1] < 0.8 * res[0]


@settings(max_examples=10, deadline=None)
@given(st.integers(0, 2 ** 32 - 1))
def test_second_quantization_preserves_state(seed):
    sp = build_fock(None, 4, 0.5, grid=TimeGrid.dyadic(2), backend="dense")
    rng = np.random.default_rng(seed)
    A = random_adapted_operator(sp, 0.5, rng, degree=2)
    assert second_quantization(A, 0.5).state() == pytest.approx(A.state(), abs=1e-11)
