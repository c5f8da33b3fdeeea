import math

import numpy as np
import pytest

from qrough.algebra import FourierFunction, elementary, one_tensor
from qrough.errors import DomainError, NumericError
from qrough.fock import TimeGrid, build_fock
from qrough.rough import (BrownianPath, InterpolatedPath, LevyAreaApprox, ScalarPath, SymmetricArea,
                          adjoint_area_correction, adjoint_area_correction_literal, area_correction,
                          chen_defect, constant_biprocess, holder_seminorm, make_controlled_from_functions,
                          path_as_controlled, picard_step, proof_rate, rough_integral, solve_rde,
                          strat_levy_area, wong_zakai_compare, wong_zakai_solve)


@pytest.fixture(scope="module")
def dyadic_space():
    return build_fock(None, 2, 0.3, grid=TimeGrid.dyadic(3), backend="lazy")


@pytest.fixture(scope="module")
def small_dense():
    return build_fock(None, 2, 0.4, grid=TimeGrid.dyadic(2), backend="dense")


def test_interpolation_hits_grid_and_is_linear(small_dense):
    P = BrownianPath(small_dense)
    I = InterpolatedPath(P, 1)
    assert (I.at(0.5) - P.at(0.5)).l2_norm() < 1e-15
    mid = (P.at(0.0) * 0.5 + P.at(0.5) * 0.5)
    assert (I.at(0.25) - mid).l2_norm() < 1e-14
    assert I.breakpoints(0.1, 0.9) == [0.1, 0.5, 0.9]


@pytest.mark.parametrize("n", [2, 3])
@pytest.mark.parametrize("u", [0.25, 0.375])
def test_chen_identity_for_dyadic_area(dyadic_space, n, u):
    area = LevyAreaApprox(BrownianPath(dyadic_space), n)
    T = one_tensor(dyadic_space)
    assert chen_defect(area, 0.0, u, 0.5, T) <= 1e-12


def test_chen_against_base_increments_needs_dyadic_split(dyadic_space):
    P = BrownianPath(dyadic_space)
    T = one_tensor(dyadic_space)
    assert chen_defect(LevyAreaApprox(P, 2), 0.0, 0.25, 0.5, T, increments=P) <= 1e-12
    assert chen_defect(LevyAreaApprox(P, 2), 0.0, 0.375, 0.5, T, increments=P) > 1e-2


def test_chen_with_non_trivial_tensor(dyadic_space):
    P = BrownianPath(dyadic_space)
    X = P.at(0.125)
    T = elementary(X, X @ X) + one_tensor(dyadic_space) * 0.5
    area = LevyAreaApprox(P, 3)
    assert chen_defect(area, 0.125, 0.25, 0.625, T) <= 1e-11


def test_area_requires_adapted_tensor(dyadic_space):
    P = BrownianPath(dyadic_space)
    area = LevyAreaApprox(P, 2)
    T = elementary(P.at(0.5), dyadic_space.identity())
    with pytest.raises(DomainError):
        area.evaluate(0.25, 0.75, T)
    with pytest.raises(DomainError):
        chen_defect(area, 0.5, 0.25, 0.75, one_tensor(dyadic_space))


def test_symmetric_area_on_scalar_path():
    path = ScalarPath(lambda t: t ** 2)
    area = SymmetricArea(path)
    val = area.evaluate(0.2, 0.7, one_tensor(path.space)).state()
    assert val == pytest.approx(0.5 * (0.49 - 0.04) ** 2)


def test_levy_area_is_half_square_plus_antisymmetric_part(small_dense):
    # for T = 1 (x) 1 the symmetric part of the area is half the squared increment
    P = BrownianPath(small_dense)
    area = LevyAreaApprox(P, 2)
    A = area.evaluate(0.0, 1.0, one_tensor(small_dense))
    dX = P.increment(0.0, 1.0)
    sym = (A + A.adjoint()) * 0.5
    assert (sym - dX @ dX * 0.5).l2_norm() < 1e-12


def test_certificate_levels_and_rate(dyadic_space):
    P = BrownianPath(dyadic_space)
    _, cert = strat_levy_area(P, 0.0, 1.0, one_tensor(dyadic_space), n_target=3, n_min=1)
    assert cert.levels == [1, 2]
    assert all(d > 0 for d in cert.defects)
    assert cert.rate == pytest.approx(proof_rate(0.4))
    assert cert.max_ratio == pytest.approx(cert.defects[1] / cert.defects[0])
    with pytest.raises(DomainError):
        strat_levy_area(P, 0.0, 1.0, one_tensor(dyadic_space), n_target=1, n_min=1)


def test_literal_adjoint_correction_matches_contraction(small_dense):
    P = BrownianPath(small_dense)
    area = LevyAreaApprox(P, 2)
    X = P.at(0.25)
    D2 = elementary(X, X @ X + small_dense.identity() * 0.3j, X * 2.0) + elementary(X, X, small_dense.identity())
    fast = adjoint_area_correction(area, 0.25, 1.0, D2)
    literal = adjoint_area_correction_literal(area, 0.25, 1.0, D2)
    assert (fast - literal).l2_norm() < 1e-12


def test_area_correction_of_elementary_triple(small_dense):
    P = BrownianPath(small_dense)
    area = LevyAreaApprox(P, 2)
    X = P.at(0.25)
    D1 = elementary(X, small_dense.identity(), X)
    expected = area.evaluate(0.25, 0.75, elementary(X, small_dense.identity())) @ X
    assert (area_correction(area, 0.25, 0.75, D1) - expected).l2_norm() < 1e-12


def test_integral_of_constant_identity_tensor(small_dense):
    P = BrownianPath(small_dense)
    area = LevyAreaApprox(P, 2)
    U = constant_biprocess(one_tensor(small_dense), P.times)
    res = rough_integral(U, area, 0.0, 1.0, diagnostics=True)
    assert (res.value - P.increment(0.0, 1.0)).l2_norm() < 1e-13
    assert all(change < 1e-12 for _, change in res.diagnostics)


def test_integral_rejects_bad_subdivision(small_dense):
    P = BrownianPath(small_dense)
    U = constant_biprocess(one_tensor(small_dense), P.times)
    with pytest.raises(DomainError):
        rough_integral(U, LevyAreaApprox(P, 2), 0.0, 1.0, subdivision=[0.25, 1.0])


def test_scalar_integral_of_path_against_itself():
    # int x dx over a commuting path equals half the squared increment
    path = ScalarPath(lambda t: math.sin(3 * t))
    times = np.linspace(0, 1, 9)
    Y = path_as_controlled(path, times)
    f = FourierFunction([(1.0, 0.0)])
    ident = FourierFunction([(-0.5j / 1e-4, 1e-4), (0.5j / 1e-4, -1e-4)])  # sin(eps y) / eps, which is y up to O(eps^2)
    U = make_controlled_from_functions(ident, f, Y)
    res = rough_integral(U, SymmetricArea(path), 0.0, 1.0).value.state()
    x1 = math.sin(3)
    assert res.real == pytest.approx(0.5 * x1 ** 2, rel=1e-6)


CONST = FourierFunction([(1.0, 0.0)])
WAVE = FourierFunction([(1.0, 0.0), (0.25, 1.0), (0.25, -1.0)])


def test_constant_field_gives_path_plus_initial_value(small_dense):
    P = BrownianPath(small_dense)
    area = LevyAreaApprox(P, 2)
    A = small_dense.position(0.25) * 0.0 + small_dense.identity() * 0.3
    sol = solve_rde([CONST], [CONST], A, area, P.times)
    for t, v in zip(sol.times, sol.values):
        assert (v - (A + P.at(t))).l2_norm() < 1e-12


def test_batched_solver_is_a_fixed_point_of_the_generic_step(small_dense):
    P = BrownianPath(small_dense)
    area = LevyAreaApprox(P, 2)
    A = small_dense.identity() * 0.2
    sol = solve_rde([WAVE], [WAVE], A, area, P.times, tol=1e-13)
    step = picard_step([WAVE], [WAVE], A, area, sol)
    assert max((a - b).op_norm() for a, b in zip(step, sol.values)) < 1e-10
    assert sol.info["adjoint_defect"] < 1e-12


def test_scalar_rde_converges_to_ode_solution():
    # y' = cos(y) x', x(t) = t: y = 2 atan(tanh(t / 2)), so y(1) = gd(1)
    cosine = FourierFunction([(0.5, 1.0), (0.5, -1.0)])
    path = ScalarPath(lambda t: t)
    area = SymmetricArea(path)
    exact = 2 * math.atan(math.tanh(0.5))
    errs = []
    for k in (16, 32):
        sol = solve_rde([cosine], [CONST], path.space.identity() * 0.0, area, np.linspace(0, 1, k + 1), tol=1e-13)
        errs.append(abs(sol.values[-1].state() - exact))
    assert errs[1] < errs[0] / 3
    assert errs[1] < 1e-3


def test_solver_reports_non_convergence(small_dense):
    P = BrownianPath(small_dense)
    with pytest.raises(NumericError) as info:
        solve_rde([WAVE], [WAVE], small_dense.identity() * 0.0, LevyAreaApprox(P, 2), P.times, tol=1e-30,
                  max_iter=3)
    assert len(info.value.history) == 3


def test_solver_input_validation(small_dense):
    P = BrownianPath(small_dense)
    area = LevyAreaApprox(P, 2)
    with pytest.raises(DomainError):
        solve_rde([WAVE], [], small_dense.identity(), area, P.times)
    with pytest.raises(DomainError):
        solve_rde([WAVE], [WAVE], small_dense.identity() * 1j, area, P.times)


def test_wong_zakai_constant_field_is_exact(small_dense):
    P = BrownianPath(small_dense)
    A = small_dense.identity() * 0.1
    sol = wong_zakai_solve([CONST], [CONST], A, P, n=2)
    for t, v in zip(sol.times, sol.values):
        assert (v - (A + P.at(t))).l2_norm() < 1e-12
    ref = path_as_controlled(P, P.times)
    ref.values = [A + v for v in ref.values]
    rows = wong_zakai_compare([CONST], [CONST], A, P, [1, 2], ref, gamma=0.4)
    assert rows[1]["holder_distance"] < 1e-12
    assert rows[0]["sup_distance"] > 1e-3


def test_holder_seminorm_of_linear_function():
    times = np.linspace(0, 1, 5)
    vals = list(times)
    assert holder_seminorm(vals, times, 1.0) == pytest.approx(1.0)
    assert holder_seminorm(vals, times, 0.5) == pytest.approx(1.0)
    two = {(s, t): t - s for i, s in enumerate(times) for t in times[i + 1:]}
    assert holder_seminorm(two, times, 0.5, two_index=True) == pytest.approx(1.0)
