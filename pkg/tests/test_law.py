import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from qrough.law import (QDensity, auto_order, density_at, density_with_tail, moment_quadrature, normalization,
                        semicircle, support, tail_bound)
from qrough.pairings import CovarianceSpec, q_moment


def test_support_examples():
    assert support(0.0) == (-2.0, 2.0)
    assert support(0.75) == pytest.approx((-4.0, 4.0))
    assert support(0.96) == pytest.approx((-10.0, 10.0))


@pytest.mark.parametrize("K", [1, 5, 80])
def test_free_density_at_origin(K):
    assert density_at(0.0, 0.0, K) == pytest.approx(1 / math.pi, abs=1e-15)


def test_edges_and_outside():
    assert density_at(2.0, 0.0) == pytest.approx(0.0, abs=1e-15)
    assert density_at(-2.0, 0.0) == pytest.approx(0.0, abs=1e-15)
    assert density_at(2.5, 0.0) == 0.0
    assert density_at(4.0 + 1e-9, 0.75) == 0.0


def test_product_self_convergence():
    assert abs(density_at(0.0, 0.5, 60) - density_at(0.0, 0.5, 200)) <= 1e-12


def test_semicircle_sup_error():
    xs = np.linspace(-2, 2, 1001)
    assert np.abs(density_at(xs, 0.0) - semicircle(xs)).max() <= 1e-10


@pytest.mark.parametrize("q", [0.0, 0.3, 0.6, 0.9])
def test_normalization(q):
    assert abs(normalization(q) - 1.0) <= 1e-8


def test_fixed_truncation_at_q_near_one_is_bounded_by_tail():
    # with only 80 factors at q = 0.9 the mass is visibly short; the tail bound accounts for it
    short = abs(normalization(0.9, K=80) - 1.0)
    assert 1e-4 < short <= tail_bound(0.9, 80)
    assert auto_order(0.9) > 80
    assert tail_bound(0.6, 80) < 1e-16


def test_density_reports_tail():
    value, tail = density_with_tail(0.3, 0.5, K=10)
    assert value > 0 and 0 < tail < 1e-2


@pytest.mark.parametrize("q", [0.0, 0.3, 0.6])
def test_moments_match_pairings(q):
    spec = CovarianceSpec(("x",), [[1.0]])
    for r in range(0, 9):
        assert moment_quadrature(r, q) == pytest.approx(q_moment(("x",) * r, spec, q), abs=1e-6)


def test_moment_examples():
    assert moment_quadrature(2, 0.7) == pytest.approx(1.0, abs=1e-10)
    assert moment_quadrature(3, 0.7) == pytest.approx(0.0, abs=1e-10)
    assert moment_quadrature(4, 0.3) == pytest.approx(2.3, abs=1e-10)


@settings(max_examples=15, deadline=None)
@given(st.floats(0.0, 0.8), st.floats(0.05, 2.0))
def test_increment_scaling_law(q, length):
    spec = CovarianceSpec(("d",), [[length]])
    for r in (2, 4, 6):
        assert q_moment(("d",) * r, spec, q) == pytest.approx(length ** (r / 2) * moment_quadrature(r, q), rel=1e-9)


@settings(max_examples=30, deadline=None)
@given(st.floats(0.0, 0.95), st.floats(-1.2, 1.2))
def test_density_nonnegative_and_symmetric(q, u):
    dens = QDensity(q)
    x = u * support(q)[1]
    assert dens(x) >= 0.0
    assert dens(x) == pytest.approx(dens(-x), abs=1e-14)
