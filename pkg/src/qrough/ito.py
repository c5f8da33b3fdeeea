"""Ito sums, second quantization and the Ito/Stratonovich corrections.

Everything here lives in the L2 space of the vacuum state. Second
quantization is computed from its definition: the conditional expectation
of ``dX U dX`` onto the past, divided by the length of the fresh increment.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .algebra import TensorValue, elementary, tensor_derivative, second_tensor_derivative, \
    apply_function, FourierFunction
from .errors import DomainError
from .fock import FockSpace, conditional_expectation
from .rough import ControlledBiprocess, IntegralResult, LevyAreaApprox, rough_integral

_TOL = 1e-12


# --------------------------------------------------------------------------- helpers

def _increment(space: FockSpace, path, a: float, b: float):
    return path.increment(a, b) if path is not None else space.increment(a, b)


def fresh_interval(space: FockSpace, s: float, h: float | None = None) -> tuple[float, float]:
    """Grid interval ``[s, s + h]``; ``h`` defaults to one grid step."""
    grid = space.grid
    k = grid.index(s)
    if k + 1 >= len(grid.points):
        raise DomainError(f"no grid increment after {s}: extend the grid by one step beyond the last time used")
    if h is None:
        return float(s), float(grid.points[k + 1])
    end = s + h
    if not grid.contains(end):
        raise DomainError(f"fresh interval end {end} is not a grid point; extend the grid")
    return float(s), float(end)


def random_adapted_operator(space: FockSpace, s: float, rng: np.random.Generator, degree: int = 1,
                            complex_coefficients: bool = True):
    """Random polynomial of the given degree in the fields generated before ``s``."""
    past = space.grid.index(s)

    def linear():
        coef = np.zeros(space.d)
        coef[:past] = rng.standard_normal(past)
        op = space.operator_from_fields(coef, time=s) + rng.standard_normal() * space.identity()
        if complex_coefficients:
            coef_im = np.zeros(space.d)
            coef_im[:past] = rng.standard_normal(past)
            op = op + 1j * (space.operator_from_fields(coef_im, time=s) + rng.standard_normal() * space.identity())
        return op.with_time(s)

    out = linear()
    for _ in range(degree - 1):
        out = (out @ linear()).with_time(s)
    return out


# --------------------------------------------------------------------------- biprocesses

@dataclass
class StepBiprocess:
    """Order-2 tensors held constant on ``[t_i, t_{i+1})``."""

    breakpoints: np.ndarray
    values: list

    def __post_init__(self):
        self.breakpoints = np.asarray(self.breakpoints, dtype=float)
        if len(self.values) != len(self.breakpoints) - 1:
            raise DomainError("need one value per interval")
        for t, v in zip(self.breakpoints, self.values):
            if v.time > t + 1e-9:
                raise DomainError(f"step value on the interval starting at {t} is not adapted")

    def at(self, t: float) -> TensorValue:
        if not self.breakpoints[0] - _TOL <= t < self.breakpoints[-1] - _TOL:
            raise DomainError(f"time {t} outside the step range")
        i = int(np.searchsorted(self.breakpoints, t + _TOL, side="right") - 1)
        return self.values[i]


def random_step_biprocess(space: FockSpace, breakpoints: Sequence[float], rng: np.random.Generator,
                          terms: int = 2, degree: int = 1) -> StepBiprocess:
    values = []
    for t in breakpoints[:-1]:
        summ = [(random_adapted_operator(space, t, rng, degree), random_adapted_operator(space, t, rng, degree))
                for _ in range(terms)]
        values.append(TensorValue(2, summ, space=space))
    return StepBiprocess(np.asarray(breakpoints), values)


def _value_at(U, t: float) -> TensorValue:
    if isinstance(U, TensorValue):
        return U
    if isinstance(U, ControlledBiprocess):
        return U.at(t)[0]
    if isinstance(U, StepBiprocess):
        return U.at(t)
    return U(t)


def _check_subdivision(pts) -> list:
    pts = [float(p) for p in pts]
    if len(pts) < 2 or any(b <= a for a, b in zip(pts[:-1], pts[1:])):
        raise DomainError("subdivision must be strictly increasing with at least two points")
    return pts


# --------------------------------------------------------------------------- sums

def _ito_value(U, pts, space, path):
    total = space.identity() * 0.0
    for a, b in zip(pts[:-1], pts[1:]):
        u = _value_at(U, a)
        if u.time > a + 1e-9:
            raise DomainError(f"integrand at {a} depends on the future (time {u.time})")
        total = total + u.sharp(_increment(space, path, a, b))
    return total


def _coarsen_diagnostics(fn, value, pts):
    diag, prev, cur = [], value, pts
    while (len(cur) - 1) % 2 == 0 and len(cur) > 2:
        cur = cur[::2]
        coarse = fn(cur)
        diag.append((2 * (len(cur) - 1), (prev - coarse).l2_norm()))
        prev = coarse
    return diag


def ito_sum(U, subdivision: Sequence[float], space: FockSpace | None = None, path=None,
            diagnostics: bool = False) -> IntegralResult:
    """``sum_i U_{t_i} # (X_{t_{i+1}} - X_{t_i})``.

    ``diagnostics`` adds the L2 distances between the sum and its value on
    successive halvings of the subdivision.
    """
    pts = _check_subdivision(subdivision)
    space = space or _value_at(U, pts[0]).space
    value = _ito_value(U, pts, space, path)
    diag = _coarsen_diagnostics(lambda p: _ito_value(U, p, space, path), value, pts) if diagnostics else []
    return IntegralResult(value, diag)


def trapezoid_sum(U, subdivision: Sequence[float], space: FockSpace | None = None, path=None):
    """Mean-value sum ``sum_i 1/2 (U_{t_i} + U_{t_{i+1}}) # dX_i``."""
    pts = _check_subdivision(subdivision)
    space = space or _value_at(U, pts[0]).space
    total = space.identity() * 0.0
    for a, b in zip(pts[:-1], pts[1:]):
        dx = _increment(space, path, a, b)
        total = total + 0.5 * (_value_at(U, a).sharp(dx) + _value_at(U, b).sharp(dx))
    return total


# --------------------------------------------------------------------------- second quantization

def second_quantization(U, s: float, h: float | None = None, start: float | None = None,
                        L_cond: int = 4, return_info: bool = False):
    """``E[dX U dX | past of start] / h`` with ``dX`` the increment on ``[start, start + h]``.

    ``U`` must be adapted to ``s``; ``start`` defaults to ``s`` and may be
    any later grid time. The result does not depend on ``start`` or ``h``.
    """
    space = U.space
    if U.time > s + 1e-9:
        raise DomainError(f"operand is adapted to {U.time}, not to {s}")
    a = s if start is None else start
    if a < s - _TOL:
        raise DomainError("the fresh increment must start at or after the adaptation time")
    a, b = fresh_interval(space, a, h)
    dx = space.increment(a, b)
    Z, info = conditional_expectation(dx @ U @ dx, a, L_cond=L_cond, return_info=True)
    out = (Z / (b - a)).with_time(s)
    if return_info:
        info = dict(info, interval=(a, b))
        return out, info
    return out


def field_norm(q: float) -> float:
    """Operator norm ``2 / sqrt(1 - q)`` of a standard q-Gaussian field."""
    return 2.0 / np.sqrt(1.0 - q)


def contraction_ratio(U, s: float, **kw) -> float:
    """``l2(Gamma(U)) / (||X_1||^2 ||U||)``; at most one."""
    g = second_quantization(U, s, **kw)
    denom = field_norm(U.space.q) ** 2 * U.op_norm()
    return g.l2_norm() / denom if denom > 0 else 0.0


def gamma_middle(T: TensorValue, s: float, **kw):
    """``(Id x Gamma)[T]`` for order 2 and ``(Id x Gamma x Id)[T]`` for order 3."""
    cache: dict = {}

    def gam(B):
        key = id(B)
        if key not in cache:
            cache[key] = second_quantization(B, s, **kw)
        return cache[key]

    return T.collapse_middle(gam).with_time(s)


def q_bracket(U: TensorValue, V: TensorValue, s: float | None = None, **kw) -> complex:
    """``sum phi(U1 Gamma(U2 V2^dagger) V1^dagger)`` over the elementary summands."""
    if U.order != 2 or V.order != 2:
        raise DomainError("q_bracket takes order-2 tensors")
    if s is None:
        s = max(U.time, V.time)
    if U.time > s + 1e-9 or V.time > s + 1e-9:
        raise DomainError("both tensors must be adapted to the common time")
    total = 0.0 + 0.0j
    for u1, u2 in U.summands:
        for v1, v2 in V.summands:
            g = second_quantization((u2 @ v2.adjoint()).with_time(s), s, **kw)
            total += (u1 @ g @ v1.adjoint()).state()
    return complex(total)


def ito_isometry_rhs(U, V, subdivision_u: Sequence[float], subdivision_v: Sequence[float], **kw) -> complex:
    """``sum_j (r_{j+1} - r_j) <<U_{r_j}, V_{r_j}>>_q`` over the common refinement."""
    pts = sorted(set(np.round(list(subdivision_u) + list(subdivision_v), 14)))
    lo = max(subdivision_u[0], subdivision_v[0])
    hi = min(subdivision_u[-1], subdivision_v[-1])
    pts = [p for p in pts if lo - _TOL <= p <= hi + _TOL]
    total = 0.0 + 0.0j
    for a, b in zip(pts[:-1], pts[1:]):
        total += (b - a) * q_bracket(_value_at(U, a), _value_at(V, a), s=a, **kw)
    return total


# --------------------------------------------------------------------------- quadratic sums

def _triple_at(T3, t):
    return T3 if isinstance(T3, TensorValue) else T3(t)


def quadratic_sum(T3, subdivision: Sequence[float], space: FockSpace | None = None, path=None):
    """``sum_i (dX_i # T_{t_i}) # dX_i = sum U1 dX U2 dX U3``."""
    pts = _check_subdivision(subdivision)
    space = space or _triple_at(T3, pts[0]).space
    total = space.identity() * 0.0
    for a, b in zip(pts[:-1], pts[1:]):
        dx = _increment(space, path, a, b)
        total = total + _triple_at(T3, a).contract(dx, dx)
    return total


def quadratic_limit(T3, s: float, t: float, subdivision: Sequence[float] | None = None,
                    space: FockSpace | None = None, **kw):
    """Left-point quadrature of ``int_s^t (Id x Gamma x Id)(T_u) du``; exact for constant ``T``."""
    if isinstance(T3, TensorValue):
        return (t - s) * gamma_middle(T3, s, **kw)
    pts = _check_subdivision(subdivision if subdivision is not None else [s, t])
    total = None
    for a, b in zip(pts[:-1], pts[1:]):
        term = (b - a) * gamma_middle(_triple_at(T3, a), a, **kw)
        total = term if total is None else total + term
    return total


# --------------------------------------------------------------------------- corrections

def dyadic_subdivision(s: float, t: float, n: int) -> list[float]:
    lo = int(np.ceil(s * 2 ** n - 1e-9))
    hi = int(np.floor(t * 2 ** n + 1e-9))
    pts = [k / 2 ** n for k in range(lo, hi + 1)]
    if not pts or abs(pts[0] - s) > 1e-12:
        pts = [s] + pts
    if abs(pts[-1] - t) > 1e-12:
        pts = pts + [t]
    return pts


@dataclass
class CorrectionReport:
    levels: list
    eps: list
    scale: float
    rel_eps: list
    strat_state: list
    ito_state: list
    correction_l2: float
    l_cond_sensitivity: float
    decreasing: bool
    info: dict = field(default_factory=dict)


def correction_check(T: TensorValue, s: float, t: float, levels: Sequence[int], path,
                     L_cond: int = 4) -> CorrectionReport:
    """Residuals ``l2(strat area - Ito sum - 1/2 (t - s)(Id x Gamma)[T])`` over dyadic levels."""
    space = path.space
    corr = 0.5 * (t - s) * gamma_middle(T, s, L_cond=L_cond)
    if L_cond > 1:
        alt = 0.5 * (t - s) * gamma_middle(T, s, L_cond=L_cond - 1)
        sensitivity = (corr - alt).l2_norm()
    else:
        sensitivity = float("nan")
    eps, sst, ist, scale = [], [], [], 0.0
    xs = path.at(s)
    for n in levels:
        strat = LevyAreaApprox(path, n).evaluate(s, t, T)
        pts = dyadic_subdivision(s, t, n)
        ito = space.identity() * 0.0
        for a, b in zip(pts[:-1], pts[1:]):
            ito = ito + T.sharp(path.at(a) - xs) @ path.increment(a, b)
        eps.append((strat - ito - corr).l2_norm())
        sst.append(complex(strat.state()))
        ist.append(complex(ito.state()))
        scale = strat.l2_norm()
    rel = [e / scale if scale > 0 else float("inf") for e in eps]
    decreasing = all(b < a for a, b in zip(eps[:-1], eps[1:]))
    return CorrectionReport(list(levels), eps, scale, rel, sst, ist, corr.l2_norm(), sensitivity, decreasing)


def transition_residual(U: ControlledBiprocess, area, s: float, t: float, subdivision: Sequence[float],
                        **kw) -> float:
    """L2 size of ``rough integral - Ito sum - 1/2 sum_i h_i (Id x Gamma x Id)(U1_{t_i} + U2_{t_i})``."""
    pts = _check_subdivision(subdivision)
    rough = rough_integral(U, area, s, t, subdivision=pts).value
    space = rough.space
    ito = _ito_value(U, pts, space, getattr(area, "base", None))
    corr = space.identity() * 0.0
    for a, b in zip(pts[:-1], pts[1:]):
        _, d1, d2 = U.at(a)
        corr = corr + 0.5 * (b - a) * (gamma_middle(d1, a, **kw) + gamma_middle(d2, a, **kw))
    return (rough - ito - corr).l2_norm()


def ito_formula_residual(f: FourierFunction, path, s: float, t: float, n: int, M: int = 8, **kw) -> float:
    """L2 size of ``f(X_t) - f(X_s) - sum df(X_{t_i}) # dX_i - sum h_i (Id x Gamma x Id)(d2f(X_{t_i}))``."""
    pts = dyadic_subdivision(s, t, n)
    total = apply_function(f, path.at(t)) - apply_function(f, path.at(s))
    for a, b in zip(pts[:-1], pts[1:]):
        x = path.at(a)
        total = total - tensor_derivative(f, x, M=M).sharp(path.increment(a, b))
        total = total - (b - a) * gamma_middle(second_tensor_derivative(f, x, M=M), a, **kw)
    return total.l2_norm()
