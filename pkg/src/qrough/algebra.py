"""Tensor sharp-calculus and functional calculus with tensor derivatives.

Order-2 tensors act on operators by ``(U (x) V) # H = U H V``; order-3 tensors
are used through the two-slot contraction ``(U1 (x) U2 (x) U3) : (P, Q) =
U1 P U2 Q U3``, from which both one-sided sharp products follow.

A ``TensorValue`` always knows how to act. It may also carry an explicit
list of elementary summands, either stored or produced on demand by a
factory. Tensor derivatives of ``f(X)`` use the spectral form of the
Gauss-Legendre quadrature: acting through the eigenbasis of ``X`` costs a
few matrix products instead of one product per quadrature node, and agrees
with the summand-by-summand sum to rounding.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, Iterable, Sequence

import numpy as np

from .errors import DomainError
from .fock import NOT_ADAPTED, LazyOperator, Operator

QUAD_ORDER = 32


# --------------------------------------------------------------------------- tensors

def _space_of(ops):
    for op in ops:
        return op.space
    return None


class TensorValue:
    """Order-2 or order-3 operator tensor.

    Parameters
    ----------
    order : 2 or 3
    summands : elementary tensors as tuples of operators (coefficients folded in).
    action : optional fast evaluator; ``H -> T # H`` for order 2 and
        ``(P, Q) -> T : (P, Q)`` for order 3.
    factory : optional zero-argument callable producing the summands.
    bound : projective-norm upper bound; computed from summands if omitted.
    """

    def __init__(self, order: int, summands: Iterable[Sequence] | None = (), *, space=None,
                 action: Callable | None = None, factory: Callable | None = None,
                 bound: float | None = None, time: float | None = None):
        if order not in (2, 3):
            raise DomainError("tensor order must be 2 or 3")
        self.order = order
        self._summands = None if summands is None else tuple(tuple(s) for s in summands)
        if self._summands is not None:
            for s in self._summands:
                if len(s) != order:
                    raise DomainError(f"elementary tensor of length {len(s)} in an order-{order} tensor")
            ops = [op for s in self._summands for op in s]
            sp_ = _space_of(ops)
            for op in ops:
                if op.space is not sp_:
                    raise DomainError("tensor components live on different Fock spaces")
            if space is None:
                space = sp_
            if time is None:
                time = max((op.time for op in ops), default=0.0)
        if action is None and self._summands is None and factory is None:
            raise DomainError("tensor needs summands, an action or a factory")
        self.space = space
        self._action = action
        self._factory = factory
        self._bound = bound
        self.time = 0.0 if time is None else float(time)

    # -- representation
    @property
    def summands(self) -> tuple:
        if self._summands is None:
            if self._factory is None:
                raise DomainError("this tensor has no explicit elementary representation")
            self._summands = tuple(tuple(s) for s in self._factory())
        return self._summands

    @property
    def has_summands(self) -> bool:
        return self._summands is not None or self._factory is not None

    @property
    def norm_bound(self) -> float:
        if self._bound is None:
            self._bound = float(sum(math.prod(op.op_norm() for op in s) for s in self.summands))
        return self._bound

    @property
    def is_zero(self) -> bool:
        return self._summands is not None and not self._summands and self._action is None

    def _check(self, *ops):
        for op in ops:
            if self.space is not None and op.space is not self.space:
                raise DomainError("operand lives on a different Fock space than the tensor")

    # -- actions
    def sharp(self, H):
        """Order 2: ``T # H``."""
        if self.order != 2:
            raise DomainError("sharp with one operator needs an order-2 tensor")
        self._check(H)
        if self._action is not None:
            return self._action(H)
        return _sum_ops([u @ H @ v for u, v in self.summands], H)

    def contract(self, P, Q):
        """Order 3: ``sum U1 P U2 Q U3``."""
        if self.order != 3:
            raise DomainError("two-slot contraction needs an order-3 tensor")
        self._check(P, Q)
        if self._action is not None:
            return self._action(P, Q)
        return _sum_ops([a @ P @ b @ Q @ c for a, b, c in self.summands], P)

    # -- linear structure
    def __add__(self, other: "TensorValue") -> "TensorValue":
        if not isinstance(other, TensorValue):
            return NotImplemented
        if other.order != self.order:
            raise DomainError("cannot add tensors of different orders")
        if self.is_zero:
            return other
        if other.is_zero:
            return self
        space = self.space or other.space
        time = max(self.time, other.time)
        bound = None
        if self._bound is not None and other._bound is not None:
            bound = self._bound + other._bound
        if self._action is None and other._action is None and self._summands is not None \
                and other._summands is not None:
            return TensorValue(self.order, self._summands + other._summands, space=space,
                               bound=bound, time=time)
        a, b = self, other
        if self.order == 2:
            action = lambda H: a.sharp(H) + b.sharp(H)
        else:
            action = lambda P, Q: a.contract(P, Q) + b.contract(P, Q)
        factory = None
        if a.has_summands and b.has_summands:
            factory = lambda: a.summands + b.summands
        return TensorValue(self.order, None, space=space, action=action, factory=factory,
                           bound=bound if bound is not None else _lazy_bound(a, b), time=time)

    def __mul__(self, c) -> "TensorValue":
        if not np.isscalar(c):
            return NotImplemented
        if c == 0:
            return zero_tensor(self.order, self.space)
        bound = None if self._bound is None else abs(c) * self._bound
        if self._action is None and self._summands is not None:
            return TensorValue(self.order, [(c * s[0],) + tuple(s[1:]) for s in self._summands],
                               space=self.space, bound=bound, time=self.time)
        t = self
        if self.order == 2:
            action = lambda H: c * t.sharp(H)
        else:
            action = lambda P, Q: c * t.contract(P, Q)
        factory = (lambda: [(c * s[0],) + tuple(s[1:]) for s in t.summands]) if t.has_summands else None
        return TensorValue(self.order, None, space=self.space, action=action, factory=factory,
                           bound=bound if bound is not None else abs(c) * self.norm_bound, time=self.time)

    __rmul__ = __mul__

    def __neg__(self):
        return self * -1.0

    def __sub__(self, other):
        return self + (-other)

    # -- order-2 structure
    def adjoint_swap(self) -> "TensorValue":
        """``sum V^dagger (x) U^dagger``; satisfies ``T' # H = (T # H^dagger)^dagger``."""
        if self.order != 2:
            raise DomainError("adjoint swap is defined for order-2 tensors")
        t = self
        factory = (lambda: [(v.adjoint(), u.adjoint()) for u, v in t.summands]) if t.has_summands else None
        if self._action is None and self._summands is not None:
            return TensorValue(2, factory(), space=self.space, bound=self._bound, time=self.time)
        return TensorValue(2, None, space=self.space, factory=factory, bound=self.norm_bound,
                           action=lambda H: t.sharp(H.adjoint()).adjoint(), time=self.time)

    def compose(self, other: "TensorValue") -> "TensorValue":
        """Product in ``A (x) A^op``: ``(A (x) B)(C (x) D) = AC (x) DB``, so ``(S T) # H = S # (T # H)``."""
        if self.order != 2 or other.order != 2:
            raise DomainError("compose is defined for order-2 tensors")
        s, t = self, other
        time = max(s.time, t.time)
        if s._action is None and t._action is None and s._summands is not None and t._summands is not None:
            return TensorValue(2, [(a @ c, d @ b) for a, b in s._summands for c, d in t._summands],
                               space=s.space or t.space, time=time)
        factory = None
        if s.has_summands and t.has_summands:
            factory = lambda: [(a @ c, d @ b) for a, b in s.summands for c, d in t.summands]
        return TensorValue(2, None, space=s.space or t.space, action=lambda H: s.sharp(t.sharp(H)),
                           factory=factory, bound=s.norm_bound * t.norm_bound, time=time)

    def map_right(self, fn: Callable) -> "TensorValue":
        """Apply ``fn`` to the last leg of every summand (e.g. ``Id x Gamma``)."""
        return TensorValue(self.order, [tuple(s[:-1]) + (fn(s[-1]),) for s in self.summands],
                           space=self.space)

    def map_middle(self, fn: Callable) -> "TensorValue":
        if self.order != 3:
            raise DomainError("middle leg exists only for order-3 tensors")
        return TensorValue(3, [(a, fn(b), c) for a, b, c in self.summands], space=self.space)

    def collapse_middle(self, fn: Callable):
        """``sum U1 fn(U2) U3`` for order 3, ``sum U1 fn(U2)`` for order 2."""
        if self.order == 3:
            return _sum_ops([a @ fn(b) @ c for a, b, c in self.summands], None, self.space)
        return _sum_ops([a @ fn(b) for a, b in self.summands], None, self.space)

    def __repr__(self):
        n = len(self._summands) if self._summands is not None else "?"
        return f"TensorValue(order={self.order}, summands={n})"


def _lazy_bound(a: TensorValue, b: TensorValue) -> float | None:
    try:
        return a.norm_bound + b.norm_bound
    except DomainError:
        return None


def _sum_ops(ops, like=None, space=None):
    ops = list(ops)
    if not ops:
        sp_ = space if space is not None else like.space
        return sp_.identity() * 0.0
    out = ops[0]
    for op in ops[1:]:
        out = out + op
    return out


def zero_tensor(order: int, space=None) -> TensorValue:
    return TensorValue(order, (), space=space, bound=0.0)


def elementary(*ops) -> TensorValue:
    return TensorValue(len(ops), [tuple(ops)])


def one_tensor(space, order: int = 2) -> TensorValue:
    one = space.identity()
    return TensorValue(order, [(one,) * order], bound=1.0)


def sharp2(T: TensorValue, A):
    return T.sharp(A)


def sharp3_left(A, T: TensorValue) -> TensorValue:
    """``A # (U1 (x) U2 (x) U3) = (U1 A U2) (x) U3``."""
    if T.order != 3:
        raise DomainError("sharp3_left needs an order-3 tensor")
    T._check(A)
    factory = (lambda: [(a @ A @ b, c) for a, b, c in T.summands]) if T.has_summands else None
    if T._action is None and T._summands is not None:
        return TensorValue(2, factory(), space=T.space)
    return TensorValue(2, None, space=T.space, action=lambda H: T.contract(A, H), factory=factory,
                       bound=A.op_norm() * T.norm_bound, time=max(T.time, A.time))


def sharp3_right(T: TensorValue, A) -> TensorValue:
    """``(U1 (x) U2 (x) U3) # A = U1 (x) (U2 A U3)``."""
    if T.order != 3:
        raise DomainError("sharp3_right needs an order-3 tensor")
    T._check(A)
    factory = (lambda: [(a, b @ A @ c) for a, b, c in T.summands]) if T.has_summands else None
    if T._action is None and T._summands is not None:
        return TensorValue(2, factory(), space=T.space)
    return TensorValue(2, None, space=T.space, action=lambda H: T.contract(H, A), factory=factory,
                       bound=A.op_norm() * T.norm_bound, time=max(T.time, A.time))


def extend_right(S: TensorValue, C) -> TensorValue:
    """Order-3 tensor ``S (x) C``: contraction ``(S # P) Q C``."""
    if S.order != 2:
        raise DomainError("extend_right needs an order-2 tensor")
    factory = (lambda: [(a, b, C) for a, b in S.summands]) if S.has_summands else None
    if S._action is None and S._summands is not None:
        return TensorValue(3, factory(), space=S.space)
    return TensorValue(3, None, space=S.space, action=lambda P, Q: S.sharp(P) @ Q @ C,
                       factory=factory, bound=S.norm_bound * C.op_norm(), time=max(S.time, C.time))


def extend_left(A, S: TensorValue) -> TensorValue:
    """Order-3 tensor ``A (x) S``: contraction ``A P (S # Q)``."""
    if S.order != 2:
        raise DomainError("extend_left needs an order-2 tensor")
    factory = (lambda: [(A, b, c) for b, c in S.summands]) if S.has_summands else None
    if S._action is None and S._summands is not None:
        return TensorValue(3, factory(), space=S.space)
    return TensorValue(3, None, space=S.space, action=lambda P, Q: A @ P @ S.sharp(Q),
                       factory=factory, bound=A.op_norm() * S.norm_bound, time=max(S.time, A.time))


# --------------------------------------------------------------------------- functions

@dataclass(frozen=True)
class FourierFunction:
    """``f(x) = sum_j c_j exp(i xi_j x)`` with finitely many atoms.

    ``k`` is the declared regularity class; finite atomic measures lie in
    every class, so the default is generous.
    """

    atoms: tuple[tuple[complex, float], ...]
    k: int = 3

    def __init__(self, atoms: Iterable[tuple[complex, float]], k: int = 3):
        atoms = tuple((complex(c), float(xi)) for c, xi in atoms)
        object.__setattr__(self, "atoms", atoms)
        object.__setattr__(self, "k", int(k))

    def norm(self, k: int | None = None) -> float:
        """``||f||_k = sum_{i<=k} sum_j |c_j| |xi_j|^i``."""
        k = self.k if k is None else k
        return float(sum(abs(c) * abs(xi) ** i for i in range(k + 1) for c, xi in self.atoms))

    def __call__(self, x):
        x = np.asarray(x)
        return sum(c * np.exp(1j * xi * x) for c, xi in self.atoms) if self.atoms else 0 * x

    def derivative(self, x, order: int = 1):
        x = np.asarray(x)
        return sum(c * (1j * xi) ** order * np.exp(1j * xi * x) for c, xi in self.atoms) if self.atoms else 0 * x

    def conjugate(self) -> "FourierFunction":
        """``f*`` with ``f*(x) = conj(f(x))`` for real x."""
        return FourierFunction([(np.conj(c), -xi) for c, xi in self.atoms], self.k)

    def require(self, k: int):
        if self.k < k:
            raise DomainError(f"function declared in class F_{self.k}; F_{k} is required")

    @property
    def is_zero(self) -> bool:
        return all(c == 0 for c, _ in self.atoms)


@lru_cache(maxsize=None)
def gauss_legendre01(M: int) -> tuple[np.ndarray, np.ndarray]:
    x, w = np.polynomial.legendre.leggauss(M)
    nodes, weights = 0.5 * (x + 1.0), 0.5 * w
    nodes.setflags(write=False)
    weights.setflags(write=False)
    return nodes, weights


class Spectrum:
    """Eigendecomposition of a self-adjoint operator in the orthonormal frame."""

    def __init__(self, X, tol: float = 1e-10):
        if isinstance(X, LazyOperator):
            X = X.to_dense()
        if not isinstance(X, Operator):
            raise DomainError("functional calculus needs a Fock operator")
        if not X.is_self_adjoint(tol):
            raise DomainError(f"operator is not self-adjoint (defect {X.adjoint_defect():.2e})")
        self.X = X
        herm = 0.5 * (X.mat + X.mat.conj().T)
        self.values, self.vectors = np.linalg.eigh(herm)

    @property
    def space(self):
        return self.X.space

    def rebuild(self, diag: np.ndarray) -> Operator:
        v = self.vectors
        return Operator(self.space, (v * diag) @ v.conj().T, self.X.time)

    def exp(self, a: float) -> Operator:
        return self.rebuild(np.exp(1j * a * self.values))

    def to_eigen(self, H) -> np.ndarray:
        H = H.to_dense() if isinstance(H, LazyOperator) else H
        return self.vectors.conj().T @ H.mat @ self.vectors

    def from_eigen(self, mat: np.ndarray, time: float) -> Operator:
        return Operator(self.space, self.vectors @ mat @ self.vectors.conj().T, time)


def spectrum(X) -> Spectrum:
    return X if isinstance(X, Spectrum) else Spectrum(X)


def apply_function(f: FourierFunction, X) -> Operator:
    """``f(X) = sum_j c_j exp(i xi_j X)`` for self-adjoint ``X``."""
    spec = spectrum(X)
    return spec.rebuild(f(spec.values))


def _first_divided_kernel(f: FourierFunction, lam: np.ndarray, M: int) -> np.ndarray:
    """``Phi_ab = sum_atoms c i xi sum_k w_k exp(i xi (a_k lam_a + (1-a_k) lam_b))``."""
    nodes, weights = gauss_legendre01(M)
    phi = np.zeros((len(lam), len(lam)), dtype=complex)
    for c, xi in f.atoms:
        if xi == 0 or c == 0:
            continue
        left = np.exp(1j * xi * np.outer(nodes, lam))            # (M, D)
        right = np.exp(1j * xi * np.outer(1.0 - nodes, lam))
        phi += (c * 1j * xi) * (left.T * weights) @ right
    return phi


def tensor_derivative(f: FourierFunction, X, M: int = QUAD_ORDER) -> TensorValue:
    """``df(X) = int_0^1 da sum_j i xi_j c_j e^{i a xi_j X} (x) e^{i (1-a) xi_j X}``."""
    f.require(1)
    spec = spectrum(X)
    nodes, weights = gauss_legendre01(M)
    active = [(c, xi) for c, xi in f.atoms if xi != 0 and c != 0]
    if not active:
        return zero_tensor(2, spec.space)
    phi = _first_divided_kernel(f, spec.values, M)
    time = spec.X.time

    def action(H):
        return spec.from_eigen(spec.to_eigen(H) * phi, max(time, H.time))

    def factory():
        out = []
        for c, xi in active:
            for a, w in zip(nodes, weights):
                out.append((spec.exp(a * xi) * (c * 1j * xi * w), spec.exp((1.0 - a) * xi)))
        return out

    bound = sum(abs(c) * abs(xi) for c, xi in active)
    return TensorValue(2, None, space=spec.space, action=action, factory=factory, bound=bound, time=time)


def simplex_rule(M: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Collapsed Gauss-Legendre rule on ``{a, b >= 0, a + b <= 1}``: nodes ``(a, b)`` and weights."""
    x, w = gauss_legendre01(M)
    a = np.repeat(x, M)
    u = np.tile(x, M)
    b = (1.0 - a) * u
    weights = np.repeat(w * (1.0 - x), M) * np.tile(w, M)
    return a, b, weights


def second_tensor_derivative(f: FourierFunction, X, M: int = QUAD_ORDER) -> TensorValue:
    """``d2f(X) = -iint_{a+b<=1} sum_j xi_j^2 c_j e^{i a xi X} (x) e^{i b xi X} (x) e^{i (1-a-b) xi X}``."""
    f.require(2)
    spec = spectrum(X)
    active = [(c, xi) for c, xi in f.atoms if xi != 0 and c != 0]
    if not active:
        return zero_tensor(3, spec.space)
    lam = spec.values
    x, w = gauss_legendre01(M)
    time = spec.X.time

    def action(P, Q):
        # sum over the outer node a of e^{i a xi X} P [inner first-order kernel at scale (1-a)] # Q
        Ph, Qh = spec.to_eigen(P), spec.to_eigen(Q)
        acc = np.zeros_like(Ph, dtype=complex)
        for c, xi in active:
            for a, wa in zip(x, w):
                scale = (1.0 - a) * xi
                left = np.exp(1j * scale * np.outer(x, lam))
                right = np.exp(1j * scale * np.outer(1.0 - x, lam))
                inner = (left.T * w) @ right                       # (D, D)
                acc += (-(xi ** 2) * c * wa * (1.0 - a)) * (np.exp(1j * a * xi * lam)[:, None] * (Ph @ (Qh * inner)))
        return spec.from_eigen(acc, max(time, P.time, Q.time))

    def factory():
        aa, bb, ww = simplex_rule(M)
        out = []
        for c, xi in active:
            for a, b, wt in zip(aa, bb, ww):
                out.append((spec.exp(a * xi) * (-(xi ** 2) * c * wt), spec.exp(b * xi),
                            spec.exp((1.0 - a - b) * xi)))
        return out

    bound = sum(abs(c) * xi ** 2 for c, xi in active) / 2.0
    return TensorValue(3, None, space=spec.space, action=action, factory=factory, bound=bound, time=time)
