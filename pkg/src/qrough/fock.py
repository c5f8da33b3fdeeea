"""Truncated q-Fock space carrying a q-Brownian motion.

Basis vectors are words over ``d`` generators of length ``0..N``; generator
``i`` is the normalised indicator of the grid cell ``(t_i, t_{i+1}]``. The
q-deformed inner product is block diagonal by word length.

Two operator backends share one interface:

``Operator``
    dense matrix stored in an orthonormal frame (the word basis whitened by
    the symmetric square root ``W`` of the Gram matrix). The q-adjoint is the
    conjugate transpose there, and functional calculus is a Hermitian
    eigendecomposition. Used for spaces up to ``dense_cap``.

``LazyOperator``
    sum of products of sparse word-basis factors, applied matrix-free. Used
    for large spaces where only vectors (vacuum expectations, L2 norms) or
    Krylov norm estimates are needed.
"""
from __future__ import annotations

import itertools
import math
import numbers
from functools import cached_property
from typing import Iterable, Sequence

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import LinearOperator, eigsh

from . import _symmetric
from .errors import DomainError, ResourceError
from .pairings import check_q

NOT_ADAPTED = math.inf
DIM_CAP = 2_000_000
DENSE_CAP = 2500
_DENSE_LEVEL = 2048
_GRID_TOL = 1e-12


# --------------------------------------------------------------------------- grid

class TimeGrid:
    """Strictly increasing times ``0 = t_0 < t_1 < ... < t_d``."""

    def __init__(self, points: Iterable[float]):
        pts = np.array(list(points), dtype=float)
        if pts.ndim != 1 or len(pts) < 2:
            raise DomainError("a time grid needs at least two points")
        if abs(pts[0]) > 0:
            raise DomainError("time grids start at 0")
        if np.any(np.diff(pts) <= 0):
            raise DomainError("grid points must be strictly increasing")
        pts.setflags(write=False)
        self.points = pts

    @classmethod
    def uniform(cls, d: int, horizon: float = 1.0) -> "TimeGrid":
        return cls(np.linspace(0.0, horizon, d + 1))

    @classmethod
    def dyadic(cls, level: int, horizon: float = 1.0) -> "TimeGrid":
        k = horizon * 2 ** level
        if abs(k - round(k)) > 1e-9 or round(k) < 1:
            raise DomainError(f"horizon {horizon} is not a positive multiple of 2^-{level}")
        return cls(np.arange(round(k) + 1) / 2 ** level)

    @classmethod
    def union(cls, *point_sets: Iterable[float]) -> "TimeGrid":
        pts = np.unique(np.concatenate([np.asarray(list(p), dtype=float) for p in point_sets]))
        keep = np.concatenate([[True], np.diff(pts) > _GRID_TOL])
        return cls(pts[keep])

    @property
    def d(self) -> int:
        return len(self.points) - 1

    @property
    def horizon(self) -> float:
        return float(self.points[-1])

    @property
    def increments(self) -> np.ndarray:
        return np.diff(self.points)

    def index(self, t: float) -> int:
        """Position of ``t`` in the grid; raises if ``t`` is not a grid point."""
        k = int(np.searchsorted(self.points, t - _GRID_TOL))
        if k < len(self.points) and abs(self.points[k] - t) <= _GRID_TOL:
            return k
        raise DomainError(f"time {t} is not a point of the grid")

    def contains(self, t: float) -> bool:
        try:
            self.index(t)
            return True
        except DomainError:
            return False

    def __len__(self):
        return len(self.points)

    def __eq__(self, other):
        return isinstance(other, TimeGrid) and np.array_equal(self.points, other.points)

    def __hash__(self):
        return hash(self.points.tobytes())

    def __repr__(self):
        return f"TimeGrid({self.points.tolist()})"


# --------------------------------------------------------------------------- Gram levels

class _GramLevel:
    """q-Gram block on words of one length, with its square root and inverse square root."""

    def __init__(self, d: int, n: int, q: float):
        self.d, self.n, self.q = d, n, q
        size = d ** n
        if n <= 1 or q == 0.0:
            self.method = "identity"
        elif n <= _symmetric.MAX_GROUP_ORDER and size > math.factorial(n):
            self.method = "group"
        elif size <= _DENSE_LEVEL:
            self.method = "dense"
        else:
            self.method = "unsupported"
        self._dense = None

    def _require(self):
        if self.method == "unsupported":
            raise ResourceError(
                f"q-Gram block of length {self.n} over {self.d} generators is too large to factor"
            )

    def set_dense(self, gram: np.ndarray):
        lam, vec = np.linalg.eigh(gram)
        self._dense = (gram, lam, (vec * np.sqrt(lam)) @ vec.T, (vec / np.sqrt(lam)) @ vec.T)

    @property
    def needs_dense(self) -> bool:
        return self.method == "dense" and self._dense is None

    @cached_property
    def spectrum(self) -> np.ndarray:
        """Eigenvalues that certify positivity (those of the regular representation for the group route)."""
        self._require()
        if self.method == "identity":
            return np.ones(1)
        if self.method == "group":
            return _symmetric.gram_spectrum_and_functions(self.n, self.q)[0]
        return self._dense[1]

    def _apply(self, which: int, block: np.ndarray) -> np.ndarray:
        if self.method == "identity":
            return block.copy()
        self._require()
        if self.method == "group":
            if which == 0:
                coeffs = _symmetric.gram_element(self.n, self.q)
            else:
                coeffs = _symmetric.gram_spectrum_and_functions(self.n, self.q)[which]
            return _symmetric.apply_element(coeffs, block, self.d, self.n, tol=1e-300)
        mat = self._dense[0] if which == 0 else self._dense[1 + which]
        return mat @ block

    def gram(self, block):
        return self._apply(0, block)

    def sqrt(self, block):
        return self._apply(1, block)

    def inv_sqrt(self, block):
        return self._apply(2, block)


# --------------------------------------------------------------------------- space

class FockSpace:
    """Words of length ``<= N`` over the increments of ``grid``, with the q-Gram form.

    Parameters
    ----------
    N : truncation depth. ``N = 0`` gives the one-dimensional scalar space.
    q : deformation parameter in ``[0, 1)``.
    grid : time grid; ``d = grid.d`` generators.
    backend : ``"dense"``, ``"lazy"`` or ``"auto"`` (dense when ``dim <= dense_cap``).
    """

    def __init__(self, N: int, q: float, grid: TimeGrid, backend: str = "auto",
                 dim_cap: int = DIM_CAP, dense_cap: int = DENSE_CAP):
        q = check_q(q)
        if N < 0:
            raise DomainError("depth N must be >= 0")
        if not isinstance(grid, TimeGrid):
            grid = TimeGrid(grid)
        self.q, self.N, self.grid = q, int(N), grid
        self.d = grid.d
        self.level_dims = [self.d ** n for n in range(self.N + 1)]
        self.offsets = np.concatenate([[0], np.cumsum(self.level_dims)]).astype(np.intp)
        self.dim = int(self.offsets[-1])
        if self.dim > dim_cap:
            raise ResourceError(f"Fock dimension {self.dim} exceeds the cap {dim_cap}")
        if backend == "auto":
            backend = "dense" if self.dim <= dense_cap else "lazy"
        if backend not in ("dense", "lazy"):
            raise DomainError(f"unknown backend {backend!r}")
        if backend == "dense" and self.dim > dense_cap:
            raise ResourceError(f"dense backend requested for dimension {self.dim} > {dense_cap}")
        self.backend = backend
        self.dense_cap = dense_cap
        self._levels = [_GramLevel(self.d, n, q) for n in range(self.N + 1)]
        self._ladder_cache: dict = {}
        self._onf_cache: dict = {}
        for n, lev in enumerate(self._levels):
            if lev.needs_dense:
                lev.set_dense(self._dense_gram(n))
        self.gram_min_eigenvalues = {}
        for n, lev in enumerate(self._levels):
            if lev.method == "unsupported":
                continue
            lo = float(np.min(lev.spectrum))
            if lo <= 0:
                raise DomainError(f"q-Gram block of length {n} is not positive definite")
            self.gram_min_eigenvalues[n] = lo

    # -- words -------------------------------------------------------------
    def level_of(self, index: int) -> int:
        return int(np.searchsorted(self.offsets, index, side="right") - 1)

    def word(self, index: int) -> tuple[int, ...]:
        n = self.level_of(index)
        j = index - self.offsets[n]
        return tuple(int(x) for x in np.unravel_index(j, (self.d,) * n)) if n else ()

    def index(self, word: Sequence[int]) -> int:
        n = len(word)
        if n > self.N or any(not 0 <= w < self.d for w in word):
            raise DomainError(f"word {tuple(word)} is not a basis word of this space")
        return int(self.offsets[n] + (np.ravel_multi_index(tuple(word), (self.d,) * n) if n else 0))

    def words(self) -> list[tuple[int, ...]]:
        return [self.word(i) for i in range(self.dim)]

    @property
    def vacuum(self) -> np.ndarray:
        v = np.zeros(self.dim)
        v[0] = 1.0
        return v

    def _check_same(self, other: "FockSpace"):
        if other is not self:
            raise DomainError("operands live on different Fock spaces")

    # -- ladder matrices in the word basis ---------------------------------
    def creation_matrix(self, i: int) -> sp.csr_matrix:
        key = ("c", i)
        if key not in self._ladder_cache:
            if not 0 <= i < self.d:
                raise DomainError(f"generator index {i} outside 0..{self.d - 1}")
            rows, cols = [], []
            for n in range(self.N):
                j = np.arange(self.d ** n)
                cols.append(self.offsets[n] + j)
                rows.append(self.offsets[n + 1] + i * self.d ** n + j)
            rows = np.concatenate(rows) if rows else np.zeros(0, np.intp)
            cols = np.concatenate(cols) if cols else np.zeros(0, np.intp)
            mat = sp.csr_matrix((np.ones(len(rows)), (rows, cols)), shape=(self.dim, self.dim))
            self._ladder_cache[key] = mat
        return self._ladder_cache[key]

    def annihilation_matrix(self, i: int) -> sp.csr_matrix:
        """``a_i(h_1...h_n) = sum_k q^(k-1) <e_i, h_k> h_1..(h_k omitted)..h_n``."""
        key = ("a", i)
        if key not in self._ladder_cache:
            if not 0 <= i < self.d:
                raise DomainError(f"generator index {i} outside 0..{self.d - 1}")
            d, q = self.d, self.q
            rows, cols, vals = [], [], []
            for n in range(1, self.N + 1):
                j = np.arange(d ** n)
                for k in range(n):
                    weight = q ** k
                    if weight == 0.0:
                        continue
                    hi = d ** (n - k)
                    lo = d ** (n - 1 - k)
                    hit = (j // lo) % d == i
                    jj = j[hit]
                    rows.append(self.offsets[n - 1] + (jj // hi) * lo + jj % lo)
                    cols.append(self.offsets[n] + jj)
                    vals.append(np.full(len(jj), weight))
            if rows:
                rows, cols, vals = map(np.concatenate, (rows, cols, vals))
            mat = sp.csr_matrix((vals, (rows, cols)), shape=(self.dim, self.dim))
            self._ladder_cache[key] = mat
        return self._ladder_cache[key]

    def field_matrix(self, i: int) -> sp.csr_matrix:
        key = ("s", i)
        if key not in self._ladder_cache:
            self._ladder_cache[key] = (self.creation_matrix(i) + self.annihilation_matrix(i)).tocsr()
        return self._ladder_cache[key]

    def position_coefficients(self, t: float) -> np.ndarray:
        """Coefficients of ``X_t`` on the generator fields."""
        k = self.grid.index(t)
        coef = np.zeros(self.d)
        coef[:k] = np.sqrt(self.grid.increments[:k])
        return coef

    def field_combination(self, coef: np.ndarray) -> sp.csr_matrix:
        coef = np.asarray(coef)
        out = sp.csr_matrix((self.dim, self.dim), dtype=np.result_type(coef, float))
        for i in np.flatnonzero(coef):
            out = out + coef[i] * self.field_matrix(int(i))
        return out.tocsr()

    # -- Gram and whitening, acting on the rows of vectors / matrices --------
    def _dense_gram(self, n: int) -> np.ndarray:
        if n == 0:
            return np.ones((1, 1))
        prev = self._levels[n - 1]
        size_prev = self.d ** (n - 1)
        rows = []
        for i in range(self.d):
            block = self._level_block(self.annihilation_matrix(i), n - 1, n).toarray()
            rows.append(prev.gram(block) if n > 1 else block)
        gram = np.vstack(rows).reshape(self.d ** n, self.d ** n)
        assert gram.shape == (self.d * size_prev, self.d ** n)
        return 0.5 * (gram + gram.T)

    def _level_block(self, mat, n_out: int, n_in: int):
        o, i = self.offsets, self.offsets
        return mat[o[n_out]:o[n_out + 1], i[n_in]:i[n_in + 1]]

    def _per_level(self, vec: np.ndarray, op: str) -> np.ndarray:
        if vec.shape[0] != self.dim:
            raise DomainError(f"vector length {vec.shape[0]} does not match dimension {self.dim}")
        out = np.empty_like(vec, dtype=np.result_type(vec, float))
        for n, lev in enumerate(self._levels):
            sl = slice(self.offsets[n], self.offsets[n + 1])
            if not np.any(vec[sl]):
                out[sl] = 0.0
                continue
            out[sl] = getattr(lev, op)(vec[sl])
        return out

    def gram_apply(self, vec: np.ndarray) -> np.ndarray:
        return self._per_level(vec, "gram")

    def whiten(self, vec: np.ndarray) -> np.ndarray:
        """Apply ``W = G^(1/2)``: word-basis coordinates to orthonormal-frame coordinates."""
        return self._per_level(vec, "sqrt")

    def unwhiten(self, vec: np.ndarray) -> np.ndarray:
        """Apply ``W^-1``."""
        return self._per_level(vec, "inv_sqrt")

    def inner(self, u: np.ndarray, v: np.ndarray) -> complex:
        """q-inner product of word-basis vectors, conjugate-linear in ``u``."""
        return complex(np.vdot(u, self.gram_apply(v)))

    def _word_states(self, k: int) -> np.ndarray:
        """Columns ``s_{w_1} ... s_{w_k} Omega`` for all words of length k, restricted to levels <= k."""
        rows = self.offsets[k + 1]
        vecs = np.zeros((1, 1))
        vecs[0, 0] = 1.0
        for m in range(1, k + 1):
            top, prev = self.offsets[m + 1], self.offsets[m]
            blocks = [self.field_matrix(a)[:top, :prev] @ vecs for a in range(self.d)]
            vecs = np.hstack(blocks)
        out = np.zeros((rows, vecs.shape[1]))
        out[:vecs.shape[0]] = vecs
        return out

    def word_moments(self, r: int) -> np.ndarray:
        """``phi(s_{w_1} ... s_{w_r})`` for all words of length r, lexicographic order.

        Computed as q-inner products of half-word states, so only levels up
        to ``ceil(r / 2)`` are touched.
        """
        if r > 2 * self.N:
            raise DomainError(f"words of length {r} need truncation depth >= {(r + 1) // 2}")
        k = r // 2
        left = self._word_states(k)
        right = self._word_states(r - k)
        rows = right.shape[0]
        lpad = np.zeros((rows, left.shape[1]))
        lpad[:left.shape[0]] = left
        if k > 1:
            words = np.array(list(itertools.product(range(self.d), repeat=k)), dtype=np.intp)
            rev = (words[:, ::-1] * (self.d ** np.arange(k - 1, -1, -1))).sum(axis=1)
            lpad = lpad[:, rev]
        g_right = np.empty_like(right)
        for n in range(r - k + 1):
            sl = slice(self.offsets[n], self.offsets[n + 1])
            g_right[sl] = self._levels[n].gram(right[sl]) if np.any(right[sl]) else 0.0
        return (lpad.T @ g_right).reshape(-1)

    def gram_block(self, n: int) -> np.ndarray:
        """Dense ``P_n(q)``; intended for small levels."""
        size = self.d ** n
        if size > _DENSE_LEVEL:
            raise ResourceError(f"level {n} has {size} words; too large to materialise")
        return self._levels[n].gram(np.eye(size))

    def gram_matrix(self) -> np.ndarray:
        self._require_dense_size()
        return self.gram_apply(np.eye(self.dim))

    def _require_dense_size(self):
        if self.dim > self.dense_cap:
            raise ResourceError(f"dimension {self.dim} exceeds the dense cap {self.dense_cap}")

    @cached_property
    def whitening_matrices(self) -> tuple[np.ndarray, np.ndarray]:
        self._require_dense_size()
        eye = np.eye(self.dim)
        return self.whiten(eye), self.unwhiten(eye)

    def to_frame(self, word_matrix) -> np.ndarray:
        """``W A W^-1`` as a dense array."""
        w, winv = self.whitening_matrices
        a = word_matrix @ winv
        return w @ np.asarray(a)

    def from_frame(self, mat: np.ndarray) -> np.ndarray:
        w, winv = self.whitening_matrices
        return winv @ mat @ w

    def frame_field(self, i: int) -> np.ndarray:
        key = ("field", i)
        if key not in self._onf_cache:
            m = self.to_frame(self.field_matrix(i))
            self._onf_cache[key] = 0.5 * (m + m.T)
        return self._onf_cache[key]

    # -- factories ----------------------------------------------------------
    def identity(self):
        if self.backend == "dense":
            return Operator(self, np.eye(self.dim), time=0.0)
        return LazyOperator.identity(self)

    def scalar(self, c: complex):
        return self.identity() * c

    def position(self, t: float):
        return position(t, self)

    def field(self, i: int):
        """Field operator ``a_i + a_i^*`` of the i-th normalised generator."""
        if self.backend == "dense":
            return Operator(self, self.frame_field(i), time=float(self.grid.points[i + 1]))
        f = Factor.hermitian(self.field_matrix(i))
        return LazyOperator(self, ((1.0, (f,)),), time=float(self.grid.points[i + 1]))

    def increment(self, s: float, t: float):
        """``X_t - X_s`` for grid points ``s <= t``."""
        coef = self.position_coefficients(t) - self.position_coefficients(s)
        return self.operator_from_fields(coef, time=max(s, t))

    def operator_from_fields(self, coef, time: float):
        coef = np.asarray(coef, dtype=float)
        if self.backend == "dense":
            mat = np.zeros((self.dim, self.dim))
            for i in np.flatnonzero(coef):
                mat += coef[i] * self.frame_field(int(i))
            return Operator(self, mat, time=time)
        if not np.any(coef):
            return LazyOperator.zero(self, time=time)
        f = Factor.hermitian(self.field_combination(coef))
        return LazyOperator(self, ((1.0, (f,)),), time=time)

    def random_operator(self, rng: np.random.Generator, scale: float = 1.0):
        """A dense operator with Gaussian entries in the orthonormal frame (not adapted)."""
        self._require_dense_size()
        m = rng.standard_normal((self.dim, self.dim)) + 1j * rng.standard_normal((self.dim, self.dim))
        return Operator(self, scale * m / np.sqrt(2 * self.dim), time=NOT_ADAPTED)

    def __repr__(self):
        return f"FockSpace(d={self.d}, N={self.N}, q={self.q}, dim={self.dim}, backend={self.backend!r})"


def build_fock(d: int | None, N: int, q: float, grid: TimeGrid | Sequence[float] | None = None,
               **kwargs) -> FockSpace:
    """Build a truncated q-Fock space; a uniform grid on [0, 1] is used when none is given."""
    check_q(q)
    if N < 1:
        raise DomainError("depth N must be >= 1")
    if grid is None:
        if d is None or d < 1:
            raise DomainError("need d >= 1 or an explicit grid")
        grid = TimeGrid.uniform(d)
    elif not isinstance(grid, TimeGrid):
        grid = TimeGrid(grid)
    if d is not None and grid.d != d:
        raise DomainError(f"grid has {grid.d} increments but d={d}")
    return FockSpace(N, q, grid, **kwargs)


def scalar_space() -> FockSpace:
    """One-dimensional space: operators are complex numbers."""
    return FockSpace(0, 0.0, TimeGrid([0.0, 1.0]), backend="dense")


# --------------------------------------------------------------------------- helpers

def _time_of(*ops) -> float:
    return max((getattr(o, "time", 0.0) for o in ops), default=0.0)


def _is_scalar(x) -> bool:
    return isinstance(x, numbers.Number) or (isinstance(x, np.ndarray) and x.ndim == 0)


# --------------------------------------------------------------------------- dense backend

class Operator:
    """Dense operator, stored as ``W A W^-1`` (orthonormal frame)."""

    __slots__ = ("space", "mat", "time")
    __array_priority__ = 100

    def __init__(self, space: FockSpace, mat: np.ndarray, time: float = NOT_ADAPTED):
        mat = np.asarray(mat)
        if mat.shape != (space.dim, space.dim):
            raise DomainError(f"matrix shape {mat.shape} does not match dimension {space.dim}")
        self.space, self.mat, self.time = space, mat, float(time)

    @classmethod
    def from_word_matrix(cls, space: FockSpace, word_matrix, time: float = NOT_ADAPTED) -> "Operator":
        return cls(space, space.to_frame(word_matrix), time)

    @property
    def word_matrix(self) -> np.ndarray:
        """The matrix in the (non-orthonormal) word basis."""
        return self.space.from_frame(self.mat)

    # -- algebra
    def _coerce(self, other):
        if _is_scalar(other):
            return Operator(self.space, other * np.eye(self.space.dim), time=0.0)
        if isinstance(other, LazyOperator):
            return other.to_dense()
        if isinstance(other, Operator):
            self.space._check_same(other.space)
            return other
        return NotImplemented

    def __add__(self, other):
        other = self._coerce(other)
        if other is NotImplemented:
            return other
        return Operator(self.space, self.mat + other.mat, _time_of(self, other))

    __radd__ = __add__

    def __sub__(self, other):
        other = self._coerce(other)
        if other is NotImplemented:
            return other
        return Operator(self.space, self.mat - other.mat, _time_of(self, other))

    def __rsub__(self, other):
        return (-self).__add__(other)

    def __neg__(self):
        return Operator(self.space, -self.mat, self.time)

    def __mul__(self, c):
        if not _is_scalar(c):
            return NotImplemented
        return Operator(self.space, c * self.mat, self.time if c != 0 else 0.0)

    __rmul__ = __mul__

    def __truediv__(self, c):
        return self * (1.0 / c)

    def __matmul__(self, other):
        other = self._coerce(other)
        if other is NotImplemented:
            return other
        return Operator(self.space, self.mat @ other.mat, _time_of(self, other))

    def adjoint(self) -> "Operator":
        return Operator(self.space, self.mat.conj().T, self.time)

    @property
    def H(self) -> "Operator":
        return self.adjoint()

    def with_time(self, time: float) -> "Operator":
        return Operator(self.space, self.mat, time)

    def to_dense(self) -> "Operator":
        return self

    def to_lazy(self) -> "LazyOperator":
        w = self.word_matrix
        f = Factor(w, adjoint_matrix=self.space.from_frame(self.mat.conj().T))
        return LazyOperator(self.space, ((1.0, (f,)),), self.time)

    # -- functionals
    def state(self) -> complex:
        return complex(self.mat[0, 0])

    def vacuum_vector(self) -> np.ndarray:
        """``A Omega`` in word-basis coordinates."""
        return self.space.unwhiten(self.mat[:, 0])

    def inner(self, other) -> complex:
        """``phi(A B^dagger)``."""
        other = self._coerce(other)
        return complex(np.dot(self.mat[0], other.mat[0].conj()))

    def l2_norm(self) -> float:
        return float(np.linalg.norm(self.mat[0]))

    def op_norm(self) -> float:
        return dense_spectral_norm(self.mat)

    def adjoint_defect(self) -> float:
        return float(np.max(np.abs(self.mat - self.mat.conj().T), initial=0.0))

    def is_self_adjoint(self, tol: float = 1e-10) -> bool:
        scale = max(1.0, float(np.max(np.abs(self.mat), initial=0.0)))
        return self.adjoint_defect() <= tol * scale

    def hermitian_part(self) -> "Operator":
        return Operator(self.space, 0.5 * (self.mat + self.mat.conj().T), self.time)

    def __repr__(self):
        return f"Operator(dim={self.space.dim}, time={self.time})"


def dense_spectral_norm(mat: np.ndarray) -> float:
    if mat.shape[0] <= 600:
        return float(np.linalg.norm(mat, 2)) if mat.size else 0.0
    if not np.any(mat):
        return 0.0
    v0 = np.random.default_rng(12345).standard_normal(mat.shape[1])
    lam = eigsh(LinearOperator(mat.shape, matvec=lambda v: mat.conj().T @ (mat @ v),
                               dtype=np.result_type(mat, float)),
                k=1, which="LA", tol=1e-13, v0=v0, return_eigenvectors=False)
    return float(np.sqrt(max(lam[0], 0.0)))


# --------------------------------------------------------------------------- lazy backend

class Factor:
    """A word-basis matrix together with its q-adjoint (itself for Hermitian factors)."""

    __slots__ = ("mat", "_adj", "_h")

    def __init__(self, mat, adjoint_matrix=None, adjoint: "Factor | None" = None):
        self.mat = mat
        self._h = None
        if adjoint is not None:
            self._adj = adjoint
        elif adjoint_matrix is not None:
            self._adj = Factor.__new__(Factor)
            self._adj.mat, self._adj._adj, self._adj._h = adjoint_matrix, self, None
        else:
            self._adj = None

    @classmethod
    def hermitian(cls, mat) -> "Factor":
        f = cls(mat)
        f._adj = f
        return f

    @property
    def adjoint(self) -> "Factor":
        if self._adj is None:
            raise DomainError("factor has no registered q-adjoint")
        return self._adj

    @property
    def conj_t(self):
        if self._h is None:
            self._h = self.mat.conj().T.tocsr() if sp.issparse(self.mat) else self.mat.conj().T
        return self._h


def _apply_terms(terms, vec, which: str):
    """Evaluate ``sum c * F_1 ... F_k vec`` sharing common right factors."""
    out = None
    groups: dict = {}
    for c, fs in terms:
        if not fs:
            out = c * vec if out is None else out + c * vec
            continue
        last = fs[-1] if which == "mat" else fs[0]
        groups.setdefault(id(last), (last, []))[1].append((c, fs[:-1] if which == "mat" else fs[1:]))
    for last, rest in groups.values():
        w = (last.mat if which == "mat" else last.conj_t) @ vec
        part = _apply_terms(rest, w, which)
        out = part if out is None else out + part
    if out is None:
        out = np.zeros_like(vec)
    return out


class LazyOperator:
    """Matrix-free operator: ``sum_j c_j F_{j,1} ... F_{j,k}`` over sparse word-basis factors."""

    __slots__ = ("space", "terms", "time")

    def __init__(self, space: FockSpace, terms, time: float = NOT_ADAPTED):
        self.space = space
        self.terms = tuple((complex(c), tuple(fs)) for c, fs in terms if c != 0)
        self.time = float(time)

    @classmethod
    def identity(cls, space):
        return cls(space, ((1.0, ()),), time=0.0)

    @classmethod
    def zero(cls, space, time: float = 0.0):
        return cls(space, (), time=time)

    @staticmethod
    def _merge(terms):
        acc: dict = {}
        for c, fs in terms:
            key = tuple(id(f) for f in fs)
            if key in acc:
                acc[key] = (acc[key][0] + c, fs)
            else:
                acc[key] = (c, fs)
        return tuple(v for v in acc.values() if v[0] != 0)

    def _coerce(self, other):
        if _is_scalar(other):
            return LazyOperator(self.space, ((other, ()),), time=0.0)
        if isinstance(other, Operator):
            self.space._check_same(other.space)
            return other.to_lazy()
        if isinstance(other, LazyOperator):
            self.space._check_same(other.space)
            return other
        return NotImplemented

    def __add__(self, other):
        other = self._coerce(other)
        if other is NotImplemented:
            return other
        return LazyOperator(self.space, self._merge(self.terms + other.terms), _time_of(self, other))

    __radd__ = __add__

    def __neg__(self):
        return LazyOperator(self.space, tuple((-c, fs) for c, fs in self.terms), self.time)

    def __sub__(self, other):
        other = self._coerce(other)
        if other is NotImplemented:
            return other
        return self + (-other)

    def __rsub__(self, other):
        return (-self).__add__(other)

    def __mul__(self, c):
        if not _is_scalar(c):
            return NotImplemented
        return LazyOperator(self.space, tuple((c * a, fs) for a, fs in self.terms), self.time)

    __rmul__ = __mul__

    def __truediv__(self, c):
        return self * (1.0 / c)

    def __matmul__(self, other):
        other = self._coerce(other)
        if other is NotImplemented:
            return other
        terms = [(a * b, fa + fb) for a, fa in self.terms for b, fb in other.terms]
        return LazyOperator(self.space, self._merge(terms), _time_of(self, other))

    def __rmatmul__(self, other):
        other = self._coerce(other)
        if other is NotImplemented:
            return other
        return other @ self

    def adjoint(self) -> "LazyOperator":
        terms = tuple((np.conj(c), tuple(f.adjoint for f in reversed(fs))) for c, fs in self.terms)
        return LazyOperator(self.space, terms, self.time)

    @property
    def H(self):
        return self.adjoint()

    def with_time(self, time: float) -> "LazyOperator":
        return LazyOperator(self.space, self.terms, time)

    # -- application
    def matvec(self, vec: np.ndarray) -> np.ndarray:
        return _apply_terms(self.terms, np.asarray(vec, dtype=complex), "mat")

    def rmatvec(self, vec: np.ndarray) -> np.ndarray:
        """Euclidean conjugate transpose in word coordinates."""
        terms = tuple((np.conj(c), fs) for c, fs in self.terms)
        return _apply_terms(terms, np.asarray(vec, dtype=complex), "conj")

    def vacuum_vector(self) -> np.ndarray:
        return self.matvec(self.space.vacuum)

    def state(self) -> complex:
        return complex(self.vacuum_vector()[0])

    def inner(self, other) -> complex:
        """``phi(A B^dagger) = <A^dagger Omega, B^dagger Omega>_q``."""
        other = self._coerce(other)
        u = self.adjoint().vacuum_vector()
        v = other.adjoint().vacuum_vector()
        return self.space.inner(u, v)

    def l2_norm(self) -> float:
        u = self.adjoint().vacuum_vector()
        return float(np.sqrt(max(self.space.inner(u, u).real, 0.0)))

    def op_norm(self, tol: float = 1e-12) -> float:
        sp_ = self.space
        n = sp_.dim
        if not self.terms:
            return 0.0
        if n <= 64:
            return self.to_dense().op_norm()

        def mv(x):
            y = sp_.whiten(self.matvec(sp_.unwhiten(x)))
            return sp_.unwhiten(self.rmatvec(sp_.whiten(y)))

        op = LinearOperator((n, n), matvec=mv, dtype=complex)
        v0 = np.random.default_rng(12345).standard_normal(n)
        lam = eigsh(op, k=1, which="LA", tol=tol, v0=v0, return_eigenvectors=False)
        return float(np.sqrt(max(lam[0].real, 0.0)))

    def to_dense(self) -> Operator:
        sp_ = self.space
        sp_._require_dense_size()
        w, winv = sp_.whitening_matrices
        cols = self.matvec(winv.astype(complex))
        return Operator(sp_, w @ cols, self.time)

    def to_lazy(self):
        return self

    def __repr__(self):
        return f"LazyOperator(dim={self.space.dim}, terms={len(self.terms)}, time={self.time})"


# --------------------------------------------------------------------------- public functions

def _coef_vector(f, space: FockSpace) -> np.ndarray:
    if isinstance(f, (int, np.integer)):
        v = np.zeros(space.d)
        if not 0 <= f < space.d:
            raise DomainError(f"generator index {f} outside 0..{space.d - 1}")
        v[f] = 1.0
        return v
    v = np.asarray(f)
    if v.shape != (space.d,):
        raise DomainError(f"coefficient vector must have length d={space.d}")
    return v


def _ladder(f, space: FockSpace, kind: str):
    coef = _coef_vector(f, space)
    cre = sp.csr_matrix((space.dim, space.dim), dtype=complex)
    ann = sp.csr_matrix((space.dim, space.dim), dtype=complex)
    for i in np.flatnonzero(coef):
        cre = cre + coef[i] * space.creation_matrix(int(i))
        ann = ann + np.conj(coef[i]) * space.annihilation_matrix(int(i))
    if np.all(np.isreal(coef)):
        cre, ann = cre.real, ann.real
    cre, ann = cre.tocsr(), ann.tocsr()
    main, adj = (cre, ann) if kind == "c" else (ann, cre)
    if space.backend == "dense":
        return Operator.from_word_matrix(space, main, time=NOT_ADAPTED)
    return LazyOperator(space, ((1.0, (Factor(main, adjoint_matrix=adj),)),), time=NOT_ADAPTED)


def creation(f, space: FockSpace):
    """Creation operator of ``f`` (generator index or coefficient vector): prepends a letter."""
    return _ladder(f, space, "c")


def annihilation(f, space: FockSpace):
    """q-adjoint of ``creation(f)``."""
    return _ladder(f, space, "a")


def position(t: float, space: FockSpace):
    """``X_t = sum_{t_i <= t} sqrt(dt_i) (a_i + a_i^*)`` at a grid point ``t``."""
    coef = space.position_coefficients(t)
    return space.operator_from_fields(coef, time=float(t))


def state(A) -> complex:
    return A.state()


def op_norm(A) -> float:
    return A.op_norm()


def l2_norm(A) -> float:
    return A.l2_norm()


def lp_norm(A: Operator, p: float) -> float:
    """``phi((A A^dagger)^(p/2))^(1/p)`` by spectral calculus."""
    A = A.to_dense()
    lam, vec = np.linalg.eigh(A.mat @ A.mat.conj().T)
    lam = np.clip(lam, 0.0, None)
    weights = np.abs(vec[0]) ** 2
    return float(np.dot(weights, lam ** (p / 2)) ** (1.0 / p))


# --------------------------------------------------------------------------- conditional expectation

def past_generators(space: FockSpace, s: float) -> list[int]:
    k = space.grid.index(s)
    return list(range(k))


def _word_vectors(space: FockSpace, gens: list[int], length: int):
    """``X_w^dagger Omega`` (word basis) for all words over ``gens`` up to ``length``."""
    words = [()]
    vecs = [space.vacuum.astype(float)]
    frontier = [((), vecs[0])]
    for _ in range(length):
        nxt = []
        for w, v in frontier:
            for g in gens:
                u = space.field_matrix(g) @ v
                nxt.append((w + (g,), u))
        for w, u in nxt:
            words.append(w)
            vecs.append(u)
        frontier = nxt
    return words, np.array(vecs).T


def _operator_from_words(space: FockSpace, words, coeffs, time: float):
    if space.backend == "lazy":
        fields = {}
        terms = []
        for w, c in zip(words, coeffs):
            if c == 0:
                continue
            fs = []
            for g in w:
                if g not in fields:
                    fields[g] = Factor.hermitian(space.field_matrix(g))
                fs.append(fields[g])
            terms.append((c, tuple(fs)))
        return LazyOperator(space, LazyOperator._merge(terms), time=time)
    # dense: Horner over the word trie in the word basis, R(p) = c_p + sum_a s_a R(p a),
    # with sparse fields; one change of frame at the end
    table = dict(zip(words, coeffs))
    maxlen = max((len(w) for w in words), default=0)
    gens = sorted({g for w in words for g in w})
    eye = np.eye(space.dim)

    def build(prefix):
        c = table.get(prefix, 0.0)
        acc = c * eye if c != 0 else None
        if len(prefix) == maxlen:
            return acc
        for g in gens:
            child = build(prefix + (g,))
            if child is None:
                continue
            term = space.field_matrix(g) @ child
            acc = term if acc is None else acc + term
        return acc

    mat = build(())
    if mat is None:
        return Operator(space, np.zeros((space.dim, space.dim)), time=time)
    return Operator.from_word_matrix(space, mat, time=time)


def conditional_expectation(A, s: float, space: FockSpace | None = None, L_cond: int = 4,
                            cutoff: float = 1e-10, return_info: bool = False):
    """L2(phi) projection of ``A`` onto words of length ``<= L_cond`` in ``{X_u : u <= s}``.

    The span is parametrised by words in the past generators (same span as
    words in the past positions). Normal equations are solved with a
    relative spectral cutoff; the number of discarded directions is reported
    in ``info`` when ``return_info`` is set.
    """
    space = space or A.space
    space._check_same(A.space)
    gens = past_generators(space, s)
    words, U = _word_vectors(space, gens, L_cond if gens else 0)
    a = A.adjoint().vacuum_vector()
    GU = space.gram_apply(U)
    H = U.conj().T @ GU
    H = 0.5 * (H + H.conj().T)
    beta = GU.conj().T @ a
    lam, vec = np.linalg.eigh(H)
    keep = lam > cutoff * max(lam.max(), 1e-300)
    coeff_conj = vec[:, keep] @ ((vec[:, keep].conj().T @ beta) / lam[keep])
    coeffs = np.conj(coeff_conj)
    if np.all(np.abs(coeffs.imag) <= 1e-14 * max(1.0, np.abs(coeffs).max(initial=0))):
        coeffs = coeffs.real
    Z = _operator_from_words(space, words, coeffs, time=float(s))
    if return_info:
        info = {"span_size": len(words), "rank": int(keep.sum()), "dropped": int((~keep).sum()),
                "min_kept_eigenvalue": float(lam[keep].min()) if keep.any() else 0.0}
        return Z, info
    return Z
