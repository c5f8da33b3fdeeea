"""Pair partitions, crossings and q-Gaussian joint moments.

The moment of a word ``(Z_1, ..., Z_r)`` of jointly q-Gaussian variables is

    sum over pairings pi of {1..r}:  q**crossings(pi) * prod_{(a,b) in pi} cov(Z_a, Z_b)

This module evaluates that sum directly. It is the reference against which
the Fock-space representation and the density are checked.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from typing import Hashable, Iterable, Sequence

import numpy as np

from .errors import DomainError

R_MAX = 12


@dataclass(frozen=True)
class Pairing:
    """A pair partition of ``{1, ..., r}`` (1-based, blocks sorted)."""

    blocks: tuple[tuple[int, int], ...]
    r: int

    def __post_init__(self):
        if self.r <= 0 or self.r % 2:
            raise DomainError(f"pairing size must be a positive even integer, got {self.r}")
        if len(self.blocks) != self.r // 2:
            raise DomainError("a pairing of r points has exactly r/2 blocks")
        seen = sorted(i for blk in self.blocks for i in blk)
        if seen != list(range(1, self.r + 1)):
            raise DomainError("every index in 1..r must appear in exactly one block")
        if any(a >= b for a, b in self.blocks):
            raise DomainError("blocks must be written as (a, b) with a < b")

    @property
    def crossings(self) -> int:
        return crossing_number(self)

    def __str__(self) -> str:
        return "{" + ",".join("{%d,%d}" % blk for blk in self.blocks) + "}"


def _check_r(r: int, r_max: int) -> None:
    if not isinstance(r, (int, np.integer)) or r < 2 or r % 2:
        raise DomainError(f"r must be an even integer >= 2, got {r!r}")
    if r > r_max:
        raise DomainError(f"r={r} exceeds the configured limit r_max={r_max}")


def _pair_up(points: tuple[int, ...]):
    # Pairing the smallest free point with each candidate in increasing order
    # yields the lexicographic order on the sorted block lists.
    if not points:
        yield ()
        return
    first, rest = points[0], points[1:]
    for k, partner in enumerate(rest):
        remaining = rest[:k] + rest[k + 1:]
        for tail in _pair_up(remaining):
            yield ((first, partner),) + tail


@lru_cache(maxsize=None)
def _pairings_cached(r: int) -> tuple[Pairing, ...]:
    return tuple(Pairing(blocks, r) for blocks in _pair_up(tuple(range(1, r + 1))))


def enumerate_pairings(r: int, r_max: int = R_MAX) -> list[Pairing]:
    """All ``(r-1)!!`` pairings of ``{1..r}`` in canonical lexicographic order."""
    _check_r(r, r_max)
    return list(_pairings_cached(int(r)))


def crossing_number(p: Pairing) -> int:
    """Number of block pairs ``{x1,y1}, {x2,y2}`` with ``x1 < x2 < y1 < y2``."""
    count = 0
    blocks = p.blocks
    for i, (x1, y1) in enumerate(blocks):
        for x2, y2 in blocks[i + 1:]:
            if x1 < x2 < y1 < y2 or x2 < x1 < y2 < y1:
                count += 1
    return count


def double_factorial(n: int) -> int:
    out = 1
    while n > 1:
        out *= n
        n -= 2
    return out


@lru_cache(maxsize=None)
def pairing_arrays(r: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Zero-based ``(left, right, crossings)`` arrays for all pairings of size r.

    ``left`` and ``right`` have shape ``(P, r//2)``. Used by the vectorised
    moment evaluation.
    """
    pairings = _pairings_cached(r)
    left = np.array([[a - 1 for a, _ in p.blocks] for p in pairings], dtype=np.intp)
    right = np.array([[b - 1 for _, b in p.blocks] for p in pairings], dtype=np.intp)
    cross = np.array([crossing_number(p) for p in pairings], dtype=np.intp)
    for arr in (left, right, cross):
        arr.setflags(write=False)
    return left, right, cross


def check_q(q: float) -> float:
    q = float(q)
    if not (0.0 <= q < 1.0):
        raise DomainError(
            f"q={q} is outside [0, 1); the positivity of the q-Gram form and the "
            "stochastic calculus built on it require 0 <= q < 1"
        )
    return q


@dataclass(frozen=True)
class CovarianceSpec:
    """Labels of a centred q-Gaussian family together with their covariance."""

    labels: tuple[Hashable, ...]
    matrix: np.ndarray = field(repr=False)

    def __init__(self, labels: Iterable[Hashable], matrix, psd_tol: float = 1e-10):
        labels = tuple(labels)
        mat = np.array(matrix, dtype=float)
        if mat.shape != (len(labels), len(labels)):
            raise DomainError(f"covariance shape {mat.shape} does not match {len(labels)} labels")
        if len(set(labels)) != len(labels):
            raise DomainError("labels must be distinct")
        if not np.allclose(mat, mat.T, rtol=0, atol=1e-14):
            raise DomainError("covariance must be symmetric")
        if labels:
            lo = np.linalg.eigvalsh(mat).min()
            scale = max(1.0, np.abs(mat).max())
            if lo < -psd_tol * scale:
                raise DomainError(f"covariance is not positive semidefinite (min eigenvalue {lo:.3e})")
        mat.setflags(write=False)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "matrix", mat)
        object.__setattr__(self, "_index", {lab: i for i, lab in enumerate(labels)})

    def index(self, label) -> int:
        try:
            return self._index[label]
        except (KeyError, TypeError):
            raise DomainError(f"unknown label {label!r}") from None

    def cov(self, a, b) -> float:
        return float(self.matrix[self.index(a), self.index(b)])

    @classmethod
    def brownian(cls, times: Sequence[float]) -> "CovarianceSpec":
        """Positions ``X_t`` of a q-Brownian motion, labelled by ``t``: cov = min(s, t)."""
        t = np.asarray(times, dtype=float)
        return cls(tuple(float(x) for x in t), np.minimum.outer(t, t))

    @classmethod
    def increments(cls, points: Sequence[float]) -> "CovarianceSpec":
        """Increments over consecutive points, labelled ``0..len(points)-2``."""
        dt = np.diff(np.asarray(points, dtype=float))
        if np.any(dt <= 0):
            raise DomainError("points must be strictly increasing")
        return cls(range(len(dt)), np.diag(dt))

    def transformed(self, lam, labels: Iterable[Hashable] | None = None) -> "CovarianceSpec":
        """Covariance of ``Z = lam @ Y``: ``lam C lam^T``."""
        lam = np.asarray(lam, dtype=float)
        new = lam @ self.matrix @ lam.T
        if labels is None:
            labels = range(lam.shape[0])
        return CovarianceSpec(labels, 0.5 * (new + new.T))


def q_moment(word: Sequence[Hashable], spec: CovarianceSpec, q: float) -> float:
    """Joint moment of ``word`` under the q-Gaussian law with covariance ``spec``."""
    q = check_q(q)
    idx = np.array([spec.index(w) for w in word], dtype=np.intp)
    r = len(idx)
    if r == 0:
        return 1.0
    if r % 2:
        return 0.0
    return float(q_moment_batch(idx[None, :], spec.matrix, q)[0])


def q_moment_batch(words: np.ndarray, cov: np.ndarray, q: float, chunk: int = 8192) -> np.ndarray:
    """Vectorised moments for many words of one length.

    ``words`` is an integer array of shape ``(M, r)`` holding label indices into
    ``cov``.
    """
    q = check_q(q)
    words = np.asarray(words, dtype=np.intp)
    m, r = words.shape
    if r == 0:
        return np.ones(m)
    if r % 2:
        return np.zeros(m)
    _check_r(r, max(R_MAX, r))
    left, right, cross = pairing_arrays(r)
    weights = np.power(q, cross.astype(float))
    out = np.empty(m)
    for start in range(0, m, chunk):
        w = words[start:start + chunk]
        vals = cov[w[:, left], w[:, right]]          # (m, P, r/2)
        out[start:start + chunk] = vals.prod(axis=2) @ weights
    return out


def pairing_table(word: Sequence[Hashable], spec: CovarianceSpec, q: float) -> list[tuple[Pairing, int, float]]:
    """Per-pairing contributions ``(pairing, crossings, weighted product)``."""
    q = check_q(q)
    idx = [spec.index(w) for w in word]
    if len(idx) % 2 or not idx:
        return []
    rows = []
    for p in enumerate_pairings(len(idx), r_max=max(R_MAX, len(idx))):
        prod = 1.0
        for a, b in p.blocks:
            prod *= spec.matrix[idx[a - 1], idx[b - 1]]
        c = crossing_number(p)
        rows.append((p, c, q ** c * prod))
    return rows
