"""Group-algebra helpers for the symmetric group S_n.

The q-Gram block on words of length n is the image of
``x = sum_sigma q**inv(sigma) sigma`` under the permutation action on tensor
factors. Functions of that block (square root, inverse square root) are
images of the corresponding functions of ``x`` in the group algebra, which
we compute once in the regular representation (size n! x n!) and then apply
as a weighted sum of axis permutations. The cost no longer depends on d**n.
"""
from __future__ import annotations

import itertools
from functools import lru_cache

import numpy as np

MAX_GROUP_ORDER = 6


@lru_cache(maxsize=None)
def permutations(n: int) -> np.ndarray:
    perms = np.array(list(itertools.permutations(range(n))), dtype=np.intp).reshape(-1, n)
    perms.setflags(write=False)
    return perms


def inversions(p) -> int:
    p = list(p)
    return sum(1 for i in range(len(p)) for j in range(i + 1, len(p)) if p[i] > p[j])


@lru_cache(maxsize=None)
def inversion_counts(n: int) -> np.ndarray:
    out = np.array([inversions(p) for p in permutations(n)], dtype=np.intp)
    out.setflags(write=False)
    return out


@lru_cache(maxsize=None)
def _tables(n: int):
    perms = permutations(n)
    size = len(perms)
    base = n + 1
    keys = (perms * base ** np.arange(n)).sum(axis=1)
    lookup = {int(k): i for i, k in enumerate(keys)}
    inverse = np.argsort(perms, axis=1)
    inv_idx = np.array([lookup[int(k)] for k in (inverse * base ** np.arange(n)).sum(axis=1)])
    # composition (p o r)(k) = p[r[k]]
    mult = np.empty((size, size), dtype=np.intp)
    for i in range(size):
        composed = perms[i][perms]                      # row j holds p_i o p_j
        mult[i] = [lookup[int(k)] for k in (composed * base ** np.arange(n)).sum(axis=1)]
    return mult, inv_idx


def regular_matrix(x: np.ndarray, n: int) -> np.ndarray:
    """Left-regular representation: ``L[rho, tau] = x[rho o tau^-1]``."""
    mult, inv_idx = _tables(n)
    return x[mult[:, inv_idx]]


def gram_element(n: int, q: float) -> np.ndarray:
    return np.power(float(q), inversion_counts(n).astype(float))


@lru_cache(maxsize=None)
def gram_spectrum_and_functions(n: int, q: float):
    """Eigenvalues of the regular representation of the q-Gram element plus
    the group-algebra elements of its square root and inverse square root."""
    if n > MAX_GROUP_ORDER:
        raise ValueError(f"group-algebra route supports n <= {MAX_GROUP_ORDER}")
    x = gram_element(n, q)
    lam, vec = np.linalg.eigh(regular_matrix(x, n))
    ident = 0                                            # identity is the first permutation
    row = vec[ident]
    sqrt_el = (vec * np.sqrt(lam)) @ row
    inv_sqrt_el = (vec / np.sqrt(lam)) @ row
    for arr in (lam, sqrt_el, inv_sqrt_el):
        arr.setflags(write=False)
    return lam, sqrt_el, inv_sqrt_el


def apply_element(coeffs: np.ndarray, block: np.ndarray, d: int, n: int, tol: float = 0.0) -> np.ndarray:
    """Apply ``sum_sigma coeffs[sigma] * P_sigma`` to the rows of ``block``.

    ``block`` has shape ``(d**n,)`` or ``(d**n, m)``; rows are indexed by words
    in row-major digit order.
    """
    if n <= 1:
        return coeffs[0] * block
    vec = block.ndim == 1
    b = block[:, None] if vec else block
    m = b.shape[1]
    t = b.reshape((d,) * n + (m,))
    out = np.zeros_like(t, dtype=np.result_type(t, coeffs))
    for perm, c in zip(permutations(n), coeffs):
        if abs(c) <= tol:
            continue
        out += c * t.transpose(tuple(perm) + (n,))
    out = out.reshape(d ** n, m)
    return out[:, 0] if vec else out
