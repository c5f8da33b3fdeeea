"""Marginal law of the q-Gaussian variable: support, density and moments.

The density is evaluated through the angle ``theta`` with
``x = 2 cos(theta) / sqrt(1 - q)``; in that variable the integrand of any
moment is smooth and periodic, so Gauss-Legendre on ``[0, pi]`` converges
geometrically and the square-root edges cause no trouble.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numpy.polynomial.legendre import leggauss

from .errors import NumericError
from .pairings import check_q, R_MAX

K_DEFAULT = 80
_TAIL_TARGET = 1e-16
_EDGE = 1e-14


def support(q: float) -> tuple[float, float]:
    check_q(q)
    edge = 2.0 / math.sqrt(1.0 - q)
    return -edge, edge


def tail_bound(q: float, K: int) -> float:
    """Bound on the relative error from dropping the factors ``n > K`` of the product."""
    check_q(q)
    if q == 0.0:
        return 0.0
    qk = q ** (K + 1)
    log_err = 3.0 * qk / ((1.0 - q) * (1.0 - qk))
    return math.expm1(log_err)


def auto_order(q: float, minimum: int = K_DEFAULT, target: float = _TAIL_TARGET) -> int:
    """Smallest ``K >= minimum`` whose tail bound is below ``target``."""
    K = minimum
    while tail_bound(q, K) > target and K < 100_000:
        K *= 2
    lo, hi = max(minimum, K // 2), K
    while lo < hi:
        mid = (lo + hi) // 2
        if tail_bound(q, mid) <= target:
            hi = mid
        else:
            lo = mid + 1
    return max(minimum, hi)


def _product(theta: np.ndarray, q: float, K: int) -> np.ndarray:
    if q == 0.0:
        return np.ones_like(theta)
    n = np.arange(1, K + 1, dtype=float)
    qn = q ** n
    out = np.ones_like(theta)
    # chunk over n so that memory stays bounded for long products
    for start in range(0, K, 256):
        blk = qn[start:start + 256, None]
        fac = (1.0 - blk) * (1.0 - 2.0 * blk * np.cos(2.0 * theta[None, :]) + blk ** 2)
        out = out * np.prod(fac, axis=0)
    return out


def _density_theta(theta: np.ndarray, q: float, K: int) -> np.ndarray:
    return math.sqrt(1.0 - q) / math.pi * np.sin(theta) * _product(theta, q, K)


@dataclass(frozen=True)
class QDensity:
    """Density of the q-Gaussian law truncated to ``K`` product factors."""

    q: float
    K: int | None = None

    def __post_init__(self):
        check_q(self.q)
        if self.K is not None and self.K < 1:
            raise ValueError("K must be >= 1")

    @property
    def order(self) -> int:
        return self.K if self.K is not None else auto_order(self.q)

    @property
    def tail(self) -> float:
        return tail_bound(self.q, self.order)

    @property
    def support(self) -> tuple[float, float]:
        return support(self.q)

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        scalar = x.ndim == 0
        x = np.atleast_1d(x)
        lo, hi = self.support
        arg = x * math.sqrt(1.0 - self.q) / 2.0
        inside = np.abs(arg) <= 1.0 + _EDGE
        theta = np.arccos(np.clip(arg[inside], -1.0, 1.0))
        out = np.zeros_like(x)
        out[inside] = _density_theta(theta, self.q, self.order)
        return float(out[0]) if scalar else out

    def moment(self, r: int, tol: float = 1e-10, max_nodes: int = 1 << 14) -> float:
        return moment_quadrature(r, self.q, self.K, tol=tol, max_nodes=max_nodes)


def density_at(x, q: float, K: int | None = None):
    """Density at ``x``; ``K=None`` picks the truncation from the tail bound (at least 80 factors)."""
    return QDensity(q, K)(x)


def density_with_tail(x, q: float, K: int | None = None):
    """``(density, relative truncation bound)``."""
    dens = QDensity(q, K)
    return dens(x), dens.tail


def semicircle(x):
    x = np.asarray(x, dtype=float)
    return np.where(np.abs(x) <= 2.0, np.sqrt(np.clip(4.0 - x * x, 0.0, None)) / (2.0 * math.pi), 0.0)


def _theta_integral(r: int, q: float, K: int, M: int) -> float:
    nodes, weights = leggauss(M)
    theta = (nodes + 1.0) * (math.pi / 2.0)
    w = weights * (math.pi / 2.0)
    c = 2.0 / math.sqrt(1.0 - q)
    # dx = c sin(theta) dtheta, density = sqrt(1-q)/pi sin(theta) prod
    integrand = (c * np.cos(theta)) ** r * (2.0 / math.pi) * np.sin(theta) ** 2 * _product(theta, q, K)
    return float(np.dot(w, integrand))


def moment_quadrature(r: int, q: float, K: int | None = None, tol: float = 1e-10,
                      max_nodes: int = 1 << 14, return_error: bool = False):
    """``int x^r mu_q(dx)``, doubling the Gauss-Legendre order until two estimates agree within ``tol``."""
    check_q(q)
    if r < 0 or r > R_MAX:
        raise ValueError(f"moment order must be in [0, {R_MAX}]")
    K = auto_order(q) if K is None else K
    M = 32
    prev = _theta_integral(r, q, K, M)
    while True:
        M *= 2
        cur = _theta_integral(r, q, K, M)
        err = abs(cur - prev)
        if err < tol:
            return (cur, err) if return_error else cur
        if M >= max_nodes:
            raise NumericError(f"moment quadrature stalled at difference {err:.3e}", [err])
        prev = cur


def normalization(q: float, K: int | None = None, tol: float = 1e-12) -> float:
    return moment_quadrature(0, q, K, tol=tol)
