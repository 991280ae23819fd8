"""Expectations over the Gaussian common factor ``X ~ N(0, variance)``."""
from __future__ import annotations

import functools
import math
from typing import Callable

import numpy as np
from scipy import integrate
from scipy.special import ndtri


class QuadratureError(ArithmeticError):
    """Quadrature failed to reach the requested accuracy."""

    def __init__(self, message: str, error_estimate: float):
        super().__init__(f"{message} (error estimate {error_estimate:.3g})")
        self.error_estimate = error_estimate


@functools.lru_cache(maxsize=8)
def _hermgauss(nodes: int) -> tuple[np.ndarray, np.ndarray]:
    t, w = np.polynomial.hermite.hermgauss(nodes)
    return t, w / math.sqrt(math.pi)


def gauss_hermite(func: Callable, variance: float, nodes: int = 256) -> float:
    """E[func(X)] by Gauss-Hermite with ``X = sqrt(2 variance) t``.

    ``func`` must be vectorised over a 1-d array of factor values.
    """
    t, w = _hermgauss(nodes)
    values = np.asarray(func(math.sqrt(2.0 * variance) * t), dtype=float)
    return float(w @ values)


def adaptive(func: Callable, variance: float, *, lower=None, upper=None,
             tol: float = 1e-9, width: float = 8.0) -> tuple[float, float]:
    """E[func(X) 1{lower < X < upper}] by adaptive quadrature.

    The factor range is truncated to ``width`` standard deviations, which
    drops less than 1e-15 of the Gaussian mass. Returns ``(value, abserr)``.
    """
    sd = math.sqrt(variance)
    a = -width * sd if lower is None else max(lower, -width * sd)
    b = width * sd if upper is None else min(upper, width * sd)
    if not a < b:
        return 0.0, 0.0

    def integrand(x):
        return math.exp(-0.5 * x * x / variance) / (sd * math.sqrt(2.0 * math.pi)) * float(
            func(np.array([x]))[0]
        )

    value, err = integrate.quad(integrand, a, b, epsabs=tol, epsrel=1e-12, limit=500)
    return float(value), float(err)


def monotone(func: Callable, variance: float, *, tol: float = 1e-6,
             initial: int = 256, max_evals: int = 200_000) -> tuple[float, float]:
    """E[func(X)] for ``func`` non-increasing in the factor value.

    Integrates over the factor's probability scale ``u = F_X(x)`` where the
    left and right Riemann sums bracket the integral; intervals with the
    widest bracket are bisected until half the total bracket is below
    ``tol``. Discontinuities (cascade jumps) are handled without loss of
    rigour. ``func`` must accept ``-inf`` and ``+inf``. Returns
    ``(trapezoid estimate, bound)``.
    """
    sd = math.sqrt(variance)

    def at(u):
        with np.errstate(divide="ignore"):
            return np.asarray(func(sd * ndtri(u)), dtype=float)

    u = np.linspace(0.0, 1.0, initial + 1)
    v = at(u)
    evals = u.size
    while True:
        h = np.diff(u)
        gap = np.abs(v[:-1] - v[1:]) * h
        bound = 0.5 * float(gap.sum())
        if bound <= tol or evals >= max_evals:
            break
        split = np.flatnonzero(gap > max(tol / gap.size, 0.25 * gap.max()))
        if split.size == 0:
            split = np.array([int(np.argmax(gap))])
        mid = 0.5 * (u[split] + u[split + 1])
        vm = at(mid)
        evals += mid.size
        u = np.insert(u, split + 1, mid)
        v = np.insert(v, split + 1, vm)
    estimate = float(0.5 * np.sum((v[:-1] + v[1:]) * np.diff(u)))
    return estimate, bound
