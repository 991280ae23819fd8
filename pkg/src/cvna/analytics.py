"""Mean-field threshold analytics and infinite-diversification limits.

Compartment ``mu`` holds banks whose post-shock equity is ``eps_mu``; a bank
there defaults once at least ``m_mu`` of its ``k/2`` borrowers have
defaulted. In the mean-field picture each borrower is in default
independently with probability ``q`` and

    f(q) = sum_mu Pi_mu * P[Bin(k/2, q) >= m_mu]

whose least fixed point is the expected default fraction.
"""
from __future__ import annotations

import enum
import itertools
import math
from dataclasses import dataclass

import numpy as np
from scipy.special import bdtrc, ndtri

from . import quadrature
from .clearing import threshold_counts
from .shocks import ShockDistribution, multinomial_pmf, pi_probabilities

FIXED_POINT_TOL = 1e-12
MAX_ITERATIONS = 100_000


@dataclass(frozen=True, eq=False)
class MeanFieldProblem:
    """Degree, leverage and per-compartment equities, fractions and thresholds.

    ``fractions`` may carry leading batch axes (class axis last); every row
    is solved independently. ``thresholds`` defaults to
    :func:`cvna.clearing.threshold_counts` under ``rule``.
    """

    k: int
    leverage: float
    equities: np.ndarray
    fractions: np.ndarray
    thresholds: np.ndarray | None = None
    rule: str = "strict"

    def __post_init__(self):
        eps = np.asarray(self.equities, dtype=float)
        frac = np.asarray(self.fractions, dtype=float)
        if frac.shape[-1] != eps.shape[0]:
            raise ValueError(f"{eps.shape[0]} equities but fractions of shape {frac.shape}")
        if self.thresholds is None:
            m = threshold_counts(self.k, self.leverage, eps, self.rule)
        else:
            m = np.asarray(self.thresholds, dtype=np.int64)
        object.__setattr__(self, "equities", eps)
        object.__setattr__(self, "fractions", frac)
        object.__setattr__(self, "thresholds", m)

    @property
    def half_degree(self) -> int:
        return int(self.k) // 2


@dataclass(frozen=True)
class FixedPointSolution:
    q_star: float | np.ndarray
    iterations: int
    residual: float
    converged: bool


@dataclass(frozen=True)
class Expectation:
    value: float
    error_bound: float
    method: str


class Regime(str, enum.Enum):
    SUBCRITICAL = "subcritical"
    PARTIAL = "partial"
    SUPERCRITICAL = "supercritical"


def binomial_tail(d: int, q, m) -> np.ndarray:
    """``P[Bin(d, q) >= m]`` broadcast over ``q`` (leading) and ``m`` (last axis)."""
    # fractions summing to 1 + ulp can push q just above 1
    q = np.clip(np.asarray(q, dtype=float), 0.0, 1.0)[..., None]
    m = np.asarray(m, dtype=np.int64)
    if d == 0:
        return np.broadcast_to(np.where(m <= 0, 1.0, 0.0), q.shape[:-1] + m.shape).copy()
    with np.errstate(invalid="ignore"):
        tail = bdtrc(np.clip(m - 1, 0, d), d, q)
    return np.where(m <= 0, 1.0, np.where(m > d, 0.0, tail))


def mean_field_iterate(problem: MeanFieldProblem, q_prev):
    """One application of the mean-field map to ``q_prev``."""
    tails = binomial_tail(problem.half_degree, q_prev, problem.thresholds)
    out = np.sum(problem.fractions * tails, axis=-1)
    return float(out) if out.ndim == 0 else out


def _solve(problem: MeanFieldProblem, q0, tol: float, max_iter: int) -> FixedPointSolution:
    shape = np.shape(q0)
    n_classes = problem.fractions.shape[-1]
    frac = np.broadcast_to(problem.fractions, shape + (n_classes,)).reshape(-1, n_classes)
    q = np.array(q0, dtype=float).reshape(-1)
    d = problem.half_degree
    m = problem.thresholds
    active = np.arange(q.size)
    it = 0
    for it in range(1, max_iter + 1):
        q_old = q[active]
        q_new = np.sum(frac[active] * binomial_tail(d, q_old, m), axis=-1)
        # the iterates increase; clamp rounding so the sequence stays monotone
        q_new = np.clip(np.maximum(q_new, q_old), 0.0, 1.0)
        q[active] = q_new
        active = active[np.abs(q_new - q_old) >= tol]
        if active.size == 0:
            break
    f_q = np.sum(frac * binomial_tail(d, q, m), axis=-1)
    residual = float(np.max(np.abs(f_q - q))) if q.size else 0.0
    q_star = q.reshape(shape)
    return FixedPointSolution(
        q_star=float(q_star) if q_star.ndim == 0 else q_star,
        iterations=it,
        residual=residual,
        converged=active.size == 0,
    )


def solve_q_of_N(problem: MeanFieldProblem, tol: float = FIXED_POINT_TOL,
                 max_iter: int = MAX_ITERATIONS) -> FixedPointSolution:
    """Least fixed point of the mean-field map, iterating up from ``Pi_1``.

    Batched over the leading axes of ``problem.fractions``; ``iterations``
    and ``residual`` are then maxima over the batch.
    """
    return _solve(problem, problem.fractions[..., 0], tol, max_iter)


def _compositions(n: int, n_classes: int):
    for cut in itertools.combinations(range(n + n_classes - 1), n_classes - 1):
        bounds = (-1,) + cut + (n + n_classes - 1,)
        yield tuple(bounds[i + 1] - bounds[i] - 1 for i in range(n_classes))


def _box(n: int, probs: np.ndarray, width: float) -> np.ndarray:
    sd = np.sqrt(n * probs * (1.0 - probs))
    lo = np.maximum(np.floor(n * probs - width * sd), 0).astype(int)
    hi = np.minimum(np.ceil(n * probs + width * sd), n).astype(int)
    grids = np.meshgrid(*[np.arange(a, b + 1) for a, b in zip(lo[:-1], hi[:-1])], indexing="ij")
    head = np.stack([g.ravel() for g in grids], axis=-1)
    last = n - head.sum(axis=1)
    keep = (last >= lo[-1]) & (last <= hi[-1])
    return np.column_stack([head[keep], last[keep]])


def expected_q_uncorrelated(n: int, probs, k: int, leverage: float, equities, *,
                            rule: str = "strict", exact_max: int = 60,
                            width: float = 6.0) -> Expectation:
    """Multinomial average of the fixed point over compartment counts.

    All compositions are enumerated for ``n <= exact_max``; larger systems
    sum over the box ``|N_mu - n p_mu| <= width * sd_mu`` and report the
    neglected probability mass as the error bound (``q`` lies in [0, 1]).
    """
    if n < 1:
        raise ValueError(f"n must be positive, got {n}")
    probs = np.asarray(probs, dtype=float)
    if n <= exact_max:
        counts = np.array(list(_compositions(n, probs.size)), dtype=float)
        method = "enumeration"
    else:
        counts = _box(n, probs, width).astype(float)
        method = "truncated-enumeration"
    weights = multinomial_pmf(counts, probs)
    problem = MeanFieldProblem(k, leverage, equities, counts / n, rule=rule)
    sol = solve_q_of_N(problem)
    if not sol.converged:
        raise ArithmeticError(f"fixed point iteration did not converge (residual {sol.residual:.3g})")
    value = float(np.dot(weights, sol.q_star))
    neglected = max(0.0, 1.0 - math.fsum(weights))
    return Expectation(value, neglected + 1e-12, method)


def solve_q_alpha(alpha, dist: ShockDistribution, k: int, leverage: float, equities=None,
                  *, rule: str = "strict") -> FixedPointSolution:
    """Fixed point with the factor-conditional class probabilities ``pi(alpha)``."""
    eps = dist.equities if equities is None else equities
    pi = pi_probabilities(alpha, dist)
    return solve_q_of_N(MeanFieldProblem(k, leverage, eps, pi, rule=rule))


def expected_q_correlated(dist: ShockDistribution, k: int, leverage: float, equities=None, *,
                          rule: str = "strict", method: str = "monotone",
                          tol: float = 1e-4) -> Expectation:
    """Average of ``q(alpha)`` over the common factor.

    ``q(alpha)`` is non-increasing and jumps where the cascade switches on,
    so the default ``monotone`` rule brackets the integral rigorously and
    returns a guaranteed error bound. ``gauss-hermite`` (256 nodes, error
    taken from a 128-node comparison) is kept for smooth cases.
    """
    if dist.rho == 0.0:
        sol = solve_q_of_N(MeanFieldProblem(k, leverage, dist.equities if equities is None
                                            else equities, np.asarray(dist.probs), rule=rule))
        return Expectation(float(sol.q_star), sol.residual, "mean-value")

    def q_of(alpha):
        return np.atleast_1d(solve_q_alpha(alpha, dist, k, leverage, equities, rule=rule).q_star)

    if method == "monotone":
        value, bound = quadrature.monotone(q_of, dist.rho, tol=tol)
        return Expectation(value, bound, method)
    if method == "gauss-hermite":
        value = quadrature.gauss_hermite(q_of, dist.rho, 256)
        coarse = quadrature.gauss_hermite(q_of, dist.rho, 128)
        return Expectation(value, abs(value - coarse), method)
    raise ValueError(f"unknown method {method!r}")


def _heaviside(x: float) -> float:
    return 1.0 if x > 0.0 else (0.5 if x == 0.0 else 0.0)


def limit_uncorrelated(probs, equities, leverage: float) -> float:
    """Large-degree limit of the expected default fraction without correlation.

    Compartment ``mu`` falls when the cumulative mass of all worse
    compartments exceeds ``eps_mu / leverage``, and only if every worse
    compartment fell too. Ties count one half.
    """
    probs = [float(p) for p in probs]
    eps = [float(e) for e in equities]
    if leverage <= 0.0:
        return probs[0]
    terms = [probs[0]]
    factor = 1.0
    for mu in range(1, len(probs)):
        factor *= _heaviside(math.fsum(probs[:mu]) - eps[mu] / leverage)
        terms.append(probs[mu] * factor)
    return math.fsum(terms)


def _inverse_idiosyncratic(u: float, rho: float, convention: str) -> float:
    if convention == "scaled":
        return math.sqrt(1.0 - rho) * float(ndtri(u))
    if convention == "standard":
        return float(ndtri(u))
    raise ValueError(f"convention must be 'standard' or 'scaled', got {convention!r}")


def collapse_bounds(dist: ShockDistribution, equities, leverage: float,
                    convention: str = "standard") -> np.ndarray:
    """Factor values below which each compartment defaults in the limit.

    Entry ``mu`` (for ``mu >= 1``) is ``min`` over ``phi <= mu`` of
    ``z_{phi-1} - G^{-1}(eps_phi / leverage)``; ``-inf`` marks an immune
    compartment. ``G^{-1}`` is the idiosyncratic quantile under
    ``scaled`` and the standard normal quantile under ``standard``.
    """
    eps = np.asarray(dist.equities if equities is None else equities, dtype=float)
    z = ndtri(dist.cumulative[:-1])
    bounds = np.full(dist.n_classes, np.inf)
    running = np.inf
    for mu in range(1, dist.n_classes):
        ratio = eps[mu] / leverage if leverage > 0.0 else np.inf
        if ratio >= 1.0:
            l_mu = -np.inf
        elif ratio <= 0.0:
            l_mu = np.inf
        else:
            l_mu = z[mu - 1] - _inverse_idiosyncratic(ratio, dist.rho, convention)
        running = min(running, l_mu)
        bounds[mu] = running
    return bounds


def limit_correlated(dist: ShockDistribution, equities=None, leverage: float = 0.0, *,
                     convention: str = "standard", tol: float = 1e-10) -> float:
    """Large-degree limit of the expected default fraction under the copula.

    Sums ``int_{-inf}^{L_mu} f_X(a) pi_mu(a) da`` over compartments with
    ``L_mu`` from :func:`collapse_bounds`. The compartment-1 integral is
    evaluated and checked against ``p_1``.
    """
    if not 0.0 < dist.rho < 1.0:
        raise ValueError(f"rho must lie in (0, 1), got {dist.rho}")
    bounds = collapse_bounds(dist, equities, leverage, convention)
    total = []
    for mu in range(dist.n_classes):
        if bounds[mu] == -np.inf:
            continue
        upper = None if bounds[mu] == np.inf else float(bounds[mu])
        value, _ = quadrature.adaptive(
            lambda a, mu=mu: pi_probabilities(a, dist)[..., mu], dist.rho, upper=upper, tol=tol
        )
        if mu == 0 and abs(value - dist.p_default) > 1e-7:
            raise quadrature.QuadratureError("compartment-1 mass does not match p_1",
                                             abs(value - dist.p_default))
        total.append(value)
    return math.fsum(total)


def classify_regime(probs, equities, leverage: float, atol: float = 1e-12) -> Regime:
    """Subcritical when the uncorrelated limit is ``p_1``, supercritical when it is 1."""
    q = limit_uncorrelated(probs, equities, leverage)
    if abs(q - 1.0) <= atol:
        return Regime.SUPERCRITICAL
    if abs(q - float(probs[0])) <= atol:
        return Regime.SUBCRITICAL
    return Regime.PARTIAL
