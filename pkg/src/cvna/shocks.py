"""Discrete external shocks, single-factor Gaussian copula, compartment PMFs.

Shock classes are indexed from 0 in code: class 0 is the immediate
default shock, the last class is the zero shock.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy.special import gammaln, ndtr, ndtri, xlogy

from . import quadrature
from .quadrature import QuadratureError

RHO_MAX = 0.999


@dataclass(frozen=True)
class ShockDistribution:
    """Shock values ``sigmas`` with probabilities ``probs`` and equicorrelation ``rho``.

    The first shock wipes out equity (``sigma < -1``), middle shocks leave
    a positive remainder (``-1 <= sigma < 0``) and the last one is zero.
    """

    sigmas: tuple[float, ...]
    probs: tuple[float, ...]
    rho: float = 0.0

    def __post_init__(self):
        sigmas = tuple(float(s) for s in self.sigmas)
        probs = tuple(float(p) for p in self.probs)
        object.__setattr__(self, "sigmas", sigmas)
        object.__setattr__(self, "probs", probs)
        object.__setattr__(self, "rho", float(self.rho))
        if len(sigmas) < 2 or len(sigmas) != len(probs):
            raise ValueError("need at least two shock values with one probability each")
        if not sigmas[0] < -1.0:
            raise ValueError(f"first shock must be below -1, got {sigmas[0]}")
        if sigmas[-1] != 0.0:
            raise ValueError(f"last shock must be 0, got {sigmas[-1]}")
        if any(not -1.0 <= s < 0.0 for s in sigmas[1:-1]):
            raise ValueError(f"intermediate shocks must lie in [-1, 0), got {sigmas[1:-1]}")
        if any(p < 0.0 for p in probs) or abs(sum(probs) - 1.0) > 1e-9:
            raise ValueError(f"probabilities must be non-negative and sum to 1, got {probs}")
        if not 0.0 <= self.rho <= RHO_MAX:
            raise ValueError(f"rho must lie in [0, {RHO_MAX}], got {self.rho}")

    @property
    def n_classes(self) -> int:
        return len(self.sigmas)

    @property
    def equities(self) -> np.ndarray:
        """Post-shock equity per class, ``1 + sigma``."""
        return 1.0 + np.asarray(self.sigmas)

    @property
    def cumulative(self) -> np.ndarray:
        cum = np.cumsum(self.probs)
        cum[-1] = 1.0
        return cum

    @property
    def p_default(self) -> float:
        return self.probs[0]

    def latent(self) -> "LatentFactor":
        return LatentFactor(self.rho, self.cumulative[:-1])

    def with_rho(self, rho: float) -> "ShockDistribution":
        return ShockDistribution(self.sigmas, self.probs, rho)


@dataclass(frozen=True)
class LatentFactor:
    """Decomposition ``Z = X + Y`` with ``Var X = rho`` and ``Var Y = 1 - rho``.

    ``thresholds`` are the class boundaries on the standard normal scale,
    ``z_mu = Phi^{-1}(p_1 + ... + p_mu)``.
    """

    rho: float
    cumulative: np.ndarray = field(repr=False)

    @property
    def common_variance(self) -> float:
        return self.rho

    @property
    def idiosyncratic_variance(self) -> float:
        return 1.0 - self.rho

    @property
    def thresholds(self) -> np.ndarray:
        return ndtri(np.asarray(self.cumulative, dtype=float))

    def cdf_y(self, y):
        return ndtr(np.asarray(y) / math.sqrt(self.idiosyncratic_variance))

    def ppf_y(self, u):
        return math.sqrt(self.idiosyncratic_variance) * ndtri(np.asarray(u, dtype=float))


@dataclass(frozen=True)
class CompartmentVector:
    counts: tuple[int, ...]

    @property
    def total(self) -> int:
        return int(sum(self.counts))

    @property
    def fractions(self) -> np.ndarray:
        return np.asarray(self.counts, dtype=float) / self.total

    @classmethod
    def from_classes(cls, classes: np.ndarray, n_classes: int) -> "CompartmentVector":
        return cls(tuple(int(c) for c in np.bincount(classes, minlength=n_classes)))


@dataclass(frozen=True, eq=False)
class ShockVector:
    """One realisation: a shock value and class per bank.

    ``latent`` keeps the correlated normals when the copula was used.
    """

    values: np.ndarray
    classes: np.ndarray
    compartments: CompartmentVector
    latent: np.ndarray | None = None

    @property
    def n(self) -> int:
        return self.values.shape[0]


def shock_class(u, dist: ShockDistribution):
    """Index of the class selected by uniform ``u`` (inverse CDF rule)."""
    idx = np.searchsorted(dist.cumulative, u, side="left")
    return np.minimum(idx, dist.n_classes - 1)


def inverse_shock_cdf(u, dist: ShockDistribution):
    """Shock value for uniform ``u``: ``sigma_1`` when ``u <= p_1`` and so on."""
    out = np.asarray(dist.sigmas)[shock_class(u, dist)]
    return float(out) if np.ndim(out) == 0 else out


def sample_shocks(dist: ShockDistribution, n: int, seed=None) -> ShockVector:
    """Draw a shock per bank, independently or through the Gaussian copula.

    With ``rho > 0`` one common normal (variance ``rho``) is drawn first,
    then ``n`` idiosyncratic normals (variance ``1 - rho``); their sums are
    mapped to uniforms with the standard normal CDF.
    """
    rng = np.random.default_rng(seed)
    latent = None
    if dist.rho == 0.0:
        u = rng.random(n)
    else:
        x = math.sqrt(dist.rho) * rng.standard_normal()
        latent = x + math.sqrt(1.0 - dist.rho) * rng.standard_normal(n)
        u = ndtr(latent)
    classes = shock_class(u, dist).astype(np.int8)
    return ShockVector(
        values=np.asarray(dist.sigmas)[classes],
        classes=classes,
        compartments=CompartmentVector.from_classes(classes, dist.n_classes),
        latent=latent,
    )


def write_shock_vectors(vectors: Sequence[ShockVector], path) -> Path:
    """One CSV row per realisation: ``index,s_0,...,s_{n-1}``."""
    path = Path(path)
    with path.open("w") as fh:
        for r, vec in enumerate(vectors):
            fh.write(",".join([str(r)] + [repr(float(s)) for s in vec.values]) + "\n")
    return path


# ------------------------------------------------------------------ PMFs
def _log_multinomial_coef(counts: np.ndarray) -> np.ndarray:
    return gammaln(counts.sum(axis=-1) + 1.0) - gammaln(counts + 1.0).sum(axis=-1)


def multinomial_pmf(counts, probs) -> float | np.ndarray:
    """Multinomial probability of compartment counts, evaluated in log space.

    ``counts`` may carry leading batch axes; the class axis is last.
    """
    counts = np.asarray(counts, dtype=float)
    probs = np.asarray(probs, dtype=float)
    logp = _log_multinomial_coef(counts) + xlogy(counts, probs).sum(axis=-1)
    out = np.exp(logp)
    return float(out) if out.ndim == 0 else out


def _conditional_probs(alpha: np.ndarray, cumulative: np.ndarray, rho: float) -> np.ndarray:
    s = math.sqrt(1.0 - rho)
    z = ndtri(cumulative[:-1])
    with np.errstate(invalid="ignore"):
        a = (z - alpha[..., None]) / s
    # infinite alpha against an infinite threshold: the factor wins
    a = np.where(np.isnan(a), np.where(alpha[..., None] > 0, -np.inf, np.inf), a)
    edge = np.full(alpha.shape + (1,), np.inf)
    lower = np.concatenate([-edge, a], axis=-1)
    upper = np.concatenate([a, edge], axis=-1)
    # difference of upper tails is exact where both CDF values are close to 1
    pi = np.where(lower > 0, ndtr(-lower) - ndtr(-upper), ndtr(upper) - ndtr(lower))
    return np.clip(pi, 0.0, 1.0)


def pi_probabilities(alpha, dist: ShockDistribution) -> np.ndarray:
    """Class probabilities conditional on the common factor value ``alpha``.

    ``pi_mu(alpha) = F_Y(z_mu - alpha) - F_Y(z_{mu-1} - alpha)``; the result
    has shape ``alpha.shape + (n_classes,)``. For ``rho = 0`` the
    unconditional probabilities are returned.
    """
    alpha = np.asarray(alpha, dtype=float)
    if dist.rho == 0.0:
        return np.broadcast_to(np.asarray(dist.probs), alpha.shape + (dist.n_classes,)).copy()
    return _conditional_probs(alpha, dist.cumulative, dist.rho)


def correlated_pmf(counts, probs, rho: float, *, nodes: int = 256, tol: float = 1e-9) -> float:
    """Probability of compartment counts under the single-factor copula.

    Integrates the multinomial with factor-dependent probabilities against
    the factor density: Gauss-Hermite with ``nodes`` points, confirmed by
    adaptive quadrature. At ``rho = 0`` this is exactly
    :func:`multinomial_pmf`.
    """
    counts = np.asarray(counts, dtype=float)
    if rho == 0.0:
        return multinomial_pmf(counts, probs)
    if not 0.0 < rho <= RHO_MAX:
        raise ValueError(f"rho must lie in [0, {RHO_MAX}], got {rho}")
    probs = tuple(float(p) for p in probs)
    cumulative = np.cumsum(probs)
    cumulative[-1] = 1.0
    logcoef = float(_log_multinomial_coef(counts))

    def integrand(alpha):
        pi = _conditional_probs(np.asarray(alpha, dtype=float), cumulative, rho)
        return np.exp(logcoef + xlogy(counts, pi).sum(axis=-1))

    gh = quadrature.gauss_hermite(integrand, rho, nodes)
    ad, err = quadrature.adaptive(integrand, rho, tol=tol * 0.1)
    if abs(gh - ad) <= tol:
        return gh
    if err <= tol:
        return ad
    raise QuadratureError("correlated PMF integral did not converge", max(err, abs(gh - ad)))
