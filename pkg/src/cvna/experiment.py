"""Monte Carlo campaigns, analytic sweeps and output files.

Seeds are derived with ``numpy.random.SeedSequence`` spawn keys so every
stream is a pure function of the master seed and its coordinates:

* graph instance ``g`` of size ``n`` and degree ``k``: ``(0, n, k, g)``
* shock realisation ``r`` on instance ``g``: ``(1, g, r)``

Shock streams do not depend on ``n``, ``k``, leverage or ``rho``, so cells
of a sweep share common random numbers, which keeps differences between
neighbouring cells free of independent sampling noise.
"""
from __future__ import annotations

import dataclasses
import json
import logging
import math
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from . import analytics
from .clearing import DEFAULT_CUTOFF, DEFAULT_TOL, run_cascade
from .graph import RegularGraph, build_system, generate_k_regular
from .shocks import ShockDistribution, sample_shocks

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover
    import tomli as tomllib

log = logging.getLogger(__name__)

MODES = ("simulate", "analytic", "limit")
HIST_BINS = 100
CELL_COLUMNS = (
    "k", "leverage", "rho", "n", "n_realizations", "q_mean", "q_median_triggered",
    "triggered_fraction", "q_analytic", "q_limit", "cvna_ratio",
)
ANALYTIC_COLUMNS = ("k", "leverage", "rho", "q_expected", "method", "error_bound")
LIMIT_COLUMNS = ("leverage", "rho", "q_limit", "regime", "convention")

GRAPH_STREAM = 0
SHOCK_STREAM = 1


class CellError(RuntimeError):
    """A sweep cell failed; the message names the cell."""


@dataclass
class RunConfig:
    """Resolved parameters of a sweep. Defaults are desk scale."""

    n: int = 2000
    degrees: tuple[int, ...] = (212, 500, 1000, 2000, 3998)
    leverages: tuple[float, ...] = (2.0,)
    rhos: tuple[float, ...] = (0.0, 0.3)
    sigmas: tuple[float, ...] = (-1.1, -0.75, 0.0)
    probs: tuple[float, ...] = (0.02, 0.09, 0.89)
    n_shock_samples: int = 200
    n_network_instances: int = 5
    tol: float = DEFAULT_TOL
    cutoff: int = DEFAULT_CUTOFF
    delta: float = 0.0
    master_seed: int = 20240101
    output_dir: str = "results"
    modes: tuple[str, ...] = MODES
    sizes: tuple[int, ...] = (300, 800, 2000)
    limit_convention: str = "standard"

    def __post_init__(self):
        self.degrees = tuple(int(k) for k in self.degrees)
        self.leverages = tuple(float(x) for x in self.leverages)
        self.rhos = tuple(float(x) for x in self.rhos)
        self.sigmas = tuple(float(x) for x in self.sigmas)
        self.probs = tuple(float(x) for x in self.probs)
        self.sizes = tuple(int(x) for x in self.sizes)
        self.modes = tuple(str(m) for m in self.modes)
        for name in ("degrees", "leverages", "rhos", "modes"):
            if not getattr(self, name):
                raise ValueError(f"{name} must not be empty")
        if any(k % 2 or k < 0 for k in self.degrees):
            raise ValueError(f"degrees must be even and non-negative, got {self.degrees}")
        bad = set(self.modes) - set(MODES)
        if bad:
            raise ValueError(f"unknown modes {sorted(bad)}; choose from {MODES}")
        if self.n_shock_samples < 1 or self.n_network_instances < 1:
            raise ValueError("n_shock_samples and n_network_instances must be positive")
        if self.limit_convention not in ("standard", "scaled"):
            raise ValueError("limit_convention must be 'standard' or 'scaled'")
        # validates sigmas, probs and every rho
        for rho in self.rhos:
            ShockDistribution(self.sigmas, self.probs, rho)

    @property
    def n_realizations(self) -> int:
        return self.n_shock_samples * self.n_network_instances

    def distribution(self, rho: float) -> ShockDistribution:
        return ShockDistribution(self.sigmas, self.probs, rho)

    def to_dict(self) -> dict:
        return {f.name: (list(v) if isinstance(v := getattr(self, f.name), tuple) else v)
                for f in dataclasses.fields(self)}

    def full_scale(self) -> "RunConfig":
        return dataclasses.replace(self, n=10_000, n_shock_samples=1000, n_network_instances=5)


def load_config(path) -> RunConfig:
    """Read a TOML file whose top-level keys are :class:`RunConfig` fields."""
    path = Path(path)
    with path.open("rb") as fh:
        data = tomllib.load(fh)
    known = {f.name for f in dataclasses.fields(RunConfig)}
    unknown = sorted(set(data) - known)
    if unknown:
        raise ValueError(f"{path}: unknown configuration keys {unknown}")
    return RunConfig(**data)


def derive_seed(master_seed: int, *key: int) -> np.random.SeedSequence:
    return np.random.SeedSequence(int(master_seed), spawn_key=tuple(int(x) for x in key))


@dataclass(eq=False)
class ExperimentSummary:
    k: int
    leverage: float
    rho: float
    n: int
    q_values: np.ndarray = field(repr=False)
    triggered: np.ndarray = field(repr=False)
    p_default: float
    q_analytic: float = math.nan
    q_limit: float = math.nan

    @property
    def n_realizations(self) -> int:
        return int(self.q_values.size)

    @property
    def q_mean(self) -> float:
        return float(np.mean(self.q_values)) if self.q_values.size else math.nan

    @property
    def q_std_error(self) -> float:
        if self.q_values.size < 2:
            return math.nan
        return float(np.std(self.q_values, ddof=1) / math.sqrt(self.q_values.size))

    @property
    def q_median_triggered(self) -> float:
        hit = self.q_values[self.triggered]
        return float(np.median(hit)) if hit.size else math.nan

    @property
    def triggered_fraction(self) -> float:
        return float(np.mean(self.triggered)) if self.triggered.size else math.nan

    @property
    def histogram(self) -> np.ndarray:
        # numpy closes the last bin on the right, so q = 1 lands in bin 99
        counts, _ = np.histogram(self.q_values, bins=HIST_BINS, range=(0.0, 1.0))
        return counts

    @property
    def cvna_ratio(self) -> float:
        return cvna_ratio(self.q_mean, self.p_default) if self.p_default > 0 else math.nan

    def row(self) -> dict:
        return {
            "k": self.k,
            "leverage": self.leverage,
            "rho": self.rho,
            "n": self.n,
            "n_realizations": self.n_realizations,
            "q_mean": self.q_mean,
            "q_median_triggered": self.q_median_triggered,
            "triggered_fraction": self.triggered_fraction,
            "q_analytic": self.q_analytic,
            "q_limit": self.q_limit,
            "cvna_ratio": self.cvna_ratio,
        }


def cvna_ratio(q_expected: float, p1: float) -> float:
    """Network-adjusted over direct-counterparty CVA: ``<q> / p_1``."""
    if p1 <= 0.0:
        raise ZeroDivisionError("cvna_ratio is undefined for p1 = 0 (no direct default risk)")
    return q_expected / p1


def analytic_value(config: RunConfig, k: int, leverage: float, rho: float,
                   n: int | None = None) -> analytics.Expectation:
    dist = config.distribution(rho)
    if rho == 0.0:
        return analytics.expected_q_uncorrelated(
            config.n if n is None else n, dist.probs, k, leverage, dist.equities
        )
    return analytics.expected_q_correlated(dist, k, leverage)


def limit_value(config: RunConfig, leverage: float, rho: float,
                convention: str | None = None) -> float:
    dist = config.distribution(rho)
    if rho == 0.0:
        return analytics.limit_uncorrelated(dist.probs, dist.equities, leverage)
    return analytics.limit_correlated(
        dist, None, leverage, convention=convention or config.limit_convention
    )


class _GraphCache:
    """Keeps the graphs of the most recent ``(n, k)`` so leverage and rho sweeps reuse them."""

    def __init__(self):
        self._key = None
        self._graphs: dict[int, RegularGraph] = {}

    def get(self, master_seed: int, n: int, k: int, g: int) -> RegularGraph:
        key = (master_seed, n, k)
        if key != self._key:
            self._key = key
            self._graphs = {}
        if g not in self._graphs:
            seed = derive_seed(master_seed, GRAPH_STREAM, n, k, g)
            self._graphs[g] = generate_k_regular(n, k, seed)
        return self._graphs[g]


def run_cell(config: RunConfig, k: int, leverage: float, rho: float, *, n: int | None = None,
             cache: _GraphCache | None = None) -> ExperimentSummary:
    """Simulate one ``(k, leverage, rho)`` cell and attach the requested analytics."""
    n = config.n if n is None else int(n)
    cache = cache or _GraphCache()
    dist = config.distribution(rho)
    q = np.empty(config.n_realizations)
    triggered = np.zeros(config.n_realizations, dtype=bool)
    try:
        i = 0
        for g in range(config.n_network_instances):
            graph = cache.get(config.master_seed, n, k, g)
            system = build_system(graph, leverage, config.delta)
            for r in range(config.n_shock_samples):
                shocks = sample_shocks(dist, n, derive_seed(config.master_seed, SHOCK_STREAM, g, r))
                res = run_cascade(system, shocks, config.tol, config.cutoff)
                q[i] = res.default_fraction
                triggered[i] = res.triggered
                i += 1
        summary = ExperimentSummary(k, leverage, rho, n, q, triggered, dist.p_default)
        if "analytic" in config.modes:
            summary.q_analytic = analytic_value(config, k, leverage, rho, n).value
        if "limit" in config.modes:
            summary.q_limit = limit_value(config, leverage, rho)
    except Exception as exc:
        raise CellError(f"cell n={n} k={k} leverage={leverage} rho={rho} failed: {exc}") from exc
    log.info("cell n=%d k=%d lev=%g rho=%g: q_mean=%.4f triggered=%.3f",
             n, k, leverage, rho, summary.q_mean, summary.triggered_fraction)
    return summary


def run_sweep(config: RunConfig) -> list[ExperimentSummary]:
    """Every ``(k, leverage, rho)`` cell, looping degrees outermost to reuse graphs."""
    cache = _GraphCache()
    return [
        run_cell(config, k, lev, rho, cache=cache)
        for k in config.degrees
        for lev in config.leverages
        for rho in config.rhos
    ]


def size_scan(config: RunConfig) -> list[ExperimentSummary]:
    """Complete networks (``k = 2(n-1)``) at every size in ``config.sizes``."""
    cache = _GraphCache()
    out = []
    for n in config.sizes:
        for lev in config.leverages:
            for rho in config.rhos:
                s = run_cell(config, 2 * (n - 1), lev, rho, n=n, cache=cache)
                if "limit" not in config.modes:
                    s.q_limit = limit_value(config, lev, rho)
                out.append(s)
    return out


def analytic_table(config: RunConfig) -> list[dict]:
    rows = []
    for k in config.degrees:
        for lev in config.leverages:
            for rho in config.rhos:
                e = analytic_value(config, k, lev, rho)
                rows.append({"k": k, "leverage": lev, "rho": rho, "q_expected": e.value,
                             "method": e.method, "error_bound": e.error_bound})
    return rows


def limit_table(config: RunConfig) -> list[dict]:
    rows = []
    for lev in config.leverages:
        for rho in config.rhos:
            dist = config.distribution(rho)
            regime = analytics.classify_regime(dist.probs, dist.equities, lev).value
            rows.append({
                "leverage": lev,
                "rho": rho,
                "q_limit": limit_value(config, lev, rho),
                "regime": regime if rho == 0.0 else "",
                "convention": "" if rho == 0.0 else config.limit_convention,
            })
    return rows


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def write_csv(rows: Iterable[dict], columns: Sequence[str], path) -> Path:
    path = Path(path)
    lines = [",".join(columns)]
    lines += [",".join(_fmt(row[c]) for c in columns) for row in rows]
    try:
        path.write_text("\n".join(lines) + "\n")
    except OSError as exc:
        raise OSError(f"could not write {path}: {exc}") from exc
    return path


def write_outputs(summaries: Sequence[ExperimentSummary], config: RunConfig,
                  out_dir=None) -> dict[str, Path]:
    """``cells.csv``, one histogram JSON per cell and ``config_echo.json``."""
    out = Path(config.output_dir if out_dir is None else out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {"cells": write_csv((s.row() for s in summaries), CELL_COLUMNS, out / "cells.csv")}
    for s in summaries:
        path = out / f"hist_{s.k}_{s.leverage:g}_{s.rho:g}.json"
        edges = np.linspace(0.0, 1.0, HIST_BINS + 1)
        payload = {"k": s.k, "leverage": s.leverage, "rho": s.rho, "n": s.n,
                   "bin_edges": edges.tolist(), "counts": s.histogram.tolist()}
        path.write_text(json.dumps(payload) + "\n")
        paths[path.stem] = path
    echo = {
        "config": config.to_dict(),
        "seed_scheme": {
            "generator": "numpy.random.SeedSequence(master_seed, spawn_key=key)",
            "graph_key": [GRAPH_STREAM, "n", "k", "instance"],
            "shock_key": [SHOCK_STREAM, "instance", "realization"],
        },
    }
    paths["config_echo"] = out / "config_echo.json"
    paths["config_echo"].write_text(json.dumps(echo, indent=2, sort_keys=True) + "\n")
    return paths
