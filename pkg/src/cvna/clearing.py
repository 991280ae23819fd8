"""Balance-sheet clearing on a concrete network and the equivalent threshold cascade.

Arrays are per bank. External liabilities are zero throughout, so equity
is ``A^e + A^b - L^b`` and a bank defaults once its equity turns negative.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from . import _kernels
from .graph import FinancialSystem, RegularGraph
from .shocks import ShockVector

DEFAULT_TOL = 0.03
DEFAULT_CUTOFF = 1000


@dataclass(frozen=True, eq=False)
class BankStates:
    """Balance sheets of all banks at one step of the clearing map.

    ``interbank_assets`` is the marked value of each bank's claims,
    ``recovery`` is NaN for live banks and ``default_step`` is -1 for them.
    ``deficit`` is the sum over a bank's borrowers of (mark - 1), the state
    variable the map actually advances.
    """

    external_assets: np.ndarray
    interbank_assets: np.ndarray
    equity: np.ndarray
    defaulted: np.ndarray
    recovery: np.ndarray
    default_step: np.ndarray
    deficit: np.ndarray
    step: int = 0

    @property
    def n(self) -> int:
        return self.equity.shape[0]


@dataclass(frozen=True, eq=False)
class CascadeResult:
    default_indicators: np.ndarray
    default_fraction: float
    triggered: bool
    iterations: int
    converged: bool
    n_initial: int
    default_step: np.ndarray | None = None
    equity: np.ndarray | None = None


def _check_length(system_n: int, shocks) -> np.ndarray:
    values = np.asarray(shocks.values if isinstance(shocks, ShockVector) else shocks, dtype=float)
    if values.shape != (system_n,):
        raise ValueError(f"shock vector has shape {values.shape}, expected ({system_n},)")
    return values


def recovery_rate(external_assets, interbank_assets, liabilities, external_liabilities=0.0):
    """Fraction of interbank liabilities a defaulted bank can repay.

    ``clip(A^e + A^b - L^e, 0, L^b) / L^b``, defined as 0 where ``L^b = 0``.
    Works elementwise on arrays.
    """
    ae, ab, lb, le = np.broadcast_arrays(
        *(np.asarray(x, dtype=float) for x in (external_assets, interbank_assets, liabilities,
                                                 external_liabilities))
    )
    residual = np.clip(ae + ab - le, 0.0, lb)
    with np.errstate(invalid="ignore", divide="ignore"):
        r = np.where(lb > 0.0, residual / np.where(lb > 0.0, lb, 1.0), 0.0)
    return float(r) if r.ndim == 0 else r


def apply_shock(system: FinancialSystem, shocks) -> BankStates:
    """Post-shock balance sheets: ``A^e_i = 1 + s_i`` with interbank claims at par."""
    s = _check_length(system.n, shocks)
    ext = system.net_external_assets + s
    lev = system.interbank_liabilities
    # A^b = L^b at par, so equity is A^e exactly
    equity = ext.copy()
    defaulted = equity < 0.0
    return BankStates(
        external_assets=ext,
        interbank_assets=lev.copy(),
        equity=equity,
        defaulted=defaulted,
        recovery=np.where(defaulted, recovery_rate(ext, lev, lev), np.nan),
        default_step=np.where(defaulted, 0, -1),
        deficit=np.zeros(system.n),
    )


def _marks(states: BankStates, system: FinancialSystem) -> np.ndarray:
    lev = float(system.leverage)
    if system.delta > 0.0 and lev > 0.0:
        r = recovery_rate(states.external_assets, states.interbank_assets, lev)
        return np.where(states.defaulted, system.delta * r, 1.0)
    return np.where(states.defaulted, 0.0, 1.0)


def propagate_step(states: BankStates, system: FinancialSystem) -> tuple[BankStates, float]:
    """One synchronous application of the clearing map.

    Claims on banks that were in default at the previous step are marked
    at ``delta * R_j`` (zero when ``delta = 0``), all others at par.
    Returns the new states and the largest absolute equity change.
    """
    w = system.exposure
    in_nb = system.graph.in_neighbors
    marks = _marks(states, system)
    if in_nb.shape[1]:
        deficit = (marks - 1.0)[in_nb].sum(axis=1)
    else:
        deficit = np.zeros(states.n)
    lev = system.interbank_liabilities
    interbank = lev + w * deficit
    equity = states.external_assets + w * deficit
    new = (equity < 0.0) & ~states.defaulted
    defaulted = states.defaulted | new
    step = states.step + 1
    recovery = np.where(
        defaulted, recovery_rate(states.external_assets, interbank, lev), np.nan
    )
    nxt = replace(
        states,
        interbank_assets=interbank,
        equity=equity,
        defaulted=defaulted,
        recovery=recovery,
        default_step=np.where(new, step, states.default_step),
        deficit=deficit,
        step=step,
    )
    change = float(np.abs(equity - states.equity).max()) if states.n else 0.0
    return nxt, change


def run_cascade(system: FinancialSystem, shocks, tol: float = DEFAULT_TOL,
                cutoff: int = DEFAULT_CUTOFF) -> CascadeResult:
    """Iterate the clearing map until no new defaults occur and equities settle.

    The run stops at the first step without new defaults whose largest
    equity change is below ``tol`` (with ``delta = 0`` equities only move
    when defaults occur, so the first quiet step ends the run). ``converged``
    is False when ``cutoff`` steps were exhausted first.
    """
    if not tol > 0.0:
        raise ValueError(f"tol must be positive, got {tol}")
    if cutoff < 1:
        raise ValueError(f"cutoff must be at least 1, got {cutoff}")
    s = _check_length(system.n, shocks)
    ext = system.net_external_assets + s
    g = system.graph
    defaulted, equity, _, _, step_of, iterations, converged = _kernels.clearing_cascade(
        ext, g.in_neighbors, g.out_neighbors, system.leverage, system.exposure,
        system.delta, tol, cutoff,
    )
    return _result(defaulted, int((ext < 0.0).sum()), iterations, converged, step_of, equity)


def _result(defaulted, n_initial, iterations, converged, step_of, equity=None) -> CascadeResult:
    n = defaulted.shape[0]
    n_def = int(defaulted.sum())
    return CascadeResult(
        default_indicators=defaulted.astype(np.int8),
        default_fraction=n_def / n if n else 0.0,
        triggered=n_def > n_initial,
        iterations=int(iterations),
        converged=bool(converged),
        n_initial=n_initial,
        default_step=step_of,
        equity=equity,
    )


def threshold_counts(k: int, leverage: float, equities, rule: str = "strict") -> np.ndarray:
    """Number of defaulted borrowers that wipes out each post-shock equity.

    ``strict`` (default) is the least ``m`` with ``equity - m * w < 0`` for
    per-arc exposure ``w = leverage / (k/2)``, evaluated in the same floating
    point arithmetic as the clearing map. ``ceil`` is ``ceil(k/2 * eps /
    leverage)``, which differs only where that ratio is an integer. Negative
    equities give 0; values above ``k/2`` become ``k/2 + 1`` (immune).
    """
    d = int(k) // 2
    eps = np.asarray(equities, dtype=float)
    immune = d + 1
    lev = float(leverage)
    if d == 0 or lev <= 0.0:
        return np.where(eps < 0.0, 0, immune).astype(np.int64)
    w = lev / d
    with np.errstate(over="ignore", invalid="ignore"):
        ratio = np.clip(d * eps / lev, -1.0, float(immune))
    if rule == "ceil":
        m = np.ceil(ratio)
    elif rule == "strict":
        m = np.floor(ratio) + 1.0
        # nudge onto the exact floating point predicate used by the engine
        for _ in range(2):
            m = np.where((m > 1) & (eps + w * -(m - 1) < 0.0), m - 1, m)
            m = np.where((m <= d) & ~(eps + w * -m < 0.0), m + 1, m)
    else:
        raise ValueError(f"rule must be 'strict' or 'ceil', got {rule!r}")
    m = np.clip(m, 0, immune)
    return np.where(eps < 0.0, 0, m).astype(np.int64)


def threshold_cascade(graph: RegularGraph, shocks, leverage: float,
                      rule: str = "strict") -> CascadeResult:
    """Integer threshold cascade equivalent to the clearing map with ``delta = 0``."""
    s = _check_length(graph.n, shocks)
    eps = 1.0 + s
    m = threshold_counts(graph.k, leverage, eps, rule)
    defaulted, _, step_of, rounds = _kernels.threshold_cascade(
        m, graph.in_neighbors, graph.out_neighbors
    )
    return _result(defaulted, int((eps < 0.0).sum()), rounds, True, step_of)


def write_cascade_audit(result: CascadeResult, shocks, path) -> Path:
    """CSV with ``bank,shock,equity,defaulted,default_step`` per bank."""
    path = Path(path)
    s = np.asarray(shocks.values if isinstance(shocks, ShockVector) else shocks, dtype=float)
    equity = result.equity if result.equity is not None else np.full(s.shape, math.nan)
    step = result.default_step if result.default_step is not None else np.full(s.shape, -1)
    with path.open("w") as fh:
        fh.write("bank,shock,equity,defaulted,default_step\n")
        for i in range(s.shape[0]):
            fh.write(f"{i},{float(s[i])!r},{float(equity[i])!r},{int(result.default_indicators[i])},"
                     f"{int(step[i])}\n")
    return path
