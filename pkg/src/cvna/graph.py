"""Random k-regular directed interbank networks and the homogeneous system.

An arc ``i -> j`` means bank ``i`` holds a claim on bank ``j``: ``j`` is a
borrower of ``i`` and a default of ``j`` writes down ``i``'s interbank
assets. Every bank has ``k/2`` borrowers and ``k/2`` creditors.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import _kernels


class GraphGenerationError(RuntimeError):
    """Stub matching could not be turned into a simple digraph."""


def _readonly(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class RegularGraph:
    """Simple digraph with in- and out-degree ``k/2`` at every vertex.

    ``in_neighbors[i]`` holds the borrowers of bank ``i`` (the banks whose
    liabilities it holds) and ``out_neighbors[j]`` the creditors of ``j``.
    Both are read-only ``(n, k/2)`` int32 arrays with sorted rows.
    """

    n: int
    k: int
    in_neighbors: np.ndarray = field(repr=False)
    out_neighbors: np.ndarray = field(repr=False)

    @property
    def half_degree(self) -> int:
        return self.k // 2

    @property
    def n_arcs(self) -> int:
        return self.n * self.half_degree

    def arcs(self) -> tuple[np.ndarray, np.ndarray]:
        """Arc list ``(src, dst)`` sorted by source then destination."""
        src = np.repeat(np.arange(self.n, dtype=np.int32), self.half_degree)
        return src, self.in_neighbors.ravel().copy()

    def adjacency(self) -> np.ndarray:
        adj = np.zeros((self.n, self.n), dtype=bool)
        src, dst = self.arcs()
        adj[src, dst] = True
        return adj

    def __eq__(self, other):
        if not isinstance(other, RegularGraph):
            return NotImplemented
        return (
            self.n == other.n
            and self.k == other.k
            and np.array_equal(self.in_neighbors, other.in_neighbors)
        )

    __hash__ = None


def _transpose(in_nb: np.ndarray) -> np.ndarray:
    n, d = in_nb.shape
    if d == 0:
        return np.empty((n, 0), dtype=np.int32)
    owners = np.repeat(np.arange(n, dtype=np.int32), d)
    order = np.lexsort((owners, in_nb.ravel()))
    return owners[order].reshape(n, d)


def _from_in_neighbors(n: int, k: int, in_nb: np.ndarray) -> RegularGraph:
    in_nb = np.sort(np.asarray(in_nb, dtype=np.int32).reshape(n, k // 2), axis=1)
    return RegularGraph(
        n=n,
        k=k,
        in_neighbors=_readonly(in_nb),
        out_neighbors=_readonly(_transpose(in_nb)),
    )


def complete_digraph(n: int) -> RegularGraph:
    """Every ordered pair of distinct banks, ``k = 2(n-1)``."""
    full = np.broadcast_to(np.arange(n, dtype=np.int32), (n, n))
    in_nb = full[~np.eye(n, dtype=bool)].reshape(n, n - 1)
    return _from_in_neighbors(n, 2 * (n - 1), in_nb)


def _simple_matching_probability(d: int) -> float:
    # Poisson approximation: d self-loops and d^2/2 repeated pairs expected
    return math.exp(-d - d * d / 2.0)


def _match_stubs(n: int, d: int, rng: np.random.Generator, max_retries: int) -> np.ndarray:
    """Configuration-model matching with swap repair; returns (n, d) borrowers."""
    m_arcs = n * d
    src = np.repeat(np.arange(n, dtype=np.int64), d)

    # whole-matching rejection is only attempted while it has a real chance
    attempts = max_retries if max_retries * _simple_matching_probability(d) >= 0.01 else 0
    dst = None
    for _ in range(max(attempts, 1)):
        dst = rng.permutation(src)
        keys = src * n + dst
        if not np.any(src == dst) and np.unique(keys).size == m_arcs:
            return dst.reshape(n, d)
    assert dst is not None

    keys, counts = np.unique(src * n + dst, return_counts=True)
    mult = np.zeros(n * n, dtype=np.uint8 if counts.max() < 255 else np.uint16)
    mult[keys] = counts
    mult = mult.reshape(n, n)

    budget = 200 * m_arcs + 1_000_000
    used_total = 0
    e = 0
    chunk = max(4 * m_arcs, 4096)
    while e < m_arcs:
        if used_total > budget:
            raise GraphGenerationError(
                f"swap repair did not converge for n={n}, k={2 * d} "
                f"after {used_total} partner draws"
            )
        rand = rng.integers(0, m_arcs, size=chunk, dtype=np.int64)
        e, used = _kernels.repair_arcs(src, dst, mult, rand, e)
        used_total += used
    return dst.reshape(n, d)


def generate_k_regular(
    n: int, k: int, seed=None, *, max_retries: int = 1000
) -> RegularGraph:
    """Sample a random directed graph with in- and out-degree ``k/2``.

    Uses the directed configuration model: whole matchings are rejected
    and redrawn while simple matchings are plausible, otherwise the last
    matching is repaired by double-edge swaps. Above half density the
    complement of a sparser sample is returned, and ``k/2 = n-1`` gives
    the complete digraph. ``seed`` is anything ``numpy.random.default_rng``
    accepts; equal seeds give identical graphs.
    """
    n = int(n)
    if k != int(k) or int(k) % 2:
        raise ValueError(f"k must be an even integer, got {k}")
    k = int(k)
    d = k // 2
    if n < 1:
        raise ValueError(f"need at least one bank, got n={n}")
    if k < 0 or d > n - 1:
        raise ValueError(f"k/2 must lie in [0, n-1]; got k={k}, n={n}")

    rng = np.random.default_rng(seed)
    if d == 0:
        return _from_in_neighbors(n, 0, np.empty((n, 0), dtype=np.int32))
    if d == n - 1:
        return complete_digraph(n)
    if 2 * d > n - 1:
        sparse = _match_stubs(n, n - 1 - d, rng, max_retries)
        adj = np.ones((n, n), dtype=bool)
        np.fill_diagonal(adj, False)
        adj[np.repeat(np.arange(n), n - 1 - d), sparse.ravel()] = False
        return _from_in_neighbors(n, k, np.nonzero(adj)[1])
    return _from_in_neighbors(n, k, _match_stubs(n, d, rng, max_retries))


def write_edge_list(graph: RegularGraph, path) -> Path:
    """Write one ``src,dst`` line per arc (zero-indexed)."""
    path = Path(path)
    src, dst = graph.arcs()
    with path.open("w") as fh:
        for s, t in zip(src.tolist(), dst.tolist()):
            fh.write(f"{s},{t}\n")
    return path


@dataclass(frozen=True)
class FinancialSystem:
    """Homogeneous interbank system on a regular graph.

    Every arc carries the same exposure ``leverage / (k/2)``; each bank
    starts with unit external assets, no external liabilities and unit
    equity.
    """

    graph: RegularGraph
    leverage: float
    delta: float = 0.0

    @property
    def n(self) -> int:
        return self.graph.n

    @property
    def exposure(self) -> float:
        d = self.graph.half_degree
        return self.leverage / d if d else 0.0

    @property
    def net_external_assets(self) -> np.ndarray:
        return np.ones(self.n)

    @property
    def interbank_liabilities(self) -> np.ndarray:
        return np.full(self.n, float(self.leverage) if self.graph.half_degree else 0.0)

    @property
    def interbank_assets(self) -> np.ndarray:
        return self.interbank_liabilities

    @property
    def initial_equity(self) -> np.ndarray:
        return self.net_external_assets + self.interbank_assets - self.interbank_liabilities

    def exposure_matrix(self) -> np.ndarray:
        """Dense ``A^b``: row ``i`` holds ``i``'s claims on its borrowers."""
        return self.graph.adjacency() * self.exposure


def build_system(graph: RegularGraph, leverage: float, delta: float = 0.0) -> FinancialSystem:
    leverage = float(leverage)
    delta = float(delta)
    if not leverage >= 0.0:
        raise ValueError(f"leverage must be non-negative, got {leverage}")
    if not 0.0 <= delta < 1.0:
        raise ValueError(f"delta must lie in [0, 1), got {delta}")
    return FinancialSystem(graph=graph, leverage=leverage, delta=delta)
