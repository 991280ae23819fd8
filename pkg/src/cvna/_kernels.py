"""Hot kernels: stub-matching repair, balance-sheet clearing, threshold cascade.

Each kernel exists twice: a loop version compiled with numba and a
vectorised numpy version. ``clearing_cascade``, ``threshold_cascade`` and
``repair_arcs`` dispatch on :data:`cvna._backend.USE_NUMBA`. Both versions
are importable directly so tests and the benchmark can compare them.

Neighbour arrays are rectangular ``(n, d)`` int arrays with ``d = k/2``:
``in_nb[i]`` lists the borrowers of ``i`` (sorted), ``out_nb[j]`` the
creditors of ``j``.
"""
from __future__ import annotations

import numpy as np

from ._backend import USE_NUMBA, njit


# ---------------------------------------------------------------- arc repair
def _repair_arcs_loop(src, dst, mult, rand, start):
    m_arcs = src.shape[0]
    pos = 0
    e = start
    while e < m_arcs:
        a = src[e]
        b = dst[e]
        if a != b and mult[a, b] == 1:
            e += 1
            continue
        if pos >= rand.shape[0]:
            return e, pos
        f = rand[pos]
        pos += 1
        c = src[f]
        d = dst[f]
        # a == c can never help: one of the two new arcs already exists
        if a == d or c == b or a == c:
            continue
        if mult[a, d] != 0 or mult[c, b] != 0:
            continue
        mult[a, b] -= 1
        mult[c, d] -= 1
        mult[a, d] += 1
        mult[c, b] += 1
        dst[e] = d
        dst[f] = b
    return m_arcs, pos


repair_arcs_numba = njit(_repair_arcs_loop)
# no vectorised form exists for sequential swap repair; interpreted loop
repair_arcs_numpy = _repair_arcs_loop


def repair_arcs(src, dst, mult, rand, start):
    """Swap-repair self-loops and parallel arcs in place.

    Scans arcs from ``start``; every bad arc is paired with partner arcs
    drawn from ``rand`` until a double-edge swap makes both arcs simple.
    Returns ``(next_arc, used)``; ``next_arc == len(src)`` when finished,
    otherwise the random buffer ran out after ``used`` draws.
    """
    if USE_NUMBA:
        return repair_arcs_numba(src, dst, mult, rand, start)
    return repair_arcs_numpy(src, dst, mult, rand, start)


# ------------------------------------------------------------ clearing map
@njit
def clearing_cascade_numba(ext, in_nb, out_nb, lev, w, delta, tol, cutoff):
    n = ext.shape[0]
    d = out_nb.shape[1]
    # deficit: sum over borrowers of (mark - 1); exact integers when delta=0
    deficit = np.zeros(n)
    equity = ext.copy()
    marks = np.ones(n)
    acc = np.zeros(n)
    defaulted = ext < 0.0
    step_of = np.full(n, -1, dtype=np.int64)
    for i in range(n):
        if defaulted[i]:
            step_of[i] = 0
    iterations = 0
    converged = False
    for t in range(1, cutoff + 1):
        iterations = t
        for j in range(n):
            if not defaulted[j]:
                continue
            new_mark = 0.0
            if delta > 0.0 and lev > 0.0:
                r = ext[j] + lev + w * deficit[j]
                if r < 0.0:
                    r = 0.0
                elif r > lev:
                    r = lev
                new_mark = delta * r / lev
            dx = new_mark - marks[j]
            if dx != 0.0:
                marks[j] = new_mark
                for a in range(d):
                    acc[out_nb[j, a]] += dx
        max_change = 0.0
        n_new = 0
        for i in range(n):
            if acc[i] == 0.0:
                continue
            deficit[i] += acc[i]
            acc[i] = 0.0
            e_new = ext[i] + w * deficit[i]
            change = abs(e_new - equity[i])
            equity[i] = e_new
            if change > max_change:
                max_change = change
            if e_new < 0.0 and not defaulted[i]:
                defaulted[i] = True
                step_of[i] = t
                n_new += 1
        if n_new == 0 and (delta == 0.0 or max_change < tol):
            converged = True
            break
    return defaulted, equity, w * deficit, marks, step_of, iterations, converged


def clearing_cascade_numpy(ext, in_nb, out_nb, lev, w, delta, tol, cutoff):
    n = ext.shape[0]
    deficit = np.zeros(n)
    equity = ext.copy()
    marks = np.ones(n)
    defaulted = ext < 0.0
    step_of = np.where(defaulted, 0, -1).astype(np.int64)
    iterations = 0
    converged = False
    for t in range(1, cutoff + 1):
        iterations = t
        if delta > 0.0 and lev > 0.0:
            r = np.clip(ext + lev + w * deficit, 0.0, lev)
            new_marks = np.where(defaulted, delta * r / lev, 1.0)
        else:
            new_marks = np.where(defaulted, 0.0, 1.0)
        dx = new_marks - marks
        marks = new_marks
        acc = dx[in_nb].sum(axis=1) if in_nb.shape[1] else np.zeros(n)
        deficit = deficit + acc
        e_new = ext + w * deficit
        max_change = float(np.abs(e_new - equity).max()) if n else 0.0
        equity = e_new
        new = (e_new < 0.0) & ~defaulted
        defaulted = defaulted | new
        step_of[new] = t
        if not new.any() and (delta == 0.0 or max_change < tol):
            converged = True
            break
    return defaulted, equity, w * deficit, marks, step_of, iterations, converged


def clearing_cascade(ext, in_nb, out_nb, lev, w, delta, tol, cutoff):
    """Iterate the synchronous clearing map from the post-shock state.

    Returns ``(defaulted, equity, loss, marks, step_of, iterations,
    converged)`` where ``loss`` is the interbank write-down per bank and
    ``marks`` the value per unit claim on each bank (1 alive, delta*R
    defaulted).
    """
    ext = np.ascontiguousarray(ext, dtype=np.float64)
    args = (
        ext,
        np.ascontiguousarray(in_nb),
        np.ascontiguousarray(out_nb),
        float(lev),
        float(w),
        float(delta),
        float(tol),
        int(cutoff),
    )
    if USE_NUMBA:
        return clearing_cascade_numba(*args)
    return clearing_cascade_numpy(*args)


# ------------------------------------------------------- threshold cascade
@njit
def threshold_cascade_numba(thresholds, in_nb, out_nb):
    n = thresholds.shape[0]
    d = out_nb.shape[1]
    counts = np.zeros(n, dtype=np.int64)
    defaulted = thresholds <= 0
    step_of = np.full(n, -1, dtype=np.int64)
    frontier = np.empty(n, dtype=np.int64)
    nxt = np.empty(n, dtype=np.int64)
    n_front = 0
    for i in range(n):
        if defaulted[i]:
            step_of[i] = 0
            frontier[n_front] = i
            n_front += 1
    rounds = 0
    while True:
        rounds += 1
        n_next = 0
        for f in range(n_front):
            j = frontier[f]
            for a in range(d):
                c = out_nb[j, a]
                counts[c] += 1
                if not defaulted[c] and counts[c] >= thresholds[c]:
                    defaulted[c] = True
                    step_of[c] = rounds
                    nxt[n_next] = c
                    n_next += 1
        if n_next == 0:
            break
        frontier, nxt = nxt, frontier
        n_front = n_next
    return defaulted, counts, step_of, rounds


def threshold_cascade_numpy(thresholds, in_nb, out_nb):
    n = thresholds.shape[0]
    defaulted = thresholds <= 0
    step_of = np.where(defaulted, 0, -1).astype(np.int64)
    counts = np.zeros(n, dtype=np.int64)
    rounds = 0
    while True:
        rounds += 1
        if in_nb.shape[1]:
            counts = defaulted[in_nb].sum(axis=1)
        new = ~defaulted & (counts >= thresholds)
        if not new.any():
            break
        defaulted = defaulted | new
        step_of[new] = rounds
    return defaulted, counts, step_of, rounds


def threshold_cascade(thresholds, in_nb, out_nb):
    """Integer threshold cascade to its least fixed point.

    A bank defaults once at least ``thresholds[i]`` of its borrowers have
    defaulted; ``thresholds[i] <= 0`` means defaulted from the start.
    Returns ``(defaulted, counts, step_of, rounds)``.
    """
    thresholds = np.ascontiguousarray(thresholds, dtype=np.int64)
    in_nb = np.ascontiguousarray(in_nb)
    out_nb = np.ascontiguousarray(out_nb)
    if USE_NUMBA:
        return threshold_cascade_numba(thresholds, in_nb, out_nb)
    return threshold_cascade_numpy(thresholds, in_nb, out_nb)

