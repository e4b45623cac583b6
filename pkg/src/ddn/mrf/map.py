"""MAP assignment: exact depth-first branch-and-bound, or ICM with restarts."""
from __future__ import annotations

import time

import numpy as np

from .model import MapResult, PairwiseMRF

MAX_EXACT_MAP_LABELS = 25


def _score(u, J, const, x):
    x = x.astype(np.float64)
    return float(const + u @ x + 0.5 * x @ J @ x)


def icm(u, J, x0, max_sweeps=1000):
    """Coordinate ascent from ``x0``: set each label to its better value until stable."""
    x = x0.astype(np.int8).copy()
    for _ in range(max_sweeps):
        changed = False
        for j in range(len(x)):
            field = u[j] + J[j] @ x
            best = 1 if field > 0 else 0
            if best != x[j]:
                x[j] = best
                changed = True
        if not changed:
            break
    return x


def _icm_search(u, J, const, rng, n_restarts, deadline):
    best_x, best_s = None, -np.inf
    runs = 0
    for _ in range(max(n_restarts, 1)):
        x = icm(u, J, rng.integers(0, 2, size=len(u)))
        s = _score(u, J, const, x)
        runs += 1
        if s > best_s:
            best_x, best_s = x, s
        if deadline is not None and time.perf_counter() >= deadline:
            break
    return best_x, best_s, runs


def _branch_and_bound(u, J, const, incumbent, incumbent_score, deadline):
    """Depth-first search over labels ordered by decreasing coupling strength.

    Bound at depth ``d``: exact score of the assigned prefix plus, for every
    unassigned label, ``max(0, field + positive couplings to later labels)``.
    Each unassigned pair is counted once, so the bound never underestimates.
    """
    n = len(u)
    order = np.argsort(-np.abs(J).sum(axis=1), kind="stable")
    Jo = J[np.ix_(order, order)]
    uo = u[order]
    pos_after = np.array([np.maximum(Jo[k, k + 1:], 0.0).sum() for k in range(n)])

    best = {"x": incumbent[order].copy(), "s": incumbent_score - const, "nodes": 0, "timed_out": False}
    x = np.zeros(n, dtype=np.int8)

    def visit(depth, field, partial):
        best["nodes"] += 1
        if deadline is not None and best["nodes"] % 1024 == 0 and time.perf_counter() >= deadline:
            best["timed_out"] = True
        if best["timed_out"]:
            return
        if depth == n:
            if partial > best["s"]:
                best["s"] = partial
                best["x"] = x.copy()
            return
        rest = np.maximum(field[depth:] + pos_after[depth:], 0.0).sum()
        if partial + rest <= best["s"]:
            return
        gain = field[depth]
        for val in ((1, 0) if gain > 0 else (0, 1)):
            x[depth] = val
            if val:
                visit(depth + 1, field + Jo[depth], partial + gain)
            else:
                visit(depth + 1, field, partial)
        x[depth] = 0

    visit(0, uo.copy(), 0.0)
    out = np.empty(n, dtype=np.int8)
    out[order] = best["x"]
    return out, best["nodes"], not best["timed_out"]


def map_assignment(mrf: PairwiseMRF, evidence, mode: str = "exact", rng=None,
                   time_budget: float | None = None, n_restarts: int = 20) -> MapResult:
    """Most probable label assignment given clamped evidence.

    ``score`` is the unnormalized log-probability of the returned assignment
    together with the evidence.  ``exact`` is True only when branch-and-bound
    finished within the time budget.
    """
    if mode not in ("exact", "icm"):
        raise ValueError(f"unknown MAP mode {mode!r}")
    if mode == "exact" and mrf.n_x > MAX_EXACT_MAP_LABELS:
        raise ValueError(f"exact MAP is limited to {MAX_EXACT_MAP_LABELS} labels")
    rng = rng if rng is not None else np.random.default_rng(0)
    start = time.perf_counter()
    deadline = None if time_budget is None else start + time_budget
    u, J, const = mrf.reduce(evidence)
    if mrf.n_x == 0:
        return MapResult(np.zeros(0, dtype=np.int8), const, True, {"wall_time": 0.0})
    restarts = n_restarts if mode == "icm" else 1
    x, s, runs = _icm_search(u, J, const, rng, restarts, deadline)
    diagnostics = {"icm_restarts": runs}
    exact = False
    if mode == "exact":
        x, nodes, exact = _branch_and_bound(u, J, const, x, s, deadline)
        diagnostics["nodes"] = nodes
    full = np.concatenate([x, mrf.check_evidence(evidence)])
    diagnostics["wall_time"] = time.perf_counter() - start
    return MapResult(x.astype(np.int8), mrf.score(full), exact, diagnostics)
