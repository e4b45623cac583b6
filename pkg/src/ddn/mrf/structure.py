"""Neighborhood selection with l1-regularized logistic regression."""
from __future__ import annotations

import logging
import warnings

import numpy as np

from .._numeric import sigmoid
from .._optim import soft_threshold
from .model import PairwiseMRF

logger = logging.getLogger(__name__)

LAMBDA_FLOOR = 0.001
LAMBDA_CEIL = 10.0


def default_lambdas(y, n_candidates: int) -> tuple:
    """Doubling sweep up to 10 starting at ``2 sd(y) sqrt(log p / M)``.

    That is the scale of the score at zero under pure sampling noise; below it
    noise alone produces nonzero weights, and the neighbor cap would then admit
    spurious edges on sparse graphs.
    """
    y = np.asarray(y, dtype=np.float64)
    start = LAMBDA_FLOOR
    if y.size > 0 and n_candidates > 1:
        start = max(start, float(2.0 * y.std() * np.sqrt(np.log(n_candidates) / y.size)))
    out = []
    lam = start
    while lam <= LAMBDA_CEIL:
        out.append(lam)
        lam *= 2.0
    return tuple(out)


def l1_logistic(X, y, lam, w0=None, b0=None, max_iter=3000, tol=1e-9):
    """Minimize ``mean(logloss) + lam * ||w||_1`` (bias unpenalized) with FISTA.

    Returns ``(w, b)``.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    m, p = X.shape
    Xb = np.column_stack([X, np.ones(m)])
    # logistic loss curvature <= 1/4
    lip = 0.25 * np.linalg.norm(Xb, 2) ** 2 / max(m, 1)
    step = 1.0 / max(lip, 1e-12)
    theta = np.zeros(p + 1)
    if w0 is not None:
        theta[:p] = w0
    if b0 is not None:
        theta[p] = b0
    mom = theta.copy()
    t = 1.0
    for _ in range(max_iter):
        grad = Xb.T @ (sigmoid(Xb @ mom) - y) / m
        nxt = mom - step * grad
        nxt[:p] = soft_threshold(nxt[:p], step * lam)
        t_next = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * t * t))
        mom = nxt + ((t - 1.0) / t_next) * (nxt - theta)
        delta = np.max(np.abs(nxt - theta))
        theta = nxt
        t = t_next
        if delta < tol:
            break
    return theta[:p], theta[p]


def kill_threshold(X, y) -> float:
    """Smallest ``lam`` at which every non-bias weight is zero."""
    y = np.asarray(y, dtype=np.float64)
    return float(np.max(np.abs(np.asarray(X, dtype=np.float64).T @ (y - y.mean())) / len(y), initial=0.0))


def node_neighborhood(Z, j, lambdas=None, neighbor_cap=10, candidates=None):
    """Fit node ``j`` on the other columns, raising ``lam`` until at most
    ``neighbor_cap`` weights survive.  Returns ``{neighbor: weight}``."""
    Z = np.asarray(Z, dtype=np.float64)
    if candidates is None:
        candidates = [k for k in range(Z.shape[1]) if k != j]
    if not candidates:
        return {}
    X = Z[:, candidates]
    y = Z[:, j]
    if lambdas is None:
        lambdas = default_lambdas(y, len(candidates))
    w, b = None, None
    for lam in sorted(lambdas):
        w, b = l1_logistic(X, y, lam, w, b)
        if np.count_nonzero(w) <= neighbor_cap:
            break
    else:
        raise RuntimeError(f"node {j}: no lambda in the schedule meets the neighbor cap")
    return {candidates[k]: float(w[k]) for k in np.flatnonzero(w)}


def learn_structure(Z, lambdas=None, neighbor_cap=10):
    """Learn an undirected edge list over the columns of binary matrix ``Z``.

    ``lambdas=None`` uses :func:`default_lambdas` per node.  Edges are
    OR-symmetrized; if that pushes a node over the cap, edges are
    admitted strongest-first (by ``max |w|`` of the two regressions) and any
    edge that would exceed the cap at either end is dropped.
    """
    Z = np.asarray(Z)
    if not np.isin(Z, (0, 1)).all():
        raise ValueError("structure learning requires binary columns")
    if not 2 <= neighbor_cap <= 10:
        raise ValueError("neighbor_cap must lie in [2, 10]")
    n = Z.shape[1]
    varying = [j for j in range(n) if 0 < Z[:, j].sum() < Z.shape[0]] if len(Z) else []
    constant = sorted(set(range(n)) - set(varying))
    if constant:
        warnings.warn(f"constant columns {constant} get no pairwise features", RuntimeWarning, stacklevel=2)
    strength = {}
    for j in varying:
        cands = [k for k in varying if k != j]
        for k, w in node_neighborhood(Z, j, lambdas, neighbor_cap, cands).items():
            key = (min(j, k), max(j, k))
            strength[key] = max(strength.get(key, 0.0), abs(w))
    deg = np.zeros(n, dtype=int)
    edges = []
    for (a, b), _ in sorted(strength.items(), key=lambda kv: (-kv[1], kv[0])):
        if deg[a] < neighbor_cap and deg[b] < neighbor_cap:
            edges.append((a, b))
            deg[a] += 1
            deg[b] += 1
        else:
            logger.debug("edge (%d, %d) dropped by neighbor cap", a, b)
    assert deg.max(initial=0) <= neighbor_cap
    return sorted(edges)


def conjunctive_mrf(n_x, n_e, edges, neighbor_cap=10, weights=None) -> PairwiseMRF:
    """Singleton feature on every node plus one ``a AND b`` feature per edge."""
    features = [(i,) for i in range(n_x + n_e)] + [tuple(e) for e in edges]
    if weights is None:
        weights = np.zeros(len(features))
    return PairwiseMRF(n_x, n_e, features, weights, neighbor_cap)
