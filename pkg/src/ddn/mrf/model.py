"""Pairwise log-linear MRF over binary label nodes and binary evidence nodes.

Node indices ``0 .. n_x-1`` are labels, ``n_x .. n_x+n_e-1`` are evidence.
Every feature is a conjunction of one or two nodes being 1.
"""
from __future__ import annotations

import itertools
import time
from dataclasses import dataclass, field

import numpy as np

from .._numeric import log_sum_exp


@dataclass
class PairwiseMRF:
    n_x: int
    n_e: int
    features: list
    weights: np.ndarray
    neighbor_cap: int = 10

    def __post_init__(self):
        self.features = [tuple(int(i) for i in f) for f in self.features]
        self.weights = np.asarray(self.weights, dtype=np.float64).ravel().copy()
        if len(self.features) != self.weights.size:
            raise ValueError("one weight per feature required")
        if not 2 <= self.neighbor_cap <= 10:
            raise ValueError("neighbor_cap must lie in [2, 10]")
        if not np.all(np.isfinite(self.weights)):
            raise ValueError("weights must be finite")
        n = self.n_nodes
        for f in self.features:
            if len(f) not in (1, 2) or any(not 0 <= i < n for i in f):
                raise ValueError(f"invalid feature scope {f}")
            if len(f) == 2 and f[0] == f[1]:
                raise ValueError(f"pairwise feature {f} repeats a node")
        degree = self.degrees()
        if degree.size and degree.max() > self.neighbor_cap:
            worst = int(degree.argmax())
            raise ValueError(f"node {worst} has {degree[worst]} neighbors > cap {self.neighbor_cap}")

    @property
    def n_nodes(self) -> int:
        return self.n_x + self.n_e

    def edges(self) -> set:
        return {tuple(sorted(f)) for f in self.features if len(f) == 2}

    def degrees(self) -> np.ndarray:
        deg = np.zeros(self.n_nodes, dtype=int)
        for a, b in self.edges():
            deg[a] += 1
            deg[b] += 1
        return deg

    def with_weights(self, weights) -> "PairwiseMRF":
        return PairwiseMRF(self.n_x, self.n_e, list(self.features), weights, self.neighbor_cap)

    def feature_index(self):
        """Return ``(unary_nodes, unary_ids, pair_nodes, pair_ids)`` index arrays."""
        un, ui, pn, pi = [], [], [], []
        for k, f in enumerate(self.features):
            if len(f) == 1:
                un.append(f[0])
                ui.append(k)
            else:
                pn.append(f)
                pi.append(k)
        return (np.array(un, dtype=int), np.array(ui, dtype=int),
                np.array(pn, dtype=int).reshape(-1, 2), np.array(pi, dtype=int))

    def potentials(self):
        """Node biases ``b`` and symmetric coupling matrix ``W`` (zero diagonal)."""
        un, ui, pn, pi = self.feature_index()
        b = np.zeros(self.n_nodes)
        np.add.at(b, un, self.weights[ui])
        W = np.zeros((self.n_nodes, self.n_nodes))
        np.add.at(W, (pn[:, 0], pn[:, 1]), self.weights[pi])
        np.add.at(W, (pn[:, 1], pn[:, 0]), self.weights[pi])
        return b, W

    def score(self, assignment) -> float:
        """Unnormalized log-probability ``sum_i theta_i f_i`` of a full assignment."""
        z = np.asarray(assignment)
        total = 0.0
        for f, w in zip(self.features, self.weights):
            if all(z[i] == 1 for i in f):
                total += w
        return float(total)

    def check_evidence(self, evidence) -> np.ndarray:
        evidence = np.asarray(evidence).ravel()
        if evidence.size != self.n_e:
            raise ValueError(f"evidence has {evidence.size} entries, model has {self.n_e} evidence nodes")
        if not np.isin(evidence, (0, 1)).all():
            raise ValueError("evidence must be binary")
        return evidence.astype(np.int8)

    def reduce(self, evidence):
        """Clamp evidence and return the label-only model ``(u, J, const)``.

        ``score(x, e) = const + u @ x + x @ triu(J, 1) @ x``.
        """
        e = self.check_evidence(evidence).astype(np.float64)
        b, W = self.potentials()
        nx = self.n_x
        u = b[:nx] + W[:nx, nx:] @ e
        J = W[:nx, :nx].copy()
        const = float(b[nx:] @ e + 0.5 * e @ W[nx:, nx:] @ e)
        return u, J, const


@dataclass
class MarginalEstimates:
    p: np.ndarray
    method: str
    diagnostics: dict = field(default_factory=dict)

    def __post_init__(self):
        self.p = np.asarray(self.p, dtype=np.float64)
        if self.p.size and (self.p.min() < 0.0 or self.p.max() > 1.0):
            raise ValueError("marginals must lie in [0, 1]")


@dataclass
class MapResult:
    assignment: np.ndarray
    score: float
    exact: bool
    diagnostics: dict = field(default_factory=dict)

    def as_marginals(self) -> MarginalEstimates:
        return MarginalEstimates(self.assignment.astype(np.float64), "map",
                                 {"score": self.score, "exact": self.exact, **self.diagnostics})


MAX_EXACT_LABELS = 20


def enumerate_scores(mrf: PairwiseMRF, evidence):
    """Every label assignment and its score, evaluated feature-by-feature."""
    if mrf.n_x > MAX_EXACT_LABELS:
        raise ValueError(f"enumeration limited to {MAX_EXACT_LABELS} labels")
    e = mrf.check_evidence(evidence)
    states = np.array(list(itertools.product((0, 1), repeat=mrf.n_x)), dtype=np.int8).reshape(-1, mrf.n_x)
    full = np.concatenate([states, np.broadcast_to(e, (len(states), mrf.n_e))], axis=1)
    scores = np.zeros(len(states))
    for f, w in zip(mrf.features, mrf.weights):
        on = np.ones(len(states), dtype=bool)
        for i in f:
            on &= full[:, i] == 1
        scores += w * on
    return states, scores


def exact_marginals(mrf: PairwiseMRF, evidence) -> MarginalEstimates:
    start = time.perf_counter()
    states, scores = enumerate_scores(mrf, evidence)
    log_z = log_sum_exp(scores)
    prob = np.exp(scores - log_z)
    p = np.clip(prob @ states, 0.0, 1.0)
    return MarginalEstimates(p, "exact", {"log_z": log_z, "states": len(states),
                                          "wall_time": time.perf_counter() - start})


def random_mrf(rng, n_x, n_e=0, edge_prob=0.4, weight_scale=2.0, neighbor_cap=10) -> PairwiseMRF:
    """Random conjunctive MRF with ``U[-scale, scale]`` weights, degree-capped."""
    n = n_x + n_e
    features = [(i,) for i in range(n)]
    deg = np.zeros(n, dtype=int)
    for a in range(n):
        for b in range(a + 1, n):
            if a >= n_x and b >= n_x:
                continue
            if rng.random() < edge_prob and deg[a] < neighbor_cap and deg[b] < neighbor_cap:
                features.append((a, b))
                deg[a] += 1
                deg[b] += 1
    weights = rng.uniform(-weight_scale, weight_scale, size=len(features))
    return PairwiseMRF(n_x, n_e, features, weights, neighbor_cap)
