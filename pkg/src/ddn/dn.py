"""Conditional dependency network head: one probabilistic classifier per label.

Classifier ``i`` sees ``[e || x_-i]``: the evidence block first, then the other
labels in ascending index order.
"""
from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from ._nn import MLP, MomentumSGD
from ._numeric import log_sigmoid, make_rng, sigmoid
from ._optim import SGDConfig, TrainingDivergedError, minibatches

logger = logging.getLogger(__name__)

KINDS = ("lr", "mlp")
DEFAULT_REG = 0.01
REG_GRID = (0.1, 0.01, 0.001)
DEFAULT_DEPTH = 4


def default_hidden(m: int, n: int, depth: int = DEFAULT_DEPTH) -> tuple:
    width = max(2 * (m + n), 64)
    return (width,) * depth


@dataclass
class ConditionalClassifier:
    """``P(x_i = 1 | e, x_-i)``; ``reg`` is an l1 strength for ``lr``, l2 for ``mlp``."""

    kind: str
    net: MLP
    reg: float = DEFAULT_REG

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"classifier kind must be one of {KINDS}")
        if self.net.n_out != 1:
            raise ValueError("a conditional classifier has exactly one output")
        if self.kind == "lr" and len(self.net.weights) != 1:
            raise ValueError("logistic regression has no hidden layers")
        if self.reg < 0:
            raise ValueError("reg must be >= 0")

    @classmethod
    def init(cls, kind, input_dim, rng, hidden=None, reg=DEFAULT_REG):
        if kind == "lr":
            net = MLP.init([input_dim, 1], rng, zero=True)
        else:
            hidden = tuple(hidden) if hidden is not None else (64,) * DEFAULT_DEPTH
            net = MLP.init([input_dim, *hidden, 1], rng)
        return cls(kind, net, reg)

    @property
    def input_dim(self) -> int:
        return self.net.n_in

    @property
    def hidden(self) -> tuple:
        return tuple(self.net.sizes[1:-1])

    def copy(self) -> "ConditionalClassifier":
        return ConditionalClassifier(self.kind, self.net.copy(), self.reg)

    def logit(self, inputs) -> np.ndarray:
        return self.net.logits(np.atleast_2d(inputs))[:, 0]

    def proba(self, inputs) -> np.ndarray:
        return sigmoid(self.logit(inputs))

    def loss(self, inputs, targets, include_reg=False) -> float:
        """Summed binary cross-entropy over the rows of ``inputs``."""
        t = np.asarray(targets, dtype=np.float64).ravel()
        z = self.logit(inputs)
        value = -log_sigmoid((2.0 * t - 1.0) * z).sum()
        if include_reg:
            value += self.penalty()
        return float(value)

    def penalty(self) -> float:
        if self.kind == "lr":
            return self.reg * sum(np.abs(w).sum() for w in self.net.weights)
        return 0.5 * self.reg * sum((w * w).sum() for w in self.net.weights)

    def reg_vectors(self):
        """Per-parameter (l1, l2) strengths for the optimizer; biases are free."""
        mask = self.net.weight_mask()
        if self.kind == "lr":
            return self.reg * mask, np.zeros_like(mask)
        return np.zeros_like(mask), self.reg * mask


def cross_entropy_grad(clf: ConditionalClassifier, inputs, targets, include_reg=True):
    """Gradient of summed BCE with respect to the flat parameters and the inputs.

    Returns ``(param_grad, input_grad)``; ``input_grad`` has the shape of
    ``inputs``.  With ``include_reg`` the l2 term (mlp) or the l1 subgradient
    (lr, zero at zero) is added to ``param_grad``.
    """
    x = np.atleast_2d(np.asarray(inputs, dtype=np.float64))
    t = np.asarray(targets, dtype=np.float64).reshape(-1, 1)
    z, acts = clf.net.logits(x, return_cache=True)
    dz = sigmoid(z) - t
    dws, dbs, dx = clf.net.backward(acts, dz)
    grad = MLP.flatten(dws, dbs)
    if include_reg and clf.reg > 0:
        theta = clf.net.get_flat()
        l1, l2 = clf.reg_vectors()
        grad = grad + l2 * theta + l1 * np.sign(theta)
    if np.ndim(inputs) == 1:
        dx = dx[0]
    return grad, dx


@dataclass
class ConditionalDN:
    n: int
    m: int
    classifiers: list

    def __post_init__(self):
        if len(self.classifiers) != self.n:
            raise ValueError(f"need {self.n} classifiers, got {len(self.classifiers)}")
        width = self.m + self.n - 1
        for i, clf in enumerate(self.classifiers):
            if clf.input_dim != width:
                raise ValueError(f"classifier {i} expects {clf.input_dim} inputs, DN provides {width}")
        kinds = {c.kind for c in self.classifiers}
        if len(kinds) > 1:
            raise ValueError("all classifiers must share a kind")

    @classmethod
    def init(cls, n, m, kind="mlp", hidden=None, reg=DEFAULT_REG, seed=0):
        if kind == "mlp" and hidden is None:
            hidden = default_hidden(m, n)
        return cls(n, m, [
            ConditionalClassifier.init(kind, m + n - 1, make_rng(seed, f"dn-init/{i}"), hidden, reg)
            for i in range(n)
        ])

    @property
    def kind(self) -> str:
        return self.classifiers[0].kind if self.classifiers else "lr"

    def copy(self) -> "ConditionalDN":
        return ConditionalDN(self.n, self.m, [c.copy() for c in self.classifiers])

    def inputs(self, i, E, X) -> np.ndarray:
        """Rows of ``[e || x_-i]`` for classifier ``i``."""
        E = np.atleast_2d(np.asarray(E, dtype=np.float64))
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        return np.concatenate([E, X[:, :i], X[:, i + 1:]], axis=1)


def conditional(dn: ConditionalDN, i: int, e, x_minus_i) -> float:
    """``P_i(x_i = 1 | x_-i, e)`` for a single example."""
    e = np.asarray(e, dtype=np.float64).ravel()
    xm = np.asarray(x_minus_i, dtype=np.float64).ravel()
    if e.size != dn.m:
        raise ValueError(f"evidence has {e.size} entries, expected {dn.m}")
    if xm.size != dn.n - 1:
        raise ValueError(f"x_minus_i has {xm.size} entries, expected {dn.n - 1}")
    if not 0 <= i < dn.n:
        raise IndexError(f"label index {i} out of range")
    return float(dn.classifiers[i].proba(np.concatenate([e, xm])[None, :])[0])


def _train_one(i, clf, inputs, targets, config, stream):
    clf = clf.copy()
    theta = clf.net.get_flat()
    l1, l2 = clf.reg_vectors()
    opt = MomentumSGD(theta.size, config.momentum)
    history = []
    for epoch in range(config.epochs):
        lr = config.lr_at(epoch)
        for rows in minibatches(len(targets), config.batch_size, config.seed, f"{stream}/{i}", epoch):
            g, _ = cross_entropy_grad(clf, inputs[rows], targets[rows], include_reg=False)
            theta = opt.step(theta, g / len(rows), lr, l1, l2)
            clf.net.set_flat(theta)
        loss = clf.loss(inputs, targets) / max(len(targets), 1)
        if not np.isfinite(loss) or not np.all(np.isfinite(theta)):
            raise TrainingDivergedError(f"classifier {i} diverged", epoch=epoch, loss=loss)
        history.append(loss)
    return clf, history


def train_pipeline(dn: ConditionalDN, E, X, config: SGDConfig | None = None, jobs: int = 1,
                   log=None) -> ConditionalDN:
    """Fit every classifier independently on ``(e, x)`` pairs with teacher forcing.

    ``E`` holds frozen backbone outputs.  Each classifier uses its own shuffle
    stream, so the result does not depend on ``jobs``.  ``log`` receives
    ``(epoch, summed mean BCE)`` per epoch.
    """
    config = config or SGDConfig()
    E = np.atleast_2d(np.asarray(E, dtype=np.float64))
    X = np.asarray(X)
    if E.shape[0] != X.shape[0] or E.shape[1] != dn.m or X.shape[1] != dn.n:
        raise ValueError(f"expected E (M, {dn.m}) and X (M, {dn.n}); got {E.shape}, {X.shape}")
    tasks = [(i, dn.classifiers[i], dn.inputs(i, E, X), X[:, i].astype(np.float64)) for i in range(dn.n)]

    def run(task):
        i, clf, inputs, targets = task
        try:
            return _train_one(i, clf, inputs, targets, config, "dn-pipeline")
        except TrainingDivergedError as err:
            return err

    if jobs > 1 and dn.n > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(run, tasks))
    else:
        results = [run(t) for t in tasks]
    failures = [r for r in results if isinstance(r, TrainingDivergedError)]
    if failures:
        raise TrainingDivergedError("; ".join(str(f) for f in failures))
    for epoch in range(config.epochs):
        total = float(sum(h[epoch] for _, h in results))
        logger.info("dn-pipeline epoch %d loss %.6f", epoch, total)
        if log is not None:
            log(epoch, total)
    return ConditionalDN(dn.n, dn.m, [clf for clf, _ in results])
