"""Deep dependency network: backbone ``v -> e`` plus a conditional DN head.

Training is either the pipeline (pretrain backbone, then fit the head on the
frozen backbone outputs) or joint: both parameter sets minimize the
conditional pseudo-log-likelihood loss

    CPLL(v, x) = -sum_i log P_i(x_i | e = N(v), x_-i)

with ground-truth ``x_-i`` as classifier inputs.  Prediction runs Gibbs
sampling over the head with a fresh random scan order every sweep and reads
marginals off the mixture estimator.
"""
from __future__ import annotations

import logging
import time
import warnings
from dataclasses import dataclass

import numpy as np

from ._nn import MLP, MomentumSGD
from ._numeric import log_sigmoid, make_rng, sigmoid
from ._optim import SGDConfig, TrainingDivergedError, minibatches
from .dn import ConditionalDN, cross_entropy_grad
from .mrf.model import MarginalEstimates

logger = logging.getLogger(__name__)

JOINT_LR_RANGE = (1e-5, 1e-3)
SWEEP_CHUNK = 256


def default_backbone_hidden(d: int, n: int) -> tuple:
    return (4 * max(d, n),)


def init_backbone(d: int, m: int, hidden=None, seed: int = 0) -> MLP:
    """ReLU network ``d -> hidden... -> m`` whose outputs go through a sigmoid."""
    hidden = default_backbone_hidden(d, m) if hidden is None else tuple(hidden)
    return MLP.init([d, *hidden, m], make_rng(seed, "backbone-init"))


@dataclass
class DeepDependencyNetwork:
    backbone: MLP
    head: ConditionalDN

    def __post_init__(self):
        if self.backbone.n_out != self.head.m:
            raise ValueError(f"backbone emits {self.backbone.n_out} features, head expects {self.head.m}")

    @property
    def d(self) -> int:
        return self.backbone.n_in

    @property
    def m(self) -> int:
        return self.head.m

    @property
    def n(self) -> int:
        return self.head.n

    def copy(self) -> "DeepDependencyNetwork":
        return DeepDependencyNetwork(self.backbone.copy(), self.head.copy())

    def evidence(self, V) -> np.ndarray:
        return self.backbone.forward(np.atleast_2d(np.asarray(V, dtype=np.float64)))

    def get_flat(self):
        return self.backbone.get_flat(), [c.net.get_flat() for c in self.head.classifiers]

    def set_flat(self, backbone_theta, head_thetas):
        self.backbone.set_flat(backbone_theta)
        for clf, th in zip(self.head.classifiers, head_thetas):
            clf.net.set_flat(th)


# --- backbone pretraining -------------------------------------------------

def backbone_loss(backbone: MLP, V, X) -> float:
    """Mean over examples of the summed per-label binary cross-entropy."""
    z = backbone.logits(np.atleast_2d(V))
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    return float(-log_sigmoid((2.0 * X - 1.0) * z).sum() / max(len(X), 1))


def pretrain_backbone(backbone: MLP, V, X, config: SGDConfig | None = None, log=None) -> MLP:
    """Fit the backbone so each output predicts its own label (cross-entropy)."""
    config = config or SGDConfig()
    V = np.atleast_2d(np.asarray(V, dtype=np.float64))
    X = np.asarray(X, dtype=np.float64)
    if backbone.n_out != X.shape[1]:
        raise ValueError("backbone pretraining needs one output per label (m == n)")
    if V.shape[1] != backbone.n_in:
        raise ValueError(f"backbone expects {backbone.n_in} features, data has {V.shape[1]}")
    net = backbone.copy()
    theta = net.get_flat()
    opt = MomentumSGD(theta.size, config.momentum, net.weight_mask())
    for epoch in range(config.epochs):
        lr = config.lr_at(epoch)
        for rows in minibatches(len(X), config.batch_size, config.seed, "backbone", epoch):
            z, acts = net.logits(V[rows], return_cache=True)
            dws, dbs, _ = net.backward(acts, (sigmoid(z) - X[rows]) / len(rows))
            theta = opt.step(theta, MLP.flatten(dws, dbs), lr, config.l1, config.l2)
            net.set_flat(theta)
        loss = backbone_loss(net, V, X)
        if not np.isfinite(loss) or not np.all(np.isfinite(theta)):
            raise TrainingDivergedError("backbone diverged", epoch=epoch, loss=loss)
        logger.info("backbone epoch %d loss %.6f", epoch, loss)
        if log is not None:
            log(epoch, loss)
    return net


# --- CPLL -------------------------------------------------------------------

def cpll_loss(ddn: DeepDependencyNetwork, v, x) -> float:
    """CPLL summed over labels (and over rows if ``v``/``x`` are 2-D)."""
    V = np.atleast_2d(np.asarray(v, dtype=np.float64))
    X = np.atleast_2d(np.asarray(x, dtype=np.float64))
    E = ddn.evidence(V)
    total = 0.0
    for i, clf in enumerate(ddn.head.classifiers):
        total += clf.loss(ddn.head.inputs(i, E, X), X[:, i])
    return float(total)


def mean_cpll(ddn: DeepDependencyNetwork, V, X) -> float:
    return cpll_loss(ddn, V, X) / max(len(np.atleast_2d(X)), 1)


def cpll_grad(ddn: DeepDependencyNetwork, V, X):
    """Gradient of the summed CPLL of a batch.

    Returns ``(backbone_grad, [head_grad_i])`` as flat vectors.  Every
    conditional feeds its evidence-block input gradient back into the shared
    backbone output.
    """
    V = np.atleast_2d(np.asarray(V, dtype=np.float64))
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    if len(V) == 0:
        raise ValueError("cpll_grad needs a non-empty batch")
    z, acts = ddn.backbone.logits(V, return_cache=True)
    E = sigmoid(z)
    dE = np.zeros_like(E)
    head_grads = []
    for i, clf in enumerate(ddn.head.classifiers):
        g, dx = cross_entropy_grad(clf, ddn.head.inputs(i, E, X), X[:, i], include_reg=False)
        head_grads.append(g)
        dE += dx[:, :ddn.m]
    dws, dbs, _ = ddn.backbone.backward(acts, dE * E * (1.0 - E))
    return MLP.flatten(dws, dbs), head_grads


def train_joint(ddn: DeepDependencyNetwork, V, X, config: SGDConfig | None = None,
                log=None) -> DeepDependencyNetwork:
    """Mini-batch SGD on mean CPLL over backbone and head together.

    Head regularization (l1 for lr, l2 for mlp) is applied proximally with the
    strengths stored on each classifier.  ``log`` receives ``(epoch, mean CPLL)``.
    """
    config = config or SGDConfig(lr=1e-3)
    lo, hi = JOINT_LR_RANGE
    if not lo <= config.lr <= hi:
        warnings.warn(f"joint learning rate {config.lr} outside [{lo}, {hi}]", RuntimeWarning, stacklevel=2)
    V = np.atleast_2d(np.asarray(V, dtype=np.float64))
    X = np.asarray(X, dtype=np.float64)
    if V.shape[1] != ddn.d or X.shape[1] != ddn.n or len(V) != len(X):
        raise ValueError("data does not match the network dimensions")
    model = ddn.copy()
    bb, heads = model.get_flat()
    sizes = [bb.size] + [h.size for h in heads]
    theta = np.concatenate([bb, *heads])
    l1 = [np.zeros(bb.size)]
    l2 = [np.zeros(bb.size)]
    for clf in model.head.classifiers:
        a, b = clf.reg_vectors()
        l1.append(a)
        l2.append(b)
    l1, l2 = np.concatenate(l1), np.concatenate(l2)
    opt = MomentumSGD(theta.size, config.momentum)
    splits = np.cumsum(sizes)[:-1]

    def unpack(th):
        parts = np.split(th, splits)
        model.set_flat(parts[0], parts[1:])

    for epoch in range(config.epochs):
        lr = config.lr_at(epoch)
        for rows in minibatches(len(X), config.batch_size, config.seed, "ddn-joint", epoch):
            gb, gh = cpll_grad(model, V[rows], X[rows])
            g = np.concatenate([gb, *gh]) / len(rows)
            theta = opt.step(theta, g, lr, l1, l2)
            unpack(theta)
        loss = mean_cpll(model, V, X)
        if not np.isfinite(loss) or not np.all(np.isfinite(theta)):
            raise TrainingDivergedError("joint training diverged", epoch=epoch, loss=loss)
        logger.info("ddn-joint epoch %d cpll %.6f", epoch, loss)
        if log is not None:
            log(epoch, loss)
    return model


# --- inference ----------------------------------------------------------------

def _gibbs_mixture(head: ConditionalDN, E, rngs, n_samples, burn_in):
    """Random-scan Gibbs over the head for every row of ``E`` at once.

    Row ``r`` draws its initial state, permutations and uniforms from
    ``rngs[r]`` only, so its chain does not depend on the other rows.
    """
    rows, n = E.shape[0], head.n
    X = np.stack([rng.integers(0, 2, size=n) for rng in rngs]).astype(np.float64) if rows else np.zeros((0, n))
    total = burn_in + n_samples
    ref = None
    acc = np.zeros((rows, n))
    base = np.tile(np.arange(n), (SWEEP_CHUNK, 1))
    sweep = 0
    while sweep < total:
        size = min(SWEEP_CHUNK, total - sweep)
        perms = np.stack([rng.permuted(base[:size], axis=1) for rng in rngs])
        unif = np.stack([rng.random((size, n)) for rng in rngs])
        for s in range(size):
            for k in range(n):
                target = perms[:, s, k]
                for i in range(n):
                    sel = np.flatnonzero(target == i)
                    if sel.size == 0:
                        continue
                    p = head.classifiers[i].proba(head.inputs(i, E[sel], X[sel]))
                    X[sel, i] = (unif[sel, s, k] < p).astype(np.float64)
            if sweep + s >= burn_in:
                probs = np.column_stack([
                    head.classifiers[i].proba(head.inputs(i, E, X)) for i in range(n)
                ])
                # shifted accumulation: identical conditionals average to themselves exactly
                if ref is None:
                    ref = probs
                acc += probs - ref
        sweep += size
    return np.clip(ref + acc / n_samples, 0.0, 1.0)


def infer(ddn: DeepDependencyNetwork, v, n_samples: int = 1000, rng=None, burn_in: int = 0) -> MarginalEstimates:
    """Marginals ``P(x_i = 1 | v)`` for one example by Gibbs sampling plus the
    mixture estimator (one end-of-sweep state per sample)."""
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    rng = rng if rng is not None else np.random.default_rng(0)
    start = time.perf_counter()
    E = ddn.evidence(np.asarray(v, dtype=np.float64).reshape(1, -1))
    p = _gibbs_mixture(ddn.head, E, [rng], n_samples, burn_in)[0]
    return MarginalEstimates(p, "mixture", {"samples": n_samples, "burn_in": burn_in,
                                            "wall_time": time.perf_counter() - start})


def infer_batch(ddn: DeepDependencyNetwork, V, n_samples: int = 1000, seed: int = 0,
                burn_in: int = 0, block: int = 512) -> np.ndarray:
    """Row ``r`` of the result is ``infer`` with stream ``(seed, "ddn-infer/r")``."""
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    V = np.atleast_2d(np.asarray(V, dtype=np.float64))
    E = ddn.evidence(V)
    out = np.empty((len(V), ddn.n))
    for lo in range(0, len(V), block):
        hi = min(lo + block, len(V))
        rngs = [make_rng(seed, f"ddn-infer/{r}") for r in range(lo, hi)]
        out[lo:hi] = _gibbs_mixture(ddn.head, E[lo:hi], rngs, n_samples, burn_in)
    return out


def predict_labels(estimates, threshold: float = 0.5) -> np.ndarray:
    """``1`` where the marginal exceeds ``threshold``."""
    if not 0.0 <= threshold <= 1.0:
        raise ValueError("threshold must lie in [0, 1]")
    p = estimates.p if isinstance(estimates, MarginalEstimates) else np.asarray(estimates, dtype=np.float64)
    return (p > threshold).astype(np.int8)
