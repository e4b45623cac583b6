"""Pseudo-log-likelihood objective and its SGD maximizer."""
from __future__ import annotations

import logging

import numpy as np

from .._numeric import log_sigmoid, sigmoid
from .._optim import SGDConfig, TrainingDivergedError, minibatches
from .model import PairwiseMRF

logger = logging.getLogger(__name__)


def _check_data(mrf: PairwiseMRF, Z) -> np.ndarray:
    Z = np.asarray(Z, dtype=np.float64)
    if Z.ndim != 2 or Z.shape[1] != mrf.n_nodes:
        raise ValueError(f"data must have {mrf.n_nodes} columns (labels then evidence), got {Z.shape}")
    return Z


def node_logits(mrf: PairwiseMRF, Z) -> np.ndarray:
    """Logit of ``P(z_j = 1 | z_-j)`` for every row and node."""
    b, W = mrf.potentials()
    return np.asarray(Z, dtype=np.float64) @ W + b


def pll(mrf: PairwiseMRF, Z, l2: float = 0.0) -> float:
    """Mean over rows of ``sum_j log P(z_j | z_-j)``, minus ``l2/2 ||theta||^2``."""
    Z = _check_data(mrf, Z)
    if len(Z) == 0:
        return float(-0.5 * l2 * mrf.weights @ mrf.weights)
    logits = node_logits(mrf, Z)
    # log P(z | rest) = log sigmoid((2z - 1) * logit)
    total = log_sigmoid((2.0 * Z - 1.0) * logits).sum() / len(Z)
    return float(total - 0.5 * l2 * mrf.weights @ mrf.weights)


def pll_grad(mrf: PairwiseMRF, Z, l2: float = 0.0) -> np.ndarray:
    Z = _check_data(mrf, Z)
    grad = -l2 * mrf.weights
    if len(Z) == 0:
        return grad
    resid = Z - sigmoid(node_logits(mrf, Z))
    un, ui, pn, pi = mrf.feature_index()
    m = len(Z)
    grad = grad.copy()
    if ui.size:
        grad[ui] += resid[:, un].sum(axis=0) / m
    if pi.size:
        a, b = pn[:, 0], pn[:, 1]
        grad[pi] += (resid[:, a] * Z[:, b] + resid[:, b] * Z[:, a]).sum(axis=0) / m
    return grad


def fit_weights(mrf: PairwiseMRF, Z, config: SGDConfig | None = None, log=None) -> PairwiseMRF:
    """Maximize ``pll - l2/2 ||theta||^2`` by mini-batch SGD (momentum).

    The l2 term is applied as a proximal shrink, so very large strengths
    drive weights to zero instead of diverging.  ``log`` receives
    ``(epoch, -pll)`` after every epoch.
    """
    config = config or SGDConfig()
    Z = _check_data(mrf, Z)
    theta = mrf.weights.copy()
    velocity = np.zeros_like(theta)
    current = mrf
    for epoch in range(config.epochs):
        lr = config.lr_at(epoch)
        for rows in minibatches(len(Z), config.batch_size, config.seed, "mrf-fit", epoch):
            g = pll_grad(current, Z[rows])
            velocity = config.momentum * velocity + g
            theta = (theta + lr * velocity) / (1.0 + lr * config.l2)
            if not np.all(np.isfinite(theta)):
                raise TrainingDivergedError("MRF weights became non-finite", epoch=epoch)
            current = mrf.with_weights(theta)
        value = pll(current, Z)
        if not np.isfinite(value):
            raise TrainingDivergedError("pseudo-log-likelihood became non-finite", epoch=epoch, loss=value)
        logger.info("mrf epoch %d pll %.6f", epoch, value)
        if log is not None:
            log(epoch, -value)
    return current
