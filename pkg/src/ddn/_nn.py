"""Fixed-topology feed-forward network with hand-coded backprop.

ReLU on every hidden layer, sigmoid on the outputs.  Gradients are taken with
respect to the output *logits* so that binary cross-entropy collapses to
``sigmoid(z) - t``.
"""
from __future__ import annotations

import numpy as np

from ._numeric import sigmoid


class MLP:
    """Dense ReLU network; ``len(weights) == len(hidden) + 1``.

    With no hidden layers this is plain logistic regression.
    """

    def __init__(self, weights, biases):
        if len(weights) != len(biases) or not weights:
            raise ValueError("need one bias per weight matrix and at least one layer")
        self.weights = [np.ascontiguousarray(w, dtype=np.float64) for w in weights]
        self.biases = [np.ascontiguousarray(b, dtype=np.float64) for b in biases]
        for k, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.ndim != 2 or b.shape != (w.shape[1],):
                raise ValueError(f"layer {k}: weight {w.shape} / bias {b.shape} mismatch")
            if k and w.shape[0] != self.weights[k - 1].shape[1]:
                raise ValueError(f"layer {k} input width does not match layer {k - 1} output")

    @classmethod
    def init(cls, sizes, rng: np.random.Generator, zero: bool = False):
        """He-initialized network with layer widths ``sizes = [in, h1, ..., out]``."""
        weights, biases = [], []
        for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
            if zero:
                w = np.zeros((fan_in, fan_out))
            else:
                w = rng.normal(0.0, np.sqrt(2.0 / max(fan_in, 1)), size=(fan_in, fan_out))
            weights.append(w)
            biases.append(np.zeros(fan_out))
        return cls(weights, biases)

    @property
    def sizes(self):
        return [self.weights[0].shape[0]] + [w.shape[1] for w in self.weights]

    @property
    def n_in(self) -> int:
        return self.weights[0].shape[0]

    @property
    def n_out(self) -> int:
        return self.weights[-1].shape[1]

    def copy(self) -> "MLP":
        return MLP([w.copy() for w in self.weights], [b.copy() for b in self.biases])

    def logits(self, inputs, return_cache: bool = False):
        a = np.asarray(inputs, dtype=np.float64)
        acts = [a]
        last = len(self.weights) - 1
        for k, (w, b) in enumerate(zip(self.weights, self.biases)):
            z = a @ w + b
            if k < last:
                a = np.maximum(z, 0.0)
                acts.append(a)
        if return_cache:
            return z, acts
        return z

    def forward(self, inputs):
        return sigmoid(self.logits(inputs))

    def backward(self, acts, dlogits):
        """Gradients of ``sum(dlogits * logits)`` w.r.t. weights, biases and input."""
        g = np.asarray(dlogits, dtype=np.float64)
        dws = [None] * len(self.weights)
        dbs = [None] * len(self.weights)
        for k in range(len(self.weights) - 1, -1, -1):
            a_in = acts[k]
            dws[k] = a_in.T @ g
            dbs[k] = g.sum(axis=0)
            g = g @ self.weights[k].T
            if k > 0:
                g = g * (a_in > 0.0)
        return dws, dbs, g

    # flat parameter views, used by gradient checks and the optimizer

    def get_flat(self) -> np.ndarray:
        parts = []
        for w, b in zip(self.weights, self.biases):
            parts.append(w.ravel())
            parts.append(b)
        return np.concatenate(parts)

    def set_flat(self, theta) -> None:
        theta = np.asarray(theta, dtype=np.float64)
        pos = 0
        for k, (w, b) in enumerate(zip(self.weights, self.biases)):
            self.weights[k] = theta[pos:pos + w.size].reshape(w.shape).copy()
            pos += w.size
            self.biases[k] = theta[pos:pos + b.size].copy()
            pos += b.size
        if pos != theta.size:
            raise ValueError(f"expected {pos} parameters, got {theta.size}")

    @staticmethod
    def flatten(dws, dbs) -> np.ndarray:
        parts = []
        for dw, db in zip(dws, dbs):
            parts.append(np.ravel(dw))
            parts.append(np.ravel(db))
        return np.concatenate(parts)

    def weight_mask(self) -> np.ndarray:
        """1 on weight entries, 0 on biases (regularizers skip biases)."""
        parts = []
        for w, b in zip(self.weights, self.biases):
            parts.append(np.ones(w.size))
            parts.append(np.zeros(b.size))
        return np.concatenate(parts)

    def to_payload(self) -> dict:
        return {
            "shapes": [list(w.shape) for w in self.weights],
            "weights": [w.ravel().tolist() for w in self.weights],
            "biases": [b.tolist() for b in self.biases],
        }

    @classmethod
    def from_payload(cls, payload: dict) -> "MLP":
        weights = [
            np.array(w, dtype=np.float64).reshape(shape)
            for shape, w in zip(payload["shapes"], payload["weights"])
        ]
        return cls(weights, [np.array(b, dtype=np.float64) for b in payload["biases"]])


class MomentumSGD:
    """Heavy-ball SGD over a flat parameter vector.

    ``l2`` is applied as a proximal shrink so large strengths cannot diverge;
    ``l1`` as soft-thresholding.  Both skip entries where ``mask == 0``.
    """

    def __init__(self, n_params: int, momentum: float = 0.9, mask=None):
        self.momentum = momentum
        self.velocity = np.zeros(n_params)
        self.mask = np.ones(n_params) if mask is None else np.asarray(mask, dtype=np.float64)

    def step(self, theta, grad, lr, l1=0.0, l2=0.0):
        """One update; ``l1``/``l2`` may be scalars or per-parameter arrays."""
        self.velocity = self.momentum * self.velocity + grad
        theta = theta - lr * self.velocity
        l2 = np.asarray(l2, dtype=np.float64) * self.mask
        l1 = np.asarray(l1, dtype=np.float64) * self.mask
        if np.any(l2 > 0):
            theta = theta / (1.0 + lr * l2)
        if np.any(l1 > 0):
            theta = np.sign(theta) * np.maximum(np.abs(theta) - lr * l1, 0.0)
        return theta
