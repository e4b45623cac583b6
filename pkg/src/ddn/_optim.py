"""Mini-batch SGD plumbing: configuration, step schedule, deterministic batching."""
from __future__ import annotations

from dataclasses import dataclass, field, fields, asdict

import numpy as np

from ._numeric import make_rng


class TrainingDivergedError(FloatingPointError):
    """Raised when a loss or parameter becomes non-finite during training."""

    def __init__(self, message, *, epoch=None, step=None, loss=None):
        super().__init__(message)
        self.epoch = epoch
        self.step = step
        self.loss = loss


@dataclass
class SGDConfig:
    epochs: int = 10
    batch_size: int = 32
    lr: float = 0.01
    momentum: float = 0.9
    l1: float = 0.0
    l2: float = 0.0
    seed: int = 0
    # (epoch, relative_lr) pairs; the factor of the last boundary <= epoch applies
    lr_steps: tuple = field(default_factory=tuple)

    def __post_init__(self):
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.lr <= 0 or not np.isfinite(self.lr):
            raise ValueError("lr must be positive and finite")
        if self.l1 < 0 or self.l2 < 0:
            raise ValueError("regularization strengths must be >= 0")
        self.lr_steps = tuple((int(e), float(r)) for e, r in self.lr_steps)

    def lr_at(self, epoch: int) -> float:
        rel = 1.0
        for start, factor in sorted(self.lr_steps):
            if epoch >= start:
                rel = factor
        return self.lr * rel

    @classmethod
    def from_dict(cls, d: dict) -> "SGDConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown SGD config keys: {sorted(unknown)}")
        return cls(**d)

    def to_dict(self) -> dict:
        out = asdict(self)
        out["lr_steps"] = [list(s) for s in self.lr_steps]
        return out


def minibatches(n_rows: int, batch_size: int, seed: int, stream: str, epoch: int):
    """Yield index arrays covering ``range(n_rows)`` in a seed-derived order."""
    rng = make_rng(seed, f"{stream}/epoch{epoch}")
    order = rng.permutation(n_rows)
    for start in range(0, n_rows, batch_size):
        yield order[start:start + batch_size]


def soft_threshold(w: np.ndarray, t: float) -> np.ndarray:
    return np.sign(w) * np.maximum(np.abs(w) - t, 0.0)
