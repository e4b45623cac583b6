"""Deep-random-field prediction: binarize backbone outputs, clamp, infer."""
from __future__ import annotations

import numpy as np

from .bp import bp_marginals
from .gibbs import gibbs_marginals
from .map import map_assignment
from .model import PairwiseMRF

METHODS = ("gibbs", "bp", "map")


def binarize_evidence(e_continuous, tau_e: float = 0.5) -> np.ndarray:
    """``1`` where ``e > tau_e``."""
    return (np.asarray(e_continuous, dtype=np.float64) > tau_e).astype(np.int8)


def drf_predict(mrf: PairwiseMRF, e_continuous, tau_e: float = 0.5, inference: str = "gibbs",
                rng=None, n_samples: int = 10_000, burn_in: int = 0, i_bound: int = 3,
                max_iters: int = 1000, damping: float = 0.5, tol: float = 1e-10,
                map_mode: str = "exact", time_budget: float | None = 60.0,
                as_marginals: bool = False):
    """Run one inference routine on a single example.

    Returns ``MarginalEstimates`` for gibbs/bp and ``MapResult`` for map
    (or its degenerate 0/1 marginals when ``as_marginals`` is set).
    """
    e = np.asarray(e_continuous, dtype=np.float64).ravel()
    if e.size != mrf.n_e:
        raise ValueError(f"expected {mrf.n_e} evidence values, got {e.size}")
    evidence = binarize_evidence(e, tau_e)
    if inference == "gibbs":
        return gibbs_marginals(mrf, evidence, n_samples, burn_in, rng, time_budget)
    if inference == "bp":
        return bp_marginals(mrf, evidence, i_bound, max_iters, damping, tol, time_budget)
    if inference == "map":
        result = map_assignment(mrf, evidence, map_mode, rng, time_budget)
        return result.as_marginals() if as_marginals else result
    raise ValueError(f"unknown inference method {inference!r}; choose from {METHODS}")


class DRFModel:
    """A fitted MRF plus how to turn raw inputs into its evidence bits.

    ``backbone`` (optional) maps ``v`` to continuous evidence; without it the
    raw features are the evidence.
    """

    def __init__(self, mrf: PairwiseMRF, backbone=None, tau_e: float = 0.5):
        if backbone is not None and backbone.n_out != mrf.n_e:
            raise ValueError("backbone output width must equal the number of evidence nodes")
        self.mrf = mrf
        self.backbone = backbone
        self.tau_e = float(tau_e)

    @property
    def d(self) -> int:
        return self.backbone.n_in if self.backbone is not None else self.mrf.n_e

    def evidence(self, V) -> np.ndarray:
        V = np.atleast_2d(np.asarray(V, dtype=np.float64))
        return self.backbone.forward(V) if self.backbone is not None else V
