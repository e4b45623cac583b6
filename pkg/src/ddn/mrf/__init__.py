"""Pairwise MRF over labels and binarized evidence (the deep-random-field model)."""
from .bp import bp_marginals, build_cluster_graph, induced_width, min_degree_order
from .drf import DRFModel, binarize_evidence, drf_predict
from .gibbs import gibbs_marginals
from .learning import fit_weights, pll, pll_grad
from .map import map_assignment
from .model import (MapResult, MarginalEstimates, PairwiseMRF, enumerate_scores,
                    exact_marginals, random_mrf)
from .structure import conjunctive_mrf, default_lambdas, kill_threshold, l1_logistic, learn_structure

__all__ = [
    "PairwiseMRF", "MarginalEstimates", "MapResult",
    "learn_structure", "conjunctive_mrf", "default_lambdas", "l1_logistic", "kill_threshold",
    "pll", "pll_grad", "fit_weights",
    "gibbs_marginals", "bp_marginals", "build_cluster_graph", "induced_width", "min_degree_order",
    "map_assignment", "drf_predict", "binarize_evidence", "DRFModel",
    "exact_marginals", "enumerate_scores", "random_mrf",
]
