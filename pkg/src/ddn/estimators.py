"""scikit-learn compatible estimators.

``BackboneClassifier`` is the plain network (independent per-label sigmoids),
``DDNClassifier`` the deep dependency network and ``DRFClassifier`` the deep
random field.  All take ``(X, Y)`` with ``Y`` a binary indicator matrix and
expose ``predict_proba`` (per-label marginals) and ``predict``.
"""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from ._nn import MLP
from ._numeric import make_rng
from ._optim import SGDConfig
from .dn import DEFAULT_REG, ConditionalDN, train_pipeline
from .mrf.drf import DRFModel, binarize_evidence, drf_predict
from .mrf.learning import fit_weights
from .mrf.map import MapResult
from .mrf.structure import conjunctive_mrf, learn_structure
from .trainer import DeepDependencyNetwork, infer_batch, init_backbone, pretrain_backbone, train_joint


def _check_labels(Y):
    Y = np.asarray(Y)
    if Y.ndim != 2:
        raise ValueError("Y must be a 2-D binary indicator matrix")
    if not np.isin(Y, (0, 1)).all():
        raise ValueError("Y must contain only 0 and 1")
    return Y.astype(np.int8)


def _check_threshold(threshold):
    if not 0.0 <= threshold <= 1.0:
        raise ValueError("threshold must lie in [0, 1]")


class _MultiLabelMixin(ClassifierMixin):
    def predict(self, X):
        _check_threshold(self.threshold)
        return (self.predict_proba(X) > self.threshold).astype(np.int8)


class BackboneClassifier(_MultiLabelMixin, BaseEstimator):
    """Feed-forward network with one sigmoid output per label.

    ``hidden=None`` gives one hidden layer of width ``4 max(d, n)``; ``()``
    gives independent logistic regressions.
    """

    def __init__(self, hidden=None, epochs=20, lr=0.05, batch_size=32, momentum=0.9,
                 l2=0.0, threshold=0.5, seed=0):
        self.hidden = hidden
        self.epochs = epochs
        self.lr = lr
        self.batch_size = batch_size
        self.momentum = momentum
        self.l2 = l2
        self.threshold = threshold
        self.seed = seed

    def fit(self, X, Y):
        X, Y = check_X_y(X, Y, multi_output=True, dtype=np.float64)
        Y = _check_labels(Y)
        net = init_backbone(X.shape[1], Y.shape[1], self.hidden, self.seed)
        config = SGDConfig(epochs=self.epochs, batch_size=self.batch_size, lr=self.lr,
                           momentum=self.momentum, l2=self.l2, seed=self.seed)
        self.history_ = []
        self.backbone_ = pretrain_backbone(net, X, Y, config, log=lambda e, l: self.history_.append(l))
        self.n_features_in_ = X.shape[1]
        self.n_labels_ = Y.shape[1]
        return self

    def predict_proba(self, X):
        check_is_fitted(self, "backbone_")
        X = check_array(X, dtype=np.float64)
        return self.backbone_.forward(X)


class DDNClassifier(_MultiLabelMixin, BaseEstimator):
    """Deep dependency network.

    ``fit`` pretrains the backbone on the labels, fits the DN head on the
    frozen backbone outputs and, if ``joint``, fine-tunes both on the CPLL
    loss.  A pre-trained ``backbone`` (an ``MLP``) skips the first stage.
    """

    def __init__(self, head="mlp", head_hidden=None, reg=DEFAULT_REG, backbone=None,
                 backbone_hidden=None, backbone_epochs=20, backbone_lr=0.05,
                 head_epochs=20, head_lr=0.01, joint=True, joint_epochs=5, joint_lr=1e-3,
                 batch_size=32, momentum=0.9, n_samples=1000, burn_in=0, threshold=0.5,
                 seed=0, jobs=1):
        self.head = head
        self.head_hidden = head_hidden
        self.reg = reg
        self.backbone = backbone
        self.backbone_hidden = backbone_hidden
        self.backbone_epochs = backbone_epochs
        self.backbone_lr = backbone_lr
        self.head_epochs = head_epochs
        self.head_lr = head_lr
        self.joint = joint
        self.joint_epochs = joint_epochs
        self.joint_lr = joint_lr
        self.batch_size = batch_size
        self.momentum = momentum
        self.n_samples = n_samples
        self.burn_in = burn_in
        self.threshold = threshold
        self.seed = seed
        self.jobs = jobs

    def _config(self, epochs, lr):
        return SGDConfig(epochs=epochs, batch_size=self.batch_size, lr=lr,
                         momentum=self.momentum, seed=self.seed)

    def fit(self, X, Y):
        X, Y = check_X_y(X, Y, multi_output=True, dtype=np.float64)
        Y = _check_labels(Y)
        n = Y.shape[1]
        if self.backbone is not None:
            if not isinstance(self.backbone, MLP) or self.backbone.n_in != X.shape[1]:
                raise ValueError("backbone must be an MLP accepting the feature width")
            bb = self.backbone.copy()
        else:
            bb = init_backbone(X.shape[1], n, self.backbone_hidden, self.seed)
            bb = pretrain_backbone(bb, X, Y, self._config(self.backbone_epochs, self.backbone_lr))
        self.backbone_ = bb
        head = ConditionalDN.init(n, bb.n_out, self.head, self.head_hidden, self.reg, self.seed)
        head = train_pipeline(head, bb.forward(X), Y, self._config(self.head_epochs, self.head_lr), self.jobs)
        model = DeepDependencyNetwork(bb, head)
        self.pipeline_ = model
        self.history_ = []
        if self.joint and self.joint_epochs > 0:
            model = train_joint(model, X, Y, self._config(self.joint_epochs, self.joint_lr),
                                log=lambda e, l: self.history_.append(l))
        self.model_ = model
        self.n_features_in_ = X.shape[1]
        self.n_labels_ = n
        return self

    def predict_proba(self, X):
        check_is_fitted(self, "model_")
        X = check_array(X, dtype=np.float64)
        return infer_batch(self.model_, X, self.n_samples, self.seed, self.burn_in)


class DRFClassifier(_MultiLabelMixin, BaseEstimator):
    """Deep random field: a pairwise MRF over labels and binarized evidence.

    ``X`` holds the continuous evidence (backbone outputs, or raw features
    when ``backbone`` is None); it is binarized at ``tau_e``.  The structure
    comes from l1 logistic regressions, the weights from pseudo-likelihood.
    """

    def __init__(self, inference="gibbs", tau_e=0.5, backbone=None, neighbor_cap=10, lambdas=None,
                 epochs=20, lr=0.01, batch_size=32, momentum=0.9, l2=0.0,
                 n_samples=10_000, burn_in=0, i_bound=3, max_iters=1000, damping=0.5, tol=1e-10,
                 map_mode="exact", time_budget=60.0, threshold=0.5, seed=0):
        self.inference = inference
        self.tau_e = tau_e
        self.backbone = backbone
        self.neighbor_cap = neighbor_cap
        self.lambdas = lambdas
        self.epochs = epochs
        self.lr = lr
        self.batch_size = batch_size
        self.momentum = momentum
        self.l2 = l2
        self.n_samples = n_samples
        self.burn_in = burn_in
        self.i_bound = i_bound
        self.max_iters = max_iters
        self.damping = damping
        self.tol = tol
        self.map_mode = map_mode
        self.time_budget = time_budget
        self.threshold = threshold
        self.seed = seed

    def fit(self, X, Y):
        X, Y = check_X_y(X, Y, multi_output=True, dtype=np.float64)
        Y = _check_labels(Y)
        E = self.backbone.forward(X) if self.backbone is not None else X
        Z = np.concatenate([Y, binarize_evidence(E, self.tau_e)], axis=1)
        n_x, n_e = Y.shape[1], E.shape[1]
        self.edges_ = learn_structure(Z, self.lambdas, self.neighbor_cap)
        mrf = conjunctive_mrf(n_x, n_e, self.edges_, self.neighbor_cap)
        config = SGDConfig(epochs=self.epochs, batch_size=self.batch_size, lr=self.lr,
                           momentum=self.momentum, l2=self.l2, seed=self.seed)
        self.history_ = []
        mrf = fit_weights(mrf, Z, config, log=lambda e, l: self.history_.append(l))
        self.model_ = DRFModel(mrf, self.backbone, self.tau_e)
        self.n_features_in_ = X.shape[1]
        self.n_labels_ = n_x
        return self

    def infer_one(self, e, row=0):
        """Inference result for one evidence vector (MapResult for ``map``)."""
        check_is_fitted(self, "model_")
        return drf_predict(
            self.model_.mrf, e, self.tau_e, self.inference, make_rng(self.seed, f"drf-infer/{row}"),
            n_samples=self.n_samples, burn_in=self.burn_in, i_bound=self.i_bound,
            max_iters=self.max_iters, damping=self.damping, tol=self.tol,
            map_mode=self.map_mode, time_budget=self.time_budget)

    def predict_proba(self, X):
        check_is_fitted(self, "model_")
        X = check_array(X, dtype=np.float64)
        E = self.model_.evidence(X)
        out = np.empty((len(E), self.model_.mrf.n_x))
        for r, e in enumerate(E):
            res = self.infer_one(e, r)
            out[r] = res.assignment if isinstance(res, MapResult) else res.p
        return out
