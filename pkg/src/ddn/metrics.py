"""Multi-label evaluation metrics.

Ranking metrics (mAP, LRAP) take scores; set metrics (SA, JI, P/R/F1) take
scores and a threshold (``score > threshold`` predicts 1).  Tied scores are
resolved pessimistically: every member of a tie group gets the worst rank of
the group, which keeps all metrics independent of example and label order.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

DEFAULT_THRESHOLD = 0.5
DEFAULT_TOP_K = 3


def _check(scores, truth):
    S = np.atleast_2d(np.asarray(scores, dtype=np.float64))
    T = np.atleast_2d(np.asarray(truth))
    if S.shape != T.shape:
        raise ValueError(f"score matrix {S.shape} and truth matrix {T.shape} differ in shape")
    if not np.isin(T, (0, 1)).all():
        raise ValueError("truth must be binary")
    return S, T.astype(bool)


def threshold_predictions(scores, threshold=DEFAULT_THRESHOLD) -> np.ndarray:
    return np.asarray(scores, dtype=np.float64) > threshold


def top_k_predictions(scores, k=DEFAULT_TOP_K) -> np.ndarray:
    """The ``k`` highest-scoring labels of each row; ties go to the lower index."""
    S = np.atleast_2d(np.asarray(scores, dtype=np.float64))
    k = min(max(int(k), 0), S.shape[1])
    order = np.argsort(-S, axis=1, kind="stable")[:, :k]
    pred = np.zeros(S.shape, dtype=bool)
    np.put_along_axis(pred, order, True, axis=1)
    return pred


def subset_accuracy(scores, truth, threshold=DEFAULT_THRESHOLD) -> float:
    S, T = _check(scores, truth)
    if len(S) == 0:
        return float("nan")
    return float(np.mean(np.all(threshold_predictions(S, threshold) == T, axis=1)))


def jaccard_index(scores, truth, threshold=DEFAULT_THRESHOLD) -> float:
    """Mean ``|pred & true| / |pred | true|``; a row with both sets empty scores 1."""
    S, T = _check(scores, truth)
    if len(S) == 0:
        return float("nan")
    P = threshold_predictions(S, threshold)
    inter = (P & T).sum(axis=1)
    union = (P | T).sum(axis=1)
    per_row = np.where(union == 0, 1.0, inter / np.maximum(union, 1))
    return float(per_row.mean())


def average_precision(scores, truth) -> float:
    """AP of one label column: mean over positives of precision at that score."""
    s = np.asarray(scores, dtype=np.float64).ravel()
    t = np.asarray(truth).astype(bool).ravel()
    if not t.any():
        return float("nan")
    # at or above each score, counting whole tie groups
    order = np.argsort(-s, kind="stable")
    s_sorted, t_sorted = s[order], t[order]
    cum_pos = np.cumsum(t_sorted)
    last_of_group = np.searchsorted(-s_sorted, -s_sorted, side="right") - 1
    precision = cum_pos[last_of_group] / (last_of_group + 1)
    return float(precision[t_sorted].mean())


def mean_average_precision(scores, truth) -> float:
    """Macro average of per-label AP; labels without positives are skipped."""
    S, T = _check(scores, truth)
    aps = []
    skipped = []
    for j in range(S.shape[1]):
        if T[:, j].any():
            aps.append(average_precision(S[:, j], T[:, j]))
        else:
            skipped.append(j)
    if skipped:
        warnings.warn(f"labels {skipped} have no positives and are left out of mAP", RuntimeWarning, stacklevel=2)
    return float(np.mean(aps)) if aps else float("nan")


def lrap(scores, truth) -> float:
    """Label ranking average precision.

    For each true label ``l`` of a row: (true labels scored >= s_l) / (labels
    scored >= s_l).  Rows without any true label count as 1.
    """
    S, T = _check(scores, truth)
    if len(S) == 0:
        return float("nan")
    per_row = np.ones(len(S))
    for r in range(len(S)):
        t = T[r]
        n_true = t.sum()
        if n_true == 0 or n_true == t.size:
            continue
        s = S[r]
        at_or_above = s[None, :] >= s[t][:, None]
        rank = at_or_above.sum(axis=1)
        true_rank = (at_or_above & t[None, :]).sum(axis=1)
        per_row[r] = np.mean(true_rank / rank)
    return float(per_row.mean())


def _prf(P, T):
    tp = (P & T).sum(axis=0).astype(np.float64)
    n_pred = P.sum(axis=0).astype(np.float64)
    n_true = T.sum(axis=0).astype(np.float64)
    # 0/0 counts as perfect for a class with nothing predicted or nothing to find
    cls_p = np.divide(tp, n_pred, out=np.ones_like(tp), where=n_pred > 0)
    cls_r = np.divide(tp, n_true, out=np.ones_like(tp), where=n_true > 0)
    cp, cr = float(cls_p.mean()), float(cls_r.mean())
    op = float(tp.sum() / n_pred.sum()) if n_pred.sum() > 0 else 1.0
    or_ = float(tp.sum() / n_true.sum()) if n_true.sum() > 0 else 1.0

    def f1(p, r):
        return 2.0 * p * r / (p + r) if p + r > 0 else 0.0

    return {"cp": cp, "cr": cr, "cf1": f1(cp, cr), "op": op, "or_": or_, "of1": f1(op, or_)}


def prf_suite(scores, truth, threshold=DEFAULT_THRESHOLD, k=DEFAULT_TOP_K) -> dict:
    """Per-category (C*) and overall (O*) precision, recall and F1.

    CF1 and OF1 are harmonic means of the averaged precision and recall.
    Returns ``{"threshold": {...}, "top_k": {...}}``.
    """
    S, T = _check(scores, truth)
    return {
        "threshold": _prf(threshold_predictions(S, threshold), T),
        "top_k": _prf(top_k_predictions(S, k), T),
    }


@dataclass
class MetricReport:
    map: float
    lrap: float
    sa: float
    ji: float
    threshold: float = DEFAULT_THRESHOLD
    k: int = DEFAULT_TOP_K
    prf: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        out = {"map": self.map, "lrap": self.lrap, "sa": self.sa, "ji": self.ji}
        for mode, values in self.prf.items():
            for key, value in values.items():
                out[f"{key}@{mode}"] = value
        return out

    def to_text(self) -> str:
        rows = self.to_dict()
        width = max(len(k) for k in rows)
        header = f"# threshold={self.threshold} top_k={self.k}"
        return "\n".join([header] + [f"{k:<{width}}  {v:.6f}" for k, v in rows.items()])


def evaluate(scores, truth, threshold=DEFAULT_THRESHOLD, k=DEFAULT_TOP_K) -> MetricReport:
    return MetricReport(
        map=mean_average_precision(scores, truth),
        lrap=lrap(scores, truth),
        sa=subset_accuracy(scores, truth, threshold),
        ji=jaccard_index(scores, truth, threshold),
        threshold=threshold,
        k=k,
        prf=prf_suite(scores, truth, threshold, k),
    )
