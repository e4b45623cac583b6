"""Datasets: the tab-separated text format, synthetic generators, validation.

File format::

    #ddn v1 d=<d> n=<n>
    <id>\t<f_1,...,f_d>\t<l_1,...,l_n>

Floats are written with ``repr`` so a save/load cycle is bitwise exact.
"""
from __future__ import annotations

import itertools
import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

__all__ = [
    "DatasetFormatError",
    "Example",
    "Dataset",
    "load_dataset",
    "save_dataset",
    "gen_planted_mrf_dataset",
    "gen_xor_dataset",
    "planted_joint",
    "load_predictions",
    "save_predictions",
]

_HEADER = re.compile(r"^#ddn v1 d=(\d+) n=(\d+)$")
_PRED_HEADER = re.compile(r"^#ddn-pred v1 n=(\d+)$")
MAX_ENUM_LABELS = 16


class DatasetFormatError(ValueError):
    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


@dataclass(frozen=True)
class Example:
    id: str
    v: np.ndarray
    x: np.ndarray


@dataclass
class Dataset:
    """Examples stored column-wise: ``V`` is (M, d) float, ``X`` is (M, n) int8."""

    V: np.ndarray
    X: np.ndarray
    ids: list = field(default_factory=list)
    label_names: list | None = None

    def __post_init__(self):
        self.X = np.asarray(self.X)
        if self.X.ndim != 2:
            raise ValueError("X must be 2-D")
        m = self.X.shape[0]
        self.V = np.asarray(self.V, dtype=np.float64)
        if self.V.size == 0 and self.V.ndim != 2:
            self.V = np.zeros((m, 0))
        if self.V.ndim != 2 or self.V.shape[0] != m:
            raise ValueError("V and X disagree on the number of examples")
        if not np.isin(self.X, (0, 1)).all():
            raise ValueError("labels must be 0 or 1")
        self.X = self.X.astype(np.int8)
        if not np.all(np.isfinite(self.V)):
            raise ValueError("features must be finite")
        if not self.ids:
            self.ids = [str(k) for k in range(m)]
        if len(self.ids) != m:
            raise ValueError("one id per example required")
        if len(set(self.ids)) != m:
            raise ValueError("example ids must be unique")
        if self.label_names is not None and len(self.label_names) != self.n:
            raise ValueError("one name per label required")

    @property
    def d(self) -> int:
        return self.V.shape[1]

    @property
    def n(self) -> int:
        return self.X.shape[1]

    def __len__(self) -> int:
        return self.X.shape[0]

    def __iter__(self):
        for k in range(len(self)):
            yield Example(self.ids[k], self.V[k], self.X[k])

    def subset(self, rows) -> "Dataset":
        rows = np.asarray(rows)
        return Dataset(self.V[rows], self.X[rows], [self.ids[r] for r in rows], self.label_names)

    def __eq__(self, other):
        if not isinstance(other, Dataset):
            return NotImplemented
        return (
            self.ids == other.ids
            and self.V.shape == other.V.shape
            and np.array_equal(self.V, other.V)
            and np.array_equal(self.X, other.X)
        )


def _parse_floats(text, expected, lineno, what):
    if expected == 0:
        if text.strip():
            raise DatasetFormatError(f"expected no {what}, got {text!r}", lineno)
        return []
    parts = text.split(",")
    if len(parts) != expected:
        raise DatasetFormatError(f"expected {expected} {what}, got {len(parts)}", lineno)
    try:
        vals = [float(p) for p in parts]
    except ValueError:
        raise DatasetFormatError(f"non-numeric {what}: {text!r}", lineno) from None
    if not all(np.isfinite(vals)):
        raise DatasetFormatError(f"non-finite {what}", lineno)
    return vals


def load_dataset(path) -> Dataset:
    text = Path(path).read_text(encoding="utf-8")
    lines = text.split("\n")
    if not lines or not lines[0]:
        raise DatasetFormatError("missing header", 1)
    header = _HEADER.match(lines[0].rstrip("\r"))
    if header is None:
        raise DatasetFormatError(f"malformed header {lines[0]!r}", 1)
    d, n = int(header.group(1)), int(header.group(2))
    ids, vs, xs = [], [], []
    seen = set()
    for lineno, raw in enumerate(lines[1:], start=2):
        line = raw.rstrip("\r")
        if not line:
            continue
        cols = line.split("\t")
        if len(cols) != 3:
            raise DatasetFormatError(f"expected 3 tab-separated fields, got {len(cols)}", lineno)
        ident, ftext, ltext = cols
        if not ident:
            raise DatasetFormatError("empty id", lineno)
        if ident in seen:
            raise DatasetFormatError(f"duplicate id {ident!r}", lineno)
        seen.add(ident)
        feats = _parse_floats(ftext, d, lineno, "features")
        labels = ltext.split(",") if n else ([] if not ltext else None)
        if labels is None or len(labels) != n:
            raise DatasetFormatError(f"expected {n} labels", lineno)
        for lab in labels:
            if lab not in ("0", "1"):
                raise DatasetFormatError(f"label {lab!r} is not 0 or 1", lineno)
        ids.append(ident)
        vs.append(feats)
        xs.append([int(lab) for lab in labels])
    V = np.array(vs, dtype=np.float64).reshape(len(ids), d)
    X = np.array(xs, dtype=np.int8).reshape(len(ids), n)
    return Dataset(V, X, ids)


def save_dataset(data: Dataset, path) -> None:
    out = [f"#ddn v1 d={data.d} n={data.n}"]
    for k in range(len(data)):
        feats = ",".join(repr(float(f)) for f in data.V[k])
        labels = ",".join(str(int(b)) for b in data.X[k])
        out.append(f"{data.ids[k]}\t{feats}\t{labels}")
    Path(path).write_text("\n".join(out) + "\n", encoding="utf-8")


def save_predictions(ids, P, path, as_bits=False) -> None:
    """Write ``#ddn-pred v1 n=<n>`` then ``<id>\t<p_1,...,p_n>`` per example."""
    P = np.atleast_2d(np.asarray(P, dtype=np.float64))
    if len(ids) != len(P):
        raise ValueError("one id per prediction row required")
    fmt = (lambda p: str(int(p))) if as_bits else (lambda p: repr(float(p)))
    out = [f"#ddn-pred v1 n={P.shape[1]}"]
    out += [f"{ident}\t{','.join(fmt(p) for p in row)}" for ident, row in zip(ids, P)]
    Path(path).write_text("\n".join(out) + "\n", encoding="utf-8")


def load_predictions(path):
    """Returns ``(ids, P)`` with ``P`` an (M, n) float array."""
    lines = Path(path).read_text(encoding="utf-8").split("\n")
    header = _PRED_HEADER.match(lines[0].rstrip("\r")) if lines else None
    if header is None:
        raise DatasetFormatError("malformed predictions header", 1)
    n = int(header.group(1))
    ids, rows = [], []
    for lineno, raw in enumerate(lines[1:], start=2):
        line = raw.rstrip("\r")
        if not line:
            continue
        cols = line.split("\t")
        if len(cols) != 2 or not cols[0]:
            raise DatasetFormatError("expected <id>\\t<probabilities>", lineno)
        vals = _parse_floats(cols[1], n, lineno, "probabilities")
        if any(v < 0.0 or v > 1.0 for v in vals):
            raise DatasetFormatError("probabilities must lie in [0, 1]", lineno)
        ids.append(cols[0])
        rows.append(vals)
    if len(set(ids)) != len(ids):
        raise DatasetFormatError("duplicate prediction ids")
    return ids, np.array(rows, dtype=np.float64).reshape(len(ids), n)


def planted_joint(n_labels, edges, weights, unary=None):
    """All ``2**n`` states and their exact probabilities under a pairwise model
    with conjunctive features ``x_a AND x_b``."""
    if n_labels > MAX_ENUM_LABELS:
        raise ValueError(f"exact enumeration limited to {MAX_ENUM_LABELS} labels")
    states = np.array(list(itertools.product((0, 1), repeat=n_labels)), dtype=np.int8).reshape(-1, n_labels)
    score = np.zeros(len(states))
    if unary is not None:
        score += states @ np.asarray(unary, dtype=np.float64)
    for (a, b), w in zip(edges, weights):
        score += w * (states[:, a] & states[:, b])
    score -= score.max()
    p = np.exp(score)
    return states, p / p.sum()


def gen_planted_mrf_dataset(rng, n_labels, m_examples, edges, weights, unary=None,
                            noise_sigma=None) -> Dataset:
    """I.i.d. exact samples from a planted pairwise MRF.

    ``noise_sigma=None`` leaves ``V`` empty (d=0); otherwise ``V = X + N(0, sigma)``.
    """
    if n_labels > MAX_ENUM_LABELS:
        raise ValueError(f"n_labels={n_labels} exceeds the enumeration cap of {MAX_ENUM_LABELS}")
    edges = [tuple(e) for e in edges]
    if len(edges) != len(weights):
        raise ValueError("one weight per edge required")
    for a, b in edges:
        if not (0 <= a < n_labels and 0 <= b < n_labels) or a == b:
            raise ValueError(f"invalid edge ({a}, {b})")
    states, p = planted_joint(n_labels, edges, weights, unary)
    idx = rng.choice(len(states), size=m_examples, p=p)
    X = states[idx]
    if noise_sigma is None:
        V = np.zeros((m_examples, 0))
    else:
        V = X + rng.normal(0.0, noise_sigma, size=X.shape)
    return Dataset(V, X)


def gen_xor_dataset(rng, m_examples, noise_sigma=0.3) -> Dataset:
    """Three labels with ``x2 = x0 XOR x1``.

    Features carry noisy copies of ``x0`` and ``x1``; the third feature is pure
    noise, so nothing in ``v`` points at ``x2`` except through the XOR.
    """
    x01 = rng.integers(0, 2, size=(m_examples, 2))
    X = np.column_stack([x01, x01[:, 0] ^ x01[:, 1]]).astype(np.int8)
    V = np.column_stack([x01.astype(np.float64), np.zeros(m_examples)])
    V = V + rng.normal(0.0, noise_sigma, size=V.shape)
    return Dataset(V, X)
