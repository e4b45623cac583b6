"""Versioned JSON model archives.

Top-level keys: ``format_version``, ``model_kind``, ``dims`` ([d, m, n]) and
``payload``.  Floats are written by ``json`` with shortest round-trip repr,
so loading reproduces every weight bitwise.
"""
from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from ._nn import MLP
from .dn import ConditionalClassifier, ConditionalDN
from .mrf.drf import DRFModel
from .mrf.model import PairwiseMRF
from .trainer import DeepDependencyNetwork

FORMAT_VERSION = 1
KINDS = ("mrf", "dn_lr", "dn_mlp", "ddn", "backbone")


class ArchiveError(ValueError):
    pass


def _dn_payload(dn: ConditionalDN) -> dict:
    return {
        "n": dn.n,
        "m": dn.m,
        "classifiers": [{"kind": c.kind, "reg": c.reg, "net": c.net.to_payload()} for c in dn.classifiers],
    }


def _dn_from(payload) -> ConditionalDN:
    clfs = [ConditionalClassifier(c["kind"], MLP.from_payload(c["net"]), c["reg"]) for c in payload["classifiers"]]
    return ConditionalDN(payload["n"], payload["m"], clfs)


def _mrf_payload(model: DRFModel) -> dict:
    mrf = model.mrf
    return {
        "n_x": mrf.n_x,
        "n_e": mrf.n_e,
        "neighbor_cap": mrf.neighbor_cap,
        "features": [list(f) for f in mrf.features],
        "weights": mrf.weights.tolist(),
        "tau_e": model.tau_e,
        "backbone": None if model.backbone is None else model.backbone.to_payload(),
    }


def _mrf_from(payload) -> DRFModel:
    mrf = PairwiseMRF(payload["n_x"], payload["n_e"], payload["features"],
                      np.array(payload["weights"], dtype=np.float64), payload["neighbor_cap"])
    bb = payload.get("backbone")
    return DRFModel(mrf, None if bb is None else MLP.from_payload(bb), payload.get("tau_e", 0.5))


def to_archive(model) -> dict:
    if isinstance(model, PairwiseMRF):
        model = DRFModel(model)
    if isinstance(model, DRFModel):
        kind, dims, payload = "mrf", [model.d, model.mrf.n_e, model.mrf.n_x], _mrf_payload(model)
    elif isinstance(model, DeepDependencyNetwork):
        kind = "ddn"
        dims = [model.d, model.m, model.n]
        payload = {"backbone": model.backbone.to_payload(), "head": _dn_payload(model.head)}
    elif isinstance(model, ConditionalDN):
        kind, dims, payload = f"dn_{model.kind}", [model.m, model.m, model.n], _dn_payload(model)
    elif isinstance(model, MLP):
        kind, dims, payload = "backbone", [model.n_in, model.n_out, model.n_out], model.to_payload()
    else:
        raise TypeError(f"cannot archive {type(model).__name__}")
    return {"format_version": FORMAT_VERSION, "model_kind": kind, "dims": dims, "payload": payload}


def from_archive(doc: dict):
    for key in ("format_version", "model_kind", "dims", "payload"):
        if key not in doc:
            raise ArchiveError(f"archive is missing {key!r}")
    if doc["format_version"] != FORMAT_VERSION:
        raise ArchiveError(f"unsupported archive version {doc['format_version']} (expected {FORMAT_VERSION})")
    kind = doc["model_kind"]
    if kind not in KINDS:
        raise ArchiveError(f"unknown model kind {kind!r}")
    try:
        if kind == "mrf":
            model = _mrf_from(doc["payload"])
        elif kind == "ddn":
            model = DeepDependencyNetwork(MLP.from_payload(doc["payload"]["backbone"]),
                                          _dn_from(doc["payload"]["head"]))
        elif kind == "backbone":
            model = MLP.from_payload(doc["payload"])
        else:
            model = _dn_from(doc["payload"])
            if f"dn_{model.kind}" != kind:
                raise ArchiveError(f"archive kind {kind!r} holds {model.kind} classifiers")
    except (KeyError, TypeError, ValueError) as err:
        if isinstance(err, ArchiveError):
            raise
        raise ArchiveError(f"corrupt {kind} payload: {err}") from err
    expected = to_archive(model)["dims"]
    if list(doc["dims"]) != expected:
        raise ArchiveError(f"dims {doc['dims']} do not match the payload {expected}")
    return model


def save_model(model, path) -> None:
    Path(path).write_text(json.dumps(to_archive(model)), encoding="utf-8")


def load_model(path):
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as err:
        raise ArchiveError(f"{path}: not a valid archive ({err.msg} at char {err.pos})") from err
    if not isinstance(doc, dict):
        raise ArchiveError(f"{path}: archive must be a JSON object")
    return from_archive(doc)
