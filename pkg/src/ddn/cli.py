"""``ddn`` command line: train, infer, eval, gen.

Every command reads its settings as defaults, then an optional ``--config``
JSON document, then explicit flags (later wins).  Exit codes: 0 success,
1 runtime or numerical failure, 2 usage or validation error.
"""
from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

from ._nn import MLP
from ._numeric import make_rng
from ._optim import SGDConfig, TrainingDivergedError
from .archive import ArchiveError, load_model, save_model
from .data import (DatasetFormatError, Dataset, gen_planted_mrf_dataset, gen_xor_dataset, load_dataset,
                   load_predictions, save_dataset, save_predictions)
from .dn import DEFAULT_REG, KINDS, ConditionalDN, train_pipeline
from .metrics import DEFAULT_THRESHOLD, DEFAULT_TOP_K, evaluate
from .mrf.drf import METHODS, DRFModel, binarize_evidence, drf_predict
from .mrf.learning import fit_weights
from .mrf.map import MapResult
from .mrf.structure import conjunctive_mrf, learn_structure
from .trainer import DeepDependencyNetwork, infer_batch, init_backbone, pretrain_backbone, train_joint

JOBS_ENV = "DDN_JOBS"


class UsageError(Exception):
    pass


def _default_jobs():
    try:
        return max(1, int(os.environ.get(JOBS_ENV, "1")))
    except ValueError:
        return 1


_SGD = {"epochs": 20, "lr": 0.01, "batch_size": 32, "momentum": 0.9}

DEFAULTS = {
    "train backbone": {"data": None, "out": None, "log": None, "seed": None, "hidden": None,
                       "l2": 0.0, **_SGD, "lr": 0.05},
    "train dn-pipeline": {"data": None, "backbone": None, "out": None, "log": None, "seed": None,
                          "kind": "mlp", "hidden": None, "reg": DEFAULT_REG, "jobs": None, **_SGD},
    "train ddn-joint": {"data": None, "init_backbone": None, "init_head": None, "out": None, "log": None,
                        "seed": None, **_SGD, "epochs": 5, "lr": 1e-3},
    "train mrf": {"data": None, "backbone": None, "out": None, "log": None, "seed": None, "tau_e": 0.5,
                  "neighbor_cap": 10, "l2": 0.0, **_SGD},
    "infer": {"model": None, "data": None, "out": None, "bits_out": None, "seed": None,
              "n_samples": None, "burn_in": 0, "method": "gibbs", "i_bound": 3, "max_iters": 1000,
              "damping": 0.5, "tol": 1e-10, "map_mode": "exact", "time_budget": 60.0,
              "threshold": DEFAULT_THRESHOLD},
    "eval": {"pred": None, "data": None, "out": None, "threshold": DEFAULT_THRESHOLD, "top_k": DEFAULT_TOP_K},
    "gen": {"kind": "xor", "out": None, "seed": None, "m": 1000, "sigma": None, "n_labels": 5,
            "weight": 2.0},
}
REQUIRED = {
    "train backbone": ("data", "out", "seed"),
    "train dn-pipeline": ("data", "backbone", "out", "seed"),
    "train ddn-joint": ("data", "init_backbone", "init_head", "out", "seed"),
    "train mrf": ("data", "out", "seed"),
    "infer": ("model", "data", "out", "seed"),
    "eval": ("pred", "data"),
    "gen": ("out", "seed"),
}


def _hidden(text):
    """``"64,64"`` -> (64, 64); ``""`` or ``"none"`` -> () (no hidden layer)."""
    if text.strip().lower() in ("", "none"):
        return ()
    try:
        return tuple(int(t) for t in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"hidden sizes must be comma-separated integers, got {text!r}")


def _add(p, *flags, **kw):
    kw.setdefault("default", argparse.SUPPRESS)
    p.add_argument(*flags, **kw)


def _common(p, seed=True):
    _add(p, "--config", help="JSON document of settings; flags override it")
    _add(p, "--out", help="output path")
    if seed:
        _add(p, "--seed", type=int, help="random seed (required)")


def _sgd_flags(p):
    _add(p, "--data", help="training dataset (#ddn v1 format)")
    _add(p, "--log", help="training log path (default: <out>.log)")
    _add(p, "--epochs", type=int)
    _add(p, "--lr", type=float)
    _add(p, "--batch-size", dest="batch_size", type=int)
    _add(p, "--momentum", type=float)


def build_parser():
    parser = argparse.ArgumentParser(prog="ddn", description="Deep dependency networks and deep random fields.")
    sub = parser.add_subparsers(dest="command", required=True)

    train = sub.add_parser("train", help="train a model and write an archive plus a loss log")
    tsub = train.add_subparsers(dest="what", required=True)

    p = tsub.add_parser("backbone", help="pretrain the backbone network on the labels")
    _common(p)
    _sgd_flags(p)
    _add(p, "--hidden", type=_hidden, help='hidden layer sizes, e.g. "64,64"; "none" for a linear model')
    _add(p, "--l2", type=float)

    p = tsub.add_parser("dn-pipeline", help="fit the DN head on frozen backbone outputs")
    _common(p)
    _sgd_flags(p)
    _add(p, "--backbone", help="backbone archive")
    _add(p, "--kind", choices=KINDS)
    _add(p, "--hidden", type=_hidden, help="hidden sizes of each mlp classifier")
    _add(p, "--reg", type=float, help="l1 strength (lr) or l2 strength (mlp)")
    _add(p, "--jobs", type=int, help=f"parallel classifiers (default: ${JOBS_ENV} or 1)")

    p = tsub.add_parser("ddn-joint", help="fine-tune backbone and head together on CPLL")
    _common(p)
    _sgd_flags(p)
    _add(p, "--init-backbone", dest="init_backbone", help="pretrained backbone archive")
    _add(p, "--init-head", dest="init_head", help="pipeline-trained head archive")

    p = tsub.add_parser("mrf", help="learn a pairwise MRF over labels and binarized evidence")
    _common(p)
    _sgd_flags(p)
    _add(p, "--backbone", help="optional backbone archive producing the evidence")
    _add(p, "--tau-e", dest="tau_e", type=float, help="evidence binarization threshold")
    _add(p, "--neighbor-cap", dest="neighbor_cap", type=int)
    _add(p, "--l2", type=float)

    p = sub.add_parser("infer", help="write per-example label marginals")
    _common(p)
    _add(p, "--model", help="model archive")
    _add(p, "--data", help="dataset to predict")
    _add(p, "--bits-out", dest="bits_out", help="also write thresholded 0/1 predictions here")
    _add(p, "--n-samples", dest="n_samples", type=int, help="Gibbs samples (default 1000 ddn, 10000 mrf)")
    _add(p, "--burn-in", dest="burn_in", type=int)
    _add(p, "--method", choices=METHODS, help="mrf inference routine")
    _add(p, "--i-bound", dest="i_bound", type=int)
    _add(p, "--max-iters", dest="max_iters", type=int)
    _add(p, "--damping", type=float)
    _add(p, "--tol", type=float)
    _add(p, "--map-mode", dest="map_mode", choices=("exact", "icm"))
    _add(p, "--time-budget", dest="time_budget", type=float, help="seconds per example (mrf)")
    _add(p, "--threshold", type=float)

    p = sub.add_parser("eval", help="score a predictions file against a dataset")
    _common(p, seed=False)
    _add(p, "--pred", help="predictions file")
    _add(p, "--data", help="dataset holding the true labels")
    _add(p, "--threshold", type=float)
    _add(p, "--top-k", dest="top_k", type=int)

    p = sub.add_parser("gen", help="write a synthetic dataset")
    _common(p)
    _add(p, "--kind", choices=("xor", "chain"))
    _add(p, "--m", type=int, help="number of examples")
    _add(p, "--sigma", type=float, help="feature noise (xor default 0.3; chain default: no features)")
    _add(p, "--n-labels", dest="n_labels", type=int, help="chain length")
    _add(p, "--weight", type=float, help="chain edge weight magnitude (signs alternate)")
    return parser


def resolve_config(command, flags: dict) -> dict:
    cfg = dict(DEFAULTS[command])
    path = flags.pop("config", None)
    if path is not None:
        try:
            doc = json.loads(Path(path).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as err:
            raise UsageError(f"cannot read config {path}: {err}") from err
        if not isinstance(doc, dict):
            raise UsageError("config must be a JSON object")
        doc = {k.replace("-", "_"): v for k, v in doc.items()}
        unknown = sorted(set(doc) - set(cfg))
        if unknown:
            raise UsageError(f"unknown config keys for {command}: {unknown}")
        cfg.update(doc)
    cfg.update(flags)
    missing = [k for k in REQUIRED[command] if cfg.get(k) is None]
    if missing:
        raise UsageError(f"{command}: missing required setting(s): {', '.join('--' + k.replace('_', '-') for k in missing)}")
    if "hidden" in cfg and cfg["hidden"] is not None:
        cfg["hidden"] = tuple(cfg["hidden"])
    return cfg


def _sgd(cfg, **extra):
    return SGDConfig(epochs=cfg["epochs"], batch_size=cfg["batch_size"], lr=cfg["lr"],
                     momentum=cfg["momentum"], seed=cfg["seed"], **extra)


def _load(path, expected=None):
    if not Path(path).exists():
        raise UsageError(f"no such file: {path}")
    model = load_model(path)
    if expected is not None and not isinstance(model, expected):
        raise UsageError(f"{path} holds a {type(model).__name__}, expected {expected.__name__}")
    return model


def _data(path) -> Dataset:
    if not Path(path).exists():
        raise UsageError(f"no such file: {path}")
    return load_dataset(path)


class _LossLog:
    def __init__(self, path):
        self.path = path
        self.lines = []

    def __call__(self, epoch, loss):
        self.lines.append(f"{epoch}\t{float(loss)!r}")

    def write(self):
        Path(self.path).write_text("".join(line + "\n" for line in self.lines), encoding="utf-8")


def cmd_train(what, cfg):
    data = _data(cfg["data"])
    log = _LossLog(cfg["log"] or f"{cfg['out']}.log")
    if what == "backbone":
        net = init_backbone(data.d, data.n, cfg["hidden"], cfg["seed"])
        model = pretrain_backbone(net, data.V, data.X, _sgd(cfg, l2=cfg["l2"]), log=log)
    elif what == "dn-pipeline":
        bb = _load(cfg["backbone"], MLP)
        if bb.n_in != data.d:
            raise UsageError(f"backbone takes {bb.n_in} features, data has {data.d}")
        head = ConditionalDN.init(data.n, bb.n_out, cfg["kind"], cfg["hidden"], cfg["reg"], cfg["seed"])
        jobs = cfg["jobs"] if cfg["jobs"] is not None else _default_jobs()
        model = train_pipeline(head, bb.forward(data.V), data.X, _sgd(cfg), jobs=jobs, log=log)
    elif what == "ddn-joint":
        bb = _load(cfg["init_backbone"], MLP)
        head = _load(cfg["init_head"], ConditionalDN)
        if bb.n_in != data.d or head.n != data.n or bb.n_out != head.m:
            raise UsageError(f"dimension mismatch: backbone {bb.n_in}->{bb.n_out}, head m={head.m} n={head.n}, "
                             f"data d={data.d} n={data.n}")
        model = train_joint(DeepDependencyNetwork(bb, head), data.V, data.X, _sgd(cfg), log=log)
    elif what == "mrf":
        bb = _load(cfg["backbone"], MLP) if cfg["backbone"] else None
        if bb is not None and bb.n_in != data.d:
            raise UsageError(f"backbone takes {bb.n_in} features, data has {data.d}")
        E = bb.forward(data.V) if bb is not None else data.V
        Z = np.concatenate([data.X, binarize_evidence(E, cfg["tau_e"])], axis=1)
        edges = learn_structure(Z, neighbor_cap=cfg["neighbor_cap"])
        mrf = conjunctive_mrf(data.n, E.shape[1], edges, cfg["neighbor_cap"])
        mrf = fit_weights(mrf, Z, _sgd(cfg, l2=cfg["l2"]), log=log)
        model = DRFModel(mrf, bb, cfg["tau_e"])
    else:  # pragma: no cover - argparse restricts choices
        raise UsageError(f"unknown training target {what}")
    save_model(model, cfg["out"])
    log.write()
    return 0


def cmd_infer(cfg):
    model = _load(cfg["model"])
    data = _data(cfg["data"])
    if not 0.0 <= cfg["threshold"] <= 1.0:
        raise UsageError("threshold must lie in [0, 1]")
    if isinstance(model, ConditionalDN):
        raise UsageError("a bare DN head needs its backbone; train ddn-joint or pass a ddn archive")
    d = model.n_in if isinstance(model, MLP) else model.d
    if d != data.d:
        raise UsageError(f"model takes {d} features, data has {data.d}")
    if isinstance(model, MLP):
        P = model.forward(data.V)
    elif isinstance(model, DeepDependencyNetwork):
        P = infer_batch(model, data.V, cfg["n_samples"] or 1000, cfg["seed"], cfg["burn_in"])
    else:
        E = model.evidence(data.V)
        P = np.empty((len(data), model.mrf.n_x))
        for r, e in enumerate(E):
            res = drf_predict(model.mrf, e, model.tau_e, cfg["method"], make_rng(cfg["seed"], f"drf-infer/{r}"),
                              n_samples=cfg["n_samples"] or 10_000, burn_in=cfg["burn_in"],
                              i_bound=cfg["i_bound"], max_iters=cfg["max_iters"], damping=cfg["damping"],
                              tol=cfg["tol"], map_mode=cfg["map_mode"], time_budget=cfg["time_budget"])
            P[r] = res.assignment if isinstance(res, MapResult) else res.p
    save_predictions(data.ids, P, cfg["out"])
    if cfg["bits_out"]:
        save_predictions(data.ids, P > cfg["threshold"], cfg["bits_out"], as_bits=True)
    return 0


def cmd_eval(cfg):
    if not Path(cfg["pred"]).exists():
        raise UsageError(f"no such file: {cfg['pred']}")
    ids, P = load_predictions(cfg["pred"])
    data = _data(cfg["data"])
    if P.shape != data.X.shape:
        raise UsageError(f"predictions {P.shape} and truth {data.X.shape} differ in shape")
    pos = {ident: k for k, ident in enumerate(data.ids)}
    if set(ids) != set(pos):
        raise UsageError("prediction ids do not match dataset ids")
    truth = data.X[[pos[i] for i in ids]]
    report = evaluate(P, truth, cfg["threshold"], cfg["top_k"])
    print(report.to_text())
    out = cfg["out"] or f"{cfg['pred']}.metrics.json"
    Path(out).write_text(json.dumps(report.to_dict(), indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return 0


def cmd_gen(cfg):
    rng = make_rng(cfg["seed"], f"gen/{cfg['kind']}")
    if cfg["kind"] == "xor":
        sigma = 0.3 if cfg["sigma"] is None else cfg["sigma"]
        data = gen_xor_dataset(rng, cfg["m"], sigma)
    else:
        n = cfg["n_labels"]
        edges = [(i, i + 1) for i in range(n - 1)]
        weights = [cfg["weight"] * (-1) ** i for i in range(n - 1)]
        data = gen_planted_mrf_dataset(rng, n, cfg["m"], edges, weights, noise_sigma=cfg["sigma"])
    save_dataset(data, cfg["out"])
    return 0


def main(argv=None) -> int:
    parser = build_parser()
    args = vars(parser.parse_args(argv))
    command = args.pop("command")
    what = args.pop("what", None)
    key = f"{command} {what}" if what else command
    try:
        cfg = resolve_config(key, args)
        if command == "train":
            return cmd_train(what, cfg)
        if command == "infer":
            return cmd_infer(cfg)
        if command == "eval":
            return cmd_eval(cfg)
        return cmd_gen(cfg)
    except (UsageError, ArchiveError, DatasetFormatError) as err:
        print(f"ddn: error: {err}", file=sys.stderr)
        return 2
    except (TrainingDivergedError, FloatingPointError) as err:
        print(f"ddn: runtime error: {err}", file=sys.stderr)
        return 1
    except ValueError as err:
        print(f"ddn: error: {err}", file=sys.stderr)
        return 2
    except (OSError, RuntimeError) as err:
        print(f"ddn: runtime error: {err}", file=sys.stderr)
        return 1


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
