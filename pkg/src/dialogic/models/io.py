"""Versioned JSON documents for trained models."""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from dialogic.models.baselines import (
    GradientBoostedTrees,
    LinearSVM,
    LogisticRegressionGD,
    _Node,
)
from dialogic.models.lstm import GATES, PARAM_NAMES, LstmClassifier, LstmParams

FORMAT_VERSION = 1


class UnknownFormat(ValueError):
    pass


def _dump(doc, path):
    Path(path).write_text(json.dumps(doc, sort_keys=True, separators=(",", ":")) + "\n",
                          encoding="utf-8")


def _read(path, kind):
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    if doc.get("format_version") != FORMAT_VERSION:
        raise UnknownFormat(f"unsupported format_version {doc.get('format_version')!r}")
    if doc.get("model") != kind:
        raise UnknownFormat(f"expected a {kind!r} document, found {doc.get('model')!r}")
    return doc


def lstm_to_dict(model: LstmClassifier) -> dict:
    p = model.params_
    instr = model.instruction
    return {
        "format_version": FORMAT_VERSION,
        "model": "lstm",
        "instruction": None if instr is None else str(getattr(instr, "value", instr)),
        "dims": {"input": p.input_size, "hidden": p.hidden_size, "ff": p.ff_size},
        "gate_order": list(GATES),
        "weights": {name: getattr(p, name).tolist() for name in PARAM_NAMES},
        "metadata": {
            "seed": model.seed,
            "epochs_run": model.epochs_run_,
            "best_epoch": model.best_epoch_,
            "best_val_auc": model.best_val_auc_,
            "history": model.history_,
        },
    }


def save_lstm(model: LstmClassifier, path) -> None:
    _dump(lstm_to_dict(model), path)


def load_lstm(path, table) -> LstmClassifier:
    doc = _read(path, "lstm")
    w = doc["weights"]
    params = LstmParams(*(np.array(w[name], dtype=np.float64) for name in PARAM_NAMES))
    return LstmClassifier.from_params(params, table, doc["instruction"], **doc["metadata"])


def _node_to_dict(node):
    if node.is_leaf:
        return {"value": node.value}
    return {"feature": node.feature, "threshold": node.threshold, "value": node.value,
            "left": _node_to_dict(node.left), "right": _node_to_dict(node.right)}


def _node_from_dict(d):
    if "left" not in d:
        return _Node(d["value"])
    return _Node(d["value"], d["feature"], d["threshold"],
                 _node_from_dict(d["left"]), _node_from_dict(d["right"]))


_LINEAR = {"logreg": LogisticRegressionGD, "svm": LinearSVM}


def baseline_to_dict(est, instruction=None) -> dict:
    doc = {"format_version": FORMAT_VERSION, "instruction": instruction,
           "params": est.get_params()}
    if isinstance(est, GradientBoostedTrees):
        doc.update(model="gbdt", base_score=est.base_score_,
                   n_features=est.n_features_in_,
                   trees=[_node_to_dict(t) for t in est.trees_])
    else:
        kind = "svm" if isinstance(est, LinearSVM) else "logreg"
        doc.update(model=kind, coef=est.coef_.tolist(), intercept=float(est.intercept_))
    return doc


def save_baseline(est, path, instruction=None) -> None:
    _dump(baseline_to_dict(est, instruction), path)


def load_baseline(path):
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    if doc.get("format_version") != FORMAT_VERSION:
        raise UnknownFormat(f"unsupported format_version {doc.get('format_version')!r}")
    kind = doc.get("model")
    if kind == "gbdt":
        est = GradientBoostedTrees(**doc["params"])
        est.base_score_ = doc["base_score"]
        est.trees_ = [_node_from_dict(t) for t in doc["trees"]]
        est.n_features_in_ = doc["n_features"]
    elif kind in _LINEAR:
        est = _LINEAR[kind](**doc["params"])
        est.coef_ = np.array(doc["coef"], dtype=np.float64)
        est.intercept_ = doc["intercept"]
    else:
        raise UnknownFormat(f"unknown model kind {kind!r}")
    est.classes_ = np.array([0, 1])
    return est
