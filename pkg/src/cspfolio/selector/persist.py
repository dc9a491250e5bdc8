"""Versioned JSON documents for trained selectors."""
from __future__ import annotations

import json

import numpy as np

from .data import ApproachId
from .hierarchy import BranchChooser, FlatSelector, HierarchicalSelector
from .learners import (
    ClusterBest,
    KNNClassifier,
    KNNRegressor,
    RegressionTree,
    RidgeRegression,
    _Standardizer,
)

FORMAT = "cspfolio-selector"
VERSION = 1


def _learner_to_dict(m):
    if isinstance(m, RidgeRegression):
        return {"type": "ridge", "alpha": m.alpha, "coef": m.coef_.tolist(), "intercept": m.intercept_}
    if isinstance(m, KNNRegressor):
        return {"type": "knn", "k": m.k, "scaler": m.scaler_.to_dict(), "X": m.X_.tolist(), "y": m.y_.tolist()}
    if isinstance(m, KNNClassifier):
        return {"type": "knn-class", "k": m.k, "scaler": m.scaler_.to_dict(), "X": m.X_.tolist(),
                "codes": m.codes_.tolist(), "classes": m.classes_.tolist()}
    if isinstance(m, RegressionTree):
        return {"type": "tree", "min_samples_leaf": m.min_samples_leaf, "max_depth": m.max_depth,
                "nodes": [[int(f), float(t), int(l), int(r), float(v)] for f, t, l, r, v in m.nodes_]}
    if isinstance(m, ClusterBest):
        return {"type": "cluster", "n_clusters": m.n_clusters, "seed": m.seed, "max_iter": m.max_iter,
                "scaler": m.scaler_.to_dict(), "centers": m.cluster_centers_.tolist(),
                "choice": m.cluster_choice_.tolist()}
    raise TypeError(f"cannot serialise {type(m).__name__}")


def _learner_from_dict(d):
    t = d["type"]
    if t == "ridge":
        m = RidgeRegression(alpha=d["alpha"])
        m.coef_, m.intercept_ = np.array(d["coef"], dtype=float), d["intercept"]
        m.n_features_in_ = len(m.coef_)
    elif t == "knn":
        m = KNNRegressor(k=d["k"])
        m.scaler_ = _Standardizer.from_dict(d["scaler"])
        m.X_ = np.array(d["X"], dtype=float).reshape(len(d["y"]), -1)
        m.y_ = np.array(d["y"], dtype=float)
    elif t == "knn-class":
        m = KNNClassifier(k=d["k"])
        m.scaler_ = _Standardizer.from_dict(d["scaler"])
        m.codes_ = np.array(d["codes"], dtype=int)
        m.X_ = np.array(d["X"], dtype=float).reshape(len(m.codes_), -1)
        m.classes_ = np.array(d["classes"])
    elif t == "tree":
        m = RegressionTree(min_samples_leaf=d["min_samples_leaf"], max_depth=d["max_depth"])
        m.nodes_ = [list(n) for n in d["nodes"]]
    elif t == "cluster":
        m = ClusterBest(n_clusters=d["n_clusters"], max_iter=d["max_iter"], seed=d["seed"])
        m.scaler_ = _Standardizer.from_dict(d["scaler"])
        m.cluster_centers_ = np.array(d["centers"], dtype=float)
        m.cluster_choice_ = np.array(d["choice"], dtype=int)
    else:
        raise ValueError(f"unknown learner type {t!r}")
    return m


def _chooser_to_dict(ch: BranchChooser):
    return {
        "learner": ch.learner,
        "target": ch.target,
        "n_branches": ch.n_branches_,
        "constant": ch.constant_,
        "empty_branches": list(ch.empty_branches_),
        "models": [_learner_to_dict(m) for m in ch.models_],
    }


def _chooser_from_dict(d):
    ch = BranchChooser(d["learner"], d["target"])
    ch.n_branches_ = d["n_branches"]
    ch.constant_ = d["constant"]
    ch.empty_branches_ = d["empty_branches"]
    ch.models_ = [_learner_from_dict(m) for m in d["models"]]
    return ch


def selector_to_dict(sel) -> dict:
    doc = {"format": FORMAT, "version": VERSION, "approaches": [str(a) for a in sel.approaches_]}
    if isinstance(sel, HierarchicalSelector):
        doc["kind"] = "hierarchical"
        doc["nodes"] = {}
        for name, branches in sel.tree_.items():
            cfg = sel.node_config(name)
            entry = {"branches": [list(b) for b in branches], "learner": cfg["learner"], "schema": cfg["schema"]}
            if name in sel.choosers_:
                entry["model"] = _chooser_to_dict(sel.choosers_[name])
            if name in sel.flags_:
                entry["flags"] = sel.flags_[name]
            doc["nodes"][name] = entry
        doc["default_learner"] = sel.default_learner
        doc["default_schema"] = sel.default_schema
        doc["target"] = sel.target
    elif isinstance(sel, FlatSelector):
        doc["kind"] = "flat"
        doc["learner"] = sel.learner
        doc["schema"] = sel.schema
        doc["target"] = sel.target
        doc["model"] = _chooser_to_dict(sel.chooser_) if sel.chooser_ is not None else None
    else:
        raise TypeError(f"cannot serialise {type(sel).__name__}")
    return doc


def selector_from_dict(doc: dict):
    if doc.get("format") != FORMAT:
        raise ValueError("not a selector document")
    if doc.get("version") != VERSION:
        raise ValueError(f"unsupported selector document version {doc.get('version')}")
    approaches = doc["approaches"]
    if doc["kind"] == "hierarchical":
        nodes = {name: {"learner": e["learner"], "schema": e["schema"]} for name, e in doc["nodes"].items()}
        sel = HierarchicalSelector(approaches, nodes, doc["default_learner"], doc["default_schema"], doc["target"])
        sel.approaches_ = [ApproachId.parse(a) for a in approaches]
        sel.tree_ = {name: [tuple(b) for b in e["branches"]] for name, e in doc["nodes"].items()}
        sel.choosers_ = {name: _chooser_from_dict(e["model"]) for name, e in doc["nodes"].items() if "model" in e}
        sel.flags_ = {name: e["flags"] for name, e in doc["nodes"].items() if "flags" in e}
        return sel
    if doc["kind"] == "flat":
        sel = FlatSelector(approaches, doc["learner"], doc["schema"], doc["target"])
        sel.approaches_ = [ApproachId.parse(a) for a in approaches]
        sel.chooser_ = _chooser_from_dict(doc["model"]) if doc["model"] is not None else None
        return sel
    raise ValueError(f"unknown selector kind {doc['kind']!r}")


def save_selector(sel, path) -> None:
    with open(path, "w") as fh:
        json.dump(selector_to_dict(sel), fh, indent=1)


def load_selector(path):
    with open(path) as fh:
        return selector_from_dict(json.load(fh))
