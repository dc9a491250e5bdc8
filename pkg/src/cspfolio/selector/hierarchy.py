"""Hierarchical (representation -> encoding -> solver) and flat selectors."""
from __future__ import annotations

import logging

import numpy as np
from sklearn.base import BaseEstimator

from .data import ApproachId
from .learners import ClusterBest, KNNClassifier, make_learner, parse_learner

log = logging.getLogger(__name__)

# Default per-node learners: regression trees on CSP features for the top two
# decisions, linear models below; the support-encoded solver choice reads
# direct-order SAT features.
DEFAULT_HIERARCHY = {
    "root": {"learner": "tree", "schema": "csp"},
    "csp": {"learner": "tree", "schema": "csp"},
    "encoding": {"learner": "linear", "schema": "csp"},
    "solver:direct": {"learner": "linear", "schema": "csp"},
    "solver:directorder": {"learner": "linear", "schema": "csp"},
    "solver:support": {"learner": "linear", "schema": "sat-directorder"},
}


TARGETS = ("log1p", "raw")


class BranchChooser(BaseEstimator):
    """Pick one of several branches from instance features.

    Training data is a cost matrix (rows = instances, columns = branches) in
    PAR10 seconds. Regression learners fit one model per branch on
    ``log1p(cost)`` (or the raw cost with ``target="raw"``) and choose the
    smallest prediction; classifiers learn the index of the cheapest branch;
    cluster-best learns a branch per cluster.
    """

    def __init__(self, learner="linear", target="log1p"):
        self.learner = learner
        self.target = target

    def fit(self, X, costs):
        X = np.asarray(X, dtype=float)
        costs = np.asarray(costs, dtype=float)
        family, _ = parse_learner(self.learner)
        if self.target not in TARGETS:
            raise ValueError(f"unknown regression target {self.target!r}")
        self.n_branches_ = costs.shape[1]
        best = np.argmin(costs, axis=1)
        self.empty_branches_ = sorted(set(range(self.n_branches_)) - set(best.tolist()))
        self.constant_ = None
        self.models_ = []
        if family in ("linear", "knn", "tree"):
            target = np.log1p(costs) if self.target == "log1p" else costs
            self.models_ = [make_learner(self.learner).fit(X, target[:, b]) for b in range(self.n_branches_)]
        elif family == "knn-class":
            if len(set(best.tolist())) == 1:
                self.constant_ = int(best[0])
            else:
                self.models_ = [make_learner(self.learner).fit(X, best)]
        else:
            self.models_ = [make_learner(self.learner).fit(X, costs)]
        return self

    def predict_costs(self, X):
        """Per-branch predictions on the training target scale."""
        return np.column_stack([m.predict(X) for m in self.models_])

    def predict(self, X):
        X = np.asarray(X, dtype=float)
        if self.constant_ is not None:
            return np.full(len(X), self.constant_, dtype=int)
        m = self.models_[0]
        if isinstance(m, (KNNClassifier, ClusterBest)):
            return np.asarray(m.predict(X), dtype=int)
        return np.argmin(self.predict_costs(X), axis=1)


def _features(X, schema):
    if isinstance(X, dict):
        if schema not in X:
            raise KeyError(f"feature schema {schema!r} not supplied (have {sorted(X)})")
        return np.asarray(X[schema], dtype=float)
    return np.asarray(X, dtype=float)


def _n_rows(X):
    if isinstance(X, dict):
        return len(next(iter(X.values())))
    return len(X)


def build_tree(approaches):
    """Decision nodes for a portfolio: ``{node: [("node", name) | ("leaf", index)]}``.

    Nodes: ``root`` (CSP vs SAT), ``csp`` (CSP solver), ``encoding`` and one
    ``solver:<encoding>`` node per encoding.
    """
    approaches = [ApproachId.parse(a) for a in approaches]
    csp = [i for i, a in enumerate(approaches) if a.family == "csp"]
    encodings = sorted({a.encoding for a in approaches if a.family == "sat"})
    tree = {"root": []}
    if csp:
        tree["root"].append(("node", "csp"))
        tree["csp"] = [("leaf", i) for i in csp]
    if encodings:
        tree["root"].append(("node", "encoding"))
        tree["encoding"] = [("node", f"solver:{e}") for e in encodings]
        for e in encodings:
            tree[f"solver:{e}"] = [("leaf", i) for i, a in enumerate(approaches) if a.encoding == e]
    return tree


def _leaves(tree, branch):
    kind, ref = branch
    if kind == "leaf":
        return [ref]
    return [i for b in tree[ref] for i in _leaves(tree, b)]


class HierarchicalSelector(BaseEstimator):
    """Tree of branch choosers: CSP vs SAT, then CSP solver or encoding, then SAT solver.

    ``nodes`` maps node names to ``{"learner": ..., "schema": ...}``; unlisted
    nodes use the defaults. ``fit(X, costs)`` takes features (an array, or a
    dict schema -> array) and a PAR10 cost matrix whose columns follow
    ``approaches``. Each node is trained on the cheapest cost under each of
    its branches.
    """

    def __init__(self, approaches, nodes=None, default_learner="linear", default_schema="csp", target="log1p"):
        self.approaches = approaches
        self.nodes = nodes
        self.default_learner = default_learner
        self.default_schema = default_schema
        self.target = target

    def node_config(self, name):
        cfg = dict(learner=self.default_learner, schema=self.default_schema)
        cfg.update((self.nodes or {}).get(name, {}))
        return cfg

    def fit(self, X, costs):
        costs = np.asarray(costs, dtype=float)
        self.approaches_ = [ApproachId.parse(a) for a in self.approaches]
        if costs.shape[1] != len(self.approaches_):
            raise ValueError("cost matrix columns do not match the approaches")
        self.tree_ = build_tree(self.approaches_)
        self.choosers_ = {}
        self.flags_ = {}
        for name, branches in self.tree_.items():
            if len(branches) < 2:
                continue
            cfg = self.node_config(name)
            branch_costs = np.column_stack([costs[:, _leaves(self.tree_, b)].min(axis=1) for b in branches])
            chooser = BranchChooser(cfg["learner"], self.target).fit(_features(X, cfg["schema"]), branch_costs)
            if chooser.empty_branches_ or chooser.constant_ is not None:
                self.flags_[name] = {"empty_branches": chooser.empty_branches_,
                                     "constant": chooser.constant_ is not None}
                log.debug("node %s: branches never best in training: %s", name, chooser.empty_branches_)
            self.choosers_[name] = chooser
        return self

    def decision_paths(self, X):
        n = _n_rows(X)
        picks = {name: ch.predict(_features(X, self.node_config(name)["schema"]))
                 for name, ch in self.choosers_.items()}
        paths = []
        for r in range(n):
            node, path = "root", []
            while True:
                branches = self.tree_[node]
                b = int(picks[node][r]) if node in picks else 0
                kind, ref = branches[b]
                path.append((node, b))
                if kind == "leaf":
                    paths.append((path, ref))
                    break
                node = ref
        return paths

    def predict_index(self, X):
        return np.array([leaf for _, leaf in self.decision_paths(X)], dtype=int)

    def predict(self, X):
        return np.array([str(self.approaches_[i]) for i in self.predict_index(X)])


class FlatSelector(BaseEstimator):
    """One chooser over every approach in the portfolio."""

    def __init__(self, approaches, learner="linear", schema="csp", target="log1p"):
        self.approaches = approaches
        self.learner = learner
        self.schema = schema
        self.target = target

    def fit(self, X, costs):
        self.approaches_ = [ApproachId.parse(a) for a in self.approaches]
        costs = np.asarray(costs, dtype=float)
        if costs.shape[1] != len(self.approaches_):
            raise ValueError("cost matrix columns do not match the approaches")
        if len(self.approaches_) == 1:
            self.chooser_ = None
        else:
            self.chooser_ = BranchChooser(self.learner, self.target).fit(_features(X, self.schema), costs)
        return self

    def predict_index(self, X):
        F = _features(X, self.schema)
        if self.chooser_ is None:
            return np.zeros(len(F), dtype=int)
        return self.chooser_.predict(F)

    def predict(self, X):
        return np.array([str(self.approaches_[i]) for i in self.predict_index(X)])
