"""Stratified k-fold cross-validation of selectors on a run matrix."""
from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass, field

import numpy as np
from sklearn.base import clone

from .data import RunMatrix
from .scoring import selection_score, virtual_best


def stratified_folds(labels, n_folds: int, seed: int = 0) -> list[np.ndarray]:
    """Partition sample indices into ``n_folds`` test folds stratified by ``labels``.

    Samples are grouped by label (labels in sorted order), shuffled within a
    label by ``seed``, then dealt round-robin with the dealing position carried
    across labels, so fold sizes differ by at most one and each label's count
    per fold is the floor or ceiling of its share.
    """
    labels = list(labels)
    if n_folds < 2:
        raise ValueError("need at least two folds")
    if len(labels) < n_folds:
        raise ValueError(f"{len(labels)} samples cannot fill {n_folds} folds")
    rng = np.random.default_rng(seed)
    groups = defaultdict(list)
    for i, lab in enumerate(labels):
        groups[lab].append(i)
    folds = [[] for _ in range(n_folds)]
    pos = 0
    for lab in sorted(groups, key=str):
        members = np.array(groups[lab])
        rng.shuffle(members)
        for i in members:
            folds[pos % n_folds].append(int(i))
            pos += 1
    return [np.array(sorted(f), dtype=int) for f in folds]


def _rows(features, idx):
    if isinstance(features, dict):
        return {k: np.asarray(v)[idx] for k, v in features.items()}
    return np.asarray(features)[idx]


@dataclass
class CvResult:
    par10: float
    n_solved: int
    fold_par10: list[float]
    decisions: list[tuple[str, int, str, float]] = field(default_factory=list)  # instance, fold, approach, score
    vbs_par10: float = 0.0

    @property
    def choices(self):
        return {inst: a for inst, _, a, _ in self.decisions}


def cross_validate(matrix: RunMatrix, features, selector, folds: int = 10, seed: int = 0) -> CvResult:
    """Train a clone of ``selector`` on k-1 folds, predict the held-out fold.

    ``features`` rows follow ``matrix.instances`` (an array or a dict of
    schema -> array). The selector's ``approaches`` must match the matrix.
    """
    if len(matrix) < folds:
        raise ValueError(f"{len(matrix)} instances is fewer than {folds} folds")
    costs = matrix.scores(selector.approaches)
    parts = stratified_folds(matrix.best_labels(), folds, seed)
    decisions = []
    fold_scores = []
    all_idx = np.arange(len(matrix))
    for k, test in enumerate(parts):
        train = np.setdiff1d(all_idx, test)
        model = clone(selector).fit(_rows(features, train), costs[train])
        picked = model.predict(_rows(features, test))
        scores = []
        for i, a in zip(test, picked):
            inst = matrix.instances[i]
            s = matrix.record(inst, a).par10
            scores.append(s)
            decisions.append((inst, k, str(a), s))
        fold_scores.append(float(np.mean(scores)))
    decisions.sort(key=lambda d: matrix.instances.index(d[0]))
    choices = {d[0]: d[2] for d in decisions}
    par10, solved = selection_score(matrix, choices)
    return CvResult(par10, solved, fold_scores, decisions, virtual_best(matrix, selector.approaches).par10)
