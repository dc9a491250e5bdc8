"""Synthetic run matrices with a planted feature/runtime relationship."""
from __future__ import annotations

import numpy as np

from .data import ApproachId, PerformanceRecord, RunMatrix
from .hierarchy import _leaves, build_tree


def planted_corpus(approaches, n_instances=200, noise=0.0, seed=0, timeout=3600.0,
                   base=10.0, slope=100.0, n_distractors=2, branch_features=True):
    """Runtime of approach ``j`` is ``base + slope * f_j`` plus optional noise.

    Feature ``f_j`` is uniform on [0, 1], one per approach. With
    ``branch_features`` every internal branch of the selection tree also gets
    the feature ``min f_j`` over the approaches beneath it, so the best runtime
    under any branch is itself linear in one feature. ``n_distractors``
    irrelevant uniform features come last. ``noise`` is the standard deviation
    of additive Gaussian runtime noise as a fraction of ``slope``; noisy
    runtimes are clipped to stay positive.

    Returns ``(matrix, features)`` with feature rows in ``matrix.instances`` order.
    """
    approaches = sorted(ApproachId.parse(a) for a in approaches)
    rng = np.random.default_rng(seed)
    k = len(approaches)
    F = rng.uniform(0.0, 1.0, size=(n_instances, k))
    distract = rng.uniform(0.0, 1.0, size=(n_instances, n_distractors))
    runtimes = base + slope * F
    if noise:
        runtimes = np.clip(runtimes + rng.normal(0.0, noise * slope, size=runtimes.shape), 0.01, None)
    columns = [F]
    if branch_features:
        tree = build_tree(approaches)
        for branches in tree.values():
            for b in branches:
                if b[0] == "node":
                    columns.append(F[:, _leaves(tree, b)].min(axis=1))
    columns.append(distract)
    features = np.column_stack(columns)

    width = len(str(n_instances - 1))
    names = [f"p{i:0{width}d}" for i in range(n_instances)]
    records = []
    for i, name in enumerate(names):
        for j, a in enumerate(approaches):
            t = float(runtimes[i, j])
            if t >= timeout:
                records.append(PerformanceRecord(name, a, "timeout", timeout, timeout))
            else:
                records.append(PerformanceRecord(name, a, "solved", t, timeout))
    # names are zero-padded, so the matrix's sorted instance order is creation order
    return RunMatrix(records), features
