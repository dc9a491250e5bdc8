"""PAR10 and virtual-best-solver scoring."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .data import ApproachId, PerformanceRecord, RunMatrix


def par10(items, timeout: float | None = None) -> float:
    """Mean penalised runtime.

    ``items`` is either a sequence of PerformanceRecord, or a sequence of
    runtimes where ``None``/``inf`` marks an unsolved run (``timeout`` required).
    """
    items = list(items)
    if not items:
        raise ValueError("par10 of an empty record set")
    if isinstance(items[0], PerformanceRecord):
        limits = {r.timeout for r in items}
        if timeout is not None and limits != {timeout}:
            raise ValueError("records disagree with the given timeout")
        if len(limits) != 1:
            raise ValueError(f"inconsistent timeouts {sorted(limits)}")
        return sum(r.par10 for r in items) / len(items)
    if timeout is None or timeout <= 0:
        raise ValueError("a positive timeout is required for raw runtimes")
    total = 0.0
    for t in items:
        if t is None or math.isinf(t) or t >= timeout:
            total += 10.0 * timeout
        else:
            total += float(t)
    return total / len(items)


@dataclass
class VbsResult:
    par10: float
    n_solved: int
    choice: dict[str, ApproachId]


def virtual_best(matrix: RunMatrix, subset=None) -> VbsResult:
    """Per-instance oracle over ``subset`` (default: every approach)."""
    approaches = matrix.approaches if subset is None else sorted(ApproachId.parse(a) for a in subset)
    if not approaches:
        raise ValueError("empty approach subset")
    scores = matrix.scores(approaches)
    solved = matrix.solved(approaches)
    best = np.argmin(scores, axis=1)
    rows = np.arange(len(matrix.instances))
    choice = {inst: approaches[int(b)] for inst, b in zip(matrix.instances, best)}
    return VbsResult(float(scores[rows, best].mean()), int(solved.any(axis=1).sum()), choice)


def selection_score(matrix: RunMatrix, choices) -> tuple[float, int]:
    """(mean PAR10, n_solved) of per-instance choices ``{instance: approach}``."""
    total, solved = 0.0, 0
    for inst, a in choices.items():
        r = matrix.record(inst, a)
        total += r.par10
        solved += r.solved
    return total / len(choices), solved


def subset_filters(approaches):
    """Named portfolio restrictions for the virtual-best comparison table."""
    approaches = [ApproachId.parse(a) for a in approaches]
    out = {"VB all": approaches}
    csp = [a for a in approaches if a.family == "csp"]
    sat = [a for a in approaches if a.family == "sat"]
    if csp:
        out["VB CSP"] = csp
    if sat:
        out["VB SAT"] = sat
        for enc in sorted({a.encoding for a in sat}):
            out[f"VB {enc} encoding"] = [a for a in sat if a.encoding == enc]
    return out
