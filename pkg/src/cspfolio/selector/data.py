"""Approach identifiers, performance records and the dense run matrix."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Iterable

import numpy as np

STATUSES = ("solved", "timeout", "error")


@dataclass(frozen=True)
class ApproachId:
    """``csp:<solver>`` or ``sat:<encoding>:<solver>``."""

    family: str
    solver: str
    encoding: str = ""

    def __post_init__(self):
        if self.family not in ("csp", "sat"):
            raise ValueError(f"unknown approach family {self.family!r}")
        if (self.family == "sat") != bool(self.encoding):
            raise ValueError("sat approaches need an encoding, csp approaches must not have one")

    @classmethod
    def parse(cls, text) -> ApproachId:
        if isinstance(text, ApproachId):
            return text
        parts = str(text).split(":")
        if parts[0] == "csp" and len(parts) == 2:
            return cls("csp", parts[1])
        if parts[0] == "sat" and len(parts) == 3:
            from ..encoder import EncodingKind

            return cls("sat", parts[2], EncodingKind.parse(parts[1]).value)
        raise ValueError(f"malformed approach id {text!r}")

    def __str__(self):
        if self.family == "csp":
            return f"csp:{self.solver}"
        return f"sat:{self.encoding}:{self.solver}"

    def __lt__(self, other):
        return str(self) < str(other)


def full_portfolio(csp_solvers: Iterable[str], encodings: Iterable[str], sat_solvers: Iterable[str]) -> list[ApproachId]:
    """CSP solvers plus the full encoding x SAT-solver cross product."""
    out = [ApproachId("csp", s) for s in csp_solvers]
    out += [ApproachId("sat", s, e) for e in encodings for s in sat_solvers]
    return out


@dataclass(frozen=True)
class PerformanceRecord:
    instance: str
    approach: ApproachId
    status: str
    runtime: float
    timeout: float

    def __post_init__(self):
        object.__setattr__(self, "approach", ApproachId.parse(self.approach))
        if self.status not in STATUSES:
            raise ValueError(f"unknown status {self.status!r}")
        if not self.timeout > 0:
            raise ValueError("timeout must be positive")
        if self.runtime < 0 or not math.isfinite(self.runtime):
            raise ValueError("runtime must be finite and non-negative")
        if self.status == "solved" and self.runtime > self.timeout:
            raise ValueError(f"{self.instance}/{self.approach}: solved record exceeds its timeout")
        if self.status == "timeout" and self.runtime != self.timeout:
            raise ValueError(f"{self.instance}/{self.approach}: timeout record must carry runtime == timeout")

    @property
    def solved(self):
        return self.status == "solved"

    @property
    def par10(self):
        return self.runtime if self.solved else 10.0 * self.timeout


class IncompleteMatrix(ValueError):
    pass


class RunMatrix:
    """Dense instances x approaches table of performance records."""

    def __init__(self, records: Iterable[PerformanceRecord]):
        table = {}
        for r in records:
            key = (r.instance, str(r.approach))
            if key in table:
                raise ValueError(f"duplicate record for {key}")
            table[key] = r
        self.instances = sorted({k[0] for k in table})
        self.approaches = sorted({r.approach for r in table.values()})
        missing = [
            (i, str(a)) for i in self.instances for a in self.approaches if (i, str(a)) not in table
        ]
        if missing:
            raise IncompleteMatrix(f"{len(missing)} missing (instance, approach) pairs, e.g. {missing[:3]}")
        self._table = table

    def record(self, instance, approach) -> PerformanceRecord:
        return self._table[(instance, str(approach))]

    def records(self):
        return [self._table[(i, str(a))] for i in self.instances for a in self.approaches]

    def __len__(self):
        return len(self.instances)

    def scores(self, approaches=None) -> np.ndarray:
        """PAR10 score matrix, rows = instances, columns = ``approaches``."""
        approaches = self.approaches if approaches is None else [ApproachId.parse(a) for a in approaches]
        return np.array([[self._table[(i, str(a))].par10 for a in approaches] for i in self.instances])

    def solved(self, approaches=None) -> np.ndarray:
        approaches = self.approaches if approaches is None else [ApproachId.parse(a) for a in approaches]
        return np.array([[self._table[(i, str(a))].solved for a in approaches] for i in self.instances])

    def subset(self, instances) -> RunMatrix:
        keep = set(instances)
        return RunMatrix(r for r in self._table.values() if r.instance in keep)

    def best_labels(self) -> list[str]:
        """Per-instance best approach (ties to the lexicographically lowest id)."""
        scores = self.scores()
        return [str(self.approaches[int(np.argmin(row))]) for row in scores]


CSV_FIELDS = ["instance", "approach", "status", "runtime", "timeout"]


def write_matrix_csv(records: Iterable[PerformanceRecord], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(CSV_FIELDS)
        for r in records:
            w.writerow([r.instance, str(r.approach), r.status, repr(float(r.runtime)), repr(float(r.timeout))])


def read_records_csv(path) -> list[PerformanceRecord]:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != CSV_FIELDS:
            raise ValueError(f"{path}: expected columns {CSV_FIELDS}, got {reader.fieldnames}")
        return [
            PerformanceRecord(row["instance"], row["approach"], row["status"],
                              float(row["runtime"]), float(row["timeout"]))
            for row in reader
        ]


def read_matrix_csv(path) -> RunMatrix:
    return RunMatrix(read_records_csv(path))
