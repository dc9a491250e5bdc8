"""Uniform random binary CSPs with exact constraint counts and exact tightness.

Seeds for a suite are derived with numpy's ``SeedSequence``::

    child_seed = SeedSequence(master_seed, spawn_key=(point, replica)).generate_state(1, uint64)[0]

and each instance draws from ``numpy.random.Generator(PCG64(child_seed))``.
This derivation is part of the file format contract and must not change.
"""
from __future__ import annotations

import csv
import itertools
from dataclasses import dataclass, replace
from decimal import ROUND_HALF_UP, Decimal
from pathlib import Path

import numpy as np

from .csp import Constraint, CspInstance, Extensional


@dataclass(frozen=True)
class UrbParams:
    n_vars: int
    domain_size: int
    n_constraints: int
    tightness: float
    seed: int = 0

    def __post_init__(self):
        if self.n_vars < 1:
            raise ValueError("n_vars must be >= 1")
        if self.domain_size < 1:
            raise ValueError("domain_size must be >= 1")
        if not 0 <= self.n_constraints <= self.n_vars * (self.n_vars - 1) // 2:
            raise ValueError(
                f"n_constraints={self.n_constraints} exceeds the {self.n_vars * (self.n_vars - 1) // 2} available pairs"
            )
        if not 0.0 <= self.tightness <= 1.0:
            raise ValueError("tightness must lie in [0, 1]")
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must be a 64-bit unsigned integer")

    @property
    def n_forbidden(self) -> int:
        return forbidden_count(self.tightness, self.domain_size)


def forbidden_count(tightness: float, domain_size: int) -> int:
    """round(t * d^2), halves rounded up."""
    exact = Decimal(repr(float(tightness))) * domain_size * domain_size
    return int(exact.quantize(Decimal(1), rounding=ROUND_HALF_UP))


def derive_seed(master_seed: int, point: int, replica: int) -> int:
    ss = np.random.SeedSequence(master_seed, spawn_key=(point, replica))
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def generate_urb(params: UrbParams) -> CspInstance:
    n, d, m = params.n_vars, params.domain_size, params.n_constraints
    rng = np.random.Generator(np.random.PCG64(params.seed))
    pairs = list(itertools.combinations(range(n), 2))
    chosen = sorted(rng.choice(len(pairs), size=m, replace=False).tolist()) if m else []
    k = params.n_forbidden
    constraints = []
    for p in chosen:
        cells = rng.choice(d * d, size=k, replace=False).tolist() if k else []
        tuples = frozenset((c // d + 1, c % d + 1) for c in cells)
        constraints.append(Constraint(pairs[p], Extensional(tuples, allowed=False)))
    domains = [(f"V{i}", range(1, d + 1)) for i in range(n)]
    tags = {"n": str(n), "d": str(d), "m": str(m), "t": repr(params.tightness), "seed": str(params.seed)}
    name = f"urb-n{n}-d{d}-m{m}-t{params.tightness:g}-s{params.seed}"
    return CspInstance.from_domains(domains, constraints, name=name, tags=tags)


def tightness_grid(start: float, stop: float, step: float) -> list[float]:
    """Inclusive grid with values rounded to the step's decimal precision."""
    digits = max(0, -Decimal(repr(step)).as_tuple().exponent)
    count = int(round((stop - start) / step))
    return [round(start + i * step, digits) for i in range(count + 1)]


def generate_suite(grid, instances_per_point: int, master_seed: int = 0):
    """``[(params, instance)]`` for every grid point and replica.

    ``grid`` is a sequence of UrbParams whose ``seed`` fields are ignored.
    """
    grid = list(grid)
    if not grid:
        raise ValueError("empty parameter grid")
    out = []
    for point, template in enumerate(grid):
        for replica in range(instances_per_point):
            params = replace(template, seed=derive_seed(master_seed, point, replica))
            out.append((params, generate_urb(params)))
    return out


MANIFEST_FIELDS = ["n_vars", "domain_size", "n_constraints", "tightness", "seed", "path"]


def write_manifest(rows, path) -> None:
    """``rows``: iterable of (UrbParams, file path)."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(MANIFEST_FIELDS)
        for p, file in rows:
            w.writerow([p.n_vars, p.domain_size, p.n_constraints, repr(p.tightness), p.seed, str(file)])


def read_manifest(path) -> list[tuple[UrbParams, Path]]:
    base = Path(path).parent
    out = []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            p = UrbParams(int(row["n_vars"]), int(row["domain_size"]), int(row["n_constraints"]),
                          float(row["tightness"]), int(row["seed"]))
            file = Path(row["path"])
            out.append((p, file if file.is_absolute() else base / file))
    return out
