"""Solver adapters, verified approach runs and experiment drivers."""
from __future__ import annotations

import csv
import json
import logging
import os
import shlex
import shutil
import signal
import subprocess
import tempfile
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import cspfile
from .cnf import DpllConfig, solve_dpll
from .csp import CspInstance, SearchConfig, is_consistent, solve_backtracking
from .encoder import DecodeError, decode_and_verify, encode, provenance_comments
from .features import FeatureTable
from .generator import UrbParams, generate_suite, tightness_grid
from .selector import (
    ApproachId,
    FlatSelector,
    HierarchicalSelector,
    PerformanceRecord,
    RunMatrix,
    cross_validate,
    subset_filters,
    virtual_best,
)
from .selector.hierarchy import DEFAULT_HIERARCHY

log = logging.getLogger(__name__)

SOLVER_PATH_ENV = "CSPFOLIO_SOLVER_PATH"
ADAPTER_KINDS = ("sat-internal", "csp-internal", "sat-external", "csp-external")
GRACE_SECONDS = 1.0


@dataclass(frozen=True)
class SolverAdapter:
    """How to run one solver.

    External commands are token templates; ``{input}`` becomes the instance
    file (DIMACS for SAT, native CSP format for CSP) and ``{seed}`` the run seed.
    """

    name: str
    kind: str
    command: tuple[str, ...] = ()
    options: dict = field(default_factory=dict, hash=False)
    memory_mb: int | None = None

    def __post_init__(self):
        if self.kind not in ADAPTER_KINDS:
            raise ValueError(f"unknown adapter kind {self.kind!r}")
        if self.kind.endswith("external") and not self.command:
            raise ValueError(f"external adapter {self.name!r} needs a command")
        if isinstance(self.command, str):
            object.__setattr__(self, "command", tuple(shlex.split(self.command)))

    @property
    def family(self):
        return self.kind.split("-")[0]

    @property
    def internal(self):
        return self.kind.endswith("internal")

    def resolve(self, search_path=None) -> list[str]:
        """Command tokens with the executable resolved to an absolute path."""
        exe = self.command[0]
        if os.path.isabs(exe):
            if not os.access(exe, os.X_OK):
                raise FileNotFoundError(f"{exe} is not an executable file")
            return list(self.command)
        dirs = search_path if search_path is not None else os.environ.get(SOLVER_PATH_ENV, "")
        found = shutil.which(exe, path=dirs) if dirs else None
        found = found or shutil.which(exe)
        if not found:
            raise FileNotFoundError(f"{exe} not found on ${SOLVER_PATH_ENV} or PATH")
        return [found, *self.command[1:]]


INTERNAL_ADAPTERS = {
    a.name: a
    for a in (
        SolverAdapter("internal-bt", "csp-internal", options={"propagation": "none"}),
        SolverAdapter("internal-mac", "csp-internal", options={"propagation": "ac3"}),
        SolverAdapter("internal-dpll", "sat-internal", options={"phase": True}),
        SolverAdapter("internal-dpll-neg", "sat-internal", options={"phase": False}),
    )
}

DEFAULT_ENCODINGS = ("direct", "support", "directorder")
DEFAULT_APPROACHES = tuple(
    [f"csp:{s}" for s in ("internal-bt", "internal-mac")]
    + [f"sat:{e}:{s}" for e in DEFAULT_ENCODINGS for s in ("internal-dpll", "internal-dpll-neg")]
)


def load_adapters(path) -> dict[str, SolverAdapter]:
    """Internal adapters plus those in a JSON list of adapter objects."""
    out = dict(INTERNAL_ADAPTERS)
    if path is None:
        return out
    with open(path) as fh:
        for entry in json.load(fh):
            a = SolverAdapter(entry["name"], entry["kind"], tuple(shlex.split(entry.get("command", ""))),
                              entry.get("options", {}), entry.get("memory_mb"))
            out[a.name] = a
    return out


@dataclass(frozen=True)
class Limits:
    """Per-run resource limits.

    With ``clock="effort"`` internal solvers are timed by a deterministic
    effort count (search nodes or decisions plus propagations) times
    ``seconds_per_unit``; external solvers always use wall time.
    """

    timeout: float = 60.0
    memory_mb: int | None = None
    clock: str = "effort"
    seconds_per_unit: float = 1e-6
    verify_unsat: bool = False
    oracle_node_budget: int = 200_000

    def __post_init__(self):
        if not self.timeout > 0:
            raise ValueError("timeout must be positive")
        if self.clock not in ("effort", "wall"):
            raise ValueError(f"unknown clock {self.clock!r}")


@dataclass
class RunResult:
    record: PerformanceRecord
    answer: str | None = None  # "SAT" | "UNSAT"
    assignment: dict[int, int] | None = None
    nodes: int = 0
    conflicts: int | None = None
    effort: int = 0
    wall: float = 0.0
    diagnostic: str = ""
    memory_mb: int | None = None


# -- internal solvers ------------------------------------------------------------

def _run_internal(instance, approach, adapter, limits):
    budget = max(1, int(limits.timeout / limits.seconds_per_unit)) if limits.clock == "effort" else None
    deadline = time.monotonic() + limits.timeout if limits.clock == "wall" else None
    if adapter.family == "csp":
        res = solve_backtracking(instance, SearchConfig(propagation=adapter.options.get("propagation", "ac3"),
                                                        node_budget=budget, deadline=deadline))
        answer = res.status if res.status != "BUDGET_EXHAUSTED" else None
        return answer, res.assignment, res.nodes, None, res.nodes + res.propagations, None
    enc = encode(instance, approach.encoding)
    res = solve_dpll(enc.formula, DpllConfig(decision_budget=budget, phase=adapter.options.get("phase", True),
                                             deadline=deadline))
    answer = res.status if res.status != "BUDGET_EXHAUSTED" else None
    return answer, res.model, res.decisions, res.conflicts, res.decisions + res.propagations, enc


# -- external solvers ------------------------------------------------------------

def _limit_memory(mb):
    def apply():
        import resource

        size = mb * 1024 * 1024
        resource.setrlimit(resource.RLIMIT_AS, (size, size))
    return apply


def _spawn(argv, timeout, memory_mb):
    """Run ``argv``; returns (stdout, returncode, timed_out, wall)."""
    start = time.monotonic()
    proc = subprocess.Popen(argv, stdout=subprocess.PIPE, stderr=subprocess.PIPE, text=True,
                            start_new_session=True, preexec_fn=_limit_memory(memory_mb) if memory_mb else None)
    try:
        out, _ = proc.communicate(timeout=timeout)
        return out, proc.returncode, False, time.monotonic() - start
    except subprocess.TimeoutExpired:
        try:
            os.killpg(proc.pid, signal.SIGKILL)
        except ProcessLookupError:
            pass
        try:
            proc.communicate(timeout=GRACE_SECONDS)
        except subprocess.TimeoutExpired:
            proc.kill()
        return "", proc.returncode, True, time.monotonic() - start


def parse_solver_output(text: str):
    """Parse ``s``/``v`` lines into (answer, values); answer None if absent.

    SAT solvers print signed literals on ``v`` lines (0 terminated); CSP
    solvers print ``name=value`` tokens.
    """
    answer, values = None, []
    for line in text.splitlines():
        if line.startswith("s "):
            word = line[2:].strip().upper()
            if word == "SATISFIABLE":
                answer = "SAT"
            elif word == "UNSATISFIABLE":
                answer = "UNSAT"
            elif word != "UNKNOWN":
                raise ValueError(f"unrecognised status line {line!r}")
        elif line.startswith("v "):
            values.extend(line[2:].split())
    return answer, values


def _run_external(instance, approach, adapter, limits, seed, workdir):
    enc = None
    if adapter.family == "sat":
        enc = encode(instance, approach.encoding)
        path = Path(workdir) / "instance.cnf"
        with open(path, "w") as fh:
            enc.dimacs(fh, provenance_comments(enc, instance))
    else:
        path = Path(workdir) / "instance.csp"
        cspfile.dump(instance, path)
    argv = [t.format(input=path, seed=seed) for t in adapter.resolve()]
    memory = adapter.memory_mb or limits.memory_mb
    out, code, timed_out, wall = _spawn(argv, limits.timeout, memory)
    if timed_out:
        return None, None, wall, True, enc, ""
    answer, values = parse_solver_output(out)
    if answer is None:
        return None, None, wall, False, enc, f"no status line in solver output (exit code {code})"
    if answer == "UNSAT":
        return answer, None, wall, False, enc, ""
    if adapter.family == "sat":
        lits = [int(v) for v in values if v != "0"]
        model = [False] * (enc.formula.n_vars + 1)
        for lit in lits:
            if abs(lit) <= enc.formula.n_vars:
                model[abs(lit)] = lit > 0
        return answer, model, wall, False, enc, ""
    index = instance.var_index()
    assignment = {}
    for tok in values:
        name, _, val = tok.partition("=")
        assignment[index[name]] = int(val)
    return answer, assignment, wall, False, enc, ""


# -- runs ------------------------------------------------------------------------

def _verify_unsat(instance, limits):
    oracle = solve_backtracking(instance, SearchConfig(propagation="ac3", node_budget=limits.oracle_node_budget))
    return oracle.status != "SAT"


def run_approach(instance: CspInstance, approach, limits: Limits = Limits(), adapters=None,
                 seed: int = 0, name: str | None = None) -> RunResult:
    """Run one approach and return a verified record.

    Satisfying answers are decoded (SAT approaches) and checked against every
    CSP constraint; any failure becomes ``status="error"``. UNSAT answers are
    cross-checked by the CSP oracle when ``limits.verify_unsat`` is set.
    """
    approach = ApproachId.parse(approach)
    adapters = adapters or INTERNAL_ADAPTERS
    if approach.solver not in adapters:
        raise KeyError(f"no adapter configured for solver {approach.solver!r}")
    adapter = adapters[approach.solver]
    if adapter.family != approach.family:
        raise ValueError(f"adapter {adapter.name} is a {adapter.family} solver, approach is {approach}")
    name = name or instance.name
    memory = adapter.memory_mb or limits.memory_mb

    def record(status, runtime, **kw):
        runtime = limits.timeout if status == "timeout" else min(runtime, limits.timeout)
        return RunResult(PerformanceRecord(name, approach, status, runtime, limits.timeout),
                         memory_mb=memory, **kw)

    start = time.monotonic()
    nodes, conflicts, effort = 0, None, 0
    try:
        if adapter.internal:
            answer, payload, nodes, conflicts, effort, enc = _run_internal(instance, approach, adapter, limits)
            wall = time.monotonic() - start
            runtime = effort * limits.seconds_per_unit if limits.clock == "effort" else wall
            timed_out = answer is None or runtime > limits.timeout
            diag = ""
        else:
            with tempfile.TemporaryDirectory(prefix="cspfolio-") as tmp:
                answer, payload, wall, timed_out, enc, diag = _run_external(
                    instance, approach, adapter, limits, seed, tmp)
            runtime = wall
    except (OSError, ValueError) as exc:
        # spawn failures and unparseable output
        return record("error", time.monotonic() - start, diagnostic=f"{type(exc).__name__}: {exc}")
    stats = dict(nodes=nodes, conflicts=conflicts, effort=effort, wall=wall)
    if timed_out:
        return record("timeout", limits.timeout, **stats)
    if diag:
        return record("error", runtime, diagnostic=diag, **stats)
    if answer == "SAT":
        try:
            assignment = decode_and_verify(enc, payload, instance) if enc is not None else dict(payload)
        except DecodeError as exc:
            return record("error", runtime, diagnostic=f"verification failed: {exc}", **stats)
        if not is_consistent(instance, assignment):
            return record("error", runtime, diagnostic="verification failed: assignment violates a constraint",
                          **stats)
        return record("solved", runtime, answer="SAT", assignment=assignment, **stats)
    if limits.verify_unsat and not _verify_unsat(instance, limits):
        return record("error", runtime, diagnostic="verification failed: oracle found a solution", **stats)
    return record("solved", runtime, answer="UNSAT", **stats)


def run_matrix(instances, approaches, limits: Limits = Limits(), adapters=None, jobs: int = 1,
               repetitions: int = 1, seed: int = 0, sink=None) -> tuple[RunMatrix, list[RunResult]]:
    """Run every approach on every instance.

    ``instances`` maps names to CspInstance. With ``repetitions > 1`` the
    repetition with the median PAR10 is kept. ``sink``, if given, receives
    each kept record as it completes (single writer, in the calling thread).
    """
    approaches = [ApproachId.parse(a) for a in approaches]
    if not approaches:
        raise ValueError("no approaches to run")
    jobs_list = [(name, a) for name in sorted(instances) for a in approaches]

    def work(item):
        name, a = item
        runs = [run_approach(instances[name], a, limits, adapters, seed + r, name) for r in range(repetitions)]
        runs.sort(key=lambda r: r.record.par10)
        return runs[len(runs) // 2]

    results = []
    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            iterator = pool.map(work, jobs_list)
            for res in iterator:
                results.append(res)
                if sink:
                    sink(res.record)
    else:
        for item in jobs_list:
            res = work(item)
            results.append(res)
            if sink:
                sink(res.record)
    bad = [r for r in results if r.record.status == "error"]
    for r in bad:
        log.warning("%s on %s: %s", r.record.approach, r.record.instance, r.diagnostic)
    return RunMatrix([r.record for r in results]), results


# -- phase transition ------------------------------------------------------------

SWEEP_FIELDS = ["tightness", "approach", "mean_runtime", "mean_effort", "mean_nodes", "mean_conflicts",
                "solved_fraction", "n"]


def phase_transition_experiment(n_vars, domain_size, n_constraints, tightness, replicas, approaches,
                                limits: Limits = Limits(), master_seed: int = 0, adapters=None,
                                keep: list | None = None) -> list[dict]:
    """Mean cost per (tightness, approach) over seeded URB replicas.

    ``mean_effort`` is in solver effort units; ``mean_nodes`` counts search
    nodes (CSP) or decisions (SAT); ``mean_conflicts`` is blank for CSP solvers.
    If ``keep`` is a list, every ``(instance, RunResult)`` pair is appended to it.
    """
    grid = [UrbParams(n_vars, domain_size, n_constraints, t, 0) for t in tightness]
    suite = generate_suite(grid, replicas, master_seed)
    approaches = [ApproachId.parse(a) for a in approaches]
    rows = []
    for p, t in enumerate(tightness):
        point = suite[p * replicas:(p + 1) * replicas]
        for a in approaches:
            res = [run_approach(inst, a, limits, adapters) for _, inst in point]
            if keep is not None:
                keep.extend((inst, r) for (_, inst), r in zip(point, res))
            conflicts = [r.conflicts for r in res if r.conflicts is not None]
            rows.append({
                "tightness": t,
                "approach": str(a),
                "mean_runtime": float(np.mean([r.record.runtime for r in res])),
                "mean_effort": float(np.mean([r.effort for r in res])),
                "mean_nodes": float(np.mean([r.nodes for r in res])),
                "mean_conflicts": float(np.mean(conflicts)) if conflicts else "",
                "solved_fraction": float(np.mean([r.record.solved for r in res])),
                "n": len(res),
            })
    return rows


def write_sweep_csv(rows, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, SWEEP_FIELDS)
        w.writeheader()
        w.writerows(rows)


# -- portfolio evaluation -------------------------------------------------------

def default_selectors(approaches) -> dict:
    return {
        "hierarchical": HierarchicalSelector(list(map(str, approaches)), DEFAULT_HIERARCHY),
        "flat linear": FlatSelector(list(map(str, approaches)), "linear"),
        "flat tree": FlatSelector(list(map(str, approaches)), "tree"),
    }


@dataclass
class PortfolioReport:
    rows: list[tuple[str, str, float, int]]  # kind, label, par10, n_solved
    decisions: list[tuple[str, str, int, str, float]]  # selector, instance, fold, approach, par10
    n_instances: int

    def write(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["kind", "label", "par10", "n_solved", "n_instances"])
            for kind, label, score, solved in self.rows:
                w.writerow([kind, label, repr(score), solved, self.n_instances])

    def write_decisions(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["selector", "instance", "fold", "approach", "par10"])
            w.writerows(self.decisions)

    def table(self) -> str:
        lines = [f"{'kind':<9} {'label':<36} {'PAR10':>12} {'solved':>7}"]
        for kind, label, score, solved in self.rows:
            lines.append(f"{kind:<9} {label:<36} {score:>12.3f} {solved:>4}/{self.n_instances}")
        return "\n".join(lines)


def feature_arrays(tables: dict[str, FeatureTable], instances) -> dict[str, np.ndarray]:
    """Feature rows per schema, aligned with ``instances``."""
    return {schema: t.rows(instances) for schema, t in tables.items()}


def evaluate_portfolio(matrix: RunMatrix, features, selectors=None, folds: int = 10, seed: int = 0) -> PortfolioReport:
    """Single-approach, virtual-best and cross-validated selector rows.

    ``features`` is an array or a dict schema -> array with rows in
    ``matrix.instances`` order.
    """
    rows = []
    scores = matrix.scores()
    solved = matrix.solved()
    for j, a in enumerate(matrix.approaches):
        rows.append(("approach", str(a), float(scores[:, j].mean()), int(solved[:, j].sum())))
    for label, subset in subset_filters(matrix.approaches).items():
        v = virtual_best(matrix, subset)
        rows.append(("vbs", label, v.par10, v.n_solved))
    decisions = []
    selectors = default_selectors(matrix.approaches) if selectors is None else selectors
    for label, sel in selectors.items():
        cv = cross_validate(matrix, features, sel, folds=folds, seed=seed)
        rows.append(("selector", label, cv.par10, cv.n_solved))
        decisions += [(label, inst, fold, a, s) for inst, fold, a, s in cv.decisions]
    return PortfolioReport(rows, decisions, len(matrix))


@dataclass
class ExperimentConfig:
    """An end-to-end portfolio experiment: instances, approaches and limits."""

    instances: list[str] = field(default_factory=list)  # native CSP files
    grid: dict | None = None  # n_vars, domain_size, n_constraints, tightness: [start, stop, step], replicas
    approaches: list[str] = field(default_factory=lambda: list(DEFAULT_APPROACHES))
    timeout: float = 10.0
    clock: str = "effort"
    repetitions: int = 1
    output_dir: str = "results"
    master_seed: int = 0
    folds: int = 10
    jobs: int = 1
    adapters: str | None = None

    def __post_init__(self):
        if not self.timeout > 0:
            raise ValueError("timeout must be positive")
        if not self.approaches:
            raise ValueError("approaches must be non-empty")
        if not self.instances and not self.grid:
            raise ValueError("config needs instance files or a generator grid")

    @classmethod
    def load(cls, path) -> ExperimentConfig:
        with open(path) as fh:
            return cls(**json.load(fh))

    def to_dict(self):
        return asdict(self)

    def load_instances(self) -> dict[str, CspInstance]:
        out = {}
        for path in self.instances:
            inst = cspfile.load(path)
            out[inst.name] = inst
        if self.grid:
            g = self.grid
            points = [UrbParams(g["n_vars"], g["domain_size"], g["n_constraints"], t, 0)
                      for t in tightness_grid(*g["tightness"])]
            for _, inst in generate_suite(points, g.get("replicas", 1), self.master_seed):
                out[inst.name] = inst
        return out
