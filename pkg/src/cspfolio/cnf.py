"""CNF formulas, DIMACS I/O, unit propagation and a small complete DPLL solver."""
from __future__ import annotations

import io
import time
from dataclasses import dataclass, field
from typing import Iterable, Sequence, TextIO


class DimacsError(ValueError):
    def __init__(self, message, line=None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


@dataclass(frozen=True)
class CnfFormula:
    n_vars: int
    clauses: tuple[tuple[int, ...], ...]
    comments: tuple[str, ...] = field(default=(), compare=False)

    def __post_init__(self):
        clauses = tuple(tuple(int(l) for l in c) for c in self.clauses)
        n = int(self.n_vars)
        if n < 0:
            raise ValueError("n_vars must be non-negative")
        for k, c in enumerate(clauses):
            seen = set()
            for lit in c:
                if lit == 0 or abs(lit) > n:
                    raise ValueError(f"clause {k}: literal {lit} out of range 1..{n}")
                if lit in seen:
                    raise ValueError(f"clause {k}: duplicate literal {lit}")
                if -lit in seen:
                    raise ValueError(f"clause {k}: tautology on variable {abs(lit)}")
                seen.add(lit)
        object.__setattr__(self, "n_vars", n)
        object.__setattr__(self, "clauses", clauses)
        object.__setattr__(self, "comments", tuple(self.comments))

    @property
    def n_clauses(self):
        return len(self.clauses)

    def satisfied_by(self, model) -> bool:
        """``model`` maps variable -> bool (or is a sequence indexed from 1)."""
        return all(any(model[abs(l)] == (l > 0) for l in c) for c in self.clauses)


# -- DIMACS --------------------------------------------------------------------

def write_dimacs(f: CnfFormula, sink: TextIO | None = None, comments: Iterable[str] = ()) -> str:
    lines = [f"c {c}" if c else "c" for c in (*f.comments, *comments)]
    lines.append(f"p cnf {f.n_vars} {f.n_clauses}")
    lines.extend(" ".join(map(str, (*c, 0))) for c in f.clauses)
    text = "\n".join(lines) + "\n"
    if sink is not None:
        sink.write(text)
    return text


def read_dimacs(source: str | TextIO) -> CnfFormula:
    """Parse DIMACS CNF text (a string or a readable stream).

    Clauses may span lines; "c" lines are collected as comments.
    """
    if isinstance(source, str):
        source = io.StringIO(source)
    header = None
    comments = []
    clauses = []
    current = []
    last_line = 0
    for lineno, raw in enumerate(source, 1):
        last_line = lineno
        line = raw.strip()
        if not line:
            continue
        if line[0] == "c":
            comments.append(line[1:].strip())
            continue
        if line[0] == "%":
            break
        if line[0] == "p":
            parts = line.split()
            if header is not None:
                raise DimacsError("duplicate header", lineno)
            if len(parts) != 4 or parts[1] != "cnf":
                raise DimacsError(f"malformed header {line!r}", lineno)
            try:
                header = (int(parts[2]), int(parts[3]))
            except ValueError:
                raise DimacsError(f"malformed header {line!r}", lineno) from None
            if header[0] < 0 or header[1] < 0:
                raise DimacsError("negative header counts", lineno)
            continue
        if header is None:
            raise DimacsError("clause before 'p cnf' header", lineno)
        for tok in line.split():
            try:
                lit = int(tok)
            except ValueError:
                raise DimacsError(f"bad literal {tok!r}", lineno) from None
            if lit == 0:
                clauses.append(tuple(current))
                current = []
            else:
                if abs(lit) > header[0]:
                    raise DimacsError(f"literal {lit} exceeds declared {header[0]} variables", lineno)
                current.append(lit)
    if header is None:
        raise DimacsError("missing 'p cnf' header")
    if current:
        raise DimacsError("last clause not terminated by 0", last_line)
    if len(clauses) != header[1]:
        raise DimacsError(f"header declares {header[1]} clauses, found {len(clauses)}", last_line)
    try:
        return CnfFormula(header[0], tuple(clauses), tuple(comments))
    except ValueError as exc:
        raise DimacsError(str(exc)) from None


# -- propagation engine ----------------------------------------------------------

class _Engine:
    """Two-watched-literal propagation over a fixed clause set.

    ``value[v]`` is 1 (true), -1 (false) or 0 (unassigned).
    """

    def __init__(self, f: CnfFormula):
        self.n = f.n_vars
        self.value = [0] * (self.n + 1)
        self.trail: list[int] = []
        self.clauses = [list(c) for c in f.clauses]
        self.units = [c[0] for c in self.clauses if len(c) == 1]
        self.has_empty = any(len(c) == 0 for c in self.clauses)
        self.watches: dict[int, list[int]] = {}
        for k, c in enumerate(self.clauses):
            if len(c) >= 2:
                self.watches.setdefault(c[0], []).append(k)
                self.watches.setdefault(c[1], []).append(k)
        self.propagations = 0

    def lit_value(self, lit):
        v = self.value[abs(lit)]
        return v if lit > 0 else -v

    def assign(self, lit):
        self.value[abs(lit)] = 1 if lit > 0 else -1
        self.trail.append(lit)

    def undo_to(self, size):
        trail, value = self.trail, self.value
        while len(trail) > size:
            value[abs(trail.pop())] = 0

    def propagate(self, start):
        """Propagate trail entries from ``start``; False on conflict."""
        trail, value, clauses, watches = self.trail, self.value, self.clauses, self.watches
        i = start
        while i < len(trail):
            false_lit = -trail[i]
            i += 1
            self.propagations += 1
            wl = watches.get(false_lit)
            if not wl:
                continue
            j = 0
            while j < len(wl):
                k = wl[j]
                c = clauses[k]
                if c[0] == false_lit:
                    c[0], c[1] = c[1], c[0]
                other = c[0]
                ov = value[abs(other)]
                if (ov if other > 0 else -ov) == 1:
                    j += 1
                    continue
                moved = False
                for p in range(2, len(c)):
                    lit = c[p]
                    lv = value[abs(lit)]
                    if (lv if lit > 0 else -lv) != -1:
                        c[1], c[p] = lit, false_lit
                        watches.setdefault(lit, []).append(k)
                        wl[j] = wl[-1]
                        wl.pop()
                        moved = True
                        break
                if moved:
                    continue
                if (ov if other > 0 else -ov) == -1:
                    return False
                value[abs(other)] = 1 if other > 0 else -1
                trail.append(other)
                j += 1
        return True

    def assert_units(self):
        """Assign unit clauses; False on conflict (before propagation)."""
        for lit in self.units:
            lv = self.lit_value(lit)
            if lv == -1:
                return False
            if lv == 0:
                self.assign(lit)
        return True


@dataclass
class PropagationResult:
    status: str  # "OK" | "CONFLICT"
    implied: frozenset[int]


def unit_propagate(f: CnfFormula, assumptions: Sequence[int] = ()) -> PropagationResult:
    """Unit-resolution fixpoint of ``f`` under ``assumptions``.

    On conflict ``implied`` holds whatever was derived before the empty clause.
    """
    lits = set(assumptions)
    if any(-l in lits for l in lits):
        raise ValueError("assumptions are contradictory")
    eng = _Engine(f)
    if eng.has_empty:
        return PropagationResult("CONFLICT", frozenset())
    for lit in lits:
        if abs(lit) > f.n_vars or lit == 0:
            raise ValueError(f"assumption {lit} out of range")
        eng.assign(lit)
    ok = eng.assert_units() and eng.propagate(0)
    return PropagationResult("OK" if ok else "CONFLICT", frozenset(eng.trail))


# -- DPLL ----------------------------------------------------------------------

@dataclass
class DpllConfig:
    conflict_budget: int | None = None
    decision_budget: int | None = None
    phase: bool = True  # polarity tried first
    deadline: float | None = None  # time.monotonic() value


@dataclass
class DpllResult:
    status: str  # "SAT" | "UNSAT" | "BUDGET_EXHAUSTED"
    model: list[bool] | None = None  # index 0 unused
    decisions: int = 0
    conflicts: int = 0
    propagations: int = 0
    timed_out: bool = False


def solve_dpll(f: CnfFormula, config: DpllConfig | None = None) -> DpllResult:
    """Chronological-backtracking DPLL.

    Branches on the lowest-index unassigned variable, ``config.phase`` first.
    Each conflict costs one backtrack against ``conflict_budget``.
    """
    config = config or DpllConfig()
    eng = _Engine(f)
    n = eng.n
    value = eng.value
    decisions = conflicts = 0
    first = 1 if config.phase else -1

    def result(status, model=None, timed_out=False):
        return DpllResult(status, model, decisions, conflicts, eng.propagations, timed_out)

    if eng.has_empty or not eng.assert_units() or not eng.propagate(0):
        return result("UNSAT")

    # stack entries: (trail size before decision, decision literal, flipped)
    stack: list[tuple[int, int, bool]] = []
    cursor = 1
    deadline = config.deadline
    while True:
        while cursor <= n and value[cursor] != 0:
            cursor += 1
        if cursor > n:
            model = [False] + [value[v] == 1 for v in range(1, n + 1)]
            if not f.satisfied_by(model):
                raise AssertionError("DPLL produced a non-model; engine bug")
            return result("SAT", model)
        if config.decision_budget is not None and decisions >= config.decision_budget:
            return result("BUDGET_EXHAUSTED")
        if deadline is not None and decisions % 64 == 0 and time.monotonic() > deadline:
            return result("BUDGET_EXHAUSTED", timed_out=True)
        decisions += 1
        lit = cursor * first
        stack.append((len(eng.trail), lit, False))
        eng.assign(lit)
        start = len(eng.trail) - 1
        while not eng.propagate(start):
            conflicts += 1
            while stack and stack[-1][2]:
                stack.pop()
            if not stack:
                return result("UNSAT")
            if config.conflict_budget is not None and conflicts > config.conflict_budget:
                return result("BUDGET_EXHAUSTED")
            size, lit, _ = stack.pop()
            eng.undo_to(size)
            stack.append((size, -lit, True))
            eng.assign(-lit)
            start = size
            cursor = abs(lit)
        # cursor stays: lower variables are all assigned


# -- model counting ------------------------------------------------------------

@dataclass
class CountResult:
    count: int
    capped: bool


def count_models(f: CnfFormula, cap: int = 10**6) -> CountResult:
    """Exact model count by exhaustive splitting, stopping once ``cap`` is reached.

    Kept deliberately separate from :func:`solve_dpll` so it can serve as an
    independent check of the encoders.
    """
    total = 0

    def simplify(clauses, lit):
        out = []
        for c in clauses:
            if lit in c:
                continue
            if -lit in c:
                c = tuple(l for l in c if l != -lit)
                if not c:
                    return None
            out.append(c)
        return out

    def count(clauses, free):
        # unit propagation
        while True:
            unit = next((c[0] for c in clauses if len(c) == 1), None)
            if unit is None:
                break
            clauses = simplify(clauses, unit)
            if clauses is None:
                return 0
            free = free - {abs(unit)}
        if not clauses:
            return 1 << len(free)
        var = min(abs(l) for c in clauses for l in c)
        rest = free - {var}
        n = 0
        for lit in (var, -var):
            sub = simplify(clauses, lit)
            if sub is not None:
                n += count(sub, rest)
            if total + n >= cap:
                break
        return n

    if any(len(c) == 0 for c in f.clauses):
        return CountResult(0, False)
    total = count([tuple(c) for c in f.clauses], frozenset(range(1, f.n_vars + 1)))
    if total >= cap:
        return CountResult(cap, True)
    return CountResult(total, False)
