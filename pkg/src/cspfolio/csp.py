"""Finite-domain binary CSP model, arc consistency and a backtracking oracle."""
from __future__ import annotations

import itertools
import time
from collections import deque
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Mapping, Sequence

DEFAULT_TUPLE_CAP = 10**6

OPERATORS = ("eq", "neq", "lt", "leq", "gt", "geq", "absdiff_eq", "absdiff_neq")
ORDER_OPERATORS = frozenset({"lt", "leq", "gt", "geq"})


class TupleCapExceeded(ValueError):
    pass


@dataclass(frozen=True)
class Domain:
    values: tuple[int, ...]

    def __post_init__(self):
        values = tuple(int(v) for v in self.values)
        if not values:
            raise ValueError("domain must be non-empty")
        if any(a >= b for a, b in zip(values, values[1:])):
            raise ValueError(f"domain values must be strictly increasing: {values}")
        object.__setattr__(self, "values", values)

    def __len__(self):
        return len(self.values)

    def __iter__(self):
        return iter(self.values)

    def __contains__(self, v):
        return v in self.values


@dataclass(frozen=True)
class Variable:
    id: int
    name: str
    domain: Domain


@dataclass(frozen=True)
class Extensional:
    """Relation given by a tuple list; ``allowed`` says whether the list is the
    allowed set or the forbidden set."""

    tuples: frozenset
    allowed: bool

    def __post_init__(self):
        object.__setattr__(self, "tuples", frozenset(tuple(int(x) for x in t) for t in self.tuples))

    def holds(self, values):
        return (tuple(values) in self.tuples) == self.allowed

    @property
    def kind(self):
        return "allowed" if self.allowed else "forbidden"


@dataclass(frozen=True)
class Intensional:
    """``X op Y + offset`` for binary scopes, ``X op offset`` for unary ones.

    The absdiff operators compare ``|X - Y|`` with ``offset``.
    """

    op: str
    offset: int = 0

    def __post_init__(self):
        if self.op not in OPERATORS:
            raise ValueError(f"unknown operator {self.op!r}")

    @property
    def kind(self):
        return self.op

    def holds(self, values):
        if len(values) == 1:
            a, b = values[0], self.offset
        else:
            a, b = values[0], values[1] + self.offset
        op = self.op
        if op == "eq":
            return a == b
        if op == "neq":
            return a != b
        if op == "lt":
            return a < b
        if op == "leq":
            return a <= b
        if op == "gt":
            return a > b
        if op == "geq":
            return a >= b
        diff = abs(values[0] - values[1]) if len(values) == 2 else abs(values[0])
        if op == "absdiff_eq":
            return diff == self.offset
        return diff != self.offset


Relation = Extensional | Intensional


@dataclass(frozen=True)
class Constraint:
    scope: tuple[int, ...]
    relation: Relation

    def __post_init__(self):
        object.__setattr__(self, "scope", tuple(i if isinstance(i, str) else int(i) for i in self.scope))

    @property
    def arity(self):
        return len(self.scope)

    def holds(self, values):
        return self.relation.holds(values)


@dataclass(frozen=True)
class CspInstance:
    variables: tuple[Variable, ...]
    constraints: tuple[Constraint, ...] = ()
    name: str = ""
    tags: Mapping[str, str] = field(default_factory=dict, compare=False, hash=False)

    def __post_init__(self):
        object.__setattr__(self, "variables", tuple(self.variables))
        object.__setattr__(self, "constraints", tuple(self.constraints))
        object.__setattr__(self, "tags", dict(self.tags))

    @classmethod
    def from_domains(cls, domains, constraints=(), name="", tags=None):
        """Build an instance from ``[(name, values), ...]`` or a name->values mapping.

        Constraints may reference variables by name or by id.
        """
        items = list(domains.items()) if isinstance(domains, Mapping) else list(domains)
        variables = [Variable(i, str(n), Domain(tuple(vals))) for i, (n, vals) in enumerate(items)]
        index = {v.name: v.id for v in variables}
        resolved = []
        for c in constraints:
            scope = tuple(index[s] if isinstance(s, str) else s for s in c.scope)
            resolved.append(Constraint(scope, c.relation))
        return cls(tuple(variables), tuple(resolved), name, tags or {})

    @property
    def n_vars(self):
        return len(self.variables)

    def domain(self, var_id):
        return self.variables[var_id].domain

    def var_index(self):
        return {v.name: v.id for v in self.variables}

    def n_assignments(self):
        total = 1
        for v in self.variables:
            total *= len(v.domain)
        return total


def alldifferent(scope: Sequence) -> list[Constraint]:
    """Pairwise disequalities over ``scope``."""
    return [Constraint((a, b), Intensional("neq")) for a, b in itertools.combinations(scope, 2)]


@dataclass(frozen=True)
class Violation:
    location: str
    message: str


def validate(instance: CspInstance, tuple_cap: int = DEFAULT_TUPLE_CAP) -> list[Violation]:
    out = []
    names = set()
    for i, var in enumerate(instance.variables):
        if var.id != i:
            out.append(Violation(f"variable[{i}]", f"id {var.id} is not dense (expected {i})"))
        if var.name in names:
            out.append(Violation(f"variable[{i}]", f"duplicate name {var.name!r}"))
        names.add(var.name)
    n = instance.n_vars
    seen = {}
    for k, c in enumerate(instance.constraints):
        loc = f"constraint[{k}]"
        if c.arity not in (1, 2):
            out.append(Violation(loc, f"arity {c.arity} not supported"))
            continue
        bad = [i for i in c.scope if not 0 <= i < n]
        if bad:
            out.append(Violation(loc, f"scope ids {bad} out of range 0..{n - 1}"))
            continue
        if len(set(c.scope)) != len(c.scope):
            out.append(Violation(loc, f"scope {c.scope} repeats a variable"))
            continue
        doms = [instance.domain(i) for i in c.scope]
        if isinstance(c.relation, Extensional):
            stray = sorted(
                t for t in c.relation.tuples
                if len(t) != c.arity or any(x not in d for x, d in zip(t, doms))
            )
            if stray:
                out.append(Violation(loc, f"tuples outside the domain product: {stray}"))
                continue
        try:
            key = _semantic_key(c, instance, tuple_cap)
        except TupleCapExceeded as exc:
            out.append(Violation(loc, str(exc)))
            continue
        if key in seen:
            out.append(Violation(loc, f"duplicates constraint[{seen[key]}]"))
        else:
            seen[key] = k
    return out


def _semantic_key(c, instance, cap):
    forb = forbidden_tuples(c, instance, cap)
    if c.arity == 2 and c.scope[0] > c.scope[1]:
        return (c.scope[::-1], frozenset((w, v) for v, w in forb))
    return (c.scope, frozenset(forb))


def forbidden_tuples(c: Constraint, instance: CspInstance, cap: int = DEFAULT_TUPLE_CAP) -> list[tuple]:
    doms = tuple(instance.domain(i).values for i in c.scope)
    return list(_forbidden(c.relation, doms, cap))


@lru_cache(maxsize=4096)
def _forbidden(relation, doms, cap):
    size = 1
    for d in doms:
        size *= len(d)
    if size > cap:
        raise TupleCapExceeded(f"domain product of {size} tuples exceeds cap {cap}")
    if isinstance(relation, Extensional) and not relation.allowed:
        return tuple(sorted(t for t in relation.tuples))
    return tuple(t for t in itertools.product(*doms) if not relation.holds(t))


def allowed_tuples(c: Constraint, instance: CspInstance, cap: int = DEFAULT_TUPLE_CAP) -> list[tuple]:
    doms = tuple(instance.domain(i).values for i in c.scope)
    forb = set(_forbidden(c.relation, doms, cap))
    return [t for t in itertools.product(*doms) if t not in forb]


def constraint_tightness(c: Constraint, instance: CspInstance) -> float:
    size = 1
    for i in c.scope:
        size *= len(instance.domain(i))
    return len(forbidden_tuples(c, instance)) / size


def is_consistent(instance: CspInstance, assignment: Mapping[int, int]) -> bool:
    """True when ``assignment`` is total, in-domain and satisfies every constraint."""
    if len(assignment) != instance.n_vars:
        return False
    for var in instance.variables:
        if assignment.get(var.id) not in var.domain:
            return False
    return all(c.holds(tuple(assignment[i] for i in c.scope)) for c in instance.constraints)


# -- support tables ------------------------------------------------------------

class _Network:
    """Per-variable unary filters and per-arc support sets, shared by AC-3 and search."""

    def __init__(self, instance, cap=DEFAULT_TUPLE_CAP):
        n = instance.n_vars
        self.n = n
        self.domains = [frozenset(v.domain.values) for v in instance.variables]
        self.unary = [set() for _ in range(n)]
        # arcs[x][k] = (y, support) with support[v] = y-values compatible with x=v
        self.arcs = [[] for _ in range(n)]
        for c in instance.constraints:
            forb = forbidden_tuples(c, instance, cap)
            if c.arity == 1:
                self.unary[c.scope[0]].update(t[0] for t in forb)
                continue
            x, y = c.scope
            forb = set(forb)
            dx, dy = instance.domain(x).values, instance.domain(y).values
            sxy = {v: frozenset(w for w in dy if (v, w) not in forb) for v in dx}
            syx = {w: frozenset(v for v in dx if (v, w) not in forb) for w in dy}
            self.arcs[x].append((y, sxy))
            self.arcs[y].append((x, syx))
        # incoming[x] = arcs (z, k) whose target is x
        self.incoming = [[] for _ in range(n)]
        for z in range(n):
            for k, (t, _) in enumerate(self.arcs[z]):
                self.incoming[t].append((z, k))
        self.all_arcs = [(x, k) for x in range(n) for k in range(len(self.arcs[x]))]

    def initial_domains(self):
        return [set(d - u) for d, u in zip(self.domains, self.unary)]


def _propagate(net, doms, queue, stats):
    """AC-3 over the arcs in ``queue``; False on domain wipeout."""
    pending = set(queue)
    queue = deque(queue)
    while queue:
        x, k = queue.popleft()
        pending.discard((x, k))
        y, support = net.arcs[x][k]
        stats["propagations"] += 1
        dy = doms[y]
        dead = [v for v in doms[x] if support[v].isdisjoint(dy)]
        if not dead:
            continue
        doms[x].difference_update(dead)
        if not doms[x]:
            return False
        for arc in net.incoming[x]:
            if arc[0] != y and arc not in pending:
                pending.add(arc)
                queue.append(arc)
    return True


@dataclass
class Ac3Result:
    reduced_domains: dict[int, tuple[int, ...]]
    wipeout: bool
    propagations: int = 0


def ac3(instance: CspInstance) -> Ac3Result:
    """Maximal arc-consistent sub-domains (unary constraints are applied first)."""
    net = _Network(instance)
    doms = net.initial_domains()
    stats = {"propagations": 0}
    ok = all(doms) and _propagate(net, doms, net.all_arcs, stats)
    reduced = {i: tuple(sorted(d)) for i, d in enumerate(doms)}
    return Ac3Result(reduced, not ok, stats["propagations"])


# -- search --------------------------------------------------------------------

@dataclass
class SearchConfig:
    propagation: str = "ac3"  # "none" | "ac3"
    node_budget: int | None = None
    find: str = "first"  # "first" | "count-all"
    deadline: float | None = None  # time.monotonic() value

    def __post_init__(self):
        if self.propagation not in ("none", "ac3"):
            raise ValueError(f"unknown propagation {self.propagation!r}")
        if self.find not in ("first", "count-all"):
            raise ValueError(f"unknown find mode {self.find!r}")
        if self.node_budget is not None and self.node_budget < 1:
            raise ValueError("node_budget must be >= 1")


@dataclass
class SearchResult:
    status: str  # "SAT" | "UNSAT" | "BUDGET_EXHAUSTED"
    assignment: dict[int, int] | None = None
    solution_count: int | None = None
    nodes: int = 0
    propagations: int = 0
    max_depth: int = 0
    timed_out: bool = False


class _Exhausted(Exception):
    pass


def solve_backtracking(instance: CspInstance, config: SearchConfig | None = None) -> SearchResult:
    """Depth-first search, smallest domain first (ties by id), values ascending.

    With ``propagation="ac3"`` arc consistency is maintained at every node.
    ``solution_count`` is only reported in count-all mode, where it is exact
    unless the budget ran out.
    """
    config = config or SearchConfig()
    net = _Network(instance)
    stats = {"nodes": 0, "propagations": 0, "max_depth": 0}
    count_all = config.find == "count-all"
    mac = config.propagation == "ac3"
    budget = config.node_budget
    deadline = config.deadline
    n = net.n
    found = []
    count = 0

    doms = net.initial_domains()
    if mac:
        root_ok = all(doms) and _propagate(net, doms, net.all_arcs, stats)
    else:
        root_ok = all(doms)

    # plain backtracking: neighbours for consistency checks
    neighbours = [[(y, s) for y, s in net.arcs[x]] for x in range(n)]
    assigned: dict[int, int] = {}

    def tick(depth):
        stats["nodes"] += 1
        if depth > stats["max_depth"]:
            stats["max_depth"] = depth
        if budget is not None and stats["nodes"] > budget:
            raise _Exhausted
        if deadline is not None and stats["nodes"] % 64 == 0 and time.monotonic() > deadline:
            raise _Exhausted

    def pick(doms):
        best, best_size = -1, None
        for x in range(n):
            if x in assigned:
                continue
            size = len(doms[x])
            if best_size is None or size < best_size:
                best, best_size = x, size
        return best

    def search_mac(doms, depth):
        nonlocal count
        if len(assigned) == n:
            count += 1
            if not found:
                found.append(dict(assigned))
            return not count_all
        x = pick(doms)
        for v in sorted(doms[x]):
            tick(depth + 1)
            child = [set(d) for d in doms]
            child[x] = {v}
            assigned[x] = v
            if _propagate(net, child, list(net.incoming[x]), stats):
                if search_mac(child, depth + 1):
                    return True
            del assigned[x]
        return False

    def search_plain(depth):
        nonlocal count
        if len(assigned) == n:
            count += 1
            if not found:
                found.append(dict(assigned))
            return not count_all
        x = pick(doms)
        for v in sorted(doms[x]):
            tick(depth + 1)
            ok = True
            for y, support in neighbours[x]:
                w = assigned.get(y)
                if w is not None and w not in support[v]:
                    ok = False
                    break
            if not ok:
                continue
            assigned[x] = v
            if search_plain(depth + 1):
                return True
            del assigned[x]
        return False

    exhausted = False
    if root_ok:
        try:
            if mac:
                search_mac(doms, 0)
            else:
                search_plain(0)
        except _Exhausted:
            exhausted = True

    timed_out = exhausted and deadline is not None and time.monotonic() > deadline
    common = dict(nodes=stats["nodes"], propagations=stats["propagations"],
                  max_depth=stats["max_depth"], timed_out=timed_out)
    if exhausted and (count_all or not found):
        return SearchResult("BUDGET_EXHAUSTED", found[0] if found else None, None, **common)
    if found:
        return SearchResult("SAT", found[0], count if count_all else None, **common)
    return SearchResult("UNSAT", None, 0 if count_all else None, **common)
