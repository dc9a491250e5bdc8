"""CSP to SAT translation under the direct, support, order and direct-order encodings.

Domain values are addressed by rank ``1..d`` within each variable. Clause
literal conventions:

* direct/support: ``x[r]`` is true iff X takes its rank-``r`` value
* order: ``x<=r`` is true iff X's rank is at most ``r``; ``x<=0`` is the
  constant false (its literals are dropped) and ``x<=d`` is forced by a unit
  clause
"""
from __future__ import annotations

import enum
import hashlib
from dataclasses import dataclass, field

from .cnf import CnfFormula, write_dimacs
from .cspfile import dumps
from .csp import (
    DEFAULT_TUPLE_CAP,
    ORDER_OPERATORS,
    CspInstance,
    Intensional,
    forbidden_tuples,
    is_consistent,
)


class EncodingKind(str, enum.Enum):
    DIRECT = "direct"
    SUPPORT = "support"
    ORDER = "order"
    DIRECT_ORDER = "directorder"

    @classmethod
    def parse(cls, text):
        key = str(text).lower().replace("-", "").replace("_", "")
        for kind in cls:
            if kind.value == key:
                return kind
        raise ValueError(f"unknown encoding {text!r}")


class DecodeError(ValueError):
    pass


@dataclass
class VarMap:
    """SAT variable ids for each CSP variable.

    ``value_vars[i][r-1]`` is the id of ``x[r]``; ``order_vars[i][r-1]`` the id of
    ``x<=r`` for ``r = 1..d``. Either list is empty when that representation is
    not part of the encoding.
    """

    domains: list[tuple[int, ...]]
    value_vars: list[list[int]]
    order_vars: list[list[int]]
    n_vars: int = 0

    def owner(self):
        """SAT id -> (csp var, role, rank)."""
        out = {}
        for i, ids in enumerate(self.value_vars):
            for r, s in enumerate(ids, 1):
                out[s] = (i, "value", r)
        for i, ids in enumerate(self.order_vars):
            for r, s in enumerate(ids, 1):
                out[s] = (i, "order", r)
        return out


@dataclass
class EncodedInstance:
    formula: CnfFormula
    map: VarMap
    kind: EncodingKind
    stats: dict[str, int]
    constraint_sides: list[str] = field(default_factory=list)

    def dimacs(self, sink=None, extra_comments=()):
        return write_dimacs(self.formula, sink, extra_comments)


class _Builder:
    def __init__(self, instance: CspInstance, value: bool, order: bool, cap: int | None = None):
        self.instance = instance
        self.cap = cap if cap is not None else DEFAULT_TUPLE_CAP
        self.next_id = 1
        self.domains = [v.domain.values for v in instance.variables]
        self.rank = [{val: r for r, val in enumerate(dom, 1)} for dom in self.domains]
        value_vars, order_vars = [], []
        for dom in self.domains:
            value_vars.append(self._fresh(len(dom)) if value else [])
        for dom in self.domains:
            order_vars.append(self._fresh(len(dom)) if order else [])
        self.map = VarMap(self.domains, value_vars, order_vars)
        self.clauses: list[tuple[int, ...]] = []
        self.stats = {"domain": 0, "constraint": 0, "channel": 0}

    def _fresh(self, k):
        ids = list(range(self.next_id, self.next_id + k))
        self.next_id += k
        return ids

    def add(self, category, clause):
        self.clauses.append(tuple(clause))
        self.stats[category] += 1

    def x(self, i, r):
        return self.map.value_vars[i][r - 1]

    def le(self, i, r):
        """Order literal ``x<=r``; None stands for constant false (r == 0)."""
        if r <= 0:
            return None
        return self.map.order_vars[i][r - 1]

    def equals_order(self, i, r):
        """Literals of the clause ``not(X = rank r)`` in order form."""
        out = []
        if len(self.domains[i]) > 1:
            out.append(-self.le(i, r))
        lower = self.le(i, r - 1)
        if lower is not None:
            out.append(lower)
        return out

    # domain clauses

    def direct_domains(self, amo=True):
        for i, dom in enumerate(self.domains):
            d = len(dom)
            self.add("domain", [self.x(i, r) for r in range(1, d + 1)])
            if amo:
                for v in range(1, d + 1):
                    for w in range(v + 1, d + 1):
                        self.add("domain", [-self.x(i, v), -self.x(i, w)])

    def order_domains(self):
        for i, dom in enumerate(self.domains):
            d = len(dom)
            for r in range(1, d):
                self.add("domain", [-self.le(i, r), self.le(i, r + 1)])
            self.add("domain", [self.le(i, d)])

    def channel(self):
        for i, dom in enumerate(self.domains):
            for r in range(1, len(dom) + 1):
                x, le, lower = self.x(i, r), self.le(i, r), self.le(i, r - 1)
                self.add("channel", [-x, le])
                if lower is not None:
                    self.add("channel", [-x, -lower])
                    self.add("channel", [x, -le, lower])
                else:
                    self.add("channel", [x, -le])

    # constraint clauses

    def forbidden_ranks(self, c):
        forb = forbidden_tuples(c, self.instance, self.cap)
        return [tuple(self.rank[i][val] for i, val in zip(c.scope, t)) for t in forb]

    def direct_conflicts(self, c):
        for t in self.forbidden_ranks(c):
            self.add("constraint", [-self.x(i, r) for i, r in zip(c.scope, t)])

    def order_conflicts(self, c):
        for t in self.forbidden_ranks(c):
            clause = []
            for i, r in zip(c.scope, t):
                clause.extend(self.equals_order(i, r))
            self.add("constraint", clause)

    def support_clauses(self, c):
        forb = set(self.forbidden_ranks(c))
        if c.arity == 1:
            (i,) = c.scope
            for (r,) in sorted(forb):
                self.add("constraint", [-self.x(i, r)])
            return
        x, y = c.scope
        dx, dy = len(self.domains[x]), len(self.domains[y])
        for v in range(1, dx + 1):
            sup = [self.x(y, w) for w in range(1, dy + 1) if (v, w) not in forb]
            self.add("constraint", [-self.x(x, v), *sup])
        for w in range(1, dy + 1):
            sup = [self.x(x, v) for v in range(1, dx + 1) if (v, w) not in forb]
            self.add("constraint", [-self.x(y, w), *sup])

    def inequality(self, c):
        """Order-side clauses for an inequality, linear in the domain size."""
        rel = c.relation
        if c.arity == 1:
            self._unary_bound(c.scope[0], rel.op, rel.offset)
            return
        x, y = c.scope
        k = rel.offset
        # normalise to A <= B + k
        if rel.op == "leq":
            a, b, k = x, y, k
        elif rel.op == "lt":
            a, b, k = x, y, k - 1
        elif rel.op == "geq":  # x >= y + k  <=>  y <= x - k
            a, b, k = y, x, -k
        else:  # gt: x > y + k  <=>  y <= x - k - 1
            a, b, k = y, x, -k - 1
        db = self.domains[b]
        for r, val in enumerate(self.domains[a], 1):
            # A >= val  ->  B >= val - k ; j = number of B-values below val - k
            j = sum(1 for w in db if w < val - k)
            if j == 0:
                continue
            clause = []
            lower = self.le(a, r - 1)
            if lower is not None:
                clause.append(lower)
            clause.append(-self.le(b, j))
            self.add("constraint", clause)

    def _unary_bound(self, i, op, c):
        dom = self.domains[i]
        if op in ("leq", "lt"):
            bound = c if op == "leq" else c - 1
            r = sum(1 for v in dom if v <= bound)
            lit = self.le(i, r)
            self.add("constraint", [lit] if lit is not None else [])
        else:
            bound = c if op == "geq" else c + 1
            r = sum(1 for v in dom if v < bound)  # values below the bound
            if r == 0:
                return
            if r == len(dom):
                self.add("constraint", [])
            else:
                self.add("constraint", [-self.le(i, r)])

    def finish(self, kind, sides=()):
        self.map.n_vars = self.next_id - 1
        formula = CnfFormula(self.next_id - 1, tuple(self.clauses))
        return EncodedInstance(formula, self.map, kind, dict(self.stats), list(sides))


def encode_direct(instance: CspInstance, cap: int | None = None) -> EncodedInstance:
    b = _Builder(instance, value=True, order=False, cap=cap)
    b.direct_domains()
    for c in instance.constraints:
        b.direct_conflicts(c)
    return b.finish(EncodingKind.DIRECT)


def encode_support(instance: CspInstance, cap: int | None = None, support_amo: bool = True) -> EncodedInstance:
    """Support encoding; ``support_amo=False`` omits the at-most-one clauses."""
    b = _Builder(instance, value=True, order=False, cap=cap)
    b.direct_domains(amo=support_amo)
    for c in instance.constraints:
        b.support_clauses(c)
    return b.finish(EncodingKind.SUPPORT)


def encode_order(instance: CspInstance, cap: int | None = None) -> EncodedInstance:
    b = _Builder(instance, value=False, order=True, cap=cap)
    b.order_domains()
    for c in instance.constraints:
        b.order_conflicts(c)
    return b.finish(EncodingKind.ORDER)


def constraint_side(c) -> str:
    """Which representation the direct-order encoding uses for ``c``."""
    if isinstance(c.relation, Intensional) and c.relation.op in ORDER_OPERATORS:
        return "order"
    return "direct"


def encode_direct_order(instance: CspInstance, cap: int | None = None) -> EncodedInstance:
    b = _Builder(instance, value=True, order=True, cap=cap)
    b.direct_domains()
    b.order_domains()
    b.channel()
    sides = []
    for c in instance.constraints:
        side = constraint_side(c)
        sides.append(side)
        if side == "order":
            b.inequality(c)
        else:
            b.direct_conflicts(c)
    enc = b.finish(EncodingKind.DIRECT_ORDER, sides)
    enc.stats["order_side_constraints"] = sides.count("order")
    enc.stats["direct_side_constraints"] = sides.count("direct")
    return enc


ENCODERS = {
    EncodingKind.DIRECT: encode_direct,
    EncodingKind.SUPPORT: encode_support,
    EncodingKind.ORDER: encode_order,
    EncodingKind.DIRECT_ORDER: encode_direct_order,
}


def encode(instance: CspInstance, kind, cap: int | None = None) -> EncodedInstance:
    return ENCODERS[EncodingKind.parse(kind) if not isinstance(kind, EncodingKind) else kind](instance, cap)


def clause_total(enc: EncodedInstance) -> int:
    return sum(enc.stats[k] for k in ("domain", "constraint", "channel"))


def decode_model(enc: EncodedInstance, model) -> dict[int, int]:
    """CSP assignment from a SAT model (``model[v]`` is the truth value of v).

    Raises DecodeError when the model breaks the exactly-one or chain
    structure of the encoding.
    """
    vm = enc.map
    out = {}
    for i, dom in enumerate(vm.domains):
        rank = None
        if vm.order_vars[i]:
            bits = [bool(model[s]) for s in vm.order_vars[i]]
            if not bits[-1]:
                raise DecodeError(f"variable {i}: top order literal is false")
            first = bits.index(True)
            if not all(bits[first:]):
                raise DecodeError(f"variable {i}: order literals are not monotone")
            rank = first + 1
        if vm.value_vars[i]:
            true = [r for r, s in enumerate(vm.value_vars[i], 1) if model[s]]
            if len(true) != 1:
                raise DecodeError(f"variable {i}: {len(true)} value literals true")
            if rank is not None and rank != true[0]:
                raise DecodeError(f"variable {i}: value and order literals disagree")
            rank = true[0]
        out[i] = dom[rank - 1]
    return out


def decode_and_verify(enc: EncodedInstance, model, instance: CspInstance) -> dict[int, int]:
    assignment = decode_model(enc, model)
    if not is_consistent(instance, assignment):
        raise DecodeError("decoded assignment violates a CSP constraint")
    return assignment


def instance_digest(instance: CspInstance) -> str:
    return hashlib.sha256(dumps(instance).encode()).hexdigest()[:16]


def provenance_comments(enc: EncodedInstance, instance: CspInstance) -> list[str]:
    digest = hashlib.sha256(repr((enc.map.value_vars, enc.map.order_vars)).encode()).hexdigest()[:16]
    lines = [
        f"encoding {enc.kind.value}",
        f"instance {instance.name or 'unnamed'} digest {instance_digest(instance)}",
        f"varmap digest {digest}",
        "clauses " + " ".join(f"{k}={enc.stats[k]}" for k in ("domain", "constraint", "channel")),
    ]
    meta = [f"{k}={instance.tags[k]}" for k in ("n", "d", "m", "t", "seed") if k in instance.tags]
    if meta:
        lines.append("urb " + " ".join(meta))
    return lines
