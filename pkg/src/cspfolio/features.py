"""Fixed-schema feature vectors for CSP instances and their CNF encodings."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .cnf import CnfFormula, DpllConfig, _Engine, solve_dpll
from .csp import CspInstance, Extensional, Intensional, SearchConfig, forbidden_tuples, solve_backtracking
from .encoder import EncodingKind, encode

SCHEMA_VERSION = 1
SENTINEL = -1.0
RELATION_KINDS = ("allowed", "forbidden", "eq", "neq", "lt", "leq", "gt", "geq", "absdiff_eq", "absdiff_neq")
SAT_SCHEMAS = {"sat-direct": EncodingKind.DIRECT, "sat-support": EncodingKind.SUPPORT,
               "sat-directorder": EncodingKind.DIRECT_ORDER}
SCHEMAS = ("csp", *SAT_SCHEMAS, "combined")


@dataclass(frozen=True)
class FeatureVector:
    schema: str
    names: tuple[str, ...]
    values: tuple[float, ...]

    def __post_init__(self):
        if len(self.names) != len(self.values):
            raise ValueError("names and values differ in length")
        if any(not math.isfinite(v) for v in self.values):
            raise ValueError(f"non-finite feature in schema {self.schema}")

    def as_dict(self):
        return dict(zip(self.names, self.values))

    def __getitem__(self, name):
        return self.values[self.names.index(name)]

    def __len__(self):
        return len(self.values)

    def array(self):
        return np.array(self.values, dtype=float)


def _stats(xs):
    """(mean, max, min, coefficient of variation); sentinels for empty input."""
    if len(xs) == 0:
        return SENTINEL, SENTINEL, SENTINEL, SENTINEL
    a = np.asarray(xs, dtype=float)
    mean = float(a.mean())
    cv = float(a.std() / mean) if mean > 0 else SENTINEL
    return mean, float(a.max()), float(a.min()), cv


def _ratio(a, b):
    return float(a) / b if b else SENTINEL


# -- CSP -----------------------------------------------------------------------

CSP_NAMES = (
    "n_vars", "n_constraints", "constraint_var_ratio",
    "domain_mean", "domain_max", "domain_min",
    "tightness_mean", "tightness_max",
    *(f"frac_{k}" for k in RELATION_KINDS), "frac_unary",
    "graph_density", "degree_mean", "degree_max", "degree_cv",
    "probe_nodes", "probe_propagations", "probe_max_depth", "probe_budget_used", "probe_solved",
)


def csp_features(instance: CspInstance, node_budget: int = 1000) -> FeatureVector:
    n = instance.n_vars
    cons = instance.constraints
    m = len(cons)
    dom = [len(v.domain) for v in instance.variables]
    d_mean, d_max, d_min, _ = _stats(dom)
    tight = []
    kinds = dict.fromkeys(RELATION_KINDS, 0)
    unary = 0
    edges = set()
    degree = [0] * n
    for c in cons:
        size = 1
        for i in c.scope:
            size *= len(instance.domain(i))
        tight.append(len(forbidden_tuples(c, instance)) / size)
        rel = c.relation
        kinds[rel.kind if isinstance(rel, (Extensional, Intensional)) else "allowed"] += 1
        if c.arity == 1:
            unary += 1
            continue
        edge = tuple(sorted(c.scope))
        if edge not in edges:
            edges.add(edge)
            degree[edge[0]] += 1
            degree[edge[1]] += 1
    t_mean, t_max, _, _ = _stats(tight)
    pairs = n * (n - 1) // 2
    deg_mean, deg_max, _, deg_cv = _stats(degree)
    probe = solve_backtracking(instance, SearchConfig(propagation="ac3", node_budget=node_budget))
    values = [
        n, m, _ratio(m, n),
        d_mean, d_max, d_min,
        t_mean, t_max,
        *(_ratio(kinds[k], m) for k in RELATION_KINDS), _ratio(unary, m),
        _ratio(len(edges), pairs) if pairs else 0.0, deg_mean, deg_max, deg_cv,
        probe.nodes, probe.propagations, probe.max_depth,
        min(1.0, probe.nodes / node_budget), float(probe.status != "BUDGET_EXHAUSTED"),
    ]
    return FeatureVector("csp", CSP_NAMES, tuple(float(v) for v in values))


# -- SAT -----------------------------------------------------------------------

SAT_NAMES = (
    "n_vars", "n_clauses", "clause_var_ratio", "var_clause_ratio",
    "clause_len_mean", "clause_len_cv", "frac_unary", "frac_binary", "frac_ternary",
    "pos_frac_mean", "pos_frac_cv",
    "frac_horn", "horn_occ_mean", "horn_occ_cv",
    "vg_degree_mean", "vg_degree_cv", "cg_degree_mean", "cg_degree_cv",
    "probe_props_depth1", "probe_props_depth4", "probe_conflicts", "probe_solved",
)


def _sample(clauses, limit):
    if len(clauses) <= limit:
        return list(clauses)
    step = len(clauses) / limit
    return [clauses[int(i * step)] for i in range(limit)]


def _propagation_probe(f: CnfFormula, depths=(1, 4)):
    """Implied literal counts after the first 1 and 4 branching decisions."""
    eng = _Engine(f)
    out = {}
    if eng.has_empty or not eng.assert_units() or not eng.propagate(0):
        return {d: 0.0 for d in depths}
    base = len(eng.trail)
    made = 0
    v = 1
    while made < max(depths):
        while v <= eng.n and eng.value[v] != 0:
            v += 1
        if v > eng.n:
            break
        eng.assign(v)
        made += 1
        ok = eng.propagate(len(eng.trail) - 1)
        if made in depths:
            out[made] = float(len(eng.trail) - base - made)
        if not ok:
            break
    last = float(len(eng.trail) - base - made)
    return {d: out.get(d, last) for d in depths}


def sat_features(f: CnfFormula, conflict_budget: int = 100, graph_sample: int = 2000,
                 schema: str = "sat") -> FeatureVector:
    n, m = f.n_vars, f.n_clauses
    lens = [len(c) for c in f.clauses]
    len_mean, _, _, len_cv = _stats(lens)
    pos = [sum(l > 0 for l in c) / len(c) for c in f.clauses if c]
    pos_mean, _, _, pos_cv = _stats(pos)
    horn = [c for c in f.clauses if sum(l > 0 for l in c) <= 1]
    horn_occ = np.zeros(n + 1)
    for c in horn:
        for l in c:
            horn_occ[abs(l)] += 1
    occ_mean, _, _, occ_cv = _stats(horn_occ[1:])

    sample = _sample(f.clauses, graph_sample)
    neighbours = [set() for _ in range(n + 1)]
    occurs = [[] for _ in range(n + 1)]
    for k, c in enumerate(sample):
        vs = [abs(l) for l in c]
        for a in vs:
            occurs[a].append(k)
            neighbours[a].update(vs)
    vg = [len(neighbours[v]) - 1 for v in range(1, n + 1) if occurs[v]]
    vg_mean, _, _, vg_cv = _stats(vg)
    cg = []
    for c in sample:
        adj = set()
        for l in c:
            adj.update(occurs[abs(l)])
        cg.append(len(adj) - 1)
    cg_mean, _, _, cg_cv = _stats(cg)

    probe = _propagation_probe(f)
    dpll = solve_dpll(f, DpllConfig(conflict_budget=conflict_budget))
    values = [
        n, m, _ratio(m, n), _ratio(n, m),
        len_mean, len_cv,
        _ratio(lens.count(1), m), _ratio(lens.count(2), m), _ratio(lens.count(3), m),
        pos_mean, pos_cv,
        _ratio(len(horn), m), occ_mean, occ_cv,
        vg_mean, vg_cv, cg_mean, cg_cv,
        probe[1], probe[4], dpll.conflicts, float(dpll.status != "BUDGET_EXHAUSTED"),
    ]
    return FeatureVector(schema, SAT_NAMES, tuple(float(v) for v in values))


def combined_features(instance: CspInstance, node_budget: int = 1000, conflict_budget: int = 100) -> FeatureVector:
    parts = instance_features(instance, ("csp", *SAT_SCHEMAS), node_budget, conflict_budget)
    return _combine(parts)


def _combine(parts):
    names, values = [], []
    for schema in ("csp", *SAT_SCHEMAS):
        prefix = schema.replace("sat-", "") + "."
        names += [prefix + n for n in parts[schema].names]
        values += parts[schema].values
    return FeatureVector("combined", tuple(names), tuple(values))


def instance_features(instance: CspInstance, schemas: Sequence[str] = SCHEMAS,
                      node_budget: int = 1000, conflict_budget: int = 100) -> dict[str, FeatureVector]:
    """Feature vectors for several schemas, sharing encodings between them."""
    unknown = set(schemas) - set(SCHEMAS)
    if unknown:
        raise ValueError(f"unknown feature schemas {sorted(unknown)}")
    need = set(schemas)
    if "combined" in need:
        need |= {"csp", *SAT_SCHEMAS}
    out = {}
    if "csp" in need:
        out["csp"] = csp_features(instance, node_budget)
    for schema, kind in SAT_SCHEMAS.items():
        if schema in need:
            out[schema] = sat_features(encode(instance, kind).formula, conflict_budget, schema=schema)
    if "combined" in need:
        out["combined"] = _combine(out)
    return {s: out[s] for s in schemas}


# -- tables --------------------------------------------------------------------

@dataclass
class FeatureTable:
    schema: str
    names: tuple[str, ...]
    instances: list[str]
    matrix: np.ndarray

    @classmethod
    def from_vectors(cls, rows: dict[str, FeatureVector]) -> FeatureTable:
        items = sorted(rows.items())
        first = items[0][1]
        for _, v in items:
            if v.names != first.names or v.schema != first.schema:
                raise ValueError("feature vectors disagree on schema")
        return cls(first.schema, first.names, [k for k, _ in items], np.array([v.values for _, v in items]))

    def rows(self, instances) -> np.ndarray:
        index = {name: i for i, name in enumerate(self.instances)}
        missing = [i for i in instances if i not in index]
        if missing:
            raise KeyError(f"no {self.schema} features for {missing[:3]}")
        return self.matrix[[index[i] for i in instances]]


def write_feature_csv(table: FeatureTable, path) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(f"# schema: {table.schema} version: {SCHEMA_VERSION}\n")
        w = csv.writer(fh)
        w.writerow(["instance", *table.names])
        for name, row in zip(table.instances, table.matrix):
            w.writerow([name, *(repr(float(v)) for v in row)])


def read_feature_csv(path) -> FeatureTable:
    with open(path, newline="") as fh:
        first = fh.readline()
        if not first.startswith("# schema:"):
            raise ValueError(f"{path}: missing '# schema:' comment line")
        parts = first[1:].split()
        schema = parts[1]
        if len(parts) >= 4 and int(parts[3]) != SCHEMA_VERSION:
            raise ValueError(f"{path}: feature schema version {parts[3]} is not {SCHEMA_VERSION}")
        reader = csv.reader(fh)
        header = next(reader)
        names, instances, rows = tuple(header[1:]), [], []
        for row in reader:
            instances.append(row[0])
            rows.append([float(v) for v in row[1:]])
    return FeatureTable(schema, names, instances, np.array(rows, dtype=float).reshape(len(rows), len(names)))
