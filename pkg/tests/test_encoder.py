import itertools
from math import comb

import numpy as np
import pytest

from cspfolio.cnf import count_models, solve_dpll, unit_propagate
from cspfolio.csp import Constraint, CspInstance, Extensional, Intensional, ac3, alldifferent, is_consistent
from cspfolio.encoder import (
    DecodeError,
    EncodingKind,
    clause_total,
    constraint_side,
    decode_and_verify,
    decode_model,
    encode,
    encode_direct,
    encode_direct_order,
    encode_order,
    encode_support,
    provenance_comments,
)
from oracles import brute_ac, brute_model_count, brute_solutions, model_satisfies, random_instance

KINDS = list(EncodingKind)
NAMES = "xyz"


def example1():
    return CspInstance.from_domains({"X": [1, 2, 3], "Y": [1, 2, 3], "Z": [1, 2, 3]}, alldifferent(["X", "Y", "Z"]))


def symbolic(enc, text):
    """Parse clauses written like ``-x1 y2`` (value) or ``-x<=1 y<=2`` (order)."""
    out = []
    for clause in text.split("|"):
        lits = []
        for tok in clause.split():
            neg = tok.startswith("-")
            tok = tok.lstrip("-")
            i = NAMES.index(tok[0])
            if tok[1:3] == "<=":
                sid = enc.map.order_vars[i][int(tok[3:]) - 1]
            else:
                sid = enc.map.value_vars[i][int(tok[1:]) - 1]
            lits.append(-sid if neg else sid)
        out.append(frozenset(lits))
    return out


DIRECT_DOMAIN = " | ".join(
    f"{v}1 {v}2 {v}3 | -{v}1 -{v}2 | -{v}1 -{v}3 | -{v}2 -{v}3" for v in NAMES)


def pairs_block(a, b, fmt):
    return " | ".join(fmt(a, b, k) for k in (1, 2, 3))


class TestGoldenTables:
    def test_direct(self):
        enc = encode_direct(example1())
        expected = symbolic(enc, DIRECT_DOMAIN)
        for a, b in ("xy", "xz", "yz"):
            expected += symbolic(enc, pairs_block(a, b, lambda a, b, k: f"-{a}{k} -{b}{k}"))
        assert [frozenset(c) for c in enc.formula.clauses] == expected
        assert enc.formula.n_vars == 9 and len(enc.formula.clauses) == 21
        assert enc.stats["domain"] == 12 and enc.stats["constraint"] == 9

    def test_support(self):
        enc = encode_support(example1())
        expected = symbolic(enc, DIRECT_DOMAIN)

        def sup(a, b, k):
            others = " ".join(f"{b}{j}" for j in (1, 2, 3) if j != k)
            return f"-{a}{k} {others}"

        for a, b in ("xy", "xz", "yz"):
            expected += symbolic(enc, pairs_block(a, b, sup))
            expected += symbolic(enc, pairs_block(b, a, sup))
        assert [frozenset(c) for c in enc.formula.clauses] == expected
        assert len(enc.formula.clauses) == 30 and enc.stats["constraint"] == 18

    def test_order(self):
        enc = encode_order(example1())
        expected = symbolic(enc, " | ".join(f"-{v}<=1 {v}<=2 | -{v}<=2 {v}<=3 | {v}<=3" for v in NAMES))

        def conflict(a, b, k):
            if k == 1:
                return f"-{a}<=1 -{b}<=1"
            return f"-{a}<={k} {a}<={k - 1} -{b}<={k} {b}<={k - 1}"

        for a, b in ("xy", "xz", "yz"):
            expected += symbolic(enc, pairs_block(a, b, conflict))
        assert [frozenset(c) for c in enc.formula.clauses] == expected
        assert enc.formula.n_vars == 9 and len(enc.formula.clauses) == 18
        assert enc.stats["domain"] == 9

    def test_direct_order_counts(self):
        enc = encode_direct_order(example1())
        # 12 direct + 9 order domain, 8 channel per variable, 9 conflicts
        assert enc.stats == {"domain": 21, "channel": 24, "constraint": 9,
                             "order_side_constraints": 0, "direct_side_constraints": 3}
        assert enc.formula.n_vars == 18 and len(enc.formula.clauses) == 54

    @pytest.mark.parametrize("kind", KINDS)
    def test_every_model_is_a_permutation(self, kind):
        enc = encode(example1(), kind)
        n, clauses = enc.formula.n_vars, enc.formula.clauses
        assert count_models(enc.formula).count == 6
        assert brute_model_count(n, clauses) == 6
        seen = set()
        for bits in itertools.product((False, True), repeat=n):
            model = (None,) + bits
            if model_satisfies(clauses, model):
                seen.add(tuple(decode_model(enc, model).values()))
        assert seen == set(itertools.permutations((1, 2, 3)))


class TestSmallCases:
    def test_single_variable(self):
        inst = CspInstance.from_domains({"X": [7]})
        assert encode_direct(inst).formula.clauses == ((1,),)
        assert encode_order(inst).formula.clauses == ((1,),)

    def test_neq_d2(self):
        inst = CspInstance.from_domains({"X": [1, 2], "Y": [1, 2]}, [Constraint(("X", "Y"), Intensional("neq"))])
        enc = encode_direct(inst)
        assert enc.stats["domain"] == 4 and enc.stats["constraint"] == 2

    def test_eq_support(self):
        inst = CspInstance.from_domains({"X": [1, 2], "Y": [1, 2]}, [Constraint(("X", "Y"), Intensional("eq"))])
        enc = encode_support(inst)
        x, y = enc.map.value_vars
        cons = enc.formula.clauses[-4:]
        assert cons == ((-x[0], y[0]), (-x[1], y[1]), (-y[0], x[0]), (-y[1], x[1]))

    def test_empty_support_unit(self):
        forb = frozenset({(2, 1), (2, 2)})
        inst = CspInstance.from_domains({"X": [1, 2], "Y": [1, 2]}, [Constraint(("X", "Y"), Extensional(forb, False))])
        enc = encode_support(inst)
        x2 = enc.map.value_vars[0][1]
        assert (-x2,) in enc.formula.clauses
        assert -x2 in unit_propagate(enc.formula).implied

    def test_order_first_rank_pair(self):
        inst = CspInstance.from_domains({"X": [1, 2, 3], "Y": [1, 2, 3]},
                                        [Constraint(("X", "Y"), Extensional(frozenset({(1, 1)}), False))])
        enc = encode_order(inst)
        assert enc.formula.clauses[-1] == (-enc.map.order_vars[0][0], -enc.map.order_vars[1][0])

    def test_order_d1_drops_literals(self):
        inst = CspInstance.from_domains({"X": [5], "Y": [1, 2]},
                                        [Constraint(("X", "Y"), Extensional(frozenset({(5, 1)}), False))])
        enc = encode_order(inst)
        y1 = enc.map.order_vars[1][0]
        assert enc.formula.clauses[-1] == (-y1,)
        assert count_models(enc.formula).count == 1

    def test_direct_order_single_variable(self):
        enc = encode_direct_order(CspInstance.from_domains({"X": [1, 2, 3]}))
        assert enc.stats["domain"] == 4 + 3 and enc.stats["channel"] == 8

    def test_direct_order_sides(self):
        inst = CspInstance.from_domains({"X": [1, 2, 3], "Y": [1, 2, 3]}, [
            Constraint(("X",), Intensional("leq", 2)),
            Constraint(("X", "Y"), Intensional("neq")),
        ])
        enc = encode_direct_order(inst)
        assert enc.constraint_sides == ["order", "direct"]
        assert constraint_side(inst.constraints[0]) == "order"
        le2 = enc.map.order_vars[0][1]
        assert (le2,) in enc.formula.clauses
        x, y = enc.map.value_vars
        assert {(-x[k], -y[k]) for k in range(3)} <= set(enc.formula.clauses)


@pytest.mark.parametrize("d", range(1, 13))
def test_domain_clause_formulas(d):
    inst = CspInstance.from_domains({"X": list(range(d)), "Y": list(range(10, 10 + d))})
    assert encode_direct(inst).stats["domain"] == 2 * (1 + comb(d, 2))
    assert encode_support(inst).stats["domain"] == 2 * (1 + comb(d, 2))
    assert encode_order(inst).stats["domain"] == 2 * d


class TestDecode:
    def test_direct(self):
        enc = encode_direct(example1())
        model = [None] + [False] * 9
        for i, r in enumerate((2, 1, 3)):
            model[enc.map.value_vars[i][r - 1]] = True
        assert decode_model(enc, model) == {0: 2, 1: 1, 2: 3}

    def test_order_first_true(self):
        inst = CspInstance.from_domains({"X": [10, 20, 30]})
        enc = encode_order(inst)
        ids = enc.map.order_vars[0]
        model = {ids[0]: False, ids[1]: True, ids[2]: True}
        assert decode_model(enc, model) == {0: 20}

    def test_broken_models(self):
        enc = encode_direct(example1())
        with pytest.raises(DecodeError):
            decode_model(enc, [None] + [False] * 9)
        enc = encode_order(CspInstance.from_domains({"X": [1, 2, 3]}))
        with pytest.raises(DecodeError):
            decode_model(enc, [None, True, False, True])
        with pytest.raises(DecodeError):
            decode_model(enc, [None, True, True, False])

    def test_verify_rejects_violation(self):
        enc = encode_direct(example1())
        model = [None] + [False] * 9
        for i in range(3):
            model[enc.map.value_vars[i][0]] = True
        with pytest.raises(DecodeError):
            decode_and_verify(enc, model, example1())


class TestAgainstOracles:
    def test_model_count_bijection(self):
        rng = np.random.default_rng(21)
        for _ in range(120):
            inst = random_instance(rng, n_max=4, d_max=3, m_max=5)
            truth = len(brute_solutions(inst))
            for kind in KINDS:
                enc = encode(inst, kind)
                assert clause_total(enc) == len(enc.formula.clauses)
                assert count_models(enc.formula).count == truth, (kind, inst)

    def test_sat_equivalence_and_decoding(self):
        rng = np.random.default_rng(22)
        for _ in range(150):
            inst = random_instance(rng, n_max=6, d_max=4, m_max=10)
            truth = bool(brute_solutions(inst))
            for kind in KINDS:
                enc = encode(inst, kind)
                res = solve_dpll(enc.formula)
                assert (res.status == "SAT") == truth
                if truth:
                    assert is_consistent(inst, decode_model(enc, res.model))

    def test_inequalities_on_order_side(self):
        rng = np.random.default_rng(23)
        ops = ("lt", "leq", "gt", "geq")
        for _ in range(150):
            n = int(rng.integers(2, 4))
            doms = [(f"v{i}", sorted(rng.choice(np.arange(-3, 6), size=int(rng.integers(1, 5)), replace=False).tolist()))
                    for i in range(n)]
            cons = [Constraint((x, y), Intensional(str(rng.choice(ops)), int(rng.integers(-2, 3))))
                    for x, y in itertools.combinations(range(n), 2) if rng.random() < 0.8]
            if rng.random() < 0.5:
                cons.append(Constraint((0,), Intensional(str(rng.choice(ops)), int(rng.integers(-3, 6)))))
            inst = CspInstance.from_domains(doms, cons)
            enc = encode_direct_order(inst)
            assert all(s == "order" for s in enc.constraint_sides)
            assert count_models(enc.formula).count == len(brute_solutions(inst))

    def test_support_propagation_is_arc_consistency(self):
        rng = np.random.default_rng(24)
        for _ in range(200):
            inst = random_instance(rng, n_max=6, d_max=5, m_max=10, unary=False)
            live = brute_ac(inst)
            enc = encode_support(inst, support_amo=False)
            res = unit_propagate(enc.formula)
            wiped = any(not s for s in live.values())
            if res.status == "CONFLICT":
                assert wiped
                continue
            assert not wiped
            removed = {(i, val) for i, v in enumerate(inst.variables) for val in v.domain.values
                       if val not in live[i]}
            implied = {(i, inst.variables[i].domain.values[r])
                       for i, ids in enumerate(enc.map.value_vars) for r, s in enumerate(ids) if -s in res.implied}
            assert implied == removed
            assert ac3(inst).wipeout is False


def test_provenance_comments():
    inst = example1()
    enc = encode_order(inst)
    lines = provenance_comments(enc, inst)
    assert lines[0] == "encoding order"
    assert "clauses domain=9 constraint=9 channel=0" in lines
    text = enc.dimacs(extra_comments=lines)
    assert text.startswith("c encoding order\n") and "p cnf 9 18\n" in text
