import numpy as np
import pytest
from sklearn.base import clone

from cspfolio.selector import (
    DEFAULT_HIERARCHY,
    ApproachId,
    FlatSelector,
    HierarchicalSelector,
    IncompleteMatrix,
    PerformanceRecord,
    RunMatrix,
    build_tree,
    cross_validate,
    full_portfolio,
    load_selector,
    par10,
    save_selector,
    selection_score,
    stratified_folds,
    subset_filters,
    virtual_best,
)
from cspfolio.selector.data import read_matrix_csv, write_matrix_csv
from cspfolio.selector.synthetic import planted_corpus

SMALL = ["csp:a", "csp:b", "sat:direct:s1", "sat:direct:s2", "sat:support:s1"]


def rec(inst, approach, runtime, timeout=3600.0):
    if runtime is None:
        return PerformanceRecord(inst, approach, "timeout", timeout, timeout)
    return PerformanceRecord(inst, approach, "solved", runtime, timeout)


class TestData:
    def test_approach_ids(self):
        a = ApproachId.parse("sat:direct-order:minisat")
        assert a.encoding == "directorder" and str(a) == "sat:directorder:minisat"
        assert ApproachId.parse("csp:mistral").family == "csp"
        for bad in ("csp", "sat:direct", "sat:log:x", "smt:z3"):
            with pytest.raises(ValueError):
                ApproachId.parse(bad)

    def test_full_portfolio_size(self):
        assert len(full_portfolio(["m", "g"], ["direct", "support", "directorder"], list("abcdefg"))) == 23

    def test_record_invariants(self):
        with pytest.raises(ValueError):
            PerformanceRecord("i", "csp:a", "timeout", 5.0, 10.0)
        with pytest.raises(ValueError):
            PerformanceRecord("i", "csp:a", "solved", 11.0, 10.0)
        with pytest.raises(ValueError):
            PerformanceRecord("i", "csp:a", "crashed", 1.0, 10.0)
        assert PerformanceRecord("i", "csp:a", "error", 0.5, 10.0).par10 == 100.0

    def test_matrix_dense(self):
        with pytest.raises(IncompleteMatrix):
            RunMatrix([rec("i1", "csp:a", 1.0), rec("i2", "csp:b", 1.0)])
        with pytest.raises(ValueError):
            RunMatrix([rec("i1", "csp:a", 1.0), rec("i1", "csp:a", 2.0)])

    def test_csv_round_trip(self, tmp_path):
        m, _ = planted_corpus(SMALL, n_instances=12, seed=3)
        write_matrix_csv(m.records(), tmp_path / "m.csv")
        back = read_matrix_csv(tmp_path / "m.csv")
        assert back.records() == m.records()


class TestScoring:
    def test_par10_examples(self):
        assert par10([10.0, None], timeout=3600) == 18005
        assert par10([0.0, 0.0], timeout=5) == 0
        recs = [rec("a", "csp:a", 10.0), rec("b", "csp:a", None)]
        assert par10(recs) == 18005
        with pytest.raises(ValueError):
            par10([])

    def test_par10_scaling_and_permutation(self):
        rng = np.random.default_rng(0)
        times = [float(t) if t < 80 else None for t in rng.uniform(0, 100, 30)]
        base = par10(times, timeout=80)
        assert par10(list(reversed(times)), timeout=80) == pytest.approx(base)
        scaled = [None if t is None else 3 * t for t in times]
        assert par10(scaled, timeout=240) == pytest.approx(3 * base)

    def test_virtual_best(self):
        m = RunMatrix([rec("i1", "csp:a", 1.0), rec("i1", "csp:b", 100.0),
                       rec("i2", "csp:a", 100.0), rec("i2", "csp:b", 1.0)])
        vb = virtual_best(m)
        assert vb.par10 == 1.0 and vb.n_solved == 2
        assert {k: str(v) for k, v in vb.choice.items()} == {"i1": "csp:a", "i2": "csp:b"}
        assert virtual_best(m, ["csp:a"]).par10 == par10(m.record(i, "csp:a") for i in m.instances)
        assert selection_score(m, {"i1": "csp:b", "i2": "csp:b"}) == (50.5, 2)

    def test_subset_filters(self):
        names = subset_filters(SMALL)
        assert list(names) == ["VB all", "VB CSP", "VB SAT", "VB direct encoding", "VB support encoding"]
        assert len(names["VB direct encoding"]) == 2


class TestFolds:
    def test_partition_and_balance(self):
        rng = np.random.default_rng(1)
        labels = rng.choice(["a", "b", "c"], size=100, p=[0.6, 0.3, 0.1]).tolist()
        folds = stratified_folds(labels, 10, seed=4)
        assert all(len(f) == 10 for f in folds)
        allidx = np.concatenate(folds)
        assert sorted(allidx.tolist()) == list(range(100))
        for lab in "abc":
            share = labels.count(lab) / 10
            for f in folds:
                count = sum(labels[i] == lab for i in f)
                assert abs(count - share) <= 1

    def test_errors(self):
        with pytest.raises(ValueError):
            stratified_folds(["a"] * 5, 10)
        with pytest.raises(ValueError):
            stratified_folds(["a"] * 5, 1)


class TestTree:
    def test_shape(self):
        tree = build_tree(SMALL)
        assert tree["root"] == [("node", "csp"), ("node", "encoding")]
        assert tree["encoding"] == [("node", "solver:direct"), ("node", "solver:support")]
        assert tree["solver:direct"] == [("leaf", 2), ("leaf", 3)]

    def test_sat_only(self):
        assert build_tree(["sat:direct:x", "sat:order:y"])["root"] == [("node", "encoding")]


def _planted(n=150, noise=0.0, seed=0, approaches=SMALL):
    m, F = planted_corpus(approaches, n_instances=n, noise=noise, seed=seed)
    return m, F, m.scores(approaches)


class TestSelectors:
    def test_csp_always_wins_routes_to_csp(self):
        rng = np.random.default_rng(5)
        X = rng.normal(size=(80, 3))
        costs = np.column_stack([np.full(80, 1.0), np.full(80, 2.0)] + [np.full(80, 50.0)] * 3)
        sel = HierarchicalSelector(SMALL).fit(X[:60], costs[:60])
        assert all(p.startswith("csp:") for p in sel.predict(X[60:]))
        assert sel.flags_["root"]["empty_branches"] == [1]

    def test_dominant_flat(self):
        X = np.random.default_rng(6).normal(size=(40, 2))
        costs = np.column_stack([np.full(40, 3.0), np.full(40, 9.0)])
        sel = FlatSelector(["csp:a", "csp:b"], learner="knn-class").fit(X, costs)
        assert set(sel.predict(X)) == {"csp:a"}
        assert sel.chooser_.constant_ == 0

    def test_planted_noiseless_reaches_vbs(self):
        m, F, costs = _planted()
        vbs = costs.min(axis=1)
        for sel in (HierarchicalSelector(SMALL, target="raw"), FlatSelector(SMALL, target="raw")):
            picks = sel.fit(F, costs).predict_index(F)
            got = costs[np.arange(len(F)), picks]
            assert np.allclose(got, vbs), type(sel).__name__

    def test_log_target_close_to_vbs(self):
        # a log-scale fit of linear runtimes is close to, not exactly, the oracle
        m, F, costs = _planted()
        picks = HierarchicalSelector(SMALL).fit(F, costs).predict_index(F)
        gap = costs[np.arange(len(F)), picks].mean() / costs.min(axis=1).mean() - 1
        assert 0 <= gap < 0.02

    def test_schema_dict_routing(self):
        m, F, costs = _planted(n=60)
        feats = {"csp": F, "sat-directorder": F[:, ::-1]}
        nodes = {"solver:support": {"learner": "linear", "schema": "sat-directorder"}}
        sel = HierarchicalSelector(SMALL, nodes=nodes).fit(feats, costs)
        assert len(sel.predict(feats)) == 60
        with pytest.raises(KeyError):
            HierarchicalSelector(SMALL, nodes={"root": {"schema": "sat-direct"}}).fit(feats, costs)

    def test_decision_paths(self):
        m, F, costs = _planted(n=60)
        sel = HierarchicalSelector(SMALL).fit(F, costs)
        for path, leaf in sel.decision_paths(F[:10]):
            assert path[0][0] == "root"
            if str(sel.approaches_[leaf]).startswith("sat:"):
                assert [p[0] for p in path][:2] == ["root", "encoding"]

    def test_bad_inputs(self):
        with pytest.raises(ValueError):
            HierarchicalSelector(SMALL).fit(np.zeros((5, 2)), np.zeros((5, 3)))
        with pytest.raises(ValueError):
            FlatSelector(SMALL, target="sqrt").fit(np.zeros((5, 2)), np.ones((5, 5)))

    def test_clone(self):
        sel = HierarchicalSelector(SMALL, nodes=DEFAULT_HIERARCHY, target="raw")
        twin = clone(sel)
        assert twin.get_params()["target"] == "raw" and twin.nodes == DEFAULT_HIERARCHY


class TestPersist:
    @pytest.mark.parametrize("make", [
        lambda: HierarchicalSelector(SMALL, nodes={"root": {"learner": "tree"}, "csp": {"learner": "knn:2"}}),
        lambda: HierarchicalSelector(SMALL, default_learner="cluster:3"),
        lambda: FlatSelector(SMALL, learner="knn-class:3", target="raw"),
        lambda: FlatSelector(["csp:only"]),
    ])
    def test_round_trip(self, make, tmp_path):
        approaches = make().approaches
        m, F = planted_corpus(approaches, n_instances=50, noise=0.3, seed=2)
        costs = m.scores(approaches)
        sel = make().fit(F, costs)
        save_selector(sel, tmp_path / "sel.json")
        back = load_selector(tmp_path / "sel.json")
        assert type(back) is type(sel)
        assert list(back.predict(F)) == list(sel.predict(F))

    def test_rejects_foreign_document(self, tmp_path):
        from cspfolio.selector import selector_from_dict

        with pytest.raises(ValueError):
            selector_from_dict({"format": "other"})
        with pytest.raises(ValueError):
            selector_from_dict({"format": "cspfolio-selector", "version": 99})


class TestCrossValidation:
    def test_invariants(self):
        m, F, _ = _planted(n=100, noise=0.5, seed=9)
        res = cross_validate(m, F, HierarchicalSelector(SMALL), folds=10, seed=1)
        assert len(res.decisions) == 100 and len({d[0] for d in res.decisions}) == 100
        assert len(res.fold_par10) == 10
        assert res.par10 >= res.vbs_par10 - 1e-9
        assert res.n_solved <= virtual_best(m).n_solved
        again = cross_validate(m, F, HierarchicalSelector(SMALL), folds=10, seed=1)
        assert again.decisions == res.decisions

    def test_noiseless_equals_vbs(self):
        m, F, _ = _planted(n=200)
        res = cross_validate(m, F, FlatSelector(SMALL, target="raw"), folds=10)
        assert res.par10 == pytest.approx(res.vbs_par10, rel=1e-9)

    def test_too_few_instances(self):
        m, F, _ = _planted(n=8)
        with pytest.raises(ValueError):
            cross_validate(m, F, FlatSelector(SMALL), folds=10)
