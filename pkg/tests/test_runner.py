import json
import os
import sys
import textwrap
import time

import numpy as np
import pytest

from cspfolio.csp import CspInstance, alldifferent, is_consistent
from cspfolio.generator import UrbParams, generate_urb
from cspfolio.runner import (
    DEFAULT_APPROACHES,
    INTERNAL_ADAPTERS,
    SOLVER_PATH_ENV,
    SWEEP_FIELDS,
    ExperimentConfig,
    Limits,
    SolverAdapter,
    evaluate_portfolio,
    load_adapters,
    parse_solver_output,
    phase_transition_experiment,
    run_approach,
    run_matrix,
    write_sweep_csv,
)
from cspfolio.selector import FlatSelector, PerformanceRecord, RunMatrix


def example1():
    return CspInstance.from_domains({"X": [1, 2, 3], "Y": [1, 2, 3], "Z": [1, 2, 3]},
                                    alldifferent(["X", "Y", "Z"]), name="ex1")


def pigeons(n):
    names = [f"p{i}" for i in range(n + 1)]
    return CspInstance.from_domains({v: range(n) for v in names}, alldifferent(names), name=f"php{n}")


def script(tmp_path, name, body):
    path = tmp_path / name
    path.write_text(f"#!{sys.executable}\n" + textwrap.dedent(body))
    path.chmod(0o755)
    return str(path)


def with_adapter(adapter):
    return {**INTERNAL_ADAPTERS, adapter.name: adapter}


class TestInternal:
    @pytest.mark.parametrize("approach", DEFAULT_APPROACHES)
    def test_example1_solved_and_verified(self, approach):
        res = run_approach(example1(), approach)
        assert res.record.status == "solved" and res.answer == "SAT"
        assert sorted(res.assignment.values()) == [1, 2, 3]
        assert is_consistent(example1(), res.assignment)
        assert res.effort > 0 and res.record.runtime == pytest.approx(res.effort * 1e-6)

    def test_unsat(self):
        res = run_approach(pigeons(3), "sat:support:internal-dpll", Limits(verify_unsat=True))
        assert res.record.status == "solved" and res.answer == "UNSAT"

    @pytest.mark.parametrize("clock", ["effort", "wall"])
    def test_tiny_timeout(self, clock):
        res = run_approach(pigeons(7), "csp:internal-bt", Limits(timeout=0.001, clock=clock))
        assert res.record.status == "timeout" and res.record.runtime == 0.001

    def test_effort_clock_deterministic(self):
        inst = generate_urb(UrbParams(12, 5, 30, 0.3, seed=4))
        a = run_approach(inst, "sat:direct:internal-dpll")
        b = run_approach(inst, "sat:direct:internal-dpll")
        assert a.record == b.record and a.effort == b.effort

    def test_adapter_errors(self):
        with pytest.raises(KeyError):
            run_approach(example1(), "csp:nosuch")
        with pytest.raises(ValueError):
            run_approach(example1(), "sat:direct:internal-bt")
        with pytest.raises(ValueError):
            Limits(timeout=0)
        with pytest.raises(ValueError):
            SolverAdapter("x", "sat-external")


class TestExternal:
    def test_bin_false_is_error(self):
        ad = SolverAdapter("false", "sat-external", ("/bin/false", "{input}"))
        res = run_approach(example1(), "sat:direct:false", adapters=with_adapter(ad))
        assert res.record.status == "error" and "no status line" in res.diagnostic

    def test_missing_executable_is_error(self):
        ad = SolverAdapter("ghost", "sat-external", ("no-such-solver-xyz", "{input}"))
        res = run_approach(example1(), "sat:direct:ghost", adapters=with_adapter(ad))
        assert res.record.status == "error" and "not found" in res.diagnostic

    def test_hard_kill(self, tmp_path):
        path = script(tmp_path, "sleeper", """
            import time
            time.sleep(30)
        """)
        ad = SolverAdapter("sleeper", "sat-external", (path, "{input}"))
        start = time.monotonic()
        res = run_approach(example1(), "sat:direct:sleeper", Limits(timeout=0.5), with_adapter(ad))
        elapsed = time.monotonic() - start
        assert res.record.status == "timeout" and res.record.runtime == 0.5
        assert elapsed < 0.5 + 1.0 + 1.0

    def test_lying_sat_solver(self, tmp_path):
        path = script(tmp_path, "liar", """
            print("s SATISFIABLE")
            print("v " + " ".join(str(i) for i in range(1, 10)) + " 0")
        """)
        ad = SolverAdapter("liar", "sat-external", (path, "{input}"))
        res = run_approach(example1(), "sat:direct:liar", adapters=with_adapter(ad))
        assert res.record.status == "error" and "verification failed" in res.diagnostic

    def test_lying_unsat_solver(self, tmp_path):
        path = script(tmp_path, "pessimist", 'print("s UNSATISFIABLE")\n')
        ad = SolverAdapter("pessimist", "sat-external", (path, "{input}"))
        adapters = with_adapter(ad)
        trusting = run_approach(example1(), "sat:order:pessimist", Limits(), adapters)
        assert trusting.record.status == "solved" and trusting.answer == "UNSAT"
        checked = run_approach(example1(), "sat:order:pessimist", Limits(verify_unsat=True), adapters)
        assert checked.record.status == "error"

    def test_honest_dimacs_solver_via_search_path(self, tmp_path, monkeypatch):
        bindir = tmp_path / "bin"
        bindir.mkdir()
        script(bindir, "honest", """
            import sys
            from cspfolio.cnf import read_dimacs, solve_dpll
            text = open(sys.argv[1]).read()
            assert "c encoding support" in text
            res = solve_dpll(read_dimacs(text))
            if res.status == "SAT":
                print("s SATISFIABLE")
                print("v " + " ".join(str(v if res.model[v] else -v) for v in range(1, len(res.model))) + " 0")
            else:
                print("s UNSATISFIABLE")
        """)
        monkeypatch.setenv(SOLVER_PATH_ENV, str(bindir))
        ad = SolverAdapter("honest", "sat-external", "honest {input}")
        res = run_approach(example1(), "sat:support:honest", adapters=with_adapter(ad))
        assert res.record.status == "solved" and sorted(res.assignment.values()) == [1, 2, 3]

    def test_csp_external(self, tmp_path):
        path = script(tmp_path, "cspsolver", """
            import sys
            assert "alldifferent" in open(sys.argv[1]).read() or "neq" in open(sys.argv[1]).read()
            print("s SATISFIABLE")
            print("v X=3 Y=1 Z=2")
        """)
        ad = SolverAdapter("ext", "csp-external", (path, "{input}", "--seed", "{seed}"))
        res = run_approach(example1(), "csp:ext", adapters=with_adapter(ad), seed=5)
        assert res.record.status == "solved" and res.assignment == {0: 3, 1: 1, 2: 2}

    def test_parse_output(self):
        assert parse_solver_output("c x\ns SATISFIABLE\nv 1 -2\nv 3 0\n") == ("SAT", ["1", "-2", "3", "0"])
        assert parse_solver_output("s UNKNOWN\n") == (None, [])
        with pytest.raises(ValueError):
            parse_solver_output("s MAYBE\n")

    def test_load_adapters(self, tmp_path):
        path = tmp_path / "adapters.json"
        path.write_text(json.dumps([{"name": "mini", "kind": "sat-external", "command": "minisat {input}",
                                     "memory_mb": 512}]))
        ads = load_adapters(path)
        assert ads["mini"].command == ("minisat", "{input}") and ads["mini"].memory_mb == 512
        assert "internal-dpll" in ads


class TestMatrix:
    def test_parallel_equals_serial(self):
        insts = {f"u{k}": generate_urb(UrbParams(10, 4, 20, 0.3, seed=k)) for k in range(4)}
        seen = []
        m1, _ = run_matrix(insts, DEFAULT_APPROACHES, Limits(timeout=1.0), sink=seen.append)
        m2, _ = run_matrix(insts, DEFAULT_APPROACHES, Limits(timeout=1.0), jobs=4, repetitions=3)
        assert m1.records() == m2.records()
        assert len(seen) == 4 * len(DEFAULT_APPROACHES)

    def test_needs_approaches(self):
        with pytest.raises(ValueError):
            run_matrix({"a": example1()}, [])


class TestSweep:
    def test_small_sweep(self, tmp_path):
        keep = []
        ts = [0.0, 0.5, 0.95]
        approaches = ["csp:internal-mac", "sat:direct:internal-dpll"]
        rows = phase_transition_experiment(8, 4, 12, ts, 3, approaches, Limits(timeout=5.0), 1, keep=keep)
        assert len(rows) == len(ts) * 2 and len(keep) == len(ts) * 2 * 3
        by = {(r["tightness"], r["approach"]): r for r in rows}
        assert by[(0.0, "csp:internal-mac")]["solved_fraction"] == 1.0
        assert by[(0.0, "csp:internal-mac")]["mean_conflicts"] == ""
        assert by[(0.95, "sat:direct:internal-dpll")]["solved_fraction"] == 1.0
        again = phase_transition_experiment(8, 4, 12, ts, 3, approaches, Limits(timeout=5.0), 1)
        assert again == rows
        write_sweep_csv(rows, tmp_path / "sweep.csv")
        assert (tmp_path / "sweep.csv").read_text().splitlines()[0] == ",".join(SWEEP_FIELDS)


def _records(table, timeout=100.0):
    out = []
    for inst, row in table.items():
        for a, t in row.items():
            out.append(PerformanceRecord(inst, a, "solved", t, timeout) if t is not None
                       else PerformanceRecord(inst, a, "timeout", timeout, timeout))
    return out


class TestEvaluate:
    def test_complementary_corpus(self):
        rng = np.random.default_rng(0)
        table = {}
        for k in range(20):
            csp_wins = k % 2 == 0
            table[f"i{k:02d}"] = {
                "csp:a": 1.0 if csp_wins else None,
                "sat:direct:s": None if csp_wins else 2.0,
                "sat:support:s": None if csp_wins else float(rng.uniform(2.5, 4)),
            }
        matrix = RunMatrix(_records(table))
        F = np.array([[k % 2, rng.uniform()] for k in range(20)], dtype=float)
        report = evaluate_portfolio(matrix, F, {"flat": FlatSelector([str(a) for a in matrix.approaches])}, folds=5)
        vbs = {label: score for kind, label, score, _ in report.rows if kind == "vbs"}
        assert vbs["VB all"] < vbs["VB CSP"] and vbs["VB all"] < vbs["VB SAT"]
        assert vbs["VB SAT"] <= vbs["VB direct encoding"] and vbs["VB SAT"] <= vbs["VB support encoding"]
        sel = [score for kind, _, score, _ in report.rows if kind == "selector"]
        assert all(s >= vbs["VB all"] for s in sel)
        assert len(report.decisions) == 20
        assert "VB all" in report.table()

    def test_single_approach(self):
        matrix = RunMatrix(_records({f"i{k}": {"sat:direct:s": float(k + 1)} for k in range(10)}))
        report = evaluate_portfolio(matrix, np.arange(10.0)[:, None], selectors={})
        vbs = [score for kind, _, score, _ in report.rows if kind != "selector"]
        assert len(set(vbs)) == 1

    def test_report_files(self, tmp_path):
        matrix = RunMatrix(_records({f"i{k}": {"csp:a": 1.0, "csp:b": 2.0} for k in range(10)}))
        report = evaluate_portfolio(matrix, np.zeros((10, 1)), folds=2)
        report.write(tmp_path / "r.csv")
        report.write_decisions(tmp_path / "d.csv")
        assert (tmp_path / "r.csv").read_text().startswith("kind,label,par10,n_solved,n_instances\n")
        assert len((tmp_path / "d.csv").read_text().splitlines()) == 1 + 3 * 10


class TestConfig:
    def test_validation(self):
        with pytest.raises(ValueError):
            ExperimentConfig()
        with pytest.raises(ValueError):
            ExperimentConfig(instances=["a.csp"], timeout=-1)
        with pytest.raises(ValueError):
            ExperimentConfig(instances=["a.csp"], approaches=[])

    def test_grid_and_files(self, tmp_path):
        from cspfolio import cspfile

        cspfile.dump(example1(), tmp_path / "ex1.csp")
        cfg = ExperimentConfig(instances=[str(tmp_path / "ex1.csp")],
                               grid={"n_vars": 5, "domain_size": 3, "n_constraints": 4,
                                     "tightness": [0.2, 0.4, 0.2], "replicas": 2})
        path = tmp_path / "cfg.json"
        path.write_text(json.dumps(cfg.to_dict()))
        loaded = ExperimentConfig.load(path)
        insts = loaded.load_instances()
        assert len(insts) == 1 + 2 * 2 and "ex1" in insts
        assert os.path.basename(loaded.instances[0]) == "ex1.csp"
