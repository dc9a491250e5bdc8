"""Command-line entry point: ``cspfolio <subcommand> ...``."""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from . import cspfile
from .csp import validate
from .encoder import encode, provenance_comments
from .features import SCHEMAS, FeatureTable, instance_features, read_feature_csv, write_feature_csv
from .generator import UrbParams, generate_suite, tightness_grid, write_manifest
from .runner import (
    DEFAULT_APPROACHES,
    ExperimentConfig,
    Limits,
    evaluate_portfolio,
    feature_arrays,
    load_adapters,
    phase_transition_experiment,
    run_approach,
    run_matrix,
    write_sweep_csv,
)
from .selector import (
    DEFAULT_HIERARCHY,
    FlatSelector,
    HierarchicalSelector,
    IncompleteMatrix,
    load_selector,
    save_selector,
)
from .selector.data import read_matrix_csv, write_matrix_csv

log = logging.getLogger("cspfolio")


class CliError(Exception):
    pass


def _instance_files(paths):
    out = []
    for p in map(Path, paths):
        out += sorted(p.glob("*.csp")) if p.is_dir() else [p]
    if not out:
        raise CliError("no instance files given")
    return out


def _load_instances(paths):
    out = {}
    for path in _instance_files(paths):
        inst = cspfile.load(path)
        problems = validate(inst)
        if problems:
            raise CliError(f"{path}: {problems[0].location}: {problems[0].message}")
        if inst.name in out:
            raise CliError(f"duplicate instance name {inst.name!r} ({path})")
        out[inst.name] = inst
    return out


def _limits(args):
    return Limits(timeout=args.timeout, memory_mb=args.memory_mb, clock=args.clock,
                  seconds_per_unit=args.seconds_per_unit)


def _add_limits(p):
    p.add_argument("--timeout", type=float, default=10.0, help="per-run limit in seconds")
    p.add_argument("--clock", choices=("effort", "wall"), default="effort",
                   help="time internal solvers by deterministic effort or wall clock")
    p.add_argument("--seconds-per-unit", type=float, default=1e-6, help="effort clock rate")
    p.add_argument("--memory-mb", type=int, default=None, help="address-space limit for external solvers")
    p.add_argument("--adapters", help="JSON file of external solver adapters")


def _feature_tables(directory) -> dict[str, FeatureTable]:
    tables = {}
    for path in sorted(Path(directory).glob("features-*.csv")):
        t = read_feature_csv(path)
        tables[t.schema] = t
    if not tables:
        raise CliError(f"no features-*.csv files in {directory}")
    return tables


def _parse_nodes(items):
    nodes = {k: dict(v) for k, v in DEFAULT_HIERARCHY.items()}
    for item in items or ():
        name, _, rest = item.partition("=")
        learner, _, schema = rest.partition("@")
        if not name or not learner:
            raise CliError(f"bad --node {item!r}; expected NAME=LEARNER[@SCHEMA]")
        nodes.setdefault(name, {})["learner"] = learner
        if schema:
            nodes[name]["schema"] = schema
    return nodes


# -- subcommands ----------------------------------------------------------------

def cmd_generate(args):
    grid = [UrbParams(args.n, args.d, args.m, t, 0) for t in _tightness(args)]
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    rows = []
    for params, inst in generate_suite(grid, args.replicas, args.seed):
        path = out / f"{inst.name}.csp"
        cspfile.dump(inst, path)
        rows.append((params, path.name))
    write_manifest(rows, out / "manifest.csv")
    print(f"wrote {len(rows)} instances to {out}")


def _tightness(args):
    if args.tightness:
        return args.tightness
    return tightness_grid(args.start, args.stop, args.step)


def cmd_encode(args):
    inst = cspfile.load(args.input)
    enc = encode(inst, args.encoding, cap=args.cap)
    comments = provenance_comments(enc, inst)
    if args.out:
        with open(args.out, "w") as fh:
            enc.dimacs(fh, comments)
    else:
        enc.dimacs(sys.stdout, comments)
    log.info("%s: %d variables, %d clauses", args.encoding, enc.formula.n_vars, enc.formula.n_clauses)


def cmd_solve(args):
    inst = cspfile.load(args.input)
    res = run_approach(inst, args.approach, _limits(args), load_adapters(args.adapters), seed=args.seed)
    _print_result(inst, res)
    return 0 if res.record.status != "error" else 1


def _print_result(inst, res):
    status = res.record.status
    if status == "solved":
        print(res.answer)
        if res.assignment is not None:
            print(" ".join(f"{v.name}={res.assignment[v.id]}" for v in inst.variables))
    else:
        print(status.upper())
        if res.diagnostic:
            print(res.diagnostic, file=sys.stderr)
    print(f"runtime {res.record.runtime:.6g}s", file=sys.stderr)


def cmd_features(args):
    instances = _load_instances(args.instances)
    schemas = SCHEMAS if args.schema == ["all"] else args.schema
    rows = {s: {} for s in schemas}
    for name, inst in instances.items():
        for schema, vec in instance_features(inst, schemas, args.node_budget, args.conflict_budget).items():
            rows[schema][name] = vec
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for schema in schemas:
        write_feature_csv(FeatureTable.from_vectors(rows[schema]), out / f"features-{schema}.csv")
    print(f"wrote {len(schemas)} feature files for {len(instances)} instances to {out}")


def cmd_run_matrix(args):
    instances = _load_instances(args.instances)
    matrix, results = run_matrix(instances, args.approach or DEFAULT_APPROACHES, _limits(args),
                                 load_adapters(args.adapters), jobs=args.jobs,
                                 repetitions=args.repetitions, seed=args.seed)
    write_matrix_csv(matrix.records(), args.out)
    errors = sum(r.record.status == "error" for r in results)
    print(f"wrote {len(results)} records to {args.out} ({errors} errors)")


def cmd_train(args):
    matrix = read_matrix_csv(args.matrix)
    tables = _feature_tables(args.features_dir)
    X = feature_arrays(tables, matrix.instances)
    approaches = [str(a) for a in matrix.approaches]
    if args.kind == "hierarchical":
        sel = HierarchicalSelector(approaches, _parse_nodes(args.node))
    else:
        sel = FlatSelector(approaches, args.learner, args.schema)
    sel.fit(X, matrix.scores())
    save_selector(sel, args.out)
    print(f"trained {args.kind} selector on {len(matrix)} instances -> {args.out}")


def cmd_select(args):
    sel = load_selector(args.selector)
    inst = cspfile.load(args.input)
    vectors = instance_features(inst, SCHEMAS, args.node_budget, args.conflict_budget)
    X = {s: v.array()[None, :] for s, v in vectors.items()}
    choice = sel.predict(X)[0]
    print(choice)
    if args.run:
        res = run_approach(inst, choice, _limits(args), load_adapters(args.adapters))
        _print_result(inst, res)
        return 0 if res.record.status != "error" else 1
    return 0


def cmd_evaluate(args):
    if args.config:
        cfg = ExperimentConfig.load(args.config)
        out = Path(cfg.output_dir)
        out.mkdir(parents=True, exist_ok=True)
        instances = cfg.load_instances()
        limits = Limits(timeout=cfg.timeout, clock=cfg.clock)
        matrix, _ = run_matrix(instances, cfg.approaches, limits, load_adapters(cfg.adapters), jobs=cfg.jobs,
                               repetitions=cfg.repetitions, seed=cfg.master_seed)
        write_matrix_csv(matrix.records(), out / "matrix.csv")
        rows = {s: {} for s in SCHEMAS}
        for name, inst in instances.items():
            for schema, vec in instance_features(inst).items():
                rows[schema][name] = vec
        tables = {s: FeatureTable.from_vectors(r) for s, r in rows.items()}
        for s, t in tables.items():
            write_feature_csv(t, out / f"features-{s}.csv")
        folds, seed = cfg.folds, cfg.master_seed
        report_path = Path(args.out) if args.out else out / "report.csv"
    else:
        if not (args.matrix and args.features_dir):
            raise CliError("evaluate needs --config, or both --matrix and --features-dir")
        matrix = read_matrix_csv(args.matrix)
        tables = _feature_tables(args.features_dir)
        folds, seed = args.folds, args.seed
        report_path = Path(args.out or "report.csv")
    X = feature_arrays(tables, matrix.instances)
    report = evaluate_portfolio(matrix, X, folds=folds, seed=seed)
    report.write(report_path)
    report.write_decisions(report_path.with_name(report_path.stem + "-decisions.csv"))
    print(report.table())
    print(f"report written to {report_path}")


def cmd_phase_sweep(args):
    rows = phase_transition_experiment(args.n, args.d, args.m, _tightness(args), args.replicas,
                                       args.approach or DEFAULT_APPROACHES, _limits(args), args.seed,
                                       load_adapters(args.adapters))
    write_sweep_csv(rows, args.out)
    print(f"wrote {len(rows)} rows to {args.out}")


# -- parser ------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cspfolio", description="CSP-to-SAT encodings and portfolio selection")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def urb(p, replicas_default):
        p.add_argument("--n", type=int, required=True, help="variables")
        p.add_argument("--d", type=int, required=True, help="domain size")
        p.add_argument("--m", type=int, required=True, help="constraints")
        p.add_argument("--tightness", type=float, nargs="+", help="explicit tightness values")
        p.add_argument("--start", type=float, default=0.05)
        p.add_argument("--stop", type=float, default=0.95)
        p.add_argument("--step", type=float, default=0.05)
        p.add_argument("--replicas", type=int, default=replicas_default)
        p.add_argument("--seed", type=int, default=0, help="master seed")

    p = sub.add_parser("generate", help="write uniform random binary CSPs and a manifest")
    urb(p, 1)
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("encode", help="encode a CSP file as DIMACS CNF")
    p.add_argument("--encoding", required=True, choices=("direct", "support", "order", "directorder", "direct-order"))
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out")
    p.add_argument("--cap", type=int, default=None, help="tuple enumeration cap")
    p.set_defaults(func=cmd_encode)

    p = sub.add_parser("solve", help="solve one instance with one approach")
    p.add_argument("--approach", required=True, help="csp:<solver> or sat:<encoding>:<solver>")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--seed", type=int, default=0)
    _add_limits(p)
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("features", help="compute feature CSVs")
    p.add_argument("instances", nargs="+", help="CSP files or directories")
    p.add_argument("--schema", nargs="+", default=["all"], choices=(*SCHEMAS, "all"))
    p.add_argument("--out-dir", required=True)
    p.add_argument("--node-budget", type=int, default=1000)
    p.add_argument("--conflict-budget", type=int, default=100)
    p.set_defaults(func=cmd_features)

    p = sub.add_parser("run-matrix", help="run approaches on instances and write a run-matrix CSV")
    p.add_argument("instances", nargs="+", help="CSP files or directories")
    p.add_argument("--approach", action="append", help="repeatable; default is the internal portfolio")
    p.add_argument("--out", required=True)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--repetitions", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)
    _add_limits(p)
    p.set_defaults(func=cmd_run_matrix)

    p = sub.add_parser("train", help="train a selector and save it as JSON")
    p.add_argument("--matrix", required=True)
    p.add_argument("--features-dir", required=True)
    p.add_argument("--kind", choices=("hierarchical", "flat"), default="hierarchical")
    p.add_argument("--node", action="append", help="hierarchical node override NAME=LEARNER[@SCHEMA]")
    p.add_argument("--learner", default="linear", help="flat selector learner")
    p.add_argument("--schema", default="csp", help="flat selector feature schema")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("select", help="choose an approach for one instance")
    p.add_argument("--selector", required=True)
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--run", action="store_true", help="also run the chosen approach")
    p.add_argument("--node-budget", type=int, default=1000)
    p.add_argument("--conflict-budget", type=int, default=100)
    _add_limits(p)
    p.set_defaults(func=cmd_select)

    p = sub.add_parser("evaluate", help="single-approach, virtual-best and cross-validated selector report")
    p.add_argument("--config", help="JSON experiment config (runs everything)")
    p.add_argument("--matrix")
    p.add_argument("--features-dir")
    p.add_argument("--folds", type=int, default=10)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", help="report CSV")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("phase-sweep", help="mean solver cost across a tightness sweep")
    urb(p, 25)
    p.add_argument("--approach", action="append")
    p.add_argument("--out", required=True)
    _add_limits(p)
    p.set_defaults(func=cmd_phase_sweep)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        return args.func(args) or 0
    except (CliError, IncompleteMatrix, OSError, ValueError, KeyError) as exc:
        print(f"cspfolio {args.command}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
