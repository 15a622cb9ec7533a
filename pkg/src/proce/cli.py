"""Command-line entry point: ``proce <subcommand> ...``.

Exit codes: 0 success, 1 usage/config/data error, 2 I/O error,
3 finished but at least one counterfactual is invalid.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import asdict
from pathlib import Path

import numpy as np

from . import __version__
from .causal import CausalGraph, StructuralModel
from .data import (FeatureSchema, SimpleBnParams, gen_simple_bn, load_csv, normalize_dataset,
                   simple_bn_graph, write_csv)
from .errors import ProceError, UsageError
from .metrics import compare_metrics, load_constraints, metrics_csv
from .moo import GaConfig
from .pipeline import (dump_json, evaluate_reports, explain_many, fit_scm, load_bundle,
                       read_reports, save_bundle, train_bundle, write_reports)

log = logging.getLogger("proce")

EXIT_OK, EXIT_USAGE, EXIT_IO, EXIT_INVALID = 0, 1, 2, 3

EXPLAIN_DEFAULTS = {
    "generations": 100,
    "population": 100,
    "k_neighbors": 25,
    "seed": 0,
    "target_class": None,
    "crossover_prob": 0.9,
    "mutation_prob": 0.2,
    "mutation_sigma": 0.1,
    "init_sigma": 0.1,
    "crowding": "neighbour",
    "endogenous": "derived",
    "early_stop": False,
    "jobs": 1,
}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _env_seed():
    val = os.environ.get("PROCE_SEED")
    if val is None:
        return None
    try:
        return int(val)
    except ValueError:
        raise UsageError(f"PROCE_SEED must be an integer, got {val!r}") from None


def _seed(args, default=0):
    if args.seed is not None:
        return args.seed
    env = _env_seed()
    return default if env is None else env


def _check_writable(path):
    parent = Path(path).resolve().parent
    if not parent.is_dir():
        raise OSError(f"directory does not exist: {parent}")


# -- subcommands --------------------------------------------------------------

def cmd_gen_simple_bn(args):
    if args.n < 1:
        raise UsageError(f"--n must be >= 1, got {args.n}")
    params = SimpleBnParams()
    if args.params:
        params = SimpleBnParams.from_dict(json.loads(Path(args.params).read_text()))
    out = Path(args.out)
    _check_writable(out)
    seed = _seed(args, 0)
    data = gen_simple_bn(params, args.n, seed)
    write_csv(data, out)
    schema_out = Path(args.schema_out or out.with_suffix(".schema.json"))
    graph_out = Path(args.graph_out or out.with_suffix(".graph.json"))
    data.schema.save(schema_out)
    dump_json(simple_bn_graph(), graph_out)
    dump_json({"tool_version": __version__,
               "config": {"n": args.n, "seed": seed, "params": asdict(params)}},
              out.with_suffix(".run.json"))
    print(f"wrote {len(data)} rows to {out} (class 1 share {data.y.mean():.3f})")
    print(f"schema: {schema_out}\ngraph: {graph_out}")
    return EXIT_OK


def cmd_train(args):
    schema = FeatureSchema.load(args.schema)
    raw = load_csv(args.data, schema, args.label)
    b = train_bundle(raw, args.preset, args.embedding_dim, _seed(args, 0), args.split,
                     args.epochs, args.ae_epochs)
    save_bundle(b, args.out)
    print(f"train accuracy {b.manifest['train_accuracy']:.4f}")
    print(f"test accuracy {b.manifest['test_accuracy']:.4f}")
    print(f"bundle written to {args.out}")
    return EXIT_OK


def cmd_fit_scm(args):
    graph = CausalGraph.load(args.graph)
    if args.bundle:
        b = load_bundle(args.bundle)
        data = b.train if not args.data else normalize_dataset(load_csv(args.data, b.schema), b.normalizer)
    else:
        if not (args.data and args.schema):
            raise UsageError("fit-scm needs --bundle, or both --data and --schema")
        data = load_csv(args.data, FeatureSchema.load(args.schema))
    model = fit_scm(data, graph, args.force_exogenous or ())
    _check_writable(args.out)
    doc = model.to_dict()
    doc["tool_version"] = __version__
    doc["config_echo"] = {"graph": str(args.graph), "bundle": args.bundle, "data": args.data,
                          "force_exogenous": list(args.force_exogenous or ())}
    dump_json(doc, args.out)
    for v, eq in model.equations.items():
        terms = " + ".join(f"{c:.4g}*{p}" for c, p in zip(eq.coefficients, eq.parents))
        print(f"{v} = {eq.intercept:.4g} + {terms}   R^2={eq.r2:.4f}")
    if not model.equations:
        print("no endogenous nodes; every feature is exogenous")
    return EXIT_OK


def _explain_config(args):
    cfg = dict(EXPLAIN_DEFAULTS)
    env = _env_seed()
    if env is not None:
        cfg["seed"] = env
    if args.config:
        file_cfg = json.loads(Path(args.config).read_text())
        unknown = set(file_cfg) - set(EXPLAIN_DEFAULTS)
        if unknown:
            raise UsageError(f"unknown keys in config file: {sorted(unknown)}")
        cfg.update(file_cfg)
    for key in EXPLAIN_DEFAULTS:
        val = getattr(args, key, None)
        if val is not None:
            cfg[key] = val
    return cfg


def _parse_instances(spec, bundle):
    """Row indices into the bundle's test split, or inline JSON raw instances."""
    test = bundle.test
    spec = spec.strip()
    if spec.startswith("{") or spec.startswith("["):
        doc = json.loads(spec)
        rows = doc if isinstance(doc, list) else [doc]
        out = []
        for k, row in enumerate(rows):
            x = []
            for f in bundle.schema.features:
                if f.name not in row:
                    raise UsageError(f"inline instance {k} lacks feature {f.name!r}")
                v = row[f.name]
                if f.is_categorical:
                    if str(v) not in f.categories:
                        raise UsageError(f"unknown category {v!r} for {f.name!r}")
                    x.append(float(f.categories.index(str(v))))
                else:
                    x.append(float(v))
            xn = np.clip(bundle.normalizer.normalize(np.array(x)), 0.0, 1.0)
            out.append((f"inline{k}", xn))
        return out
    if spec == "all":
        idx = list(range(len(test)))
    else:
        idx = []
        for part in spec.split(","):
            if "-" in part:
                lo, hi = part.split("-")
                idx.extend(range(int(lo), int(hi) + 1))
            else:
                idx.append(int(part))
    for i in idx:
        if not 0 <= i < len(test):
            raise UsageError(f"instance index {i} outside the test split (size {len(test)})")
    return [(i, test.X[i]) for i in idx]


def cmd_explain(args):
    cfg = _explain_config(args)
    if args.print_config:
        print(json.dumps(cfg, indent=2, sort_keys=True))
        return EXIT_OK
    if not (args.bundle and args.scm and args.instance and args.out):
        raise UsageError("explain needs --bundle, --scm, --instance and --out")
    b = load_bundle(args.bundle)
    scm = StructuralModel.load(args.scm)
    ga = GaConfig(
        population_size=cfg["population"], generations=cfg["generations"],
        crossover_prob=cfg["crossover_prob"], mutation_prob=cfg["mutation_prob"],
        mutation_sigma=cfg["mutation_sigma"], init_sigma=cfg["init_sigma"],
        crowding=cfg["crowding"], endogenous=cfg["endogenous"],
        early_stop=bool(cfg["early_stop"]), seed=cfg["seed"],
    ).validate()
    echo = {"tool_version": __version__, "run_config": cfg,
            "bundle": b.manifest.get("config", {}), "scm": str(args.scm)}
    instances = _parse_instances(args.instance, b)
    reports, times = explain_many(b.model_bundle(scm), instances, ga, cfg["k_neighbors"],
                                  cfg["target_class"], cfg["jobs"], echo)
    write_reports(reports, args.out)
    dump_json({str(r.instance_id): t for r, t in zip(reports, times)}, Path(args.out) / "timings.json")
    n_valid = sum(r.valid for r in reports)
    print(f"{n_valid}/{len(reports)} valid counterfactuals written to {args.out}")
    return EXIT_OK if n_valid == len(reports) else EXIT_INVALID


def cmd_evaluate(args):
    b = load_bundle(args.bundle)
    reports = read_reports(args.reports, b.schema, b.normalizer)
    constraints = load_constraints(args.constraints, b.schema) if args.constraints else []
    runtime = None
    if args.timings:
        times = json.loads(Path(args.timings).read_text())
        runtime = float(np.mean(list(times.values())))
    m = evaluate_reports(reports, b, constraints, runtime, args.method_tag, args.dataset_tag)
    echo = {"reports": str(args.reports), "constraints": [c.to_dict() for c in constraints],
            "bundle": b.manifest.get("config", {})}
    out = Path(args.out)
    _check_writable(out)
    out.write_text(metrics_csv([m], {"tool_version": __version__,
                                      "config": json.dumps(echo, sort_keys=True)}))
    doc = {**m.to_dict(), "tool_version": __version__, "config_echo": echo}
    if args.compare:
        other = json.loads(Path(args.compare).read_text())
        doc["comparison"] = compare_metrics(m.to_dict(), other)
        for key, res in doc["comparison"].items():
            print(f"paired t-test {key}: t={res['t']:.4f} df={res['df']} p={res['p']:.4g}")
    dump_json(doc, args.json or out.with_suffix(".json"))
    print(f"tcv={m.tcv:.4f} ccv={m.ccv:.4f} cat_prox={m.cat_prox:.4f} con_prox={m.con_prox:.4f} "
          f"im1={m.im1:.4f} im2={m.im2:.4f} (n={m.n})")
    return EXIT_OK


# -- parser -------------------------------------------------------------------

def build_parser():
    p = _Parser(prog="proce", description="Prototype-guided causal counterfactual explanations.")
    p.add_argument("--version", action="version", version=f"proce {__version__}")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    g = sub.add_parser("gen-simple-bn", help="generate the Simple-BN synthetic dataset")
    g.add_argument("--n", type=int, default=10000)
    g.add_argument("--seed", type=int)
    g.add_argument("--params", help="JSON file overriding generator parameters")
    g.add_argument("--out", required=True)
    g.add_argument("--schema-out")
    g.add_argument("--graph-out")
    g.set_defaults(func=cmd_gen_simple_bn)

    t = sub.add_parser("train", help="train classifier and autoencoders into a bundle")
    t.add_argument("--data", required=True)
    t.add_argument("--schema", required=True)
    t.add_argument("--label")
    t.add_argument("--preset", choices=["net3", "net5"], default="net3")
    t.add_argument("--embedding-dim", type=int, default=256)
    t.add_argument("--epochs", type=int, default=50)
    t.add_argument("--ae-epochs", type=int, default=30)
    t.add_argument("--split", type=float, default=0.8)
    t.add_argument("--seed", type=int)
    t.add_argument("--out", required=True)
    t.set_defaults(func=cmd_train)

    f = sub.add_parser("fit-scm", help="fit linear structural equations over a causal graph")
    f.add_argument("--data")
    f.add_argument("--schema")
    f.add_argument("--bundle")
    f.add_argument("--graph", required=True)
    f.add_argument("--force-exogenous", nargs="*")
    f.add_argument("--out", required=True)
    f.set_defaults(func=cmd_fit_scm)

    e = sub.add_parser("explain", help="generate counterfactual explanations")
    e.add_argument("--bundle")
    e.add_argument("--scm")
    e.add_argument("--instance", help="test-row index, list (0,3,5), range (0-19), 'all' or inline JSON")
    e.add_argument("--target-class", type=int, choices=[0, 1])
    e.add_argument("--generations", type=int)
    e.add_argument("--population", type=int)
    e.add_argument("--k-neighbors", type=int)
    e.add_argument("--seed", type=int)
    e.add_argument("--crossover-prob", type=float)
    e.add_argument("--mutation-prob", type=float)
    e.add_argument("--mutation-sigma", type=float)
    e.add_argument("--init-sigma", type=float)
    e.add_argument("--crowding", choices=["neighbour", "standard"])
    e.add_argument("--endogenous", choices=["free", "derived", "abduct"])
    e.add_argument("--early-stop", action="store_true", default=None)
    e.add_argument("--jobs", type=int)
    e.add_argument("--config", help="JSON file of explain settings (overridden by flags)")
    e.add_argument("--print-config", action="store_true")
    e.add_argument("--out", help="directory for per-instance report files")
    e.set_defaults(func=cmd_explain)

    v = sub.add_parser("evaluate", help="compute metrics over a directory of reports")
    v.add_argument("--reports", required=True)
    v.add_argument("--bundle", required=True)
    v.add_argument("--constraints")
    v.add_argument("--timings", help="timings.json written by explain")
    v.add_argument("--compare", help="another metrics JSON to run paired t-tests against")
    v.add_argument("--method-tag", default="proce")
    v.add_argument("--dataset-tag", default="")
    v.add_argument("--json", help="path of the JSON variant (default: alongside --out)")
    v.add_argument("--out", required=True)
    v.set_defaults(func=cmd_evaluate)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except ProceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (json.JSONDecodeError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
