"""Command line entry point: ``pdicuts {solve,gencuts,perturb,pdi,experiment,report}``."""
from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from pathlib import Path

import numpy as np

from .bench import (ERROR, ExperimentGrid, RunConfig, make_bundle, performance_profile, read_rows,
                    run_branch_and_cut, run_experiment, write_experiment)
from .cglp import Bundle
from .model import ParseError, load_instance, save_instance
from .pdi import NoSurvivingTermError, check_support, farkas_pdi, strong_pdi
from .perturb import PerturbationSpec, find_degree, make_test_set, element_vector

EXIT_OK, EXIT_FATAL, EXIT_PARTIAL = 0, 1, 2

log = logging.getLogger("pdicuts")


def _jsonable(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    raise TypeError(f"not serializable: {type(obj)}")


def _emit(obj, out=None):
    text = json.dumps(obj, default=_jsonable)
    if out:
        Path(out).write_text(text + "\n")
    else:
        print(text)


def cmd_solve(args) -> int:
    inst = load_instance(args.instance, args.format)
    rec = run_branch_and_cut(inst, [], RunConfig("default", 2, args.time_limit, args.node_limit))
    row = rec.to_row()
    row["x"] = rec.x
    _emit(row)
    return EXIT_OK if rec.status != ERROR else EXIT_FATAL


def cmd_gencuts(args) -> int:
    inst = load_instance(args.instance, args.format)
    bundle = make_bundle(inst, args.terms, args.rounds, args.seed)
    bundle.save(args.out)
    for rec in bundle.records:
        log.info("cut %s >= %g (violated=%s)", rec.cut.alpha.tolist(), rec.cut.beta, rec.cut.meta.get("violated"))
    _emit({"bundle": str(args.out), "instance": inst.name, "terms": len(bundle.disjunction),
           "cuts": [r.cut.to_json() for r in bundle.records], "genTime": bundle.gen_time})
    return EXIT_OK


def cmd_perturb(args) -> int:
    inst = load_instance(args.instance, args.format)
    spec = PerturbationSpec(args.element, args.degree, args.count, args.max_attempts, args.seed,
                            args.time_budget)
    family, stats = make_test_set(inst, spec)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    u = element_vector(inst, args.element)
    entries = []
    for k, ell in enumerate(family):
        name = f"{inst.name}_{args.element}_{args.degree:g}_{k}.json"
        save_instance(ell, out / name)
        entries.append({"file": name, "name": ell.name,
                        "degree": find_degree(u, element_vector(ell, args.element))})
    manifest = {"base": inst.name, "element": args.element, "targetDegree": args.degree, "seed": args.seed,
                "instances": entries, "attempts": stats.attempts, "notFound": stats.not_found,
                "rejected": stats.rejected, "reason": stats.reason}
    (out / "manifest.json").write_text(json.dumps(manifest, indent=1))
    _emit(manifest)
    return EXIT_OK if family else EXIT_PARTIAL


def cmd_pdi(args) -> int:
    bundle = Bundle.load(args.bundle)
    ell = load_instance(args.instance, args.format)
    lines = []
    status = EXIT_OK
    for i, rec in enumerate(bundle.records):
        t0 = time.perf_counter()
        pdc = farkas_pdi(rec.cert, bundle.disjunction, ell, bundle.instance)
        entry = {"index": i, "pdc": pdc.to_json(), "pdcTime": time.perf_counter() - t0}
        sup = check_support(pdc, ell, bundle.disjunction)
        entry["pdcSupport"] = {"supported": sup.supported, "gap": sup.gap, "term": sup.term, "point": sup.point}
        if args.strong:
            t0 = time.perf_counter()
            try:
                res = strong_pdi(bundle.instance, ell, bundle.disjunction, rec.cert, rec.bases)
            except NoSurvivingTermError as exc:
                entry["spdcError"] = str(exc)
                status = EXIT_PARTIAL
            else:
                entry["spdc"] = res.cut.to_json()
                entry["spdcTime"] = time.perf_counter() - t0
                entry["reparameterized"] = res.reparameterized
                entry["surviving"] = res.surviving
                entry["witness"] = {"term": res.witness[0], "point": res.witness[1]}
                entry["certificate"] = res.cert.to_json()
        lines.append(json.dumps(entry, default=_jsonable))
    text = "\n".join(lines) + "\n"
    if args.out:
        Path(args.out).write_text(text)
    sys.stdout.write(text)
    return status


def cmd_experiment(args) -> int:
    cfg = json.loads(Path(args.config).read_text())
    base_dir = Path(args.config).parent
    paths = [p if Path(p).is_absolute() else base_dir / p for p in cfg["instances"]]
    bases = [load_instance(p) for p in paths]
    grid = ExperimentGrid.from_json(cfg)
    if args.jobs:
        grid.jobs = args.jobs
    rows = run_experiment(bases, grid)
    out = Path(args.out or cfg.get("out", "results"))
    manifest = write_experiment(rows, out)
    errors = sum(r.status == ERROR for r in rows)
    _emit({"rows": len(rows), "errors": errors, "manifest": str(manifest)})
    return EXIT_PARTIAL if errors else EXIT_OK


def cmd_report(args) -> int:
    files = []
    for p in args.paths:
        p = Path(p)
        files += sorted(p.glob("*.csv")) if p.is_dir() else [p]
    rows = read_rows(files)
    prof = performance_profile(rows, args.baseline, args.min_default_time, args.metric)
    _emit(prof, args.out)
    return EXIT_OK if prof["instances"] else EXIT_PARTIAL


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="pdicuts", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def instance_arg(sp):
        sp.add_argument("instance")
        sp.add_argument("--format", choices=["json", "mps"], default=None)

    sp = sub.add_parser("solve", help="branch and bound without cuts")
    instance_arg(sp)
    sp.add_argument("--time-limit", type=float, default=60.0)
    sp.add_argument("--node-limit", type=int, default=100_000)
    sp.set_defaults(func=cmd_solve)

    sp = sub.add_parser("gencuts", help="fresh cuts and certificate bundle for a base instance")
    instance_arg(sp)
    sp.add_argument("--terms", type=int, default=2)
    sp.add_argument("--rounds", type=int, default=1)
    sp.add_argument("--seed", type=int, default=None)
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_gencuts)

    sp = sub.add_parser("perturb", help="perturbed test set for one element and degree")
    instance_arg(sp)
    sp.add_argument("--element", choices=["A", "b", "c"], required=True)
    sp.add_argument("--degree", type=float, required=True)
    sp.add_argument("--count", type=int, default=5)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--max-attempts", type=int, default=1000)
    sp.add_argument("--time-budget", type=float, default=None)
    sp.add_argument("--out-dir", default="perturbed")
    sp.set_defaults(func=cmd_perturb)

    sp = sub.add_parser("pdi", help="replay a bundle's certificates on another instance")
    sp.add_argument("bundle")
    instance_arg(sp)
    sp.add_argument("--strong", action="store_true", help="also run the strong (support-restoring) variant")
    sp.add_argument("--out", default=None, help="write JSON lines here as well")
    sp.set_defaults(func=cmd_pdi)

    sp = sub.add_parser("experiment", help="run a vpc/spdc/pdc/default sweep")
    sp.add_argument("--config", required=True)
    sp.add_argument("--out", default=None)
    sp.add_argument("--jobs", type=int, default=None)
    sp.set_defaults(func=cmd_experiment)

    sp = sub.add_parser("report", help="performance profile data from sweep CSVs")
    sp.add_argument("paths", nargs="+")
    sp.add_argument("--profiles", action="store_true", help="emit performance profiles (default output)")
    sp.add_argument("--baseline", default="vpc")
    sp.add_argument("--min-default-time", type=float, default=None)
    sp.add_argument("--metric", default="totalTime")
    sp.add_argument("--out", default=None)
    sp.set_defaults(func=cmd_report)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ParseError, FileNotFoundError, ValueError, RuntimeError) as exc:
        print(f"pdicuts: error: {exc}", file=sys.stderr)
        return EXIT_FATAL


if __name__ == "__main__":
    sys.exit(main())
