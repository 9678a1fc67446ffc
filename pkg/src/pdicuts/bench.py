"""Branch-and-cut driver and the vpc / spdc / pdc / default comparison sweep."""
from __future__ import annotations

import csv
import heapq
import json
import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .cglp import Bundle, CutRecord, generate_cut_record, generate_cut_rounds
from .disjunction import (build_partial_bnb_disjunction, disjunctive_bound, fractional_vars,
                          pick_branching_var)
from .model import LOWER, UPPER, Cut, Instance
from .pdi import NoSurvivingTermError, farkas_pdi, strong_pdi
from .perturb import PerturbationSpec, make_test_set
from .simplex import solve_lp

log = logging.getLogger(__name__)

METHODS = ("vpc", "spdc", "pdc", "default")
OPTIMAL = "optimal"
TIME_LIMIT = "timeLimit"
ERROR = "error"
SKIPPED = "skipped"
SKIP_MARK = "--"


class InvalidCutError(RuntimeError):
    pass


@dataclass
class RunConfig:
    method: str = "default"
    terms: int = 2
    time_limit: float = 60.0
    node_limit: int = 100_000
    root_cut_rounds: int = 1

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"method must be one of {METHODS}")
        if self.terms < 2:
            raise ValueError("terms must be at least 2")
        if self.time_limit < 0 or self.node_limit <= 0 or self.root_cut_rounds < 1:
            raise ValueError("limits must be positive")


@dataclass
class RunRecord:
    instance: str
    method: str
    degree: float | str = ""
    element: str = ""
    terms: int = 0
    lpBound: float | str = math.nan
    cutBound: float | str = math.nan
    rootBound: float | str = math.nan
    disjBoundVD: float | str = math.nan
    disjBoundPD: float | str = math.nan
    ipOpt: float | str = "unknown"
    genTime: float | str = 0.0
    rootTime: float | str = 0.0
    totalTime: float | str = 0.0
    nodes: int | str = 0
    numCuts: int | str = 0
    status: str = OPTIMAL
    base: str = ""
    note: str = ""
    x: list | None = field(default=None, repr=False)

    @classmethod
    def columns(cls) -> list[str]:
        return [f.name for f in fields(cls) if f.name != "x"]

    def to_row(self) -> dict:
        d = asdict(self)
        d.pop("x")
        return d

    @classmethod
    def skipped(cls, instance: str, method: str, **kw) -> "RunRecord":
        rec = cls(instance, method, status=SKIPPED, **kw)
        for name in ("lpBound", "cutBound", "rootBound", "disjBoundVD", "disjBoundPD", "ipOpt",
                     "genTime", "rootTime", "totalTime", "nodes", "numCuts"):
            setattr(rec, name, SKIP_MARK)
        return rec


# --- branch and cut ---------------------------------------------------------------

def _is_integral(inst: Instance, x: np.ndarray) -> bool:
    return not fractional_vars(inst, x)


def run_branch_and_cut(inst: Instance, root_cuts: Sequence[Cut], cfg: RunConfig,
                       reference: np.ndarray | None = None, reference_obj: float | None = None,
                       gen_time: float = 0.0) -> RunRecord:
    """LP-based B&B with ``root_cuts`` appended to the root LP.

    Nodes change the rhs of bound rows, so every node LP shares one row set
    and warm starts from its parent's basis.  ``reference`` is a known
    integer-feasible point (e.g. the optimum found without cuts); a cut that
    removes it raises :class:`InvalidCutError`.
    """
    start = time.perf_counter()
    cuts = list(root_cuts)
    if reference is not None:
        for cut in cuts:
            if cut.violation(reference) > 1e-6:
                raise InvalidCutError(f"invalid cut detected: {cut.provenance} cut removes a known "
                                      f"integer-feasible point of {inst.name} by {cut.violation(reference):.3g}")
    lp = solve_lp(inst.A, inst.b, inst.c)
    rec = RunRecord(inst.name, cfg.method, terms=cfg.terms, numCuts=len(cuts), genTime=gen_time)
    if not lp.optimal:
        rec.status = ERROR
        rec.note = f"LP relaxation {lp.status}"
        return rec
    rec.lpBound = lp.obj

    A = np.vstack([inst.A] + [c.alpha[None, :] for c in cuts]) if cuts else np.array(inst.A)
    b0 = np.concatenate([inst.b, [c.beta for c in cuts]]) if cuts else np.array(inst.b)
    root = solve_lp(A, b0, inst.c, lp.basis if not cuts else None)
    rec.rootTime = gen_time + time.perf_counter() - start
    if not root.optimal:
        rec.status = ERROR
        rec.note = f"root LP with cuts {root.status}"
        rec.totalTime = gen_time + time.perf_counter() - start
        return rec
    rec.cutBound = rec.rootBound = root.obj

    lo_rows = {rk.var: i for i, rk in enumerate(inst.row_kinds) if rk.kind == LOWER}
    up_rows = {rk.var: i for i, rk in enumerate(inst.row_kinds) if rk.kind == UPPER}
    incumbent, inc_x = math.inf, None
    nodes = 1
    seq = 0
    heap = [(root.obj, seq, {}, root)]
    status = OPTIMAL
    while heap:
        if time.perf_counter() - start > cfg.time_limit or nodes >= cfg.node_limit:
            status = TIME_LIMIT
            break
        bound, _, over, sol = heapq.heappop(heap)
        if bound >= incumbent - 1e-9 * (1 + abs(incumbent)):
            continue
        j = pick_branching_var(inst, sol.x)
        if j is None:
            incumbent, inc_x = sol.obj, sol.x
            continue
        xj = sol.x[j]
        lo_j, up_j = over.get(j, (None, None))
        for child in ((lo_j, float(math.floor(xj))), (float(math.ceil(xj)), up_j)):
            child_over = dict(over)
            child_over[j] = child
            b = b0.copy()
            for v, (lo, up) in child_over.items():
                if lo is not None:
                    b[lo_rows[v]] = lo
                if up is not None:
                    b[up_rows[v]] = -up
            csol = solve_lp(A, b, inst.c, sol.basis)
            nodes += 1
            if not csol.optimal:
                continue
            if csol.obj >= incumbent - 1e-9 * (1 + abs(incumbent)):
                continue
            if _is_integral(inst, csol.x):
                incumbent, inc_x = csol.obj, csol.x
                continue
            seq += 1
            heapq.heappush(heap, (csol.obj, seq, child_over, csol))
    rec.nodes = nodes
    rec.totalTime = gen_time + time.perf_counter() - start
    rec.status = status
    if status == OPTIMAL:
        if inc_x is None:
            rec.status = ERROR
            rec.note = "integer infeasible"
            return rec
        rec.ipOpt = incumbent
        rec.x = inc_x.tolist()
        if reference_obj is not None and incumbent > reference_obj + 1e-6 * (1 + abs(reference_obj)):
            raise InvalidCutError(f"invalid cut detected: optimum {incumbent} exceeds known {reference_obj}")
    else:
        open_bound = min((h[0] for h in heap), default=incumbent)
        rec.note = f"best bound {min(open_bound, incumbent):.6g}"
        if inc_x is not None:
            rec.x = inc_x.tolist()
    return rec


def gap_closed(lp_bound: float, improved: float, ip_opt: float, with_flag: bool = False):
    """Percent of the LP-to-IP gap closed, clamped to [0, 100].

    A zero gap counts as fully closed; ``with_flag`` also returns whether
    that degenerate case applied.
    """
    gap = ip_opt - lp_bound
    degenerate = gap <= 1e-12 * (1 + abs(ip_opt))
    pct = 100.0 if degenerate else float(min(100.0, max(0.0, 100.0 * (improved - lp_bound) / gap)))
    return (pct, degenerate) if with_flag else pct


# --- experiment sweep --------------------------------------------------------------

@dataclass
class ExperimentGrid:
    degrees: list[float] = field(default_factory=lambda: [0.5])
    elements: list[str] = field(default_factory=lambda: ["b"])
    terms: list[int] = field(default_factory=lambda: [2])
    methods: list[str] = field(default_factory=lambda: list(METHODS))
    count: int = 3
    max_attempts: int = 200
    seed: int = 0
    rounds: int = 1
    time_limit: float = 60.0
    node_limit: int = 100_000
    include_control: bool = False
    vd_seed: int | None = None
    jobs: int = 1

    @classmethod
    def from_json(cls, d: dict) -> "ExperimentGrid":
        keys = {f.name for f in fields(cls)}
        alias = {"maxAttempts": "max_attempts", "timeLimit": "time_limit", "nodeLimit": "node_limit",
                 "includeControl": "include_control", "vdSeed": "vd_seed", "rootCutRounds": "rounds"}
        kw = {}
        for k, v in d.items():
            k = alias.get(k, k)
            if k in keys:
                kw[k] = v
        return cls(**kw)


def make_bundle(inst: Instance, terms: int, rounds: int = 1, seed: int | None = None) -> Bundle:
    t0 = time.perf_counter()
    disj = build_partial_bnb_disjunction(inst, terms, seed)
    records = generate_cut_rounds(inst, disj, rounds)
    return Bundle(inst, disj, records, time.perf_counter() - t0)


def _safe_bound(inst: Instance, disj) -> float:
    try:
        return disjunctive_bound(inst, disj)
    except ValueError:
        return math.nan


def strong_cuts(bundle: Bundle, ell: Instance) -> tuple[list[Cut], str]:
    cuts, notes = [], []
    for rec in bundle.records:
        try:
            res = strong_pdi(bundle.instance, ell, bundle.disjunction, rec.cert, rec.bases)
            cuts.append(res.cut)
        except NoSurvivingTermError:
            fresh = generate_cut_record(ell, bundle.disjunction)
            cuts.append(Cut(fresh.cut.alpha, fresh.cut.beta, "spdc", ell.name, {"fallback": True}))
            notes.append("fallback")
    return cuts, ",".join(notes)


def evaluate_instance(bundle: Bundle, ell: Instance, element: str, degree, grid: ExperimentGrid,
                      terms: int) -> list[RunRecord]:
    """All method rows for one test instance (default first: it supplies the reference optimum)."""
    base = bundle.instance.name
    tag = dict(degree=degree, element=element, terms=terms, base=base)
    rows: list[RunRecord] = []

    def cfg(method):
        return RunConfig(method, terms, grid.time_limit, grid.node_limit, grid.rounds)

    try:
        ref = run_branch_and_cut(ell, [], cfg("default"))
    except Exception as exc:  # noqa: BLE001 - sweep keeps going
        return [RunRecord(ell.name, m, status=ERROR, note=str(exc), **tag) for m in grid.methods]
    if ref.status == ERROR:
        return [RunRecord(ell.name, m, status=ERROR, note=ref.note, **tag) for m in grid.methods]
    ref_x = np.array(ref.x) if ref.x is not None and ref.status == OPTIMAL else None
    ref_obj = ref.ipOpt if ref.status == OPTIMAL else None
    pd_bound = _safe_bound(ell, bundle.disjunction)

    for method in grid.methods:
        try:
            if method == "default":
                rec = ref
                rec.cutBound = rec.lpBound
            elif method == "spdc" and element == "c":
                rows.append(RunRecord.skipped(ell.name, method, **tag))
                continue
            else:
                note = ""
                vd_bound = math.nan
                t0 = time.perf_counter()
                if method == "vpc":
                    disj = build_partial_bnb_disjunction(ell, terms, grid.vd_seed)
                    cuts = [r.cut for r in generate_cut_rounds(ell, disj, grid.rounds)]
                    gen = time.perf_counter() - t0
                    vd_bound = _safe_bound(ell, disj)
                elif method == "pdc":
                    cuts = [farkas_pdi(r.cert, bundle.disjunction, ell, bundle.instance)
                            for r in bundle.records]
                    gen = time.perf_counter() - t0
                else:
                    cuts, note = strong_cuts(bundle, ell)
                    gen = time.perf_counter() - t0
                rec = run_branch_and_cut(ell, cuts, cfg(method), ref_x, ref_obj, gen_time=gen)
                rec.disjBoundVD = vd_bound
                rec.note = note or rec.note
            rec.disjBoundPD = pd_bound if method in ("pdc", "spdc") else rec.disjBoundPD
            for k, v in tag.items():
                setattr(rec, k, v)
            rec.method = method
            rows.append(rec)
        except Exception as exc:  # noqa: BLE001 - per-row failures are recorded, not fatal
            log.warning("row %s/%s failed: %s", ell.name, method, exc)
            rows.append(RunRecord(ell.name, method, status=ERROR, note=f"{type(exc).__name__}: {exc}", **tag))
    return rows


def _job(args):
    return evaluate_instance(*args)


def run_experiment(base_instances: Iterable[Instance], grid: ExperimentGrid,
                   bundles: dict[tuple[str, int], Bundle] | None = None) -> list[RunRecord]:
    """Sweep degrees x elements x terms x methods over the perturbed families of each base."""
    bundles = {} if bundles is None else bundles
    jobs = []
    for base in base_instances:
        for d in grid.terms:
            key = (base.name, d)
            if key not in bundles:
                bundles[key] = make_bundle(base, d, grid.rounds)
            bundle = bundles[key]
            for element in grid.elements:
                for degree in grid.degrees:
                    spec = PerturbationSpec(element, degree, grid.count, grid.max_attempts, grid.seed)
                    family, stats = make_test_set(base, spec)
                    log.info("%s %s %g: %d instances (%d attempts)", base.name, element, degree,
                             len(family), stats.attempts)
                    if grid.include_control:
                        family = [base] + family
                    for ell in family:
                        jobs.append((bundle, ell, element, degree, grid, d))
    rows: list[RunRecord] = []
    if grid.jobs > 1:
        with ProcessPoolExecutor(grid.jobs) as pool:
            for part in pool.map(_job, jobs):
                rows.extend(part)
    else:
        for job in jobs:
            rows.extend(_job(job))
    return rows


def write_rows(rows: Sequence[RunRecord], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=RunRecord.columns())
        w.writeheader()
        for r in rows:
            w.writerow(r.to_row())


def write_experiment(rows: Sequence[RunRecord], out_dir) -> Path:
    """One CSV per (element, degree, terms) plus ``manifest.json``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    groups: dict[tuple, list[RunRecord]] = {}
    for r in rows:
        groups.setdefault((r.element, r.degree, r.terms), []).append(r)
    files = []
    for (element, degree, terms), part in sorted(groups.items(), key=lambda kv: str(kv[0])):
        name = f"runs_{element}_{degree}_{terms}.csv"
        write_rows(part, out / name)
        files.append({"file": name, "element": element, "degree": degree, "terms": terms, "rows": len(part)})
    manifest = out / "manifest.json"
    manifest.write_text(json.dumps({"files": files, "columns": RunRecord.columns()}, indent=1))
    return manifest


def read_rows(paths: Iterable) -> list[dict]:
    rows = []
    for p in paths:
        with open(p, newline="") as fh:
            rows.extend(csv.DictReader(fh))
    return rows


# --- performance profiles -----------------------------------------------------------

def _num(v) -> float:
    try:
        return float(v)
    except (TypeError, ValueError):
        return math.nan


def _get(row, key):
    return row[key] if isinstance(row, dict) else getattr(row, key)


def performance_profile(rows, baseline: str = "vpc", min_default_time: float | None = None,
                        metric: str = "totalTime", methods: Sequence[str] | None = None) -> dict:
    """Relative-time CDFs of each method against ``baseline``, plus the virtual ``Best``.

    A point value ``(t_m - t_base) / t_base`` of -0.5 is a 50% speedup.
    ``min_default_time`` keeps only instances where ``default`` ran at least
    that long; ``None`` uses the 75th percentile of default times.
    """
    times: dict[tuple, dict[str, float]] = {}
    for r in rows:
        if _get(r, "status") != OPTIMAL:
            continue
        key = (_get(r, "instance"), str(_get(r, "element")), str(_get(r, "degree")), str(_get(r, "terms")))
        t = _num(_get(r, metric))
        if math.isfinite(t):
            times.setdefault(key, {})[_get(r, "method")] = t
    default_times = [v["default"] for v in times.values() if "default" in v]
    threshold = min_default_time
    if threshold is None and default_times:
        threshold = float(np.percentile(default_times, 75))
    if threshold:
        times = {k: v for k, v in times.items() if v.get("default", -math.inf) >= threshold}
    if methods is None:
        methods = sorted({m for v in times.values() for m in v if m not in (baseline, "default")})
    compared = [m for m in methods if m != baseline]
    rel: dict[str, list[float]] = {m: [] for m in compared}
    rel["Best"] = []
    common = [k for k, v in times.items() if baseline in v and all(m in v for m in compared) and v[baseline] > 0]
    for k in sorted(common):
        v = times[k]
        tb = v[baseline]
        for m in compared:
            rel[m].append((v[m] - tb) / tb)
        best = min([v[baseline]] + [v[m] for m in compared])
        rel["Best"].append((best - tb) / tb)
    for i in range(len(common)):
        for m in compared:
            assert rel["Best"][i] <= rel[m][i] + 1e-15
    if not common:
        log.warning("no commonly solved instances for the profile")
    profiles = {}
    for m, vals in rel.items():
        xs = sorted(vals)
        profiles[m] = [(x, (i + 1) / len(xs)) for i, x in enumerate(xs)]
    return {"baseline": baseline, "metric": metric, "threshold": threshold, "instances": len(common),
            "relative": rel, "profiles": profiles}
