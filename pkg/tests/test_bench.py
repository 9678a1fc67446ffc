import csv
import json
import math

import numpy as np
import pytest

from pdicuts.bench import (ExperimentGrid, InvalidCutError, RunConfig, RunRecord, gap_closed, make_bundle,
                           performance_profile, read_rows, run_branch_and_cut, run_experiment, write_experiment)
from pdicuts.model import Cut

from conftest import two_var
from families import fractional_base
from oracles import integer_points


def test_bnb_without_cuts_matches_enumeration():
    k = two_var()
    rec = run_branch_and_cut(k, [], RunConfig())
    # x1 is the only integer variable; x2 continuous in [0, 1]
    assert rec.status == "optimal"
    assert rec.ipOpt == pytest.approx(-1.0)
    assert rec.nodes > 1
    assert rec.lpBound == pytest.approx(-1.5)
    assert any(np.allclose(rec.x, p) for p in ([0, 1], [1, 0]))


def test_bnb_with_facet_cut_needs_no_branching():
    k = two_var()
    rec = run_branch_and_cut(k, [Cut([-1.0, -1.0], -1.0)], RunConfig("vpc"))
    assert rec.rootBound == pytest.approx(-1.0)
    assert rec.ipOpt == pytest.approx(-1.0)
    assert rec.nodes == 1


def test_zero_time_limit():
    k = two_var()
    rec = run_branch_and_cut(k, [], RunConfig(time_limit=0.0))
    assert rec.status == "timeLimit"
    assert rec.rootBound == pytest.approx(-1.5)
    assert "-1.5" in rec.note


def test_invalid_cut_is_detected():
    k = two_var()
    with pytest.raises(InvalidCutError, match="invalid cut"):
        run_branch_and_cut(k, [Cut([-1.0, -1.0], -0.5)], RunConfig("pdc"), reference=np.array([0.0, 1.0]))
    with pytest.raises(InvalidCutError, match="invalid cut"):
        run_branch_and_cut(k, [Cut([-1.0, -1.0], -0.5)], RunConfig("pdc"), reference_obj=-1.0)


def test_bnb_agrees_with_enumeration_on_pure_integer_instances():
    rng = np.random.default_rng(4)
    from families import random_instance
    from pdicuts.model import Instance
    checked = 0
    for i in range(60):
        r = random_instance(rng, int(rng.integers(2, 4)), int(rng.integers(1, 4)))
        inst = Instance(r.name, r.A, r.b, r.c, range(r.n), r.row_kinds)
        pts = integer_points(inst)
        rec = run_branch_and_cut(inst, [], RunConfig())
        if not pts:
            assert rec.status == "error"
            continue
        assert rec.ipOpt == pytest.approx(min(inst.c @ p for p in pts), abs=1e-7)
        checked += 1
    assert checked > 30


def test_run_config_validation():
    with pytest.raises(ValueError):
        RunConfig("nope")
    with pytest.raises(ValueError):
        RunConfig(terms=1)
    with pytest.raises(ValueError):
        RunConfig(node_limit=0)


def test_gap_closed_examples():
    assert gap_closed(-1.5, -1.0, -1.0) == 100.0
    assert gap_closed(-1.5, -1.5, -1.0) == 0.0
    assert gap_closed(-1.5, -1.25, -1.0) == 50.0
    assert gap_closed(-1.0, -1.0, -1.0, with_flag=True) == (100.0, True)
    assert gap_closed(-2.0, -0.5, -1.0) == 100.0
    assert gap_closed(-2.0, -3.0, -1.0) == 0.0


def test_grid_gives_twelve_rows():
    grid = ExperimentGrid(degrees=[0.5], elements=["b"], terms=[2], count=3, seed=1)
    rows = run_experiment([two_var()], grid)
    assert len(rows) == 12
    assert sorted({r.method for r in rows}) == ["default", "pdc", "spdc", "vpc"]
    assert all(r.status == "optimal" for r in rows)
    assert all(r.status != "skipped" for r in rows if r.method == "spdc")


def test_objective_rows_skip_strong_variant(tmp_path):
    grid = ExperimentGrid(degrees=[0.5], elements=["c"], terms=[2], count=2, seed=3)
    rows = run_experiment([two_var()], grid)
    sp = [r for r in rows if r.method == "spdc"]
    assert len(sp) == 2 and all(r.status == "skipped" and r.cutBound == "--" for r in sp)
    manifest = write_experiment(rows, tmp_path)
    m = json.loads(manifest.read_text())
    files = [tmp_path / f["file"] for f in m["files"]]
    back = read_rows(files)
    assert [r for r in back if r["method"] == "spdc"][0]["cutBound"] == "--"


def test_control_instance_pdc_equals_vpc():
    grid = ExperimentGrid(degrees=[0.5], elements=["b"], terms=[2], count=1, include_control=True, seed=2)
    rows = run_experiment([two_var()], grid)
    ctrl = {r.method: r for r in rows if r.instance == "two"}
    assert ctrl["pdc"].cutBound == pytest.approx(ctrl["vpc"].cutBound)


def test_bound_sandwich_on_random_sweep():
    rng = np.random.default_rng(31)
    bases = [fractional_base(rng, name=f"s{i}") for i in range(3)]
    grid = ExperimentGrid(degrees=[0.5], elements=["A", "b", "c"], terms=[2, 4], count=2, seed=1)
    rows = run_experiment(bases, grid)
    assert rows
    for r in rows:
        if r.status != "optimal":
            assert r.status in ("skipped",), r.note
            continue
        assert r.lpBound <= r.cutBound + 1e-7
        assert r.cutBound <= r.rootBound + 1e-7
        assert r.rootBound <= r.ipOpt + 1e-7
        db = r.disjBoundVD if r.method == "vpc" else r.disjBoundPD
        if r.method != "default":
            assert r.cutBound <= db + 1e-6
            assert db <= r.ipOpt + 1e-6


def _row(inst, method, t, default=None):
    return {"instance": inst, "element": "b", "degree": "0.5", "terms": "2", "method": method,
            "status": "optimal", "totalTime": str(t)}


def test_profile_examples():
    rows = [_row("a", "vpc", 10.0), _row("a", "pdc", 5.0)]
    prof = performance_profile(rows, "vpc", min_default_time=0)
    assert prof["relative"]["pdc"] == [-0.5]
    same = performance_profile([_row("a", "vpc", 3.0), _row("a", "spdc", 3.0)], "vpc", min_default_time=0)
    assert same["relative"]["spdc"] == [0.0]
    empty = performance_profile([_row("a", "pdc", 3.0)], "vpc", min_default_time=0)
    assert empty["instances"] == 0


def test_profile_best_dominates_and_filters():
    rng = np.random.default_rng(0)
    rows = []
    for i in range(20):
        for m in ("vpc", "spdc", "pdc", "default"):
            rows.append(_row(f"i{i}", m, float(rng.uniform(0.1, 5))))
    prof = performance_profile(rows, "vpc", min_default_time=0)
    for i in range(prof["instances"]):
        for m in ("spdc", "pdc"):
            assert prof["relative"]["Best"][i] <= prof["relative"][m][i]
    for m, pts in prof["profiles"].items():
        assert [p[0] for p in pts] == sorted(p[0] for p in pts)
        assert pts[-1][1] == 1.0
    q = performance_profile(rows, "vpc")
    defaults = sorted(float(r["totalTime"]) for r in rows if r["method"] == "default")
    assert q["threshold"] == pytest.approx(np.percentile(defaults, 75))
    assert q["instances"] == sum(t >= q["threshold"] for t in defaults)


def test_record_columns():
    rec = RunRecord.skipped("x", "spdc")
    row = rec.to_row()
    assert list(row) == RunRecord.columns()
    assert row["status"] == "skipped" and row["ipOpt"] == "--"
