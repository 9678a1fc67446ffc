import json

import numpy as np
import pytest

from pdicuts.model import (Cut, Instance, ParseError, RowKind, UnsupportedFeatureError, instance_from_json,
                           instance_to_json, load_instance, parse_mps, perturb_element, save_instance,
                           validate_instance)

from conftest import two_var

TWO_VAR_JSON = {
    "name": "two", "numVars": 2, "objective": [-1, -1],
    "rows": [{"coeffs": {"0": 2, "1": 1}, "rhs": 2, "sense": "<="}],
    "bounds": [{"var": 0, "lb": 0, "ub": 1}, {"var": 1, "lb": 0, "ub": 1}],
    "integers": [0],
}


def test_json_standardizes_to_five_rows():
    inst = instance_from_json(TWO_VAR_JSON)
    assert inst.m == 5
    np.testing.assert_array_equal(inst.A[0], [-2, -1])
    assert inst.b[0] == -2
    assert inst.row_kinds[0] == RowKind("structural")
    assert [rk.kind for rk in inst.row_kinds[1:]] == ["lower", "upper", "lower", "upper"]
    np.testing.assert_array_equal(inst.lower, [0, 0])
    np.testing.assert_array_equal(inst.upper, [1, 1])
    assert inst == two_var()


def test_empty_integer_set_is_a_pure_lp():
    d = dict(TWO_VAR_JSON, integers=[])
    inst = instance_from_json(d)
    assert inst.integers == ()
    assert validate_instance(inst) == []


def test_equality_rows_split_in_two():
    d = dict(TWO_VAR_JSON, rows=[{"coeffs": {"0": 1, "1": 1}, "rhs": 1, "sense": "="}])
    inst = instance_from_json(d)
    np.testing.assert_array_equal(inst.A[:2], [[1, 1], [-1, -1]])
    np.testing.assert_array_equal(inst.b[:2], [1, -1])


def test_json_round_trip_is_bitwise(tmp_path, rng):
    A = rng.normal(size=(3, 4))
    A[0, 1] = -0.0
    inst = Instance.from_parts("r", A, rng.normal(size=3), rng.normal(size=4), [0, 0.5, 0, 0], [1, 2, 3.3, 1e6],
                               [1, 3], parent="base")
    path = tmp_path / "r.json"
    save_instance(inst, path)
    back = load_instance(path)
    assert back == inst
    assert back.A.tobytes() == inst.A.tobytes()


def test_standardization_is_idempotent():
    inst = two_var()
    again = instance_from_json(instance_to_json(instance_from_json(instance_to_json(inst))))
    assert again == inst


def test_json_parse_errors_carry_context(tmp_path):
    p = tmp_path / "bad.json"
    p.write_text('{"numVars": 2,\n "rows": [}')
    with pytest.raises(ParseError, match="line 2"):
        load_instance(p)
    with pytest.raises(ParseError, match="sense"):
        instance_from_json(dict(TWO_VAR_JSON, rows=[{"coeffs": {"0": 1}, "rhs": 0, "sense": "<>"}]))
    with pytest.raises(ParseError, match="numVars"):
        instance_from_json({"rows": []})


MPS = """NAME          tiny
ROWS
 N  obj
 L  c1
 G  c2
COLUMNS
    MARKER                 'MARKER'                 'INTORG'
    x1        obj       -1   c1        2
    x1        c2         1
    MARKER                 'MARKER'                 'INTEND'
    x2        obj       -1   c1        1
RHS
    RHS       c1         2   c2        0
BOUNDS
 UP BND       x1         1
 UP BND       x2         1
ENDATA
"""


def test_mps_reader_matches_json():
    inst = parse_mps(MPS)
    assert inst.name == "tiny"
    assert inst.integers == (0,)
    np.testing.assert_array_equal(inst.A[:2], [[-2, -1], [1, 0]])
    np.testing.assert_array_equal(inst.b[:2], [-2, 0])
    np.testing.assert_array_equal(inst.upper, [1, 1])


@pytest.mark.parametrize("section", ["RANGES", "SOS"])
def test_mps_unsupported_sections_fail_loudly(section):
    text = MPS.replace("BOUNDS", f"{section}\n    R   c1   1\nBOUNDS")
    with pytest.raises(UnsupportedFeatureError, match="unsupported"):
        parse_mps(text)


def test_mps_unknown_row_reports_line():
    with pytest.raises(ParseError, match="line 8"):
        parse_mps(MPS.replace("x1        obj       -1   c1        2", "x1        obj       -1   zz        2"))


def test_validate_well_formed():
    assert validate_instance(two_var()) == []


def test_validate_missing_upper_row():
    inst = two_var()
    keep = [i for i in range(inst.m) if inst.row_kinds[i] != RowKind("upper", 1)]
    broken = Instance("b", inst.A[keep], inst.b[keep], inst.c, inst.integers, [inst.row_kinds[i] for i in keep])
    diags = validate_instance(broken)
    assert len(diags) == 1 and "x2" in diags[0]


def test_validate_crossed_bounds():
    inst = Instance.from_parts("x", [[-2, -1]], [-2], [-1, -1], [2, 0], [1, 1], [0])
    assert validate_instance(inst) == ["crossed bounds on x1"]


def test_perturb_identity_objective():
    k = two_var()
    ell = perturb_element(k, "c", [-1.0, -1.0])
    assert ell.same_layout(k)
    assert ell.A.tobytes() == k.A.tobytes() and ell.b.tobytes() == k.b.tobytes()
    assert ell.c.tobytes() == k.c.tobytes()


def test_perturb_rhs_changes_one_entry():
    k = two_var()
    ell = perturb_element(k, "b", [-1.8])
    assert np.flatnonzero(ell.b != k.b).tolist() == [0]
    assert ell.b[0] == -1.8
    assert ell.parent == "two" and ell.name.startswith("two~")


def test_perturb_matrix_changes_one_row():
    k = two_var()
    ell = perturb_element(k, "A", [[-1.9, -1.1]])
    changed = np.flatnonzero(np.any(ell.A != k.A, axis=1))
    assert changed.tolist() == [0]
    np.testing.assert_array_equal(ell.b, k.b)
    assert ell.same_layout(k)


def test_perturb_refuses_bound_rows_and_bad_shapes():
    k = two_var()
    with pytest.raises(ValueError, match="bound"):
        perturb_element(k, "b", k.b - 0.1)
    with pytest.raises(ValueError, match="bound row"):
        perturb_element(k, "A", [[1.0, 0.0]], rows=[1])
    with pytest.raises(ValueError):
        perturb_element(k, "c", [1.0])
    with pytest.raises(ValueError):
        perturb_element(k, "x", [1.0])


def test_instance_arrays_are_read_only():
    k = two_var()
    with pytest.raises(ValueError):
        k.A[0, 0] = 5.0


def test_cut_json_and_normalization():
    cut = Cut([-2.0, -2.0], -2.0, "pdc", "two", {"terms": [0, 1]})
    back = Cut.from_json(json.loads(json.dumps(cut.to_json())))
    np.testing.assert_array_equal(back.alpha, cut.alpha)
    assert back.provenance == "pdc" and back.meta == {"terms": [0, 1]}
    nc = cut.normalized()
    np.testing.assert_array_equal(nc.alpha, [-1, -1])
    assert nc.beta == -1
    assert cut.violation([0.5, 1.0]) == pytest.approx(1.0)
    with pytest.raises(ValueError):
        Cut([1.0, np.inf], 0.0)
    with pytest.raises(ValueError):
        Cut([1.0], 0.0, "other")
