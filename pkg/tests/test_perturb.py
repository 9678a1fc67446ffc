import math

import numpy as np
import pytest
from scipy.optimize import linprog

from pdicuts.model import perturb_element
from pdicuts.perturb import (PerturbationSpec, element_vector, find_degree, find_perturbation, make_test_set)
from pdicuts.model import Instance

from conftest import two_var
from families import fractional_base


def test_find_degree_golden():
    u = np.array([1.0, 0.0])
    assert find_degree(u, u) == 0.0
    assert find_degree(u, [0.0, 1.0]) == math.pi / 2
    assert find_degree(u, [2.0, 0.0]) == 1.0


def test_find_degree_components():
    rng = np.random.default_rng(0)
    for _ in range(50):
        u = rng.normal(size=5)
        v = rng.normal(size=5)
        s = float(rng.uniform(0.1, 10))
        ang = math.acos(np.clip(u @ v / np.linalg.norm(u) / np.linalg.norm(v), -1, 1))
        ang_s = math.acos(np.clip((s * u) @ (s * v) / np.linalg.norm(s * u) / np.linalg.norm(s * v), -1, 1))
        assert ang == pytest.approx(ang_s, abs=1e-12)
        rel = abs(np.linalg.norm(u) - np.linalg.norm(v)) / np.linalg.norm(u)
        assert find_degree(u, v) == pytest.approx(max(ang, rel))
        assert find_degree(u, u) == 0.0
    # nearly parallel vectors would give cos slightly above 1 without clamping
    w = np.array([0.1, 0.2, 0.3])
    assert find_degree(w, w * (1 + 1e-16)) >= 0.0


def test_find_degree_errors():
    with pytest.raises(ValueError):
        find_degree([0.0, 0.0], [1.0, 0.0])
    with pytest.raises(ValueError):
        find_degree([1.0], [1.0, 2.0])


def test_perturbation_contract_many_calls():
    rng = np.random.default_rng(2024)
    results = 0
    for i in range(300):
        u = rng.normal(size=int(rng.integers(1, 8)))
        theta = float(rng.choice([0.01, 0.1, 0.5, 2.0]))
        v = find_perturbation(u, theta, rng)
        if v is None:
            continue
        results += 1
        assert v.shape == u.shape
        assert not np.array_equal(v, u)
        assert find_degree(u, v) < theta
    assert results > 250


def test_not_found_below_tolerance_floor():
    rng = np.random.default_rng(1)
    assert find_perturbation(np.array([1.0, 1.0]), 1e-14, rng) is None


def test_matrix_shape_round_trip():
    rng = np.random.default_rng(3)
    U = np.arange(1.0, 7.0).reshape(2, 3)
    V = find_perturbation(U, 0.3, rng)
    assert V.shape == (2, 3)
    assert find_degree(U.ravel(), V.ravel()) < 0.3


def test_bad_arguments():
    rng = np.random.default_rng(0)
    with pytest.raises(ValueError):
        find_perturbation([1.0], 0.0, rng)
    with pytest.raises(ValueError):
        find_perturbation([0.0, 0.0], 0.5, rng)
    with pytest.raises(ValueError):
        PerturbationSpec("q", 0.5)
    with pytest.raises(ValueError):
        PerturbationSpec("b", -1.0)
    with pytest.raises(ValueError):
        PerturbationSpec("b", 0.5, count=0)


def test_seeded_determinism_objective_family():
    k = two_var()
    spec = PerturbationSpec("c", 0.5, count=3, seed=17)
    a, _ = make_test_set(k, spec)
    b, _ = make_test_set(k, spec)
    assert len(a) == 3
    assert all(x == y for x, y in zip(a, b))
    other, _ = make_test_set(k, PerturbationSpec("c", 0.5, count=3, seed=18))
    assert any(x.c.tobytes() != y.c.tobytes() for x, y in zip(a, other))


def test_singleton_family():
    fam, stats = make_test_set(two_var(), PerturbationSpec("c", 1e-3, count=1, max_attempts=1))
    assert len(fam) == 1 and stats.attempts == 1 and stats.accepted == 1


@pytest.mark.parametrize("element", ["A", "b", "c"])
def test_element_isolation_and_degree(element):
    rng = np.random.default_rng(9)
    inst = fractional_base(rng, n_range=(3, 4))
    fam, stats = make_test_set(inst, PerturbationSpec(element, 0.5, count=4, seed=5))
    assert fam
    u = element_vector(inst, element)
    for ell in fam:
        assert ell.same_layout(inst)
        un = element_vector(ell, element)
        assert not np.array_equal(un, u)
        assert find_degree(u, un) < 0.5
        for other in {"A", "b", "c"} - {element}:
            assert element_vector(ell, other).tobytes() == element_vector(inst, other).tobytes()
        bound = [i for i, rk in enumerate(inst.row_kinds) if rk.kind != "structural"]
        assert ell.A[bound].tobytes() == inst.A[bound].tobytes()
        assert ell.b[bound].tobytes() == inst.b[bound].tobytes()
    assert stats.degrees == [find_degree(u, element_vector(e, element)) for e in fam]


def test_infeasible_rhs_family_is_empty():
    # four equalities pin x to (0.5, 0.5, 0.5); large rhs moves break them
    E = np.array([[1, 1, 0], [0, 1, 1], [1, 0, 1], [1, -1, 0]], dtype=float)
    x0 = np.full(3, 0.5)
    inst = Instance.from_parts("eq", np.vstack([E, -E]), np.concatenate([E @ x0, -E @ x0]), [1, 1, 1],
                               [0] * 3, [1] * 3, [0])
    spec = PerturbationSpec("b", 2.0, count=3, max_attempts=30, seed=4)
    fam, stats = make_test_set(inst, spec)
    assert fam == []
    assert stats.attempts == 30 and stats.rejected + stats.not_found == 30 and stats.rejected > 0
    # replay the same draws and confirm each is infeasible with HiGHS
    rng = np.random.default_rng(4)
    u = element_vector(inst, "b")
    for _ in range(30):
        v = find_perturbation(u, 2.0, rng)
        if v is None:
            continue
        ell = perturb_element(inst, "b", v)
        res = linprog(ell.c, A_ub=-ell.A, b_ub=-ell.b, bounds=[(None, None)] * 3, method="highs")
        assert res.status == 2


def test_time_budget_stops_early():
    fam, stats = make_test_set(two_var(), PerturbationSpec("c", 0.5, count=5, time_budget=0.0))
    assert stats.reason == "time budget exhausted"
