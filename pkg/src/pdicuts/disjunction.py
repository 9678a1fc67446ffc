"""Variable-branching disjunctions taken from the leaves of a partial B&B tree."""
from __future__ import annotations

import heapq
import json
import logging
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .model import EPS_FEAS, Instance
from .simplex import LpSolution, solve_lp

log = logging.getLogger(__name__)

INT_TOL = 1e-6


class InfeasibleRootError(ValueError):
    pass


class DisjunctionInfeasibleError(ValueError):
    """Every term of the disjunction is empty."""


@dataclass(frozen=True)
class Term:
    """A hyperrectangle: per-variable (new lower, new upper), ``None`` where untouched."""

    overrides: tuple[tuple[int, float | None, float | None], ...] = ()
    term_id: int = 0

    @classmethod
    def from_dict(cls, overrides: dict, term_id: int = 0) -> "Term":
        return cls(tuple(sorted((int(j), lo, up) for j, (lo, up) in overrides.items())), term_id)

    def as_dict(self) -> dict[int, tuple[float | None, float | None]]:
        return {j: (lo, up) for j, lo, up in self.overrides}

    def rows(self, n: int) -> tuple[np.ndarray, np.ndarray]:
        """Override rows in ``>=`` form: lower first, then upper, per variable."""
        A, b = [], []
        for j, lo, up in self.overrides:
            if lo is not None:
                r = np.zeros(n)
                r[j] = 1.0
                A.append(r)
                b.append(lo)
            if up is not None:
                r = np.zeros(n)
                r[j] = -1.0
                A.append(r)
                b.append(-up)
        return np.array(A, dtype=float).reshape(-1, n), np.array(b, dtype=float)

    def row_keys(self) -> list[tuple[int, str]]:
        keys = []
        for j, lo, up in self.overrides:
            if lo is not None:
                keys.append((j, "lower"))
            if up is not None:
                keys.append((j, "upper"))
        return keys

    def contains(self, x) -> bool:
        for j, lo, up in self.overrides:
            if lo is not None and x[j] < lo - EPS_FEAS:
                return False
            if up is not None and x[j] > up + EPS_FEAS:
                return False
        return True

    def to_json(self) -> dict:
        return {"id": self.term_id,
                "overrides": [{"var": j, "lb": lo, "ub": up} for j, lo, up in self.overrides]}

    @classmethod
    def from_json(cls, d: dict) -> "Term":
        return cls(tuple((int(o["var"]), o.get("lb"), o.get("ub")) for o in d["overrides"]), int(d["id"]))


@dataclass(frozen=True)
class Disjunction:
    terms: tuple[Term, ...]
    source: str = ""
    warning: str | None = None

    def __len__(self):
        return len(self.terms)

    def to_json(self) -> dict:
        d = {"source": self.source, "terms": [t.to_json() for t in self.terms]}
        if self.warning:
            d["warning"] = self.warning
        return d

    @classmethod
    def from_json(cls, d: dict) -> "Disjunction":
        return cls(tuple(Term.from_json(t) for t in d["terms"]), d.get("source", ""), d.get("warning"))

    def save(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_json(), fh, indent=1)


@dataclass(frozen=True, eq=False)
class TermPolyhedron:
    """``A^{t} = [A; D^t]``, ``b^{t} = [b; D^t_0]``; ``row_map[i]`` is a base row index or -1."""

    A: np.ndarray
    b: np.ndarray
    row_map: tuple[int, ...]
    term_id: int = 0

    @property
    def m(self) -> int:
        return self.A.shape[0]


def term_polyhedron(inst: Instance, term: Term) -> TermPolyhedron:
    for j, _, _ in term.overrides:
        if not 0 <= j < inst.n:
            raise ValueError(f"term {term.term_id} overrides unknown variable {j}")
    D, d0 = term.rows(inst.n)
    A = np.vstack([inst.A, D])
    b = np.concatenate([inst.b, d0])
    A.setflags(write=False)
    b.setflags(write=False)
    return TermPolyhedron(A, b, tuple(range(inst.m)) + (-1,) * D.shape[0], term.term_id)


def translate_basis(basis: Sequence[int] | None, m: int, src: Term, dst: Term) -> list[int] | None:
    """Map a basis of ``src``'s polyhedron onto ``dst``'s rows (``None`` if a row has no image)."""
    if basis is None:
        return None
    dst_pos = {key: m + q for q, key in enumerate(dst.row_keys())}
    src_keys = src.row_keys()
    out = []
    for r in basis:
        if r < m:
            out.append(r)
        elif src_keys[r - m] in dst_pos:
            out.append(dst_pos[src_keys[r - m]])
        else:
            return None
    return out


def term_lp(inst: Instance, term: Term, objective=None, warm_basis=None) -> LpSolution:
    poly = term_polyhedron(inst, term)
    c = np.zeros(inst.n) if objective is None else np.asarray(objective, dtype=float)
    return solve_lp(poly.A, poly.b, c, warm_basis)


def feasible_terms(inst: Instance, disj: Disjunction) -> list[int]:
    """Indices (positions in ``disj.terms``) of terms with a nonempty polyhedron."""
    return [t for t, term in enumerate(disj.terms) if term_lp(inst, term).optimal]


def disjunctive_bound(inst: Instance, disj: Disjunction) -> float:
    """Dual bound of the disjunction: min over feasible terms of the term LP value."""
    values = [sol.obj for sol in (term_lp(inst, term, inst.c) for term in disj.terms) if sol.optimal]
    if not values:
        raise DisjunctionInfeasibleError("disjunction proves infeasibility")
    return min(values)


def fractional_vars(inst: Instance, x: np.ndarray) -> list[tuple[float, int]]:
    """(fractionality, var) for integer variables off their integer value."""
    out = []
    for j in inst.integers:
        f = x[j] - math.floor(x[j])
        frac = min(f, 1.0 - f)
        if frac > INT_TOL:
            out.append((frac, j))
    return out


def pick_branching_var(inst: Instance, x: np.ndarray, rng: np.random.Generator | None = None) -> int | None:
    """Most fractional integer variable (ties: lowest index); random pick when ``rng`` given."""
    frac = fractional_vars(inst, x)
    if not frac:
        return None
    if rng is not None:
        return frac[int(rng.integers(len(frac)))][1]
    best = max(f for f, _ in frac)
    return min(j for f, j in frac if f >= best - 1e-12)


@dataclass(order=True)
class _Leaf:
    bound: float
    seq: int
    overrides: dict = field(compare=False)
    solution: LpSolution | None = field(compare=False, default=None)


def _merge(overrides: dict, j: int, lo=None, up=None) -> dict:
    out = dict(overrides)
    old_lo, old_up = out.get(j, (None, None))
    out[j] = (lo if lo is not None else old_lo, up if up is not None else old_up)
    return out


def build_partial_bnb_disjunction(inst: Instance, max_terms: int, seed: int | None = None) -> Disjunction:
    """Grow a best-bound tree until it has ``max_terms`` leaves or nothing is fractional.

    Leaves that are infeasible or integral are kept as terms.  With ``seed``
    the branching variable is drawn at random among the fractional ones,
    which yields a second, independent tree for the same instance.
    """
    if max_terms < 2:
        raise ValueError("a disjunction needs at least 2 terms")
    rng = np.random.default_rng(seed) if seed is not None else None
    root = solve_lp(inst.A, inst.b, inst.c)
    if not root.optimal:
        raise InfeasibleRootError(f"root LP of {inst.name} is {root.status}")
    if not fractional_vars(inst, root.x):
        log.warning("LP relaxation of %s is integral; returning a single-term disjunction", inst.name)
        return Disjunction((Term((), 0),), inst.name, warning="integral LP relaxation")

    seq = 0
    open_heap = [_Leaf(root.obj, seq, {}, root)]
    closed: list[_Leaf] = []
    while open_heap and len(open_heap) + len(closed) < max_terms:
        leaf = heapq.heappop(open_heap)
        j = pick_branching_var(inst, leaf.solution.x, rng)
        xj = leaf.solution.x[j]
        for child_over in (_merge(leaf.overrides, j, up=float(math.floor(xj))),
                           _merge(leaf.overrides, j, lo=float(math.ceil(xj)))):
            seq += 1
            term = Term.from_dict(child_over)
            warm = translate_basis(leaf.solution.basis, inst.m, Term.from_dict(leaf.overrides), term)
            sol = term_lp(inst, term, inst.c, warm)
            child = _Leaf(sol.obj if sol.optimal else math.inf, seq, child_over, sol)
            if sol.optimal and fractional_vars(inst, sol.x):
                heapq.heappush(open_heap, child)
            else:
                closed.append(child)
    leaves = sorted(open_heap + closed, key=lambda lf: lf.seq)
    terms = tuple(Term(Term.from_dict(lf.overrides).overrides, t) for t, lf in enumerate(leaves))
    return Disjunction(terms, inst.name)


def covers_integer_points(disj: Disjunction, points: Sequence[Sequence[float]]) -> bool:
    return all(any(t.contains(p) for t in disj.terms) for p in points)
