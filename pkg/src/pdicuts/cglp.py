"""Fresh disjunctive cuts from the cut-generating LP, with Farkas certificates.

The CGLP over the feasible terms ``t`` is

    min  alpha . xbar - beta
    s.t. alpha_j >= v^t A^t_{.j},  beta <= v^t b^t,  v^t >= 0,  sum v = 1.

Its ``alpha`` is kept, scaled to unit max-norm, and the stored multipliers
are the duals of ``min {alpha x : x in Q^t}`` for each term, so every stored
certificate supports its term and pairs with the optimal basis of that LP.
"""
from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .disjunction import (Disjunction, DisjunctionInfeasibleError, feasible_terms, term_lp,
                          term_polyhedron)
from .model import EPS_EQ, Cut, Instance, instance_from_json, instance_to_json
from .simplex import solve_lp

log = logging.getLogger(__name__)

VIOLATION_TOL = 1e-9


class NoCutError(RuntimeError):
    pass


@dataclass(frozen=True, eq=False)
class FarkasCertificate:
    """One nonnegative multiplier row per term; zero rows for terms empty at generation."""

    v: tuple[np.ndarray, ...]
    infeasible: frozenset[int] = frozenset()
    source: str = ""
    disjunction: str = ""

    def __post_init__(self):
        rows = []
        for vt in self.v:
            arr = np.array(vt, dtype=float)
            arr.setflags(write=False)
            rows.append(arr)
        object.__setattr__(self, "v", tuple(rows))
        object.__setattr__(self, "infeasible", frozenset(int(t) for t in self.infeasible))

    def is_zero(self, t: int) -> bool:
        return not np.any(self.v[t])

    def replace(self, updates: dict[int, np.ndarray]) -> "FarkasCertificate":
        v = list(self.v)
        for t, vt in updates.items():
            v[t] = vt
        return FarkasCertificate(tuple(v), self.infeasible - set(updates), self.source, self.disjunction)

    def to_json(self) -> dict:
        return {"source": self.source, "disjunction": self.disjunction,
                "terms": [vt.tolist() for vt in self.v], "infeasible": sorted(self.infeasible)}

    @classmethod
    def from_json(cls, d: dict) -> "FarkasCertificate":
        return cls(tuple(np.array(vt, dtype=float) for vt in d["terms"]), frozenset(d.get("infeasible", [])),
                   d.get("source", ""), d.get("disjunction", ""))


@dataclass(frozen=True)
class DeterminingBases:
    """Per-term basis (row indices into the term polyhedron); ``None`` for empty terms."""

    per_term: tuple[tuple[int, ...] | None, ...]

    def __getitem__(self, t: int):
        return self.per_term[t]

    def to_json(self) -> list:
        return [list(b) if b is not None else None for b in self.per_term]

    @classmethod
    def from_json(cls, d: list) -> "DeterminingBases":
        return cls(tuple(tuple(int(r) for r in b) if b is not None else None for b in d))


def term_cut(vt: np.ndarray, inst: Instance, disj: Disjunction, t: int) -> tuple[np.ndarray, float]:
    """``(v^t A^t, v^t b^t)`` for term ``t`` of ``inst``."""
    poly = term_polyhedron(inst, disj.terms[t])
    if vt.shape != (poly.m,):
        raise ValueError(f"term {t}: certificate has {vt.shape[0]} entries, polyhedron has {poly.m} rows")
    return vt @ poly.A, float(vt @ poly.b)


def max_min_cut(cert: FarkasCertificate, inst: Instance, disj: Disjunction,
                terms: Sequence[int]) -> tuple[np.ndarray, float]:
    """Componentwise max of ``v^t A^t`` and min of ``v^t b^t`` over ``terms``."""
    if not terms:
        raise ValueError("no terms to combine")
    gammas, gamma0 = [], []
    for t in terms:
        g, g0 = term_cut(cert.v[t], inst, disj, t)
        gammas.append(g)
        gamma0.append(g0)
    return np.max(np.array(gammas), axis=0), min(gamma0)


def _cglp(inst: Instance, disj: Disjunction, terms: list[int], xbar: np.ndarray):
    n = inst.n
    polys = [term_polyhedron(inst, disj.terms[t]) for t in terms]
    sizes = [p.m for p in polys]
    nv = sum(sizes)
    N = n + 1 + nv
    nt = len(terms)
    A = np.zeros((n * nt + nt + nv + 2, N))
    b = np.zeros(A.shape[0])
    r = 0
    off = n + 1
    for p in polys:
        blk = slice(off, off + p.m)
        A[r:r + n, :n] = np.eye(n)
        A[r:r + n, blk] = -p.A.T
        r += n
        A[r, n] = -1.0
        A[r, blk] = p.b
        r += 1
        off += p.m
    A[r:r + nv, n + 1:] = np.eye(nv)
    r += nv
    A[r, n + 1:] = 1.0
    b[r] = 1.0
    A[r + 1, n + 1:] = -1.0
    b[r + 1] = -1.0
    cost = np.zeros(N)
    cost[:n] = xbar
    cost[n] = -1.0
    return solve_lp(A, b, cost)


@dataclass
class CutRecord:
    cut: Cut
    cert: FarkasCertificate
    bases: DeterminingBases
    disj_name: str = ""
    stats: dict = field(default_factory=dict)


def generate_cut_record(inst: Instance, disj: Disjunction, xbar=None,
                        feasible: Sequence[int] | None = None) -> CutRecord:
    """Solve the CGLP, then rebuild supporting per-term multipliers and bases."""
    if feasible is None:
        feasible = feasible_terms(inst, disj)
    feasible = list(feasible)
    if not feasible:
        raise DisjunctionInfeasibleError("all terms of the disjunction are infeasible")
    if xbar is None:
        root = solve_lp(inst.A, inst.b, inst.c)
        if not root.optimal:
            raise ValueError(f"LP relaxation of {inst.name} is {root.status}")
        xbar = root.x
    xbar = np.maximum(np.asarray(xbar, dtype=float), 0.0)

    sol = _cglp(inst, disj, feasible, xbar)
    if not sol.optimal:
        raise NoCutError(f"CGLP is {sol.status}")
    alpha = sol.x[:inst.n]
    violated = sol.obj < -VIOLATION_TOL
    if not violated:
        log.info("no violated cut for %s: CGLP optimum %.3g", inst.name, sol.obj)
    scale = float(np.max(np.abs(alpha), initial=0.0))
    if scale <= 1e-9:
        # Degenerate CGLP optimum; fall back to the objective direction.
        alpha = np.array(inst.c, dtype=float)
        scale = float(np.max(np.abs(alpha), initial=0.0))
        if scale == 0.0:
            raise NoCutError("CGLP returned alpha = 0 and the objective is zero")
    alpha = alpha / scale

    v, bases = [], []
    infeasible = set(range(len(disj.terms))) - set(feasible)
    for t, term in enumerate(disj.terms):
        if t in infeasible:
            v.append(np.zeros(term_polyhedron(inst, term).m))
            bases.append(None)
            continue
        tsol = term_lp(inst, term, alpha)
        if not tsol.optimal:
            raise NoCutError(f"term {t} LP is {tsol.status}")
        v.append(tsol.y)
        bases.append(tsol.basis)
    cert = FarkasCertificate(tuple(v), frozenset(infeasible), inst.name, disj.source)
    a, beta = max_min_cut(cert, inst, disj, feasible)
    cut = Cut(a, beta, "fresh", inst.name,
              {"violated": bool(violated), "cglpObj": float(sol.obj), "violation": float(beta - a @ xbar)})
    return CutRecord(cut, cert, DeterminingBases(tuple(bases)), disj.source,
                     {"cglpIterations": sol.iterations})


def generate_cut(inst: Instance, disj: Disjunction, xbar=None) -> tuple[Cut, FarkasCertificate]:
    rec = generate_cut_record(inst, disj, xbar)
    return rec.cut, rec.cert


def generate_cut_rounds(inst: Instance, disj: Disjunction, rounds: int = 1) -> list[CutRecord]:
    """Up to ``rounds`` cuts: each round separates the LP optimum after adding earlier cuts."""
    feasible = feasible_terms(inst, disj)
    records: list[CutRecord] = []
    A, b = inst.A, inst.b
    for _ in range(rounds):
        root = solve_lp(A, b, inst.c)
        if not root.optimal:
            break
        rec = generate_cut_record(inst, disj, root.x, feasible)
        if records and not rec.cut.meta["violated"]:
            break
        records.append(rec)
        A = np.vstack([A, rec.cut.alpha])
        b = np.append(b, rec.cut.beta)
    return records


def verify_certificate(inst: Instance, disj: Disjunction, cut: Cut, cert: FarkasCertificate,
                       tol: float = EPS_EQ) -> bool:
    """Check the max/min certificate-of-validity conditions on the feasible terms of ``inst``."""
    if len(cert.v) != len(disj.terms):
        return False
    feasible = feasible_terms(inst, disj)
    if not feasible:
        return False
    gammas, gamma0 = [], []
    for t in feasible:
        vt = cert.v[t]
        if np.any(vt < 0):
            return False
        try:
            g, g0 = term_cut(vt, inst, disj, t)
        except ValueError:
            return False
        gammas.append(g)
        gamma0.append(g0)
    G = np.array(gammas)
    g0 = np.array(gamma0)
    if np.any(cut.alpha < G - tol) or np.any(cut.beta > g0 + tol):
        return False
    alpha_hit = np.all(np.any(np.abs(G - cut.alpha) <= tol, axis=0))
    beta_hit = np.any(np.abs(g0 - cut.beta) <= tol)
    return bool(alpha_hit and beta_hit)


def extract_determining_bases(inst: Instance, disj: Disjunction, cut: Cut,
                              cert: FarkasCertificate) -> DeterminingBases:
    """Optimal basis of ``min {alpha x : x in Q^t}`` for every term (``None`` if empty)."""
    bases = []
    for t, term in enumerate(disj.terms):
        sol = term_lp(inst, term, cut.alpha)
        if sol.status == "infeasible":
            bases.append(None)
        elif sol.optimal:
            bases.append(sol.basis)
        else:
            raise RuntimeError(f"term {t} LP is {sol.status}")
    return DeterminingBases(tuple(bases))


# --- certificate bundles -----------------------------------------------------------

@dataclass
class Bundle:
    """Warm-start artifact: base instance, its disjunction and certified cuts."""

    instance: Instance
    disjunction: Disjunction
    records: list[CutRecord]
    gen_time: float = 0.0

    def to_json(self) -> dict:
        return {
            "instance": self.instance.name,
            "instanceData": instance_to_json(self.instance),
            "disjunction": self.disjunction.to_json(),
            "genTime": self.gen_time,
            "cuts": [{"cut": r.cut.to_json(), "certificate": r.cert.to_json(), "bases": r.bases.to_json()}
                     for r in self.records],
        }

    @classmethod
    def from_json(cls, d: dict) -> "Bundle":
        inst = instance_from_json(d["instanceData"])
        disj = Disjunction.from_json(d["disjunction"])
        recs = [CutRecord(Cut.from_json(c["cut"]), FarkasCertificate.from_json(c["certificate"]),
                          DeterminingBases.from_json(c["bases"]), disj.source) for c in d["cuts"]]
        return cls(inst, disj, recs, d.get("genTime", 0.0))

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_json(), indent=1))

    @classmethod
    def load(cls, path) -> "Bundle":
        return cls.from_json(json.loads(Path(path).read_text()))
