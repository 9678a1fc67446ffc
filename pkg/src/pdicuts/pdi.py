"""Parametric disjunctive inequalities: replay a stored certificate on a perturbed instance.

``farkas_pdi`` re-evaluates the stored multipliers against the new data
(max of ``v^t A^t`` over terms, min of ``v^t b^t``), which is valid for the
new disjunctive hull without solving anything.  ``strong_pdi`` additionally
re-solves the per-term LPs that could have lost support and regenerates the
cut so that it touches the hull again.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .cglp import DeterminingBases, FarkasCertificate, max_min_cut, term_cut
from .disjunction import Disjunction, DisjunctionInfeasibleError, Term, term_lp, term_polyhedron
from .model import EPS_EQ, Cut, Instance
from .simplex import SingularBasisError, basic_solution_of, is_basis_feasible

log = logging.getLogger(__name__)


class CertificateMismatchError(ValueError):
    pass


class ReparameterizationError(RuntimeError):
    def __init__(self, message: str, term_id: int | None = None):
        super().__init__(message if term_id is None else f"term {term_id}: {message}")
        self.term_id = term_id


class NoSurvivingTermError(RuntimeError):
    """No term keeps a nonzero certificate with a feasible determining basis; generate afresh."""


def _check_shapes(cert: FarkasCertificate, disj: Disjunction, inst: Instance,
                  source: Instance | None = None) -> None:
    if len(cert.v) != len(disj.terms):
        raise CertificateMismatchError(f"certificate has {len(cert.v)} terms, disjunction {len(disj.terms)}")
    if source is not None and not source.same_layout(inst):
        raise CertificateMismatchError(f"{inst.name} does not share the row layout of {source.name}")
    for t, term in enumerate(disj.terms):
        rows = inst.m + len(term.row_keys())
        if cert.v[t].shape != (rows,):
            raise CertificateMismatchError(
                f"term {t}: certificate has {cert.v[t].shape[0]} entries, {inst.name} gives {rows} rows")


def _term_feasible(inst: Instance, term: Term) -> bool:
    return term_lp(inst, term).optimal


def farkas_pdi(cert: FarkasCertificate, disj: Disjunction, target: Instance,
               source: Instance | None = None) -> Cut:
    """The certified cut for ``target``: max/min of the replayed per-term combinations.

    Terms whose multipliers are zero contribute ``(0, 0)``; such terms are
    dropped when they are also empty in ``target``.
    """
    _check_shapes(cert, disj, target, source)
    terms = [t for t in range(len(disj.terms))
             if not cert.is_zero(t) or _term_feasible(target, disj.terms[t])]
    if not terms:
        raise DisjunctionInfeasibleError(f"no term of the disjunction is feasible for {target.name}")
    alpha, beta = max_min_cut(cert, target, disj, terms)
    return Cut(alpha, beta, "pdc", target.name, {"terms": terms})


def is_induced(cert: FarkasCertificate, disj: Disjunction, inst: Instance, tol: float = EPS_EQ) -> bool:
    """True when all feasible terms of ``inst`` map their multipliers to the same row vector."""
    _check_shapes(cert, disj, inst)
    gammas = [term_cut(cert.v[t], inst, disj, t)[0]
              for t in range(len(disj.terms)) if _term_feasible(inst, disj.terms[t])]
    return all(np.max(np.abs(g - gammas[0])) <= tol for g in gammas[1:])


@dataclass
class SupportReport:
    supported: bool
    value: float
    gap: float
    term: int | None
    point: np.ndarray | None


def check_support(cut: Cut, inst: Instance, disj: Disjunction, tol: float = EPS_EQ) -> SupportReport:
    """Does ``cut`` touch the disjunctive hull of ``inst``?  Reports ``s - beta``."""
    best = None
    for t, term in enumerate(disj.terms):
        sol = term_lp(inst, term, cut.alpha)
        if sol.optimal and (best is None or sol.obj < best[0]):
            best = (sol.obj, t, sol.x)
    if best is None:
        raise DisjunctionInfeasibleError("all terms are infeasible")
    s, t, x = best
    gap = s - cut.beta
    return SupportReport(abs(gap) <= tol, s, gap, t, x)


def reparameterize_term(alpha, inst: Instance, term: Term, warm_basis: Sequence[int] | None = None):
    """Supporting multipliers for fixed ``alpha`` on one term.

    Returns ``(v, basis, value, x)`` where ``x`` minimizes ``alpha . x`` over
    the term polyhedron and ``v`` is the matching dual, so ``v A^t = alpha``
    and ``v b^t = value``.
    """
    alpha = np.asarray(alpha, dtype=float)
    try:
        sol = term_lp(inst, term, alpha, warm_basis)
    except SingularBasisError:
        sol = term_lp(inst, term, alpha)
    if sol.status == "infeasible":
        raise ReparameterizationError("reparameterization undefined on empty term", term.term_id)
    if not sol.optimal:
        raise ReparameterizationError(f"term LP is {sol.status}", term.term_id)
    return sol.y, sol.basis, sol.obj, sol.x


@dataclass
class StrongPdiResult:
    cut: Cut
    cert: FarkasCertificate
    bases: DeterminingBases
    reparameterized: list[int]
    witness: tuple[int, np.ndarray]
    surviving: list[int] = field(default_factory=list)
    feasible: list[int] = field(default_factory=list)
    alpha_shift: float = 0.0
    nonunique: list[int] = field(default_factory=list)


def _parallel_row(alpha: np.ndarray, A: np.ndarray) -> bool:
    na = np.linalg.norm(alpha)
    if na == 0:
        return True
    norms = np.linalg.norm(A, axis=1)
    cos = (A @ alpha) / np.where(norms == 0, 1.0, norms) / na
    return bool(np.any(np.abs(cos - 1.0) <= 1e-12))


def strong_pdi(k: Instance, ell: Instance, disj: Disjunction, cert: FarkasCertificate,
               bases: DeterminingBases) -> StrongPdiResult:
    """Replay the certificate on ``ell`` and restore support of the disjunctive hull.

    Terms whose determining basis stays feasible (and whose matrix did not
    change) keep their multipliers; every other feasible term is re-solved
    for the fixed ``alpha``, warm started from its stored basis.
    """
    _check_shapes(cert, disj, ell, k)
    T = range(len(disj.terms))
    matrix_changed = not np.array_equal(k.A, ell.A)

    surviving = []
    basic_points = {}
    for t in T:
        if cert.is_zero(t) or bases[t] is None:
            continue
        poly = term_polyhedron(ell, disj.terms[t])
        try:
            if is_basis_feasible(bases[t], poly.A, poly.b):
                surviving.append(t)
                basic_points[t] = basic_solution_of(bases[t], poly.A, poly.b)
        except SingularBasisError:
            continue
    if not surviving:
        raise NoSurvivingTermError(
            f"no term of {disj.source or 'the disjunction'} keeps a feasible determining basis on "
            f"{ell.name}; fall back to fresh generation")

    alpha, _ = max_min_cut(cert, ell, disj, surviving)

    updates: dict[int, np.ndarray] = {}
    new_bases = list(bases.per_term)
    points: dict[int, np.ndarray] = {}
    feasible = []
    reparameterized = []
    nonunique = []
    for t in T:
        if t in surviving and not matrix_changed:
            feasible.append(t)
            points[t] = basic_points[t]
            continue
        try:
            v, basis, _, x = reparameterize_term(alpha, ell, disj.terms[t], bases[t])
        except ReparameterizationError:
            if t in surviving:
                raise
            new_bases[t] = None
            continue
        updates[t] = v
        new_bases[t] = basis
        points[t] = x
        feasible.append(t)
        reparameterized.append(t)
        if _parallel_row(alpha, term_polyhedron(ell, disj.terms[t]).A):
            nonunique.append(t)

    new_cert = cert.replace(updates)
    new_cert = FarkasCertificate(new_cert.v, frozenset(set(T) - set(feasible)), cert.source, cert.disjunction)
    alpha_new, beta_bar = max_min_cut(new_cert, ell, disj, feasible)
    shift = float(np.max(np.abs(alpha_new - alpha)))
    if shift > EPS_EQ:
        log.warning("alpha moved by %.3g while regenerating on %s", shift, ell.name)

    vals = {t: float(alpha_new @ points[t]) for t in feasible}
    wt = min(vals, key=lambda t: (vals[t], t))
    cut = Cut(alpha_new, beta_bar, "spdc", ell.name,
              {"reparameterized": reparameterized, "surviving": surviving})
    return StrongPdiResult(cut, new_cert, DeterminingBases(tuple(new_bases)), reparameterized,
                           (wt, points[wt]), surviving, feasible, shift, nonunique)
