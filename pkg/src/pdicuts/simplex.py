"""Dense simplex over ``min c x  s.t.  A x >= b`` with row bases.

A basis is a set of ``n`` linearly independent rows; its basic solution is
``A_B^{-1} b_B`` and its dual is ``y_B = c A_B^{-1}`` (zero off the basis).
Duals are therefore reported positionally for every row, which is what the
certificate code needs.

Cold starts pick one single-variable row per column whose sign matches the
cost (a dual feasible basis) and run the dual simplex; columns without such
a row get an artificial bound ``+-x_j >= -M``.  Warm starts run the dual
simplex from a dual feasible basis and the primal simplex from a primal
feasible one.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .model import EPS_FEAS

log = logging.getLogger(__name__)

PRIMAL_TOL = 1e-9
DUAL_TOL = 1e-9
PIVOT_TOL = 1e-9
REFACTOR_EVERY = 64
BIG_M = 1e7

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
UNBOUNDED = "unbounded"


class SimplexError(RuntimeError):
    pass


class SingularBasisError(SimplexError):
    pass


@dataclass
class LpSolution:
    status: str
    x: np.ndarray | None
    obj: float
    y: np.ndarray | None
    basis: tuple[int, ...] | None
    farkas: np.ndarray | None = None
    iterations: int = 0
    warm_started: bool = False

    @property
    def optimal(self) -> bool:
        return self.status == OPTIMAL


def _invert(AB: np.ndarray) -> np.ndarray:
    n = AB.shape[0]
    if n == 0:
        return np.zeros((0, 0))
    try:
        inv = np.linalg.inv(AB)
    except np.linalg.LinAlgError:
        raise SingularBasisError("basis rows are linearly dependent") from None
    if not np.all(np.isfinite(inv)) or np.linalg.cond(AB) > 1e13:
        raise SingularBasisError("basis rows are numerically dependent")
    return inv


def basic_solution_of(basis: Sequence[int], A, b) -> np.ndarray:
    """The point where the ``n`` basis rows hold with equality."""
    A = np.asarray(A, dtype=float)
    b = np.asarray(b, dtype=float)
    basis = list(basis)
    if len(basis) != A.shape[1]:
        raise SingularBasisError(f"basis has {len(basis)} rows, need {A.shape[1]}")
    inv = _invert(A[basis])
    return inv @ b[basis]


def is_basis_feasible(basis: Sequence[int], A, b, tol: float = EPS_FEAS) -> bool:
    x = basic_solution_of(basis, A, b)
    return bool(np.all(np.asarray(A) @ x >= np.asarray(b) - tol))


class _Workspace:
    def __init__(self, A: np.ndarray, b: np.ndarray, c: np.ndarray):
        self.m_real = A.shape[0]
        self.A = A
        self.b = b
        self.c = c
        self.n = A.shape[1]
        self.basis: list[int] = []
        self.Binv = np.zeros((self.n, self.n))
        self.since_refactor = 0
        self.iterations = 0
        self.bland = False
        self.degenerate_run = 0

    # basis bookkeeping

    def factor(self, basis: list[int]) -> None:
        self.basis = list(basis)
        self.Binv = _invert(self.A[self.basis])
        self.since_refactor = 0

    def replace(self, k: int, row: int, w: np.ndarray) -> None:
        """Swap basis position ``k`` for ``row`` where ``w = A[row] @ Binv``."""
        wk = w[k]
        u = w.copy()
        u[k] -= 1.0
        self.Binv -= np.outer(self.Binv[:, k], u / wk)
        self.basis[k] = row
        self.iterations += 1
        self.since_refactor += 1
        if self.since_refactor >= REFACTOR_EVERY:
            self.factor(self.basis)

    def point(self) -> np.ndarray:
        return self.Binv @ self.b[self.basis]

    def duals(self) -> np.ndarray:
        return self.c @ self.Binv

    def note_step(self, step: float) -> None:
        if step <= 1e-12:
            self.degenerate_run += 1
            if not self.bland and self.degenerate_run > 2 * (self.A.shape[0] + self.n):
                log.debug("switching to Bland's rule after %d degenerate pivots", self.degenerate_run)
                self.bland = True
        else:
            self.degenerate_run = 0

    # cold start

    def cold_basis(self, big_m: float) -> list[int]:
        """Dual feasible start: one sign-matching single-variable row per column."""
        A = self.A
        nnz = np.count_nonzero(A, axis=1)
        basis = []
        art_rows, art_rhs = [], []
        for j in range(self.n):
            pick = None
            cj = self.c[j]
            for i in np.flatnonzero((nnz == 1) & (A[:, j] != 0)):
                if cj == 0 or np.sign(A[i, j]) == np.sign(cj):
                    pick = int(i)
                    break
            if pick is None:
                row = np.zeros(self.n)
                row[j] = 1.0 if cj >= 0 else -1.0
                art_rows.append(row)
                art_rhs.append(-big_m)
                pick = self.m_real + len(art_rows) - 1
            basis.append(pick)
        if art_rows:
            self.A = np.vstack([A, np.array(art_rows)])
            self.b = np.concatenate([self.b, np.array(art_rhs)])
        return basis

    # pivoting loops

    def dual_simplex(self, max_iter: int) -> tuple[str, np.ndarray | None]:
        A, b = self.A, self.b
        while True:
            if self.iterations >= max_iter:
                raise SimplexError(f"iteration limit {max_iter} reached")
            x = self.point()
            slack = A @ x - b
            scale = 1.0 + np.abs(b)
            viol = slack / scale
            viol[self.basis] = 0.0
            if self.bland:
                cand = np.flatnonzero(viol < -PRIMAL_TOL)
                if cand.size == 0:
                    return OPTIMAL, None
                i = int(cand[0])
            else:
                i = int(np.argmin(viol))
                if viol[i] >= -PRIMAL_TOL:
                    return OPTIMAL, None
            w = A[i] @ self.Binv
            y = np.maximum(self.duals(), 0.0)
            pos = np.flatnonzero(w > PIVOT_TOL)
            if pos.size == 0:
                ray = np.zeros(A.shape[0])
                ray[i] = 1.0
                ray[self.basis] = np.maximum(-w, 0.0)
                return INFEASIBLE, ray
            ratios = y[pos] / w[pos]
            best = ratios.min()
            ties = pos[ratios <= best + 1e-12]
            k = int(min(ties, key=lambda q: self.basis[q]))
            self.note_step(best)
            self.replace(k, i, w)

    def primal_simplex(self, max_iter: int) -> tuple[str, np.ndarray | None]:
        A, b = self.A, self.b
        while True:
            if self.iterations >= max_iter:
                raise SimplexError(f"iteration limit {max_iter} reached")
            y = self.duals()
            if self.bland:
                neg = [q for q in range(self.n) if y[q] < -DUAL_TOL]
                if not neg:
                    return OPTIMAL, None
                k = min(neg, key=lambda q: self.basis[q])
            else:
                k = int(np.argmin(y))
                if y[k] >= -DUAL_TOL:
                    return OPTIMAL, None
            d = self.Binv[:, k]
            x = self.point()
            Ad = A @ d
            Ad[self.basis] = 0.0
            cand = np.flatnonzero(Ad < -PIVOT_TOL)
            if cand.size == 0:
                return UNBOUNDED, d
            slack = np.maximum(A[cand] @ x - b[cand], 0.0)
            ratios = slack / -Ad[cand]
            best = ratios.min()
            i = int(cand[ratios <= best + 1e-12][0])
            w = A[i] @ self.Binv
            self.note_step(best)
            self.replace(k, i, w)

    def primal_feasible(self) -> bool:
        x = self.point()
        slack = (self.A @ x - self.b) / (1.0 + np.abs(self.b))
        return bool(np.all(slack >= -PRIMAL_TOL))

    def dual_feasible(self) -> bool:
        return bool(np.all(self.duals() >= -DUAL_TOL))


def _finish(ws: _Workspace, status: str, vec: np.ndarray | None, warm: bool) -> LpSolution:
    m = ws.m_real
    artificial = [q for q, r in enumerate(ws.basis) if r >= m]
    if status == INFEASIBLE:
        ray = vec[:m].copy()
        return LpSolution(INFEASIBLE, None, np.inf, None, None, ray, ws.iterations, warm)
    if status == UNBOUNDED:
        return LpSolution(UNBOUNDED, ws.point(), -np.inf, None, None, None, ws.iterations, warm)
    AB = ws.A[ws.basis]
    x = np.linalg.solve(AB, ws.b[ws.basis]) if ws.n else np.zeros(0)
    yB = np.linalg.solve(AB.T, ws.c) if ws.n else np.zeros(0)
    yB = np.where(yB < 0, 0.0, yB)
    if any(yB[q] > DUAL_TOL for q in artificial):
        return LpSolution(UNBOUNDED, x, -np.inf, None, None, None, ws.iterations, warm)
    y = np.zeros(m)
    for q, r in enumerate(ws.basis):
        if r < m:
            y[r] = yB[q]
    basis = None if artificial else tuple(int(r) for r in ws.basis)
    return LpSolution(OPTIMAL, x, float(ws.c @ x), y, basis, None, ws.iterations, warm)


def solve_lp(A, b, c, warm_basis: Sequence[int] | None = None, *, max_iter: int = 100_000) -> LpSolution:
    """Solve ``min c x  s.t.  A x >= b``.

    On infeasibility the returned ``farkas`` ray ``r >= 0`` satisfies
    ``r A = 0`` and ``r b > 0``.  ``warm_basis`` must index linearly
    independent rows; a basis that is neither primal nor dual feasible is
    ignored in favour of a cold start.
    """
    A = np.asarray(A, dtype=float)
    b = np.asarray(b, dtype=float)
    c = np.asarray(c, dtype=float)
    m, n = A.shape
    if b.shape != (m,) or c.shape != (n,):
        raise ValueError(f"inconsistent shapes A{A.shape} b{b.shape} c{c.shape}")

    if warm_basis is not None:
        basis = [int(r) for r in warm_basis]
        if len(basis) != n or len(set(basis)) != n or not all(0 <= r < m for r in basis):
            raise ValueError(f"warm basis must hold {n} distinct row indices")
        ws = _Workspace(A, b, c)
        ws.factor(basis)
        if ws.dual_feasible():
            status, vec = ws.dual_simplex(max_iter)
            return _finish(ws, status, vec, True)
        if ws.primal_feasible():
            status, vec = ws.primal_simplex(max_iter)
            return _finish(ws, status, vec, True)

    big_m = BIG_M * (1.0 + float(np.max(np.abs(b), initial=0.0)))
    for _ in range(3):
        ws = _Workspace(A, b, c)
        ws.factor(ws.cold_basis(big_m))
        status, vec = ws.dual_simplex(max_iter)
        if status == INFEASIBLE and np.any(vec[m:] > PIVOT_TOL):
            big_m *= 1e3
            continue
        return _finish(ws, status, vec, False)
    raise SimplexError("infeasibility ray depends on artificial bounds")
