"""Random perturbation of one data element (A, b or c) to a target degree.

The degree of ``u_new`` relative to ``u`` is the larger of the angle between
the two vectors and the relative change of their norms.  A perturbation is
grown by a random walk on single coordinates until the degree reaches the
target; the last iterate still below the target is returned.
"""
from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field

import numpy as np

from .model import Instance, perturb_element
from .simplex import solve_lp

log = logging.getLogger(__name__)

MIN_EPS = 1e-6
ELEMENTS = ("A", "b", "c")


def find_degree(u, u_new) -> float:
    u = np.asarray(u, dtype=float).ravel()
    u_new = np.asarray(u_new, dtype=float).ravel()
    if u.shape != u_new.shape:
        raise ValueError(f"length mismatch: {u.shape[0]} vs {u_new.shape[0]}")
    nu = np.linalg.norm(u)
    nv = np.linalg.norm(u_new)
    if nu == 0 or nv == 0:
        raise ValueError("find_degree needs nonzero vectors")
    # 2 atan2(|a - b|, |a + b|) equals arccos(a . b) for unit a, b but stays exact near 0 and pi
    a, b = u / nu, u_new / nv
    angle = 2.0 * math.atan2(float(np.linalg.norm(a - b)), float(np.linalg.norm(a + b)))
    return max(angle, abs((nu - nv) / nu))


def _degrees(dot: np.ndarray, nu: float, nv2: np.ndarray) -> np.ndarray:
    nv = np.sqrt(np.maximum(nv2, 0.0))
    with np.errstate(divide="ignore", invalid="ignore"):
        cos = np.clip(dot / (nu * nv), -1.0, 1.0)
        deg = np.maximum(np.arccos(cos), np.abs((nu - nv) / nu))
    return np.where(nv2 > 0.0, deg, np.inf)


def _walk(base: np.ndarray, theta: float, eps: float, rng: np.random.Generator,
          max_steps: int) -> np.ndarray | None:
    """Random single-coordinate walk from ``base``; the last iterate below ``theta``.

    Steps are drawn in batches; within a batch the running dot product and
    squared norm are accumulated so the first iterate that reaches
    ``theta`` is located exactly as a step-by-step loop would.
    """
    nu = float(np.linalg.norm(base))
    v = base.copy()
    prev = None
    done = 0
    batch = 64
    while done < max_steps:
        dot = float(base @ v)
        nv2 = float(v @ v)
        if _degrees(np.array([dot]), nu, np.array([nv2]))[0] >= theta:
            return prev
        size = min(batch, max_steps - done)
        idx = rng.integers(base.size, size=size)
        delta = rng.uniform(-eps, eps, size=size)
        # value of v[idx[s]] just before step s, accounting for repeats inside the batch
        order = np.argsort(idx, kind="stable")
        sd = delta[order]
        csum = np.cumsum(sd)
        si = idx[order]
        starts = np.r_[0, np.flatnonzero(np.diff(si)) + 1]
        group_start = np.zeros(size, dtype=int)
        group_start[starts] = starts
        group_start = np.maximum.accumulate(group_start)
        excl = csum - sd - np.where(group_start > 0, csum[group_start - 1], 0.0)
        prior = np.empty(size)
        prior[order] = v[si] + excl
        dots = dot + np.cumsum(base[idx] * delta)
        nv2s = nv2 + np.cumsum(2.0 * prior * delta + delta * delta)
        hit = np.flatnonzero(_degrees(dots, nu, nv2s) >= theta)
        stop = int(hit[0]) if hit.size else size
        # iterates 0..stop-1 of this batch are below theta; apply them
        if stop > 0:
            np.add.at(v, idx[:stop], delta[:stop])
        if hit.size:
            if stop == 0:
                return prev if done > 0 else base.copy()
            return v
        prev = v.copy()
        done += size
        batch = min(batch * 2, 1 << 16)
    return prev if prev is not None else v


def find_perturbation(u, theta: float, rng: np.random.Generator, max_steps: int = 1_000_000):
    """Return a perturbed copy of ``u`` with degree below ``theta``, or ``None``.

    Halves the step size from 1 down to 1e-6 until some walk produces an
    iterate other than ``u`` itself.  ``max_steps`` caps each walk.
    """
    if theta <= 0:
        raise ValueError("theta must be positive")
    arr = np.asarray(u, dtype=float)
    shape = arr.shape
    base = arr.ravel().copy()
    if not np.any(base):
        raise ValueError("cannot perturb a zero vector")
    eps = 1.0
    while eps >= MIN_EPS:
        prev = _walk(base, theta, eps, rng, max_steps)
        if prev is not None and not np.array_equal(prev, base) and find_degree(base, prev) < theta:
            return prev.reshape(shape)
        eps /= 2.0
    return None


def element_vector(inst: Instance, element: str) -> np.ndarray:
    """The perturbable block: structural rows of A, structural rhs, or the objective."""
    rows = inst.structural_rows
    if element == "A":
        return inst.A[rows].copy()
    if element == "b":
        return inst.b[rows].copy()
    if element == "c":
        return inst.c.copy()
    raise ValueError(f"element must be one of {ELEMENTS}")


@dataclass
class PerturbationSpec:
    element: str
    degree: float
    count: int = 5
    max_attempts: int = 1000
    seed: int = 0
    time_budget: float | None = None

    def __post_init__(self):
        if self.element not in ELEMENTS:
            raise ValueError(f"element must be one of {ELEMENTS}")
        if not self.degree > 0:
            raise ValueError("degree must be positive")
        if self.count < 1:
            raise ValueError("count must be at least 1")


@dataclass
class TestSetStats:
    attempts: int = 0
    not_found: int = 0
    rejected: int = 0
    accepted: int = 0
    degrees: list[float] = field(default_factory=list)
    elapsed: float = 0.0
    reason: str = ""


def admissible(inst: Instance) -> bool:
    return solve_lp(inst.A, inst.b, inst.c).optimal


def make_test_set(inst: Instance, spec: PerturbationSpec) -> tuple[list[Instance], TestSetStats]:
    """Draw perturbed instances until ``count`` pass the LP filter or attempts run out."""
    rng = np.random.default_rng(spec.seed)
    stats = TestSetStats()
    out: list[Instance] = []
    u = element_vector(inst, spec.element)
    start = time.perf_counter()
    if u.size == 0 or not np.any(u):
        stats.reason = f"element {spec.element} is empty or zero"
        return out, stats
    while len(out) < spec.count and stats.attempts < spec.max_attempts:
        if spec.time_budget is not None and time.perf_counter() - start > spec.time_budget:
            stats.reason = "time budget exhausted"
            break
        stats.attempts += 1
        u_new = find_perturbation(u, spec.degree, rng)
        if u_new is None:
            stats.not_found += 1
            continue
        tag = f"{spec.element}-{spec.degree:g}-{spec.seed}-{stats.attempts}"
        cand = perturb_element(inst, spec.element, u_new, suffix=tag)
        if not admissible(cand):
            stats.rejected += 1
            continue
        stats.accepted += 1
        stats.degrees.append(find_degree(u, u_new))
        out.append(cand)
    stats.elapsed = time.perf_counter() - start
    return out, stats
