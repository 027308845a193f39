"""Bounded-variable primal simplex restricted to feasibility (phase 1).

The verification problems have a constant-zero objective, so the solver
only ever needs a feasible point or a proof that none exists.  This
module implements the composite phase-1 method for the standard form

    A x + s = b,   l <= (x, s) <= u,

where each row gets one slack whose bounds encode the row sense
(<= means s in [0, inf), >= means s in (-inf, 0], = pins s at 0).
Basic-variable bound violations are driven to zero by minimizing their
total, with the cost vector recomputed as variables cross their bounds.

Implementation notes:
  - the basis inverse is kept as a sparse LU factorization plus a
    product-form eta file, refactorized periodically,
  - pricing is Dantzig (most negative reduced cost) with a fallback to
    Bland's rule after a stall, to break degenerate cycles,
  - the ratio test stops at the first breakpoint and supports bound
    flips of the entering variable,
  - a crash basis picks, for each equality row, the newest variable in
    the row, which is triangular for constraint systems that define
    each fresh variable in terms of older ones.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

FEASIBLE = "feasible"
INFEASIBLE = "infeasible"

ROW_LE = 0
ROW_GE = 1
ROW_EQ = 2

BASIC = 0
AT_LOWER = 1
AT_UPPER = 2

REFACTOR_EVERY = 60
BLAND_TRIGGER = 120
LU_CACHE_SIZE = 24


class NumericalFailure(RuntimeError):
    """The arithmetic gave out before a verdict could be trusted."""


class DeadlineHit(Exception):
    """Internal signal: the caller's time budget expired mid-solve."""


@dataclass(frozen=True)
class Workspace:
    """Static matrix data shared by every solve over one model."""

    A_csr: sp.csr_matrix
    A_csc: sp.csc_matrix
    b: np.ndarray
    senses: np.ndarray
    n: int
    m: int
    slack_lower: np.ndarray
    slack_upper: np.ndarray
    # memo of recent basis factorizations; tree-search siblings restart
    # from the same parent basis, so the LU is usually already on hand
    lu_cache: dict = field(default_factory=dict, repr=False, compare=False)


def make_workspace(A: sp.csr_matrix, b: np.ndarray, senses: np.ndarray) -> Workspace:
    m, n = A.shape
    b = np.asarray(b, float)
    senses = np.asarray(senses, np.int8)
    slack_lower = np.where(senses == ROW_GE, -np.inf, 0.0)
    slack_upper = np.where(senses == ROW_LE, np.inf, 0.0)
    return Workspace(A.tocsr(), A.tocsc(), b, senses, n, m, slack_lower, slack_upper)


@dataclass
class BasisState:
    """Warm-start data: which column is basic in each row, plus the
    at-lower/at-upper status of every column."""

    basic: np.ndarray
    vstatus: np.ndarray

    def copy(self) -> "BasisState":
        return BasisState(self.basic.copy(), self.vstatus.copy())


@dataclass
class Phase1Result:
    status: str
    x: np.ndarray  # structural variable values (length n)
    basis: BasisState | None
    iterations: int


class _Factor:
    """Basis inverse as LU plus an eta file."""

    def __init__(self, ws: Workspace, basic: np.ndarray) -> None:
        self.etas: list[tuple[int, np.ndarray]] = []
        key = basic.tobytes()
        cached = ws.lu_cache.get(key)
        if cached is not None:
            ws.lu_cache[key] = ws.lu_cache.pop(key)
            self.lu = cached
            return
        m = ws.m
        struct_pos = np.flatnonzero(basic < ws.n)
        sc = basic[struct_pos]
        starts = ws.A_csc.indptr[sc]
        lens = ws.A_csc.indptr[sc + 1] - starts
        if len(sc):
            offsets = np.concatenate(([0], np.cumsum(lens)[:-1]))
            flat = np.repeat(starts - offsets, lens) + np.arange(int(lens.sum()))
            rows = ws.A_csc.indices[flat]
            cols = np.repeat(struct_pos, lens)
            vals = ws.A_csc.data[flat]
        else:
            rows = np.empty(0, int)
            cols = np.empty(0, int)
            vals = np.empty(0, float)
        slack_pos = np.flatnonzero(basic >= ws.n)
        rows = np.concatenate([rows, basic[slack_pos] - ws.n])
        cols = np.concatenate([cols, slack_pos])
        vals = np.concatenate([vals, np.ones(len(slack_pos))])
        B = sp.coo_matrix((vals, (rows, cols)), shape=(m, m)).tocsc()
        self.lu = spla.splu(B)
        ws.lu_cache[key] = self.lu
        while len(ws.lu_cache) > LU_CACHE_SIZE:
            del ws.lu_cache[next(iter(ws.lu_cache))]

    def ftran(self, v: np.ndarray) -> np.ndarray:
        w = self.lu.solve(v)
        for r, alpha in self.etas:
            pivot = w[r] / alpha[r]
            w = w - alpha * pivot
            w[r] = pivot
        return w

    def btran(self, v: np.ndarray) -> np.ndarray:
        w = v.astype(float, copy=True)
        for r, alpha in reversed(self.etas):
            s = alpha @ w
            w[r] = (w[r] - s + alpha[r] * w[r]) / alpha[r]
        return self.lu.solve(w, trans="T")


def crash_basis(ws: Workspace, lower: np.ndarray, upper: np.ndarray) -> BasisState:
    """Initial basis: per equality row, its newest usable variable.

    Falls back to the all-slack basis if the greedy choice is singular.
    """
    n, m = ws.n, ws.m
    basic = np.arange(n, n + m)
    claimed = np.zeros(n, bool)
    indptr, indices, data = ws.A_csr.indptr, ws.A_csr.indices, ws.A_csr.data
    for i in range(m):
        if ws.senses[i] != ROW_EQ:
            continue
        cols = indices[indptr[i]:indptr[i + 1]]
        vals = data[indptr[i]:indptr[i + 1]]
        usable = (np.abs(vals) > 1e-9) & ~claimed[cols]
        if usable.any():
            pick = cols[usable].max()
            basic[i] = pick
            claimed[pick] = True
    vstatus = _default_statuses(ws, lower, upper)
    vstatus[basic] = BASIC
    return BasisState(basic, vstatus)


def _default_statuses(ws: Workspace, lower: np.ndarray, upper: np.ndarray) -> np.ndarray:
    lo = np.concatenate([lower, ws.slack_lower])
    vstatus = np.where(np.isfinite(lo), AT_LOWER, AT_UPPER).astype(np.int8)
    return vstatus


def solve_phase1(
    ws: Workspace,
    lower: np.ndarray,
    upper: np.ndarray,
    *,
    start: BasisState | None = None,
    bound_tol: float = 1e-7,
    deadline: float | None = None,
    max_iter: int | None = None,
) -> Phase1Result:
    """Find any point of {x : Ax sense b, lower <= x <= upper}.

    lower/upper cover the structural variables and must be finite.
    Returns FEASIBLE with the point and final basis, or INFEASIBLE.
    Raises NumericalFailure when no trustworthy verdict emerged and
    DeadlineHit when the deadline passes mid-search.
    """
    n, m = ws.n, ws.m
    lower = np.asarray(lower, float)
    upper = np.asarray(upper, float)
    if not (np.isfinite(lower).all() and np.isfinite(upper).all()):
        raise ValueError("structural bounds must be finite")
    if np.any(lower > upper):
        return Phase1Result(INFEASIBLE, np.empty(0), None, 0)
    if m == 0:
        return Phase1Result(FEASIBLE, lower.copy(), None, 0)

    lo = np.concatenate([lower, ws.slack_lower])
    up = np.concatenate([upper, ws.slack_upper])
    if start is None:
        state = crash_basis(ws, lower, upper)
    else:
        state = start.copy()
        nonbasic = state.vstatus != BASIC
        # a warm status pointing at an infinite bound is repaired
        bad_low = nonbasic & (state.vstatus == AT_LOWER) & ~np.isfinite(lo)
        bad_up = nonbasic & (state.vstatus == AT_UPPER) & ~np.isfinite(up)
        state.vstatus[bad_low] = AT_UPPER
        state.vstatus[bad_up] = AT_LOWER
    basic = state.basic
    vstatus = state.vstatus

    if max_iter is None:
        max_iter = 40 * (m + n) + 2000

    x = np.zeros(n + m)

    def set_nonbasic_values() -> None:
        at_lo = vstatus == AT_LOWER
        at_up = vstatus == AT_UPPER
        x[at_lo] = lo[at_lo]
        x[at_up] = up[at_up]

    def factorize() -> _Factor:
        try:
            return _Factor(ws, basic)
        except RuntimeError:
            raise NumericalFailure("basis factorization failed") from None

    def recompute_basics(factor: _Factor) -> None:
        set_nonbasic_values()
        x[basic] = 0.0
        rhs = ws.b - ws.A_csr @ x[:n] - x[n:]
        x[basic] = factor.ftran(rhs)

    try:
        factor = factorize()
    except NumericalFailure:
        basic[:] = np.arange(n, n + m)
        vstatus[:] = _default_statuses(ws, lower, upper)
        vstatus[basic] = BASIC
        factor = factorize()
    recompute_basics(factor)

    iterations = 0
    stall = 0
    last_infeas = np.inf
    price_eps = 1e-8
    pivot_eps = 1e-10

    while True:
        if iterations > max_iter:
            raise NumericalFailure(f"no verdict after {iterations} simplex iterations")
        if deadline is not None and iterations % 64 == 0 and time.perf_counter() > deadline:
            raise DeadlineHit
        xb = x[basic]
        lob = lo[basic]
        upb = up[basic]
        below = xb < lob - bound_tol
        above = xb > upb + bound_tol
        infeas = float(np.sum(lob[below] - xb[below]) + np.sum(xb[above] - upb[above]))
        if infeas == 0.0:
            # confirm against a fresh factorization before declaring
            if factor.etas:
                factor = factorize()
                recompute_basics(factor)
                xb = x[basic]
                below = xb < lo[basic] - bound_tol
                above = xb > up[basic] + bound_tol
                if below.any() or above.any():
                    iterations += 1
                    continue
            return Phase1Result(FEASIBLE, x[:n].copy(), BasisState(basic.copy(), vstatus.copy()),
                                iterations)

        if infeas < last_infeas - 1e-12 * (1.0 + last_infeas):
            stall = 0
        else:
            stall += 1
        last_infeas = infeas

        cb = np.zeros(m)
        cb[below] = -1.0
        cb[above] = 1.0
        y = factor.btran(cb)
        d = np.empty(n + m)
        d[:n] = -(ws.A_csr.T @ y)
        d[n:] = -y
        fixed = lo == up
        can_rise = (vstatus == AT_LOWER) & ~fixed & (d < -price_eps)
        can_fall = (vstatus == AT_UPPER) & ~fixed & (d > price_eps)
        eligible = can_rise | can_fall
        if not eligible.any():
            if factor.etas:
                factor = factorize()
                recompute_basics(factor)
                iterations += 1
                continue
            return Phase1Result(INFEASIBLE, x[:n].copy(),
                                BasisState(basic.copy(), vstatus.copy()), iterations)

        if stall > BLAND_TRIGGER:
            q = int(np.flatnonzero(eligible)[0])
        else:
            score = np.where(eligible, np.abs(d), -1.0)
            q = int(np.argmax(score))
        direction = 1.0 if can_rise[q] else -1.0

        wq = np.zeros(m)
        if q < n:
            a0, a1 = ws.A_csc.indptr[q], ws.A_csc.indptr[q + 1]
            wq[ws.A_csc.indices[a0:a1]] = ws.A_csc.data[a0:a1]
        else:
            wq[q - n] = 1.0
        alpha = factor.ftran(wq)
        rate = -direction * alpha

        t = np.full(m, np.inf)
        target = np.zeros(m)
        rising = rate > pivot_eps
        falling = rate < -pivot_eps
        # rising basics block at a violated lower bound first, else at the
        # upper bound; one already above its upper never blocks a rise
        rb = rising & below
        t[rb] = (lob[rb] - xb[rb]) / rate[rb]
        target[rb] = lob[rb]
        ru = rising & ~below & ~above & np.isfinite(upb)
        t[ru] = (upb[ru] - xb[ru]) / rate[ru]
        target[ru] = upb[ru]
        fa = falling & above
        t[fa] = (upb[fa] - xb[fa]) / rate[fa]
        target[fa] = upb[fa]
        fl = falling & ~above & ~below & np.isfinite(lob)
        t[fl] = (lob[fl] - xb[fl]) / rate[fl]
        target[fl] = lob[fl]
        np.clip(t, 0.0, None, out=t)

        span = up[q] - lo[q]
        t_block = float(t.min()) if m else np.inf
        t_star = min(t_block, span)
        if not np.isfinite(t_star):
            raise NumericalFailure("unbounded phase-1 ray; inconsistent bounds data")

        if span <= t_block:
            # bound flip: the entering variable crosses to its other bound
            x[basic] = xb + rate * span
            x[q] = up[q] if direction > 0 else lo[q]
            vstatus[q] = AT_UPPER if direction > 0 else AT_LOWER
            iterations += 1
            continue

        candidates = np.flatnonzero(t <= t_star + 1e-12)
        r_blk = int(candidates[np.argmax(np.abs(rate[candidates]))])
        leaving = int(basic[r_blk])
        x[basic] = xb + rate * t_star
        x[q] = x[q] + direction * t_star
        x[leaving] = target[r_blk]
        vstatus[leaving] = AT_LOWER if target[r_blk] == lo[leaving] else AT_UPPER
        vstatus[q] = BASIC
        basic[r_blk] = q
        factor.etas.append((r_blk, alpha))
        if len(factor.etas) >= REFACTOR_EVERY:
            factor = factorize()
            recompute_basics(factor)
        iterations += 1
