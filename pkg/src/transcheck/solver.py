"""Feasibility decision for MILP models.

Branch-and-bound over the binary variables with the phase-1 simplex as
the relaxation engine.  Depth-first node order chases a feasible point
(a counterexample, in verification terms) as early as possible; an
exhausted tree is a completeness proof.  Every node first runs a cheap
vectorized bound-tightening pass, which on these big-M heavy models
fixes most binaries without touching the LP.

Verdicts are exactly one of Feasible (with a checked assignment),
Infeasible, or TimedOut; numerical breakdown raises NumericalFailure
rather than returning a wrong verdict.
"""

from __future__ import annotations

import enum
import shutil
import subprocess
import tempfile
import time
from collections import deque
from dataclasses import dataclass
from pathlib import Path
from typing import Protocol, Union

import numpy as np
import scipy.sparse as sp

from .milp import EQ, GE, LE, Assignment, MilpModel, export_lp, export_names
from .simplex import (
    FEASIBLE,
    INFEASIBLE,
    ROW_EQ,
    ROW_GE,
    ROW_LE,
    BasisState,
    DeadlineHit,
    NumericalFailure,
    Workspace,
    make_workspace,
    solve_phase1,
)

__all__ = [
    "Feasible",
    "Infeasible",
    "TimedOut",
    "SolveResult",
    "BranchingRule",
    "SolverConfig",
    "Violation",
    "NumericalFailure",
    "solve",
    "solve_lp_relaxation",
    "check_assignment",
    "tighten_bounds",
    "SolverBackend",
    "BuiltinBackend",
    "ExternalProcessBackend",
    "detect_external_backend",
]


@dataclass(frozen=True)
class Feasible:
    assignment: Assignment


@dataclass(frozen=True)
class Infeasible:
    pass


@dataclass(frozen=True)
class TimedOut:
    elapsed_seconds: float
    nodes_explored: int


SolveResult = Union[Feasible, Infeasible, TimedOut]


class BranchingRule(enum.Enum):
    """MOST_FRACTIONAL picks the binary whose relaxation value is
    furthest from integral.  FIRST_FRACTIONAL branches binaries in
    creation order, taking the lowest-index one still open; on encoded
    queries that order fixes the transformation selectors before the
    network binaries they control, which lets bound propagation settle
    whole subtrees."""

    MOST_FRACTIONAL = "most_fractional"
    FIRST_FRACTIONAL = "first_fractional"


@dataclass(frozen=True)
class SolverConfig:
    timeout_seconds: float = 200.0
    feasibility_tolerance: float = 1e-6
    integrality_tolerance: float = 1e-5
    branching_rule: BranchingRule = BranchingRule.MOST_FRACTIONAL
    node_limit: int | None = None

    def __post_init__(self) -> None:
        if self.timeout_seconds <= 0:
            raise ValueError("timeout must be positive")
        if self.feasibility_tolerance <= 0 or self.integrality_tolerance <= 0:
            raise ValueError("tolerances must be positive")


_SENSE_CODE = {LE: ROW_LE, GE: ROW_GE, EQ: ROW_EQ}


def _standard_form(model: MilpModel) -> tuple[Workspace, np.ndarray, np.ndarray, np.ndarray]:
    rows: list[int] = []
    cols: list[int] = []
    vals: list[float] = []
    b = np.empty(len(model.constraints))
    senses = np.empty(len(model.constraints), np.int8)
    for i, con in enumerate(model.constraints):
        for coef, var in con.expr.terms:
            rows.append(i)
            cols.append(var.index)
            vals.append(coef)
        b[i] = con.rhs - con.expr.constant
        senses[i] = _SENSE_CODE[con.sense]
    A = sp.coo_matrix((vals, (rows, cols)),
                      shape=(len(model.constraints), model.var_count)).tocsr()
    lower, upper = model.bounds_arrays()
    return make_workspace(A, b, senses), lower, upper, model.binary_indices()


class _Propagator:
    """Interval tightening over the model rows, all in <= canonical form."""

    def __init__(self, model: MilpModel) -> None:
        rows: list[int] = []
        cols: list[int] = []
        vals: list[float] = []
        rhs: list[float] = []
        r = 0
        for con in model.constraints:
            forms = []
            if con.sense in (LE, EQ):
                forms.append(1.0)
            if con.sense in (GE, EQ):
                forms.append(-1.0)
            for sign in forms:
                for coef, var in con.expr.terms:
                    rows.append(r)
                    cols.append(var.index)
                    vals.append(sign * coef)
                rhs.append(sign * (con.rhs - con.expr.constant))
                r += 1
        P = sp.coo_matrix((vals, (rows, cols)), shape=(r, model.var_count)).tocsr()
        self.indptr = P.indptr
        self.cols = P.indices
        self.coefs = P.data
        self.rhs = np.asarray(rhs)
        self.pos = self.coefs > 0
        self.row_of = np.repeat(np.arange(r), np.diff(P.indptr))
        self.binaries = model.binary_indices()
        self.n = model.var_count
        self.is_binary = np.zeros(self.n, bool)
        self.is_binary[self.binaries] = True
        # rows grouped by variable, for worklist propagation
        order = np.argsort(self.cols, kind="stable")
        self.var_rows = self.row_of[order]
        counts = np.bincount(self.cols, minlength=self.n)
        self.var_rows_ptr = np.concatenate(([0], np.cumsum(counts)))

    def tighten(self, lower: np.ndarray, upper: np.ndarray, *,
                integrality_tolerance: float = 1e-5,
                feasibility_tolerance: float = 1e-6,
                max_passes: int = 12) -> tuple[np.ndarray, np.ndarray, bool]:
        """Shrink [lower, upper] without losing any mixed-integer point.

        Returns possibly tightened copies plus a flag that is False when
        the rows prove the box empty.
        """
        lo = lower.copy()
        up = upper.copy()
        if len(self.rhs) == 0:
            return lo, up, bool(np.all(lo <= up))
        margin = 1e-9
        for _ in range(max_passes):
            l_at = lo[self.cols]
            u_at = up[self.cols]
            term_min = np.where(self.pos, self.coefs * l_at, self.coefs * u_at)
            row_min = np.add.reduceat(term_min, self.indptr[:-1])
            if np.any(row_min > self.rhs + feasibility_tolerance):
                return lo, up, False
            residual = (self.rhs - row_min)[self.row_of]
            base = np.where(self.pos, l_at, u_at)
            cand = base + residual / self.coefs
            new_up = up.copy()
            np.minimum.at(new_up, self.cols[self.pos], cand[self.pos] + margin)
            new_lo = lo.copy()
            np.maximum.at(new_lo, self.cols[~self.pos], cand[~self.pos] - margin)
            bi = self.binaries
            if len(bi):
                snap_one = new_lo[bi] > integrality_tolerance
                snap_zero = new_up[bi] < 1.0 - integrality_tolerance
                if np.any(snap_one & snap_zero):
                    return new_lo, new_up, False
                new_lo[bi] = np.where(snap_one, 1.0, 0.0)
                new_up[bi] = np.where(snap_zero, 0.0, 1.0)
            if np.any(new_lo > new_up + feasibility_tolerance):
                return new_lo, new_up, False
            np.minimum(new_lo, new_up, out=new_lo)  # keep lo <= up
            moved = max(float(np.max(new_lo - lo)), float(np.max(up - new_up)))
            lo, up = new_lo, new_up
            if moved <= 1e-9:
                break
        return lo, up, True


    def tighten_local(self, lo: np.ndarray, up: np.ndarray, seeds,
                      *, integrality_tolerance: float = 1e-5,
                      feasibility_tolerance: float = 1e-6,
                      row_limit: int = 4000) -> bool:
        """Worklist tightening from freshly changed variables, in place.

        Processes only rows reachable from the seeds, so a single
        changed variable costs its cone of influence rather than a full
        matrix sweep.  Returns False when some row proves the box
        empty; stopping early at row_limit is sound, just less tight.
        """
        if len(self.rhs) == 0:
            return bool(np.all(lo <= up))
        margin = 1e-9
        queued = np.zeros(len(self.rhs), bool)
        pending = deque()

        def enqueue(var: int) -> None:
            for r in self.var_rows[self.var_rows_ptr[var]:
                                   self.var_rows_ptr[var + 1]]:
                if not queued[r]:
                    queued[r] = True
                    pending.append(r)

        for v in seeds:
            enqueue(int(v))
        processed = 0
        while pending:
            processed += 1
            if processed > row_limit:
                return True
            r = pending.popleft()
            queued[r] = False
            s, e = self.indptr[r], self.indptr[r + 1]
            cc = self.cols[s:e]
            aa = self.coefs[s:e]
            l_at = lo[cc]
            u_at = up[cc]
            positive = aa > 0
            slack = self.rhs[r] - np.where(positive, aa * l_at, aa * u_at).sum()
            if slack < -feasibility_tolerance:
                return False
            cand = np.where(positive, l_at, u_at) + slack / aa
            better_up = positive & (cand + margin < u_at - 1e-12)
            better_lo = ~positive & (cand - margin > l_at + 1e-12)
            for k in np.flatnonzero(better_up | better_lo):
                v = int(cc[k])
                if better_up[k]:
                    nb = cand[k] + margin
                    if self.is_binary[v]:
                        nb = 1.0 if nb >= 1.0 - integrality_tolerance else 0.0
                        if nb >= up[v]:
                            continue
                    up[v] = nb
                else:
                    nb = cand[k] - margin
                    if self.is_binary[v]:
                        nb = 0.0 if nb <= integrality_tolerance else 1.0
                        if nb <= lo[v]:
                            continue
                    lo[v] = nb
                if lo[v] > up[v] + feasibility_tolerance:
                    return False
                enqueue(v)
        return True


def tighten_bounds(model: MilpModel, lower: np.ndarray, upper: np.ndarray,
                   config: SolverConfig | None = None) -> tuple[np.ndarray, np.ndarray, bool]:
    """One-shot interval tightening of a bound box against the model rows."""
    config = config or SolverConfig()
    return _Propagator(model).tighten(
        np.asarray(lower, float), np.asarray(upper, float),
        integrality_tolerance=config.integrality_tolerance,
        feasibility_tolerance=config.feasibility_tolerance)


# a node whose tightening fixed at least this many binaries is mid-
# cascade; probing then usually settles the rest without LP dives
_PROBE_TRIGGER = 4

# joint probing of row-sharing binary clusters, e.g. the two selector
# bits of one pooling window or the bits of one output label code;
# capped so the 2^k sweep stays small
_GROUP_MAX = 4
_GROUP_PROBE_OPEN = 48

# on large models, a subtree with this few open binaries is enumerated
# by propagation alone: interior relaxations are skipped and only
# surviving fully-fixed leaves pay for an exact feasibility solve.
# Propagation is exact once every binary is pinned, so nothing is lost
# but the (weak) fractional pruning; smaller models keep the relaxation
# at every node, where it is cheap and prunes far better per node.
_DIVE_OPEN = 32
_DIVE_MIN_ROWS = 1500


def _probe_binaries(prop: _Propagator, lo: np.ndarray, up: np.ndarray,
                    bins: np.ndarray, deadline: float, ftol: float,
                    itol: float) -> tuple[np.ndarray, np.ndarray, bool]:
    """Lookahead tightening: fix each open binary both ways and
    propagate.  A side that proves empty forces the other side, whose
    tightened box is adopted wholesale; when both survive, the union of
    the two boxes still bounds every integer point.
    """
    for _ in range(4):
        changed = False
        free = bins[lo[bins] < up[bins]]
        if not len(free):
            break
        for j in free:
            if time.perf_counter() > deadline:
                return lo, up, True
            if lo[j] == up[j]:
                continue
            boxes = []
            for value in (0.0, 1.0):
                plo, pup = lo.copy(), up.copy()
                plo[j] = pup[j] = value
                ok = prop.tighten_local(plo, pup, (j,),
                                        integrality_tolerance=itol,
                                        feasibility_tolerance=ftol)
                boxes.append((plo, pup, ok))
            ok0, ok1 = boxes[0][2], boxes[1][2]
            if not ok0 and not ok1:
                return lo, up, False
            if ok0 != ok1:
                lo, up, _ = boxes[1] if ok1 else boxes[0]
                changed = True
            else:
                np.maximum(lo, np.minimum(boxes[0][0], boxes[1][0]), out=lo)
                np.minimum(up, np.maximum(boxes[0][1], boxes[1][1]), out=up)
        free = bins[lo[bins] < up[bins]]
        if 0 < len(free) <= _GROUP_PROBE_OPEN:
            lo, up, ok, group_changed = _probe_groups(prop, lo, up, free,
                                                      deadline, ftol, itol)
            if not ok:
                return lo, up, False
            changed = changed or group_changed
        if not changed:
            break
    return lo, up, True


def _probe_groups(prop: _Propagator, lo: np.ndarray, up: np.ndarray,
                  free: np.ndarray, deadline: float, ftol: float,
                  itol: float) -> tuple[np.ndarray, np.ndarray, bool, bool]:
    """Joint lookahead over small clusters of binaries sharing rows.

    The assignments of a cluster partition its integer completions, so
    the union of the surviving propagated boxes still bounds every
    integer point, and an empty union proves the node dead.  The payoff
    over single-bit probes: a pooling window's two selector bits only
    pin the window output when fixed together, and that output value is
    what downstream rows need.  Tied windows pin the same output under
    every surviving assignment, so the union keeps the pin even though
    the bits themselves stay free.
    """
    row_sets = {}
    for j in free:
        j = int(j)
        a, b = prop.var_rows_ptr[j], prop.var_rows_ptr[j + 1]
        row_sets[j] = set(prop.var_rows[a:b].tolist())
    parent = {j: j for j in row_sets}

    def find(a: int) -> int:
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    items = sorted(row_sets.items())
    for i, (ja, ra) in enumerate(items):
        for jb, rb in items[i + 1:]:
            if ra & rb:
                pa, pb = find(ja), find(jb)
                if pa != pb:
                    parent[pa] = pb
    clusters: dict[int, list[int]] = {}
    for j in row_sets:
        clusters.setdefault(find(j), []).append(j)

    changed = False
    for cluster in sorted(clusters.values()):
        if not 2 <= len(cluster) <= _GROUP_MAX:
            continue
        cluster = sorted(cluster)
        survivors = []
        for pattern in range(1 << len(cluster)):
            if time.perf_counter() > deadline:
                return lo, up, True, changed
            fits = True
            plo, pup = lo.copy(), up.copy()
            for pos, j in enumerate(cluster):
                value = float((pattern >> pos) & 1)
                if value < lo[j] or value > up[j]:
                    fits = False
                    break
                plo[j] = pup[j] = value
            if fits and prop.tighten_local(plo, pup, cluster,
                                           integrality_tolerance=itol,
                                           feasibility_tolerance=ftol):
                survivors.append((plo, pup))
        if not survivors:
            return lo, up, False, True
        glo = np.minimum.reduce([s[0] for s in survivors])
        gup = np.maximum.reduce([s[1] for s in survivors])
        if np.any(glo > lo) or np.any(gup < up):
            changed = True
            np.maximum(lo, glo, out=lo)
            np.minimum(up, gup, out=up)
    return lo, up, True, changed


@dataclass(frozen=True)
class Violation:
    kind: str  # constraint | bound | integrality
    tag: str
    index: int
    amount: float

    def __str__(self) -> str:
        return f"{self.kind} {self.tag}#{self.index} off by {self.amount:.3g}"


def check_assignment(model: MilpModel, assignment: Assignment, *,
                     feasibility_tolerance: float = 1e-6,
                     integrality_tolerance: float = 1e-5) -> list[Violation]:
    """Re-check a claimed solution by direct substitution.

    Independent of solver internals: every constraint, variable bound,
    and binary integrality condition is evaluated against the raw
    values.  Empty list means the assignment is good.
    """
    x = assignment.values
    if len(x) != model.var_count:
        raise ValueError(
            f"assignment covers {len(x)} variables, model has {model.var_count}")
    out: list[Violation] = []
    for i, con in enumerate(model.constraints):
        lhs = con.expr.value(x)
        if con.sense == LE:
            gap = lhs - con.rhs
        elif con.sense == GE:
            gap = con.rhs - lhs
        else:
            gap = abs(lhs - con.rhs)
        if gap > feasibility_tolerance:
            out.append(Violation("constraint", con.tag, i, float(gap)))
    lower, upper = model.bounds_arrays()
    for j in range(model.var_count):
        gap = max(lower[j] - x[j], x[j] - upper[j])
        if gap > feasibility_tolerance:
            out.append(Violation("bound", model.variables[j].name, j, float(gap)))
    for j in model.binary_indices():
        gap = abs(x[j] - round(x[j]))
        if gap > integrality_tolerance:
            out.append(Violation("integrality", model.variables[j].name, int(j), float(gap)))
    return out


def solve_lp_relaxation(model: MilpModel) -> SolveResult:
    """Decide the continuous relaxation (binaries loosened to [0, 1]).

    Returns Feasible with a possibly fractional point, or Infeasible.
    Numerical breakdown raises NumericalFailure instead of guessing.
    """
    if model.var_count == 0:
        return Feasible(Assignment(np.empty(0)))
    ws, lower, upper, _ = _standard_form(model)
    res = solve_phase1(ws, lower, upper)
    if res.status == FEASIBLE:
        return Feasible(Assignment(res.x))
    return Infeasible()


def solve(model: MilpModel, config: SolverConfig | None = None) -> SolveResult:
    """Decide feasibility with binaries integral; complete search.

    Feasible results always pass check_assignment.  TimedOut carries the
    elapsed time and node count and makes no claim either way.
    """
    config = config or SolverConfig()
    start = time.perf_counter()
    deadline = start + config.timeout_seconds
    if model.var_count == 0:
        return Feasible(Assignment(np.empty(0)))

    ws, lower, upper, bins = _standard_form(model)
    prop = _Propagator(model)
    ftol = config.feasibility_tolerance
    itol = config.integrality_tolerance
    lp_tol = min(1e-7, ftol / 10.0)

    nodes = 0
    stack: list[tuple[np.ndarray, np.ndarray, BasisState | None,
                      np.ndarray | None, int | None]] = [
        (lower.copy(), upper.copy(), None, None, None)
    ]
    diving = ws.m >= _DIVE_MIN_ROWS

    def run_lp(lo, up, basis):
        try:
            return solve_phase1(ws, lo, up, start=basis,
                                bound_tol=lp_tol, deadline=deadline)
        except NumericalFailure:
            if basis is None:
                raise
            # retry cold before giving up on this node
            return solve_phase1(ws, lo, up, start=None,
                                bound_tol=lp_tol, deadline=deadline)

    while stack:
        if time.perf_counter() > deadline:
            return TimedOut(time.perf_counter() - start, nodes)
        if config.node_limit is not None and nodes >= config.node_limit:
            return TimedOut(time.perf_counter() - start, nodes)
        lo, up, basis, x_hint, seed = stack.pop()
        nodes += 1
        if seed is not None:
            # child of a dive node: only the seed binary moved, so the
            # worklist sweep from its rows reaches every consequence
            if not prop.tighten_local(lo, up, (seed,),
                                      integrality_tolerance=itol,
                                      feasibility_tolerance=ftol):
                continue
        else:
            fixed_before = int(np.sum(lo[bins] == up[bins])) if len(bins) else 0
            lo, up, alive = prop.tighten(lo, up, integrality_tolerance=itol,
                                         feasibility_tolerance=ftol)
            if not alive:
                continue
            if len(bins):
                fixed_now = int(np.sum(lo[bins] == up[bins]))
                if fixed_now - fixed_before >= _PROBE_TRIGGER and fixed_now < len(bins):
                    lo, up, alive = _probe_binaries(prop, lo, up, bins,
                                                    deadline, ftol, itol)
                    if not alive:
                        continue
        open_bins = bins[lo[bins] < up[bins]] if len(bins) else bins
        if diving and x_hint is not None and 0 < len(open_bins) <= _DIVE_OPEN:
            # enumerate the remaining binaries without interior
            # relaxations; propagation is exact at fully fixed leaves,
            # so dead completions die before ever needing a solve
            if config.branching_rule is BranchingRule.FIRST_FRACTIONAL:
                j = int(open_bins[0])
            else:
                fr = np.abs(x_hint[open_bins] - np.round(x_hint[open_bins]))
                j = int(open_bins[int(np.argmax(fr))])
            prefer = float(np.round(min(1.0, max(0.0, x_hint[j]))))
            other = 1.0 - prefer
            for value in (other, prefer):
                clo, cup = lo.copy(), up.copy()
                clo[j] = value
                cup[j] = value
                stack.append((clo, cup, basis, x_hint, j))
            continue
        try:
            res = run_lp(lo, up, basis)
        except DeadlineHit:
            return TimedOut(time.perf_counter() - start, nodes)
        if res.status == INFEASIBLE:
            continue
        x = res.x
        frac = np.abs(x[bins] - np.round(x[bins])) if len(bins) else np.empty(0)
        if not len(bins) or float(frac.max(initial=0.0)) <= itol:
            rounded = np.round(x[bins]) if len(bins) else np.empty(0)
            lo2, up2 = lo.copy(), up.copy()
            if len(bins):
                lo2[bins] = rounded
                up2[bins] = rounded
            try:
                res2 = run_lp(lo2, up2, res.basis)
            except DeadlineHit:
                return TimedOut(time.perf_counter() - start, nodes)
            if res2.status == FEASIBLE:
                assignment = Assignment(res2.x)
                bad = check_assignment(model, assignment,
                                       feasibility_tolerance=ftol,
                                       integrality_tolerance=itol)
                if bad:
                    raise NumericalFailure(
                        "solver produced a point failing independent re-check: "
                        + "; ".join(str(v) for v in bad[:5]))
                return Feasible(assignment)
            unfixed = bins[lo[bins] < up[bins]]
            if not len(unfixed):
                continue  # fully fixed and the exact LP said no
            j = int(unfixed[0])
            prefer = 0.0
        else:
            if config.branching_rule is BranchingRule.FIRST_FRACTIONAL:
                j = int(open_bins[0])
            else:
                open_frac = np.where(lo[bins] < up[bins], frac, -1.0)
                j = int(bins[np.argmax(open_frac)])
            prefer = float(np.round(min(1.0, max(0.0, x[j]))))
        other = 1.0 - prefer
        for value in (other, prefer):  # preferred child on top of the stack
            clo, cup = lo.copy(), up.copy()
            clo[j] = value
            cup[j] = value
            stack.append((clo, cup, res.basis, x, None))
    return Infeasible()


class SolverBackend(Protocol):
    """Anything that can decide a model under a config."""

    def solve(self, model: MilpModel, config: SolverConfig) -> SolveResult:
        ...


class BuiltinBackend:
    """The in-process branch-and-bound solver."""

    name = "builtin"

    def solve(self, model: MilpModel, config: SolverConfig) -> SolveResult:
        return solve(model, config)


@dataclass(frozen=True)
class ExternalProcessBackend:
    """Escape hatch: export LP text, run a solver binary, read back.

    Verdict mapping: the external "optimal"/"feasible" outcomes map to
    Feasible (with the parsed point re-checked here), explicit
    infeasibility reports map to Infeasible, anything else raises.
    Supported flavors: "glpsol" (GLPK) and "cbc" (COIN-OR).
    """

    flavor: str
    executable: str

    def solve(self, model: MilpModel, config: SolverConfig) -> SolveResult:
        with tempfile.TemporaryDirectory(prefix="milp_") as tmp:
            lp_path = Path(tmp) / "model.lp"
            sol_path = Path(tmp) / "solution.txt"
            lp_path.write_text(export_lp(model))
            if self.flavor == "glpsol":
                cmd = [self.executable, "--lp", str(lp_path),
                       "--output", str(sol_path),
                       "--tmlim", str(max(1, int(config.timeout_seconds)))]
            elif self.flavor == "cbc":
                cmd = [self.executable, str(lp_path),
                       "seconds", str(config.timeout_seconds),
                       "solve", "solu", str(sol_path)]
            else:
                raise ValueError(f"unknown external solver flavor {self.flavor!r}")
            proc = subprocess.run(cmd, capture_output=True, text=True,
                                  timeout=config.timeout_seconds + 60)
            text = sol_path.read_text() if sol_path.exists() else ""
            verdict = self._interpret(proc.stdout + "\n" + text)
            if verdict == "infeasible":
                return Infeasible()
            if verdict != "feasible":
                raise RuntimeError(
                    f"external solver gave no usable verdict (exit {proc.returncode})")
            values = self._parse_values(text)
            assignment = _assignment_from_names(model, values)
            bad = check_assignment(model, assignment,
                                   feasibility_tolerance=config.feasibility_tolerance,
                                   integrality_tolerance=config.integrality_tolerance)
            if bad:
                raise RuntimeError("external solution failed re-check: "
                                   + "; ".join(str(v) for v in bad[:5]))
            return Feasible(assignment)

    def _interpret(self, text: str) -> str:
        low = text.lower()
        if "no primal feasible" in low or "no integer feasible" in low \
                or "problem is infeasible" in low or low.startswith("infeasible") \
                or "\ninfeasible" in low:
            return "infeasible"
        if "optimal" in low or "feasible" in low:
            return "feasible"
        return "unknown"

    def _parse_values(self, text: str) -> dict[str, float]:
        values: dict[str, float] = {}
        if self.flavor == "cbc":
            for line in text.splitlines()[1:]:
                parts = line.split()
                if len(parts) >= 3:
                    try:
                        values[parts[1]] = float(parts[2])
                    except ValueError:
                        continue
            return values
        markers = ("*", "B", "NL", "NU", "NF", "NS")
        in_columns = False
        pending: str | None = None  # long names wrap onto their own line
        for line in text.splitlines():
            stripped = line.strip()
            if stripped.startswith("No. Column name"):
                in_columns = True
                continue
            if not in_columns:
                continue
            if stripped.startswith("---") or not stripped:
                if values:
                    break
                continue
            parts = stripped.split()
            if parts[0].isdigit():
                name = parts[1] if len(parts) > 1 else None
                rest = [p for p in parts[2:] if p not in markers]
                if name is not None and rest:
                    try:
                        values[name] = float(rest[0])
                    except ValueError:
                        pass
                    pending = None
                else:
                    pending = name
            elif pending is not None:
                rest = [p for p in parts if p not in markers]
                if rest:
                    try:
                        values[pending] = float(rest[0])
                    except ValueError:
                        pass
                pending = None
            else:
                in_columns = False
        return values


def _assignment_from_names(model: MilpModel, values: dict[str, float]) -> Assignment:
    names = export_names(model)
    dense = np.zeros(model.var_count)
    for j, name in enumerate(names):
        dense[j] = values.get(name, 0.0)
    return Assignment(dense)


def detect_external_backend() -> ExternalProcessBackend | None:
    """First LP-capable solver binary on PATH, if any."""
    for flavor in ("glpsol", "cbc"):
        path = shutil.which(flavor)
        if path:
            return ExternalProcessBackend(flavor, path)
    return None
