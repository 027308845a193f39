"""Mixed-integer linear feasibility models.

A model is a bag of bounded continuous variables, binary variables, and
tagged linear constraints; the objective is always the constant zero,
so solving means deciding feasibility.  Construction is single-threaded;
a finished model is treated as read-only and may be shared.

Every constraint carries a short family tag (for example "C13") naming
the encoding rule that produced it, which keeps census checks and
infeasibility debugging tractable.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field

import numpy as np

LE = "<="
GE = ">="
EQ = "="
SENSES = (LE, GE, EQ)

_NAME_RE = re.compile(r"[A-Za-z_][A-Za-z0-9_]*\Z")


@dataclass(frozen=True)
class VarId:
    """Opaque variable handle: dense index plus a unique debug name."""

    index: int
    name: str

    def __repr__(self) -> str:
        return f"VarId({self.index}, {self.name!r})"


@dataclass(frozen=True)
class LinearExpr:
    """Sum of coefficient * variable terms plus a constant.

    Duplicate variables are merged and exact-zero coefficients dropped,
    so the term list is canonical (sorted by variable index).
    """

    terms: tuple[tuple[float, VarId], ...] = ()
    constant: float = 0.0

    def __post_init__(self) -> None:
        merged: dict[int, tuple[float, VarId]] = {}
        for coef, var in self.terms:
            c = float(coef)
            if not math.isfinite(c):
                raise ValueError(f"non-finite coefficient {c} on {var.name}")
            if var.index in merged:
                prev, _ = merged[var.index]
                merged[var.index] = (prev + c, var)
            else:
                merged[var.index] = (c, var)
        canon = tuple((c, v) for _, (c, v) in sorted(merged.items()) if c != 0.0)
        object.__setattr__(self, "terms", canon)
        object.__setattr__(self, "constant", float(self.constant))
        if not math.isfinite(self.constant):
            raise ValueError(f"non-finite constant {self.constant}")

    @staticmethod
    def of(var: VarId, coef: float = 1.0) -> "LinearExpr":
        return LinearExpr(((coef, var),))

    def value(self, values: np.ndarray) -> float:
        """Evaluate against a dense value vector indexed by VarId.index."""
        total = self.constant
        for coef, var in self.terms:
            total += coef * values[var.index]
        return total


@dataclass(frozen=True)
class Constraint:
    expr: LinearExpr
    sense: str
    rhs: float
    tag: str

    def __post_init__(self) -> None:
        if self.sense not in SENSES:
            raise ValueError(f"sense must be one of {SENSES}, got {self.sense!r}")
        if not math.isfinite(self.rhs):
            raise ValueError(f"non-finite right-hand side {self.rhs}")
        if not self.expr.terms:
            raise ValueError("constraint has no variable terms")

    def satisfied(self, values: np.ndarray, tolerance: float) -> bool:
        lhs = self.expr.value(values)
        if self.sense == LE:
            return lhs <= self.rhs + tolerance
        if self.sense == GE:
            return lhs >= self.rhs - tolerance
        return abs(lhs - self.rhs) <= tolerance


class MilpModel:
    """Feasibility model under construction.

    Variables are dense: VarId.index runs 0..n-1 in creation order.
    """

    def __init__(self) -> None:
        self.variables: list[VarId] = []
        self.lower: list[float] = []
        self.upper: list[float] = []
        self.is_binary: list[bool] = []
        self.constraints: list[Constraint] = []
        self._names: set[str] = set()

    @property
    def var_count(self) -> int:
        return len(self.variables)

    @property
    def binary_count(self) -> int:
        return sum(self.is_binary)

    def _register(self, name: str, lo: float, hi: float, binary: bool) -> VarId:
        if not _NAME_RE.match(name):
            raise ValueError(f"bad variable name {name!r}")
        if name in self._names:
            raise ValueError(f"duplicate variable name {name!r}")
        var = VarId(len(self.variables), name)
        self.variables.append(var)
        self.lower.append(lo)
        self.upper.append(hi)
        self.is_binary.append(binary)
        self._names.add(name)
        return var

    def add_continuous(self, name: str, lo: float, hi: float) -> VarId:
        """Bounded continuous variable; degenerate lo == hi pins it."""
        lo, hi = float(lo), float(hi)
        if not (math.isfinite(lo) and math.isfinite(hi)):
            raise ValueError(f"bounds for {name!r} must be finite, got [{lo}, {hi}]")
        if lo > hi:
            raise ValueError(f"crossed bounds for {name!r}: [{lo}, {hi}]")
        return self._register(name, lo, hi, binary=False)

    def add_binary(self, name: str) -> VarId:
        return self._register(name, 0.0, 1.0, binary=True)

    def add_constraint(self, expr: LinearExpr, sense: str, rhs: float, tag: str) -> int:
        for _, var in expr.terms:
            if var.index >= len(self.variables) or self.variables[var.index] != var:
                raise ValueError(f"variable {var!r} is not registered with this model")
        constraint = Constraint(expr, sense, float(rhs), tag)
        self.constraints.append(constraint)
        return len(self.constraints) - 1

    def tags(self) -> set[str]:
        """Census of constraint families present."""
        return {c.tag for c in self.constraints}

    def bounds_arrays(self) -> tuple[np.ndarray, np.ndarray]:
        return np.asarray(self.lower, float), np.asarray(self.upper, float)

    def binary_indices(self) -> np.ndarray:
        return np.flatnonzero(np.asarray(self.is_binary, bool))

    def stats(self) -> dict[str, int]:
        return {
            "variables": self.var_count,
            "binaries": self.binary_count,
            "constraints": len(self.constraints),
        }


@dataclass(frozen=True)
class Assignment:
    """Concrete values for every model variable, dense over VarId.index."""

    values: np.ndarray = field(repr=False)

    def __post_init__(self) -> None:
        arr = np.array(self.values, dtype=np.float64)
        arr.setflags(write=False)
        object.__setattr__(self, "values", arr)

    def __getitem__(self, var: VarId) -> float:
        return float(self.values[var.index])

    def as_dict(self, model: MilpModel) -> dict[str, float]:
        return {v.name: float(self.values[v.index]) for v in model.variables}

    @staticmethod
    def from_dict(model: MilpModel, mapping: dict[str, float]) -> "Assignment":
        values = np.zeros(model.var_count)
        for var in model.variables:
            values[var.index] = mapping[var.name]
        return Assignment(values)


def _fmt(x: float) -> str:
    return f"{x:.12g}"


def export_names(model: MilpModel) -> list[str]:
    """Variable names as they appear in LP text, by variable index.

    LP format treats a leading e/E as a possible exponent, so such
    names are deterministically prefixed.
    """
    names = []
    taken = set(n for n in model._names if not n[0] in "eE")
    for var in model.variables:
        name = var.name
        if name[0] in "eE":
            candidate = "v" + name
            while candidate in taken:
                candidate = candidate + "_"
            taken.add(candidate)
            name = candidate
        names.append(name)
    return names


def export_lp(model: MilpModel) -> str:
    """Serialize as LP-format text, deterministically.

    Variables appear in creation order; binaries live in their own
    section and contribute no Bounds lines.
    """
    names = export_names(model)
    lines = ["Minimize"]
    if model.variables:
        lines.append(f" obj: 0 {names[0]}")
    else:
        lines.append(" obj: 0")
    lines.append("Subject To")
    for i, con in enumerate(model.constraints):
        parts: list[str] = []
        for j, (coef, var) in enumerate(con.expr.terms):
            mag = _fmt(abs(coef))
            if j == 0:
                parts.append(("-" if coef < 0 else "") + f"{mag} {names[var.index]}")
            else:
                parts.append(("- " if coef < 0 else "+ ") + f"{mag} {names[var.index]}")
        body = " ".join(parts)
        rhs = _fmt(con.rhs - con.expr.constant)
        lines.append(f" c{i}_{con.tag}: {body} {con.sense} {rhs}")
    lines.append("Bounds")
    for var, binary in zip(model.variables, model.is_binary):
        if binary:
            continue
        lo, hi = model.lower[var.index], model.upper[var.index]
        name = names[var.index]
        if lo == hi:
            lines.append(f" {name} = {_fmt(lo)}")
        else:
            lines.append(f" {_fmt(lo)} <= {name} <= {_fmt(hi)}")
    if model.binary_count:
        lines.append("Binaries")
        for var, binary in zip(model.variables, model.is_binary):
            if binary:
                lines.append(f" {names[var.index]}")
    lines.append("End")
    return "\n".join(lines) + "\n"
