"""Minimal self-contained linear programming: model, simplex solver, text dump.

The solver is a dense two-phase tableau simplex.  Entering columns follow
Dantzig's rule until a streak of degenerate pivots, then Bland's rule until
the objective moves again, which guarantees termination on the highly
degenerate relaxations this package produces.  Everything is deterministic
for a fixed input.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

DEFAULT_TOL = 1e-7
_PIVOT_EPS = 1e-10
_OPT_EPS = 1e-9
_DEGENERATE_STREAK = 30


class LPSolverError(RuntimeError):
    """Numerical failure (non-convergence or an inconsistent final basis)."""


@dataclass
class LinearConstraint:
    coeffs: dict[str, float]
    relation: str  # "<=" or "=="
    rhs: float
    name: str = ""


@dataclass
class LinearProgram:
    """Maximize objective . x subject to linear constraints and box bounds."""

    variables: list[tuple[str, float, float]]  # (name, lower, upper); upper may be inf
    constraints: list[LinearConstraint] = field(default_factory=list)
    objective: dict[str, float] = field(default_factory=dict)

    def check_well_formed(self) -> None:
        names = set()
        for name, lb, ub in self.variables:
            if name in names:
                raise ValueError(f"duplicate variable {name!r}")
            names.add(name)
            if not math.isfinite(lb):
                raise ValueError(f"variable {name!r} needs a finite lower bound")
            if lb > ub:
                raise ValueError(f"variable {name!r} has lower bound {lb} > upper bound {ub}")
        for con in self.constraints:
            if con.relation not in ("<=", "=="):
                raise ValueError(f"constraint relation must be <= or ==, got {con.relation!r}")
            for v in con.coeffs:
                if v not in names:
                    raise ValueError(f"constraint {con.name!r} references undeclared variable {v!r}")
        for v in self.objective:
            if v not in names:
                raise ValueError(f"objective references undeclared variable {v!r}")


@dataclass
class LPSolutionRaw:
    status: str  # "optimal" | "infeasible" | "unbounded"
    values: dict[str, float]
    objective_value: float | None


def default_tolerance() -> float:
    """Feasibility tolerance, overridable via the BANDITLP_TOL environment variable."""
    raw = os.environ.get("BANDITLP_TOL")
    if raw:
        return float(raw)
    return DEFAULT_TOL


def check_feasibility(
    lp: LinearProgram, values: Mapping[str, float], tol: float | None = None
) -> list[tuple[str, float]]:
    """Violations of constraints/bounds beyond tol, as (description, amount)."""
    tol = default_tolerance() if tol is None else tol
    out: list[tuple[str, float]] = []
    for name, lb, ub in lp.variables:
        v = values.get(name, 0.0)
        if v < lb - tol:
            out.append((f"bound {name} >= {lb}", lb - v))
        if v > ub + tol:
            out.append((f"bound {name} <= {ub}", v - ub))
    for idx, con in enumerate(lp.constraints):
        lhs = sum(c * values.get(n, 0.0) for n, c in con.coeffs.items())
        slack = lhs - con.rhs
        label = con.name or f"c{idx}"
        scale = 1.0 + abs(con.rhs)
        if con.relation == "<=" and slack > tol * scale:
            out.append((f"constraint {label}", slack))
        elif con.relation == "==" and abs(slack) > tol * scale:
            out.append((f"constraint {label}", abs(slack)))
    return out


def objective_value(lp: LinearProgram, values: Mapping[str, float]) -> float:
    return sum(c * values.get(n, 0.0) for n, c in lp.objective.items())


def solve_lp(lp: LinearProgram, tol: float | None = None) -> LPSolutionRaw:
    """Solve a small LP to optimality with a deterministic two-phase simplex."""
    tol = default_tolerance() if tol is None else tol
    lp.check_well_formed()

    names = [v[0] for v in lp.variables]
    lb = np.array([v[1] for v in lp.variables], dtype=float)
    ub = np.array([v[2] for v in lp.variables], dtype=float)
    index = {n: i for i, n in enumerate(names)}
    n_all = len(names)

    fixed = np.isclose(ub - lb, 0.0, atol=0.0)  # lb == ub exactly
    free_idx = [i for i in range(n_all) if not fixed[i]]
    col_of = {i: j for j, i in enumerate(free_idx)}
    n = len(free_idx)

    # Rows over shifted variables y = x - lb >= 0.
    rows: list[np.ndarray] = []
    rhs: list[float] = []
    rels: list[str] = []
    for con in lp.constraints:
        a = np.zeros(n)
        b = float(con.rhs)
        for name, c in con.coeffs.items():
            i = index[name]
            b -= c * lb[i]
            if not fixed[i]:
                a[col_of[i]] += c
        rows.append(a)
        rhs.append(b)
        rels.append(con.relation)
    for i in free_idx:
        width = ub[i] - lb[i]
        if math.isfinite(width):
            a = np.zeros(n)
            a[col_of[i]] = 1.0
            rows.append(a)
            rhs.append(width)
            rels.append("<=")

    m = len(rows)
    n_slack = sum(1 for r in rels if r == "<=")

    # Assemble equalities A y + S s = b with b >= 0; artificials where needed.
    A = np.zeros((m, n + n_slack))
    b = np.array(rhs, dtype=float)
    basis = [-1] * m
    art_rows = []
    si = 0
    for r in range(m):
        A[r, :n] = rows[r]
        if rels[r] == "<=":
            A[r, n + si] = 1.0
            slack_col = n + si
            si += 1
        else:
            slack_col = None
        if b[r] < 0:
            A[r] = -A[r]
            b[r] = -b[r]
            slack_col = None  # slack coefficient is now -1, unusable as basis
        if slack_col is not None:
            basis[r] = slack_col
        else:
            art_rows.append(r)

    n_art = len(art_rows)
    total = n + n_slack + n_art
    T = np.zeros((m, total + 1))
    T[:, : n + n_slack] = A
    T[:, -1] = b
    for k, r in enumerate(art_rows):
        T[r, n + n_slack + k] = 1.0
        basis[r] = n + n_slack + k

    # Cost rows (minimization form), with the negated objective in the last slot.
    c2 = np.zeros(total + 1)
    for name, c in lp.objective.items():
        i = index[name]
        if not fixed[i]:
            c2[col_of[i]] = -c  # maximize c.x  ==  minimize -c.y (constants aside)
    c1 = np.zeros(total + 1)
    c1[n + n_slack : n + n_slack + n_art] = 1.0
    for r in art_rows:
        c1 -= T[r]

    max_iter = 50_000
    iters = 0

    def pivot(r: int, j: int) -> None:
        nonlocal iters
        T[r] /= T[r, j]
        col = T[:, j].copy()
        col[r] = 0.0
        T[:] -= np.outer(col, T[r])
        for crow in (c1, c2):
            if abs(crow[j]) > 0:
                crow -= crow[j] * T[r]
        basis[r] = j
        iters += 1

    def run(cost: np.ndarray, allowed: int) -> str:
        """Pivot to optimality of `cost` over columns [0, allowed). Returns status."""
        degenerate = 0
        bland = False
        while True:
            if iters > max_iter:
                raise LPSolverError("simplex did not converge (iteration limit)")
            red = cost[:allowed]
            if bland:
                cands = np.nonzero(red < -_OPT_EPS)[0]
                if cands.size == 0:
                    return "optimal"
                j = int(cands[0])
            else:
                j = int(np.argmin(red))
                if red[j] >= -_OPT_EPS:
                    return "optimal"
            colvals = T[:, j]
            mask = colvals > _PIVOT_EPS
            if not mask.any():
                return "unbounded"
            ratios = np.full(m, np.inf)
            ratios[mask] = T[mask, -1] / colvals[mask]
            best = ratios.min()
            ties = np.nonzero(ratios <= best + 1e-12)[0]
            r = int(min(ties, key=lambda i: basis[i]))
            if best <= _PIVOT_EPS:
                degenerate += 1
                if degenerate >= _DEGENERATE_STREAK:
                    bland = True
            else:
                degenerate = 0
                bland = False
            pivot(r, j)

    # Phase 1: drive out artificials.
    if n_art:
        status = run(c1, total)
        phase1 = -c1[-1]
        if status != "optimal" or phase1 > 1e-8 * (1.0 + float(np.abs(b).max(initial=0.0))):
            return LPSolutionRaw("infeasible", {}, None)
        drop: list[int] = []
        for r in range(m):
            if basis[r] >= n + n_slack:
                row = T[r, : n + n_slack]
                nz = np.nonzero(np.abs(row) > _PIVOT_EPS)[0]
                if nz.size:
                    pivot(r, int(nz[0]))
                else:
                    drop.append(r)  # redundant constraint
        if drop:
            keep = [r for r in range(m) if r not in set(drop)]
            T = T[keep]
            basis = [basis[r] for r in keep]
            m = len(keep)

    status = run(c2, n + n_slack)
    if status == "unbounded":
        return LPSolutionRaw("unbounded", {}, None)

    y = np.zeros(total)
    for r in range(m):
        y[basis[r]] = T[r, -1]

    values: dict[str, float] = {}
    snap = min(tol, 1e-9)
    for i, name in enumerate(names):
        if fixed[i]:
            v = lb[i]
        else:
            v = lb[i] + y[col_of[i]]
            if abs(v - lb[i]) <= snap:
                v = lb[i]
            elif math.isfinite(ub[i]) and abs(v - ub[i]) <= snap:
                v = ub[i]
            v = min(max(v, lb[i]), ub[i]) if math.isfinite(ub[i]) else max(v, lb[i])
        values[name] = float(v)

    bad = check_feasibility(lp, values, tol)
    if bad:
        worst = max(bad, key=lambda kv: kv[1])
        raise LPSolverError(f"solver returned an infeasible point: {worst[0]} by {worst[1]:.3g}")
    return LPSolutionRaw("optimal", values, objective_value(lp, values))


def format_lp(lp: LinearProgram) -> str:
    """Render in the conventional LP text interchange format."""

    def term_str(coeffs: Mapping[str, float]) -> str:
        parts: list[str] = []
        for name, c in coeffs.items():
            if c == 0:
                continue
            sign = "-" if c < 0 else ("+" if parts else "")
            mag = abs(c)
            parts.append(f"{sign} {mag:.17g} {name}".strip())
        return " ".join(parts) if parts else "0"

    lines = ["Maximize", f" obj: {term_str(lp.objective)}", "Subject To"]
    for idx, con in enumerate(lp.constraints):
        rel = "<=" if con.relation == "<=" else "="
        label = con.name or f"c{idx}"
        lines.append(f" {label}: {term_str(con.coeffs)} {rel} {con.rhs:.17g}")
    lines.append("Bounds")
    for name, lb, ub in lp.variables:
        hi = "+inf" if math.isinf(ub) else f"{ub:.17g}"
        lines.append(f" {lb:.17g} <= {name} <= {hi}")
    lines.append("End")
    return "\n".join(lines) + "\n"
