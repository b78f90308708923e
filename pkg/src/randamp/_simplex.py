"""Dense two-phase tableau simplex with Bland's pivot rule.

Solves  min c.x  s.t.  A x = b, x >= 0  and reports the optimal basis and
the equality-row duals read off the artificial columns.  The same code path
runs in float or exact Fraction arithmetic; Bland's rule (smallest eligible
entering index, smallest basis label on ratio ties) makes both terminate and
makes them deterministic.

This engine is meant for small systems: it keeps the full dense tableau and
its pivot count degrades badly on highly degenerate problems, so the
production certifier only uses it to cross-check small instances and as the
exact-arithmetic fallback.  Rows must have b >= 0 (callers flip signs).
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction


@dataclass
class SimplexResult:
    status: str                    # "optimal" | "infeasible" | "unbounded"
    objective: object              # float or Fraction
    x: list                       # primal values, length n
    y: list                       # equality-row duals, length m
    basis: list[int]
    iterations: int


def solve_standard_form(rows: list[list[tuple[int, object]]],
                        rhs: list,
                        cost: dict[int, object],
                        n_vars: int,
                        exact: bool = False,
                        max_iter: int = 2_000_000) -> SimplexResult:
    """Two-phase Bland simplex on A x = b, x >= 0.

    rows: sparse equality rows as (column, coefficient) lists.
    rhs: right-hand sides, must be >= 0.
    cost: sparse objective for the minimization.
    """
    m = len(rows)
    zero = Fraction(0) if exact else 0.0
    one = Fraction(1) if exact else 1.0

    def conv(v):
        return Fraction(v) if exact else float(v)

    if any(conv(b) < zero for b in rhs):
        raise ValueError("rhs must be nonnegative; flip row signs first")

    n_cols = n_vars + m                       # structural + artificial
    width = n_cols + 1                        # + rhs column
    tol = zero if exact else 1e-9

    # Tableau rows 0..m-1 constraints, row m objective, row m+1 phase-1.
    T = [[zero] * width for _ in range(m + 2)]
    for r, row in enumerate(rows):
        for c, v in row:
            T[r][c] = conv(v)
        T[r][n_vars + r] = one
        T[r][-1] = conv(rhs[r])
    for c, v in cost.items():
        T[m][c] = conv(v)
    # Phase-1 reduced costs for the all-artificial basis.
    for c in range(width):
        s = zero
        for r in range(m):
            s += T[r][c]
        T[m + 1][c] = -s
    for r in range(m):
        T[m + 1][n_vars + r] = zero

    basis = list(range(n_vars, n_cols))
    iters = 0

    def pivot(prow: int, pcol: int) -> None:
        piv = T[prow][pcol]
        inv = one / piv
        T[prow] = [v * inv for v in T[prow]]
        prow_vals = T[prow]
        for r in range(m + 2):
            if r == prow:
                continue
            f = T[r][pcol]
            if f == zero:
                continue
            row_r = T[r]
            T[r] = [a - f * b for a, b in zip(row_r, prow_vals)]
        basis[prow] = pcol

    def run(obj_row: int, allow_artificial: bool) -> str:
        nonlocal iters
        while iters < max_iter:
            enter = -1
            limit = n_cols if allow_artificial else n_vars
            for c in range(limit):
                if T[obj_row][c] < -tol:
                    enter = c
                    break
            if enter < 0:
                return "optimal"
            leave = -1
            best = None
            for r in range(m):
                a = T[r][enter]
                if a > tol:
                    ratio = T[r][-1] / a
                    if best is None or ratio < best or \
                       (ratio == best and basis[r] < basis[leave]):
                        best = ratio
                        leave = r
            if leave < 0:
                return "unbounded"
            pivot(leave, enter)
            iters += 1
        raise RuntimeError("simplex iteration limit exceeded")

    st = run(m + 1, allow_artificial=True)
    p1 = -T[m + 1][-1]
    feas_tol = zero if exact else 1e-7
    if st != "optimal" or p1 > feas_tol:
        return SimplexResult("infeasible", p1, [], [], basis, iters)

    st = run(m, allow_artificial=False)
    x = [zero] * n_vars
    for r, bcol in enumerate(basis):
        if bcol < n_vars:
            x[bcol] = T[r][-1]
    # Equality duals: with artificial cost 0 in phase 2, the objective row
    # under artificial column j holds -y_j.
    y = [-T[m][n_vars + r] for r in range(m)]
    obj = -T[m][-1]
    return SimplexResult(st, obj, x, y, basis, iters)
