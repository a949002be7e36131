"""Dense active-set solver for small strictly convex QPs.

Solves ``min 0.5 u^T H u + g^T u  s.t.  C u >= b,  lb <= u <= ub`` with H
symmetric positive definite.  The method is a dual active-set iteration in
the style of Goldfarb--Idnani: start at the unconstrained minimizer, add the
most violated constraint, and take combined primal/dual steps, dropping
active constraints whose multiplier would go negative.  No phase-1 feasible
point is required and primal infeasibility surfaces as an unbounded dual
step.

Problems here are tiny (n <= ~60, tens of rows), so KKT systems are
re-solved from scratch each iteration instead of maintaining incremental
factorizations.  Warm starting biases the violated-constraint selection
toward the previous cycle's active set, which is temporally coherent at
control rates.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

__all__ = ["QPResult", "QPInfeasible", "solve_qp"]

_MAX_ITER = 500


class QPInfeasible(RuntimeError):
    """Raised when the constraint set has no feasible point."""


@dataclass
class QPResult:
    x: np.ndarray
    lam: np.ndarray  # multipliers per stacked row (inequalities then bounds)
    active: tuple  # stacked-row indices of the final active set
    iterations: int
    status: str  # "optimal"


def _stack_rows(n, C, b, lb, ub):
    rows = []
    rhs = []
    if C is not None:
        C = np.atleast_2d(np.asarray(C, dtype=float))
        b = np.asarray(b, dtype=float).reshape(-1)
        if C.shape[0] != b.shape[0] or C.shape[1] != n:
            raise ValueError("constraint dimensions mismatch")
        rows.append(C)
        rhs.append(b)
    if lb is not None:
        lb = np.asarray(lb, dtype=float).reshape(-1)
        keep = np.isfinite(lb)
        E = np.eye(n)[keep]
        rows.append(E)
        rhs.append(lb[keep])
    if ub is not None:
        ub = np.asarray(ub, dtype=float).reshape(-1)
        keep = np.isfinite(ub)
        rows.append(-np.eye(n)[keep])
        rhs.append(-ub[keep])
    if not rows:
        return np.zeros((0, n)), np.zeros(0)
    return np.vstack(rows), np.concatenate(rhs)


def solve_qp(
    H: np.ndarray,
    g: np.ndarray,
    C: Optional[np.ndarray] = None,
    b: Optional[np.ndarray] = None,
    lb: Optional[np.ndarray] = None,
    ub: Optional[np.ndarray] = None,
    warm: Optional[Sequence[int]] = None,
    tol: float = 1e-10,
) -> QPResult:
    H = np.asarray(H, dtype=float)
    g = np.asarray(g, dtype=float).reshape(-1)
    n = g.shape[0]
    L = np.linalg.cholesky(H)  # raises LinAlgError if H is not SPD

    def h_solve(rhs):
        y = np.linalg.solve(L, rhs)
        return np.linalg.solve(L.T, y)

    A, lo = _stack_rows(n, C, b, lb, ub)
    m = A.shape[0]
    warm_set = set(int(i) for i in warm) if warm is not None else set()

    x = h_solve(-g)
    lam = np.zeros(m)
    active: list = []

    for it in range(1, _MAX_ITER + 1):
        slack = A @ x - lo if m else np.zeros(0)
        violated = np.flatnonzero(slack < -tol)
        violated = [int(i) for i in violated if i not in active]
        if not violated:
            full = np.zeros(m)
            for k, idx in enumerate(active):
                full[idx] = lam[idx]
            return QPResult(x, full, tuple(active), it, "optimal")

        # prefer re-adding constraints from the warm-start set, then worst
        warm_hits = [i for i in violated if i in warm_set]
        pool = warm_hits if warm_hits else violated
        p = min(pool, key=lambda i: slack[i])
        cp = A[p]

        # inner loop: step toward satisfying constraint p, dropping blockers
        while True:
            Hinv_cp = h_solve(cp)
            if active:
                N = A[active]
                M = N @ h_solve(N.T)
                try:
                    r = np.linalg.solve(M, N @ Hinv_cp)
                except np.linalg.LinAlgError:
                    r = np.linalg.lstsq(M, N @ Hinv_cp, rcond=None)[0]
                z = Hinv_cp - h_solve(N.T @ r)
            else:
                r = np.zeros(0)
                z = Hinv_cp

            denom = float(cp @ z)
            viol = lo[p] - float(cp @ x)
            t_primal = viol / denom if denom > tol else np.inf

            t_dual = np.inf
            blocker = -1
            for k, idx in enumerate(active):
                if r[k] > tol:
                    tk = lam[idx] / r[k]
                    if tk < t_dual:
                        t_dual, blocker = tk, k

            t = min(t_primal, t_dual)
            if not np.isfinite(t):
                raise QPInfeasible(
                    f"constraint set infeasible (row {p} cannot be satisfied)"
                )
            if denom > tol:
                x = x + t * z
            for k, idx in enumerate(active):
                lam[idx] -= t * r[k]
            lam[p] += t

            if t == t_primal and np.isfinite(t_primal):
                active.append(p)
                break
            dropped = active.pop(blocker)
            lam[dropped] = 0.0

    raise RuntimeError("active-set iteration limit exceeded")
