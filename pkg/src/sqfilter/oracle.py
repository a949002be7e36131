"""Independent brute-force references used by tests and benchmarks.

Nothing here shares a code path with the main distance/gradient/QP pipeline:
distances come from constrained optimization on the smooth bodies, gradients
from central differences, and QP solutions from a first-order dual method.
These routines favor accuracy over speed and may be orders of magnitude
slower than the production pipeline.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize

from .geometry import Pose, Superquadric, implicit_value, implicit_gradient, sample_surface


@dataclass
class OracleReport:
    case_id: str
    values: dict
    method: str
    tolerance: float
    wall_time: float = 0.0
    converged: bool = True
    notes: str = ""

    def to_dict(self) -> dict:
        return {
            "case_id": self.case_id,
            "values": self.values,
            "method": self.method,
            "tolerance": self.tolerance,
            "wall_time": self.wall_time,
            "converged": self.converged,
            "notes": self.notes,
        }


def support_value(sq: Superquadric, direction: np.ndarray) -> float:
    """Closed-form support function of a convex SQ in its body frame.

    The SQ unit ball is a nested p-norm ball with p_i = 2/e_i; its support
    function is the nested dual norm with q_i = 2/(2 - e_i) applied to the
    axis-scaled direction.
    """
    n = np.asarray(direction, dtype=float)
    y = sq.semi_axes * np.abs(n)

    def dual_norm(vals, e):
        if e >= 2.0 - 1e-9:
            return np.max(vals)
        q = 2.0 / (2.0 - e)
        return float(np.sum(vals**q) ** (1.0 / q))

    inner = dual_norm(y[:2], sq.e2)
    return dual_norm(np.array([inner, y[2]]), sq.e1)


def _minkowski_support(sq_a, pose_a, sq_b, pose_b, n: np.ndarray) -> float:
    """Support of the Minkowski difference A - B along world direction n."""
    return (
        support_value(sq_a, pose_a.R.T @ n) + float(n @ pose_a.t)
        + support_value(sq_b, -(pose_b.R.T @ n)) - float(n @ pose_b.t)
    )


def _start_pairs(sq_a, pose_a, sq_b, pose_b, k: int = 32):
    """The k closest sampled-vertex pairs between the two posed bodies."""
    va = pose_a.apply(sample_surface(sq_a, 16, 16).vertices)
    vb = pose_b.apply(sample_surface(sq_b, 16, 16).vertices)
    d2 = ((va[:, None, :] - vb[None, :, :]) ** 2).sum(-1)
    flat = np.argsort(d2, axis=None)[:k]
    ia, ib = np.unravel_index(flat, d2.shape)
    return va[ia], vb[ib]


def _constraint(sq: Superquadric, pose: Pose):
    """Feasibility g(p) <= 0 for the posed body, conditioned via the e/2 power.

    (f + 1)^(e1/2) grows roughly linearly in distance, unlike f itself whose
    2/e powers overflow for sharp shapes; the 0-sublevel sets coincide.
    """
    half = sq.e1 / 2.0

    def g(p):
        local = pose.apply_inverse(p)
        F = implicit_value(sq, local) + 1.0
        return 1.0 - F**half  # scipy wants g >= 0 feasible

    def jac(p):
        local = pose.apply_inverse(p)
        F = implicit_value(sq, local) + 1.0
        gf = implicit_gradient(sq, local) @ pose.R.T
        with np.errstate(divide="ignore", invalid="ignore"):
            scale = half * np.where(F > 0, F ** (half - 1.0), 0.0)
        return -scale * gf

    return g, jac


def sdf_reference(sq_a: Superquadric, pose_a: Pose, sq_b: Superquadric,
                  pose_b: Pose, n_starts: int = 32, tol: float = 1e-10) -> float:
    """Ground-truth signed distance between two smooth convex SQs.

    Separation: multi-start constrained minimization of the witness-pair
    distance. Penetration: depth from minimizing the Minkowski-difference
    support over directions. The sign comes from the direction sweep.
    """
    # sign and penetration depth via the support of the Minkowski difference
    sep = _direction_minimum(sq_a, pose_a, sq_b, pose_b, n_starts)
    if sep >= 0.0:
        return -sep  # penetrating: depth is the minimal support value

    ga, ja = _constraint(sq_a, pose_a)
    gb, jb = _constraint(sq_b, pose_b)
    pa0, pb0 = _start_pairs(sq_a, pose_a, sq_b, pose_b, n_starts)
    best = np.inf
    for p0 in np.hstack([pa0, pb0]):
        res = minimize(
            lambda z: float(((z[:3] - z[3:]) ** 2).sum()),
            p0,
            jac=lambda z: np.concatenate([2 * (z[:3] - z[3:]), -2 * (z[:3] - z[3:])]),
            method="SLSQP",
            constraints=[
                {"type": "ineq", "fun": lambda z: ga(z[:3]), "jac": lambda z: np.concatenate([ja(z[:3]), np.zeros(3)])},
                {"type": "ineq", "fun": lambda z: gb(z[3:]), "jac": lambda z: np.concatenate([np.zeros(3), jb(z[3:])])},
            ],
            options={"maxiter": 200, "ftol": tol},
        )
        if res.fun < best:
            best = res.fun
    return float(np.sqrt(max(best, 0.0)))


def _direction_minimum(sq_a, pose_a, sq_b, pose_b, n_starts: int) -> float:
    """min over unit directions of the Minkowski-difference support.

    Negative result means the bodies are separated by a hyperplane with that
    clearance; positive means overlap with that penetration depth.
    """
    pa0, pb0 = _start_pairs(sq_a, pose_a, sq_b, pose_b, max(8, n_starts // 2))
    dirs = [d / np.linalg.norm(d) for d in (pb0 - pa0) if np.linalg.norm(d) > 1e-12]
    dirs += list(_fibonacci_directions(32))
    ct = pose_b.t - pose_a.t
    if np.linalg.norm(ct) > 1e-12:
        dirs.append(ct / np.linalg.norm(ct))

    def obj(angles):
        th, ph = angles
        n = np.array([np.sin(th) * np.cos(ph), np.sin(th) * np.sin(ph), np.cos(th)])
        return _minkowski_support(sq_a, pose_a, sq_b, pose_b, n)

    # coarse scan first; refine only the most promising directions
    dirs = np.array(dirs)
    vals = np.array([_minkowski_support(sq_a, pose_a, sq_b, pose_b, d) for d in dirs])
    best = float(vals.min())
    if best < -1e-3:
        return best  # clearly separated; only the sign matters here
    for d in dirs[np.argsort(vals)[:6]]:
        th = float(np.arccos(np.clip(d[2], -1, 1)))
        ph = float(np.arctan2(d[1], d[0]))
        res = minimize(obj, np.array([th, ph]), method="Nelder-Mead",
                       options={"xatol": 1e-12, "fatol": 1e-14, "maxiter": 400})
        best = min(best, float(res.fun))
    return best


def _fibonacci_directions(n: int) -> np.ndarray:
    i = np.arange(n) + 0.5
    phi = np.arccos(1 - 2 * i / n)
    theta = np.pi * (1 + 5**0.5) * i
    return np.stack([np.sin(phi) * np.cos(theta), np.sin(phi) * np.sin(theta), np.cos(phi)], axis=-1)


def fd_gradient(f, x: np.ndarray, step: float = 1e-6) -> np.ndarray:
    """Central-difference gradient of a scalar function of an n-vector."""
    x = np.asarray(x, dtype=float)
    g = np.zeros_like(x)
    for k in range(len(x)):
        e = np.zeros_like(x)
        e[k] = step
        g[k] = (f(x + e) - f(x - e)) / (2 * step)
    return g


def implicit_surrogate_value(sq_a: Superquadric, pose_a: Pose, sq_b: Superquadric,
                             pose_b: Pose, n_starts: int = 32) -> float:
    """min f_a(p) subject to f_b(p) <= 1, by a multi-start quadratic penalty.

    This is the implicit-function collision surrogate whose value and gradient
    blow up for sharp shapes; it exists here as a diagnostic reference only.
    """
    # starts: surface points of body b closest to body a's center
    surf = sample_surface(sq_b, 16, 16).vertices
    starts = pose_b.apply(surf)
    order = np.argsort(np.linalg.norm(starts - pose_a.t, axis=1))
    starts = starts[order[:n_starts]]

    def f_a(p):
        return implicit_value(sq_a, pose_a.apply_inverse(p))

    def grad_a(p):
        return pose_a.R @ implicit_gradient(sq_a, pose_a.apply_inverse(p))

    def f_b(p):
        return implicit_value(sq_b, pose_b.apply_inverse(p))

    def grad_b(p):
        return pose_b.R @ implicit_gradient(sq_b, pose_b.apply_inverse(p))

    best = np.inf
    for p0 in starts:
        # nudge inside b so the constrained solve starts feasible
        p0 = p0 + 1e-6 * (pose_b.t - p0)
        res = minimize(
            f_a, p0, jac=grad_a, method="SLSQP",
            constraints=[{"type": "ineq",
                          "fun": lambda z: -f_b(z),
                          "jac": lambda z: -grad_b(z)}],
            options={"maxiter": 500, "ftol": 1e-14},
        )
        if f_b(res.x) <= 1e-6:
            best = min(best, float(f_a(res.x)))
    return best


def implicit_surrogate(sq_a: Superquadric, pose_a: Pose, sq_b: Superquadric,
                       pose_b: Pose, step: float = 1e-6,
                       n_starts: int = 32) -> tuple[float, float]:
    """Surrogate value and its x-offset derivative (central differences)."""
    val = implicit_surrogate_value(sq_a, pose_a, sq_b, pose_b, n_starts)
    shift = np.array([step, 0.0, 0.0])
    hi = implicit_surrogate_value(sq_a, pose_a, sq_b, Pose(pose_b.R, pose_b.t + shift), n_starts)
    lo = implicit_surrogate_value(sq_a, pose_a, sq_b, Pose(pose_b.R, pose_b.t - shift), n_starts)
    return val, (hi - lo) / (2 * step)


class InfeasibleQP(RuntimeError):
    pass


def qp_reference(H: np.ndarray, g: np.ndarray, C: np.ndarray | None,
                 b: np.ndarray | None, lb: np.ndarray | None = None,
                 ub: np.ndarray | None = None, tol: float = 1e-10,
                 max_iters: int = 500_000) -> np.ndarray:
    """First-order reference for min 1/2 u'Hu + g'u  s.t. Cu >= b, lb <= u <= ub.

    Accelerated projected gradient on the dual; independent of the filter's
    active-set solver. Runs to a KKT residual of `tol`.
    """
    n = len(g)
    rows = [] if C is None or len(C) == 0 else [np.asarray(C, dtype=float)]
    rhs = [] if b is None or len(np.atleast_1d(b)) == 0 else [np.atleast_1d(b).astype(float)]
    if lb is not None:
        rows.append(np.eye(n))
        rhs.append(np.asarray(lb, dtype=float))
    if ub is not None:
        rows.append(-np.eye(n))
        rhs.append(-np.asarray(ub, dtype=float))
    if not rows:
        return np.linalg.solve(H, -g)
    A = np.vstack(rows)
    c = np.concatenate(rhs)
    Hinv = np.linalg.inv(H)
    M = A @ Hinv @ A.T
    v = c + A @ Hinv @ g
    L = float(np.linalg.eigvalsh(M).max())
    if L <= 0:
        return np.linalg.solve(H, -g)
    lam = np.zeros(len(c))
    y = lam.copy()
    t_acc = 1.0
    for it in range(max_iters):
        grad = M @ y - v
        lam_new = np.maximum(0.0, y - grad / L)
        t_new = (1 + np.sqrt(1 + 4 * t_acc**2)) / 2
        y = lam_new + (t_acc - 1) / t_new * (lam_new - lam)
        lam, t_acc = lam_new, t_new
        if it % 50 == 0:
            u = Hinv @ (A.T @ lam - g)
            slack = A @ u - c
            kkt = max(
                float(np.maximum(0.0, -slack).max(initial=0.0)),
                float(np.abs(lam * slack).max(initial=0.0)),
            )
            if kkt < tol:
                return u
            if np.linalg.norm(lam) > 1e12:
                raise InfeasibleQP("dual iterate diverging: primal likely infeasible")
    u = Hinv @ (A.T @ lam - g)
    slack = A @ u - c
    if float(np.maximum(0.0, -slack).max(initial=0.0)) < 100 * tol:
        return u
    raise InfeasibleQP("reference QP did not reach the requested KKT residual")
