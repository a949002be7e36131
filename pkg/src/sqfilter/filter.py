"""CBF-QP safety filter: assemble distance/self-collision/manipulability
constraint rows and minimally modify the commanded joint velocity.

Per cycle the filter solves

    min_u ||J_ee (u - u_cmd)||^2 + ||u - u_cmd||^2 + w ||u - u_prev||^2
    s.t.  row_k^T u >= rhs_k   for every active constraint row
          u in [-v_lim, v_lim]

where distance rows encode  d_dot >= -alpha_delta * (d - margin)  with the
obstacle's own motion folded into the right-hand side, self-collision rows
sum the contributions of both bodies, and one optional row keeps
manipulability above its threshold.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .distance import ConvergenceError, DistanceQuery, signed_distance
from .geometry import ConvexPolytope, Pose, Superquadric, sample_surface
from .kinematics import (
    ObstacleState,
    RobotModel,
    _joint_frames,
    ee_jacobian,
    forward_kinematics,
    manipulability,
)
from .qp import QPInfeasible, solve_qp
from .smoothing import SmoothingConfig, pose_gradient, to_pose_chart
from .so3 import hat

__all__ = ["FilterConfig", "ConstraintRow", "FilterResult", "SafetyFilter"]


@dataclass(frozen=True)
class FilterConfig:
    alpha_delta: float = 1.5  # class-K gain on distance barriers
    alpha_mu: float = 0.1  # class-K gain on the manipulability barrier
    margin: float = 0.01  # safety margin epsilon_delta [m]
    mu_threshold: float = 0.02  # manipulability floor epsilon_mu
    smoothing_weight: float = 0.1  # w on ||u - u_prev||^2
    period: float = 0.01  # control period [s]
    activation_radius: float = 0.3  # rows with d beyond this are culled [m]
    motion_bound: float = 0.06  # max per-cycle distance shrink, for lazy re-eval [m]
    slack_penalty: float = 1e6
    slack_limit: float = 0.05
    mesh_n: int = 48  # surface-sampling resolution for runtime polytopes
    mu_gradient: str = "analytic"  # FD reference path available as "fd"
    smoothing: SmoothingConfig = field(default_factory=SmoothingConfig)
    self_pairs: Optional[tuple] = None  # None -> all non-adjacent-link pairs

    def __post_init__(self) -> None:
        if self.alpha_delta <= 0 or self.alpha_mu <= 0:
            raise ValueError("barrier gains must be positive")
        if self.margin < 0 or self.mu_threshold < 0:
            raise ValueError("margins must be nonnegative")
        if self.period <= 0:
            raise ValueError("control period must be positive")


@dataclass
class ConstraintRow:
    row: np.ndarray
    rhs: float
    kind: str  # "env" | "self" | "manipulability"
    pair: Tuple[int, int]
    h: float
    d: float

    def __post_init__(self) -> None:
        if not (np.all(np.isfinite(self.row)) and np.isfinite(self.rhs)):
            raise ValueError("constraint row must be finite")


@dataclass
class FilterResult:
    u_star: np.ndarray
    status: str  # "optimal" | "relaxed" | "halted"
    active: tuple
    solve_time: float
    eval_time: float
    rows: List[ConstraintRow]
    d_min: Dict[str, float]
    mu: float


def default_self_pairs(model: RobotModel) -> tuple:
    """All attachment pairs whose links differ by at least two."""
    pairs = []
    for i in range(len(model.attachments)):
        for j in range(i + 1, len(model.attachments)):
            if abs(model.attachments[i].link - model.attachments[j].link) >= 2:
                pairs.append((i, j))
    return tuple(pairs)


def _chart_adapter(p_w: np.ndarray) -> np.ndarray:
    """Map a link-origin twist to the SQ-center twist in the
    local-perturbation chart: [[I, -[p]x], [0, I]]."""
    X = np.eye(6)
    X[:3, 3:] = -hat(p_w)
    return X


class SafetyFilter:
    """Stateful per-cycle filter.  Owns mesh caches, GJK warm starts, and the
    previous command / active set for warm starting."""

    def __init__(self, model: RobotModel, cfg: FilterConfig = FilterConfig()):
        self.model = model
        self.cfg = cfg
        self.self_pairs = (
            cfg.self_pairs if cfg.self_pairs is not None else default_self_pairs(model)
        )
        self._mesh_cache: Dict[Superquadric, ConvexPolytope] = {}
        self._radius_cache: Dict[int, float] = {}
        self._robot_meshes = [self._mesh(a.sq) for a in model.attachments]
        self._warm: Dict[Tuple[str, int, int], tuple] = {}
        self._last_row: Dict[Tuple[str, int, int], ConstraintRow] = {}
        self._grad_dir: Dict[Tuple[str, int, int], np.ndarray] = {}
        self._dist_bound: Dict[Tuple[str, int, int], float] = {}
        self.u_prev = np.zeros(model.n)
        self._active_prev: tuple = ()

    def _mesh(self, sq: Superquadric) -> ConvexPolytope:
        poly = self._mesh_cache.get(sq)
        if poly is None:
            poly = sample_surface(sq, self.cfg.mesh_n, self.cfg.mesh_n)
            self._mesh_cache[sq] = poly
        return poly

    def _radius(self, poly: ConvexPolytope) -> float:
        r = self._radius_cache.get(id(poly))
        if r is None:
            r = float(np.linalg.norm(poly.vertices, axis=1).max())
            self._radius_cache[id(poly)] = r
        return r

    def reset(self) -> None:
        self._warm.clear()
        self._last_row.clear()
        self._grad_dir.clear()
        self._dist_bound.clear()
        self.u_prev = np.zeros(self.model.n)
        self._active_prev = ()

    # -- pair evaluation ----------------------------------------------------

    def _pair_distance(self, key, poly_a, poly_b, pose_a, pose_b):
        warm_a, warm_b = self._warm.get(key, (None, None))
        q = DistanceQuery(poly_a, poly_b, pose_a, pose_b, warm_a, warm_b)
        w = signed_distance(q)
        if w.support_a and w.support_b:
            self._warm[key] = (w.support_a[0][0], w.support_b[0][0])
        return q, w

    def _pair_jacobian(self, key, q, w):
        jac = pose_gradient(q, w, self.cfg.smoothing,
                            fallback_direction=self._grad_dir.get(key))
        self._grad_dir[key] = jac.direction
        return jac

    # -- assembly -----------------------------------------------------------

    def assemble(
        self,
        q: np.ndarray,
        obstacles: Sequence[ObstacleState],
    ) -> Tuple[List[ConstraintRow], Dict[str, float], float]:
        """Build distance rows for all pairs plus the manipulability row.
        Returns (rows, per-class minimum distance, manipulability)."""
        model, cfg = self.model, self.cfg
        link_poses, att_poses = forward_kinematics(model, q)
        axes, joint_points = _joint_frames(model, q)
        n = model.n

        link_jacs: Dict[int, np.ndarray] = {}

        def jac_of(link: int) -> np.ndarray:
            J = link_jacs.get(link)
            if J is None:
                J = np.zeros((6, n))
                p = link_poses[link].t
                for k in range(link + 1):
                    J[:3, k] = np.cross(axes[k], p - joint_points[k])
                    J[3:, k] = axes[k]
                link_jacs[link] = J
            return J

        def body_row(att_idx: int, jac_body: np.ndarray) -> np.ndarray:
            att = model.attachments[att_idx]
            p_w = link_poses[att.link].R @ att.offset.t
            return jac_body @ _chart_adapter(p_w) @ jac_of(att.link)

        rows: List[ConstraintRow] = []
        d_min = {"env": np.inf, "self": np.inf}

        def eval_pair(kind, key, poly_a, poly_b, pose_a, pose_b):
            """Returns (witness, jacobian) or the cached degraded row."""
            # bounding-sphere broad phase: the sphere gap lower-bounds d, so
            # pairs it clears can neither produce rows nor the minimum
            gap = (np.linalg.norm(pose_a.t - pose_b.t)
                   - self._radius(poly_a) - self._radius(poly_b))
            if gap > cfg.activation_radius:
                return None
            # temporal coherence: the pair distance shrinks by at most the
            # per-cycle motion bound, so a comfortably distant pair can skip
            # GJK until its decayed lower bound re-enters the activation band
            bound = self._dist_bound.get(key)
            if bound is not None:
                bound -= cfg.motion_bound
                if bound > cfg.activation_radius:
                    self._dist_bound[key] = bound
                    return None
            try:
                query, w = self._pair_distance(key, poly_a, poly_b, pose_a, pose_b)
            except ConvergenceError as exc:
                d_min[kind] = min(d_min[kind], exc.best_bound)
                cached = self._last_row.get(key)
                if cached is not None:
                    h = exc.best_bound - cfg.margin
                    rows.append(ConstraintRow(cached.row, -cfg.alpha_delta * h,
                                              kind, key[1:], h, exc.best_bound))
                return None
            d_min[kind] = min(d_min[kind], w.d)
            self._dist_bound[key] = w.d
            if w.d > cfg.activation_radius:
                return None
            jac = self._pair_jacobian(key, query, w)
            return w, jac

        for i, att in enumerate(model.attachments):
            poly_a = self._robot_meshes[i]
            pose_a = att_poses[i]
            for j, obs in enumerate(obstacles):
                key = ("env", i, j)
                out = eval_pair("env", key, poly_a, self._mesh(obs.sq),
                                pose_a, obs.pose)
                if out is None:
                    continue
                w, jac = out
                row = body_row(i, jac.J_a)
                h = w.d - cfg.margin
                d_obs = float(to_pose_chart(jac.J_b, obs.pose) @ obs.twist)
                cr = ConstraintRow(row, -cfg.alpha_delta * h - d_obs,
                                   "env", (i, j), h, w.d)
                rows.append(cr)
                self._last_row[key] = cr

        for (i, j) in self.self_pairs:
            key = ("self", i, j)
            out = eval_pair("self", key, self._robot_meshes[i],
                            self._robot_meshes[j], att_poses[i], att_poses[j])
            if out is None:
                continue
            w, jac = out
            row = body_row(i, jac.J_a) + body_row(j, jac.J_b)
            h = w.d - cfg.margin
            cr = ConstraintRow(row, -cfg.alpha_delta * h, "self", (i, j), h, w.d)
            rows.append(cr)
            self._last_row[key] = cr

        mu, j_mu, valid = manipulability(model, q, gradient=cfg.mu_gradient)
        if valid:
            rows.append(ConstraintRow(
                j_mu, -cfg.alpha_mu * (mu - cfg.mu_threshold),
                "manipulability", (-1, -1), mu - cfg.mu_threshold, mu))
        return rows, {k: float(v) for k, v in d_min.items()}, mu

    # -- solve --------------------------------------------------------------

    def solve(
        self,
        u_cmd: np.ndarray,
        rows: Sequence[ConstraintRow],
        J_task: np.ndarray,
    ) -> Tuple[np.ndarray, str, tuple, float]:
        model, cfg = self.model, self.cfg
        u_cmd = np.asarray(u_cmd, dtype=float).reshape(model.n)
        w = cfg.smoothing_weight
        JtJ = J_task.T @ J_task
        H = 2.0 * (JtJ + (1.0 + w) * np.eye(model.n))
        g = -2.0 * ((JtJ + np.eye(model.n)) @ u_cmd + w * self.u_prev)
        lb, ub = -model.velocity_limits, model.velocity_limits

        C = np.array([r.row for r in rows]) if rows else None
        b = np.array([r.rhs for r in rows]) if rows else None

        t0 = time.perf_counter()
        try:
            res = solve_qp(H, g, C=C, b=b, lb=lb, ub=ub, warm=self._active_prev)
            self._active_prev = res.active
            return res.x, "optimal", res.active, time.perf_counter() - t0
        except QPInfeasible:
            pass

        # ladder step 1: relax distance rows with penalized slacks
        m = len(rows)
        n = model.n
        H2 = np.zeros((n + m, n + m))
        H2[:n, :n] = H
        H2[n:, n:] = 2.0 * cfg.slack_penalty * np.eye(m)
        g2 = np.concatenate([g, np.zeros(m)])
        C2 = np.hstack([C, np.eye(m)])
        lb2 = np.concatenate([lb, np.zeros(m)])
        ub2 = np.concatenate([ub, np.full(m, np.inf)])
        try:
            res = solve_qp(H2, g2, C=C2, b=b, lb=lb2, ub=ub2)
        except QPInfeasible:  # slacks make any row set feasible; belt&braces
            self._active_prev = ()
            return np.zeros(n), "halted", (), time.perf_counter() - t0
        slack = res.x[n:]
        self._active_prev = ()
        if slack.max(initial=0.0) > cfg.slack_limit:
            return np.zeros(n), "halted", (), time.perf_counter() - t0
        return res.x[:n], "relaxed", res.active, time.perf_counter() - t0

    # -- full cycle ---------------------------------------------------------

    def step(
        self,
        q: np.ndarray,
        obstacles: Sequence[ObstacleState],
        u_cmd: np.ndarray,
    ) -> FilterResult:
        t0 = time.perf_counter()
        rows, d_min, mu = self.assemble(q, obstacles)
        eval_time = time.perf_counter() - t0
        J_task = ee_jacobian(self.model, q)
        u_star, status, active, solve_time = self.solve(u_cmd, rows, J_task)
        self.u_prev = u_star.copy()
        return FilterResult(u_star, status, active, solve_time, eval_time,
                            list(rows), d_min, mu)
