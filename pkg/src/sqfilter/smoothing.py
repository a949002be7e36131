"""Signed-distance gradients w.r.t. body poses via implicit differentiation
with softmax-smoothed support-function Hessian surrogates.

Gradient rows are produced in a per-body chart (translation rate, world
angular velocity); `to_pose_chart` converts a row to the (translation,
axis-angle) chart of a concrete pose when a chart-rate pairing is needed.
The local-perturbation form keeps long-running filters clear of the
axis-angle chart singularity at angle pi.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .distance import DistanceQuery, WitnessPair
from .geometry import ConvexPolytope, Pose
from .so3 import hat, left_jacobian, log_so3


@dataclass(frozen=True)
class SmoothingConfig:
    temperature: float = 1e-8
    neighborhood_depth: int = 8
    distance_floor: float = 1e-6

    def __post_init__(self):
        if not self.temperature > 0:
            raise ValueError("temperature must be positive")
        if self.neighborhood_depth < 1:
            raise ValueError("neighborhood_depth must be >= 1")


@dataclass
class DistanceJacobian:
    """1x6 sensitivity rows of the signed distance.

    J_a / J_b: w.r.t. each body's own pose, local-perturbation chart
    (d translation, world angular velocity). J_x: w.r.t. the relative pose of
    body B expressed in body A's frame (paper-style row).
    """

    J_a: np.ndarray
    J_b: np.ndarray
    J_x: np.ndarray
    d: float
    direction: np.ndarray  # unit separation vector actually used


def to_pose_chart(row6: np.ndarray, pose: Pose) -> np.ndarray:
    """Convert a local-perturbation row to the (translation, axis-angle) chart."""
    out = np.array(row6, dtype=float)
    out[3:] = row6[3:] @ left_jacobian(log_so3(pose.R))
    return out


def hessian_surrogate(shape: ConvexPolytope, witness_vertex, direction: np.ndarray,
                      cfg: SmoothingConfig) -> np.ndarray:
    """Smoothed support-function Hessian from the witness neighborhood.

    Collects vertex directions V within `neighborhood_depth` graph steps of the
    witness, weights them by softmax(V^T x / eps), and returns the softmax
    Jacobian projected through V in factored form. Symmetric PSD by
    construction.
    """
    x = np.asarray(direction, dtype=float)
    if not np.linalg.norm(x) > 0:
        raise ValueError("zero direction")
    ids = shape.neighborhood(witness_vertex, cfg.neighborhood_depth)
    if len(ids) < 2:
        raise ValueError("witness neighborhood must contain at least 2 vertices")
    V = shape.vertices[ids].T  # 3 x N
    z = V.T @ x
    eps = cfg.temperature
    z = z / eps
    z -= z.max()
    a = np.exp(z)
    a /= a.sum()
    Va = V @ a
    H = ((V * a) @ V.T - np.outer(Va, Va)) / eps
    return 0.5 * (H + H.T)


def pose_gradient(q: DistanceQuery, w: WitnessPair, cfg: SmoothingConfig,
                  fallback_direction: np.ndarray | None = None) -> DistanceJacobian:
    """Implicit-function-theorem gradient of the signed distance.

    The witness separation solves the support stationarity condition; its
    sensitivity to each body pose follows from the inverse of
    I + H_a + H_b (symmetric positive definite) with H_* the smoothed
    support Hessians mapped to the world frame.
    """
    dp = np.asarray(w.separation, dtype=float)
    norm = float(np.linalg.norm(dp))
    sign = -1.0 if w.d < 0 else 1.0
    if norm > cfg.distance_floor:
        n_hat = dp / norm
    else:
        # contact: the unit vector is undefined; fall back to the caller's
        # cached witness direction, else the centroid difference
        if fallback_direction is not None and np.linalg.norm(fallback_direction) > 0:
            n_hat = np.asarray(fallback_direction, float)
        else:
            n_hat = q.pose_a.apply(q.shape_a.centroid) - q.pose_b.apply(q.shape_b.centroid)
        n_hat = n_hat / np.linalg.norm(n_hat)
        dp = n_hat * max(norm, cfg.distance_floor)
        sign = 1.0

    Ra, Rb = q.pose_a.R, q.pose_b.R
    seeds_a = [i for i, _ in w.support_a]
    seeds_b = [i for i, _ in w.support_b]
    Ha = hessian_surrogate(q.shape_a, seeds_a, Ra.T @ (-dp), cfg)
    Hb = hessian_surrogate(q.shape_b, seeds_b, Rb.T @ dp, cfg)
    Ha_w = Ra @ Ha @ Ra.T
    Hb_w = Rb @ Hb @ Rb.T

    D = np.eye(3) + Ha_w + Hb_w
    row = sign * np.linalg.solve(D, n_hat)  # sign * n_hat^T D^{-1} (D symmetric)

    sa_w = w.p_a - q.pose_a.t  # witness point of A about A's origin, world frame
    sb_w = w.p_b - q.pose_b.t
    dp_x = hat(dp)
    dF_rot_a = hat(sa_w) + Ha_w @ dp_x
    dF_rot_b = -hat(sb_w) + Hb_w @ dp_x

    J_a = np.concatenate([row, -row @ dF_rot_a])
    J_b = np.concatenate([-row, -row @ dF_rot_b])
    # relative chart: body B's pose expressed in body A's frame
    J_x = np.concatenate([J_b[:3] @ Ra, J_b[3:] @ Ra])
    return DistanceJacobian(J_a, J_b, J_x, w.d, n_hat)
