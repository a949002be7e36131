"""Serial-chain kinematics: forward kinematics, geometric Jacobians,
twist-to-superquadric-rate maps, and manipulability with its gradient.

Conventions
-----------
* Each joint is revolute about a fixed ``axis`` expressed in its own joint
  frame, reached from the parent link frame through a fixed ``origin``
  transform.  Link frame ``k`` coincides with joint frame ``k`` after the
  joint rotation has been applied.
* Superquadric bodies are rigidly attached to links through a fixed local
  offset pose.
* SQ pose states use the 6-vector chart (translation, world axis-angle) from
  :meth:`sqfilter.geometry.Pose.as_vector`; rates in that chart are what
  :func:`twist_to_sq_rate` produces.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .geometry import Pose, Superquadric
from .so3 import hat, left_jacobian_inv, log_so3, rotation_about

__all__ = [
    "Joint",
    "Attachment",
    "RobotModel",
    "RobotState",
    "ObstacleState",
    "forward_kinematics",
    "geometric_jacobian",
    "ee_jacobian",
    "twist_to_sq_rate",
    "sq_rate_matrix",
    "manipulability",
    "robot_to_json",
    "robot_from_json",
    "planar_2r_model",
    "seven_dof_model",
]

_MAX_ATTACH_ANGLE = np.pi - 1e-2

_ZERO3 = np.zeros(3)
_ZERO3.setflags(write=False)


def _joint_pose(axis: np.ndarray, q: float) -> Pose:
    # Rodrigues output is orthonormal by construction
    return Pose._trusted(rotation_about(axis, q), _ZERO3)


@dataclass(frozen=True)
class Joint:
    """Revolute joint: fixed origin transform then rotation about ``axis``."""

    axis: np.ndarray
    origin: Pose

    def __post_init__(self) -> None:
        axis = np.asarray(self.axis, dtype=float).reshape(3)
        norm = np.linalg.norm(axis)
        if not norm > 0:
            raise ValueError("joint axis must be nonzero")
        object.__setattr__(self, "axis", axis / norm)


@dataclass(frozen=True)
class Attachment:
    """A superquadric rigidly attached to link ``link`` via ``offset``."""

    link: int
    offset: Pose
    sq: Superquadric

    def __post_init__(self) -> None:
        if self.link < 0:
            raise ValueError("attachment link index must be >= 0")
        angle = np.linalg.norm(log_so3(self.offset.R))
        if angle >= _MAX_ATTACH_ANGLE:
            raise ValueError(
                "attachment rotation angle too close to pi for the "
                "left-Jacobian inverse"
            )


@dataclass(frozen=True)
class RobotModel:
    """Immutable serial chain with attached superquadrics.

    ``task_rows`` selects which twist components form the task Jacobian used
    for manipulability (all six for a spatial arm, the planar rows for the
    2R test arm).
    """

    joints: tuple
    attachments: tuple
    velocity_limits: np.ndarray
    name: str = "robot"
    ee_offset: Pose = field(default_factory=Pose.identity)
    task_rows: Optional[tuple] = None

    def __post_init__(self) -> None:
        limits = np.asarray(self.velocity_limits, dtype=float).reshape(-1)
        if limits.shape[0] != len(self.joints):
            raise ValueError("one velocity limit per joint required")
        if not np.all(limits > 0):
            raise ValueError("velocity limits must be positive")
        for att in self.attachments:
            if att.link >= len(self.joints):
                raise ValueError(f"attachment references missing link {att.link}")
        object.__setattr__(self, "joints", tuple(self.joints))
        object.__setattr__(self, "attachments", tuple(self.attachments))
        object.__setattr__(self, "velocity_limits", limits)

    @property
    def n(self) -> int:
        return len(self.joints)

    def task_row_indices(self) -> np.ndarray:
        if self.task_rows is None:
            return np.arange(6)
        return np.asarray(self.task_rows, dtype=int)


class RobotState:
    """Joint configuration with cached world link poses (recomputed on set)."""

    __slots__ = ("_model", "_q", "_link_poses", "_attachment_poses")

    def __init__(self, model: RobotModel, q: np.ndarray):
        self._model = model
        self.q = q

    @property
    def model(self) -> RobotModel:
        return self._model

    @property
    def q(self) -> np.ndarray:
        return self._q

    @q.setter
    def q(self, q: np.ndarray) -> None:
        q = np.asarray(q, dtype=float).reshape(-1)
        if q.shape[0] != self._model.n:
            raise ValueError("configuration dimension mismatch")
        self._q = q.copy()
        self._link_poses, self._attachment_poses = forward_kinematics(
            self._model, self._q
        )

    @property
    def link_poses(self) -> list:
        return self._link_poses

    @property
    def attachment_poses(self) -> list:
        return self._attachment_poses

    @property
    def ee_pose(self) -> Pose:
        return self._link_poses[-1] @ self._model.ee_offset


@dataclass
class ObstacleState:
    """World-frame obstacle: SQ shape, pose, and 6-vector chart rate."""

    sq: Superquadric
    pose: Pose
    twist: np.ndarray = field(default_factory=lambda: np.zeros(6))

    def __post_init__(self) -> None:
        self.twist = np.asarray(self.twist, dtype=float).reshape(6)
        if not np.all(np.isfinite(self.twist)):
            raise ValueError("obstacle twist must be finite")


def forward_kinematics(model: RobotModel, q: np.ndarray):
    """World poses of every link frame and every attached SQ."""
    q = np.asarray(q, dtype=float).reshape(-1)
    if q.shape[0] != model.n:
        raise ValueError("configuration dimension mismatch")
    link_poses = []
    T = Pose.identity()
    for joint, qi in zip(model.joints, q):
        T = T @ joint.origin @ _joint_pose(joint.axis, qi)
        link_poses.append(T)
    attachment_poses = [link_poses[a.link] @ a.offset for a in model.attachments]
    return link_poses, attachment_poses


def _joint_frames(model: RobotModel, q: np.ndarray):
    """World axis direction and origin point of every joint."""
    axes = np.empty((model.n, 3))
    points = np.empty((model.n, 3))
    T = Pose.identity()
    for k, (joint, qk) in enumerate(zip(model.joints, q)):
        base = T @ joint.origin
        axes[k] = base.R @ joint.axis
        points[k] = base.t
        T = base @ _joint_pose(joint.axis, qk)
    return axes, points


def geometric_jacobian(
    model: RobotModel,
    q: np.ndarray,
    link: int,
    point: Optional[np.ndarray] = None,
) -> np.ndarray:
    """6 x n geometric Jacobian [J_v; J_w] of link ``link``, taken at the
    world ``point`` carried by the link (default: the link origin)."""
    if not 0 <= link < model.n:
        raise ValueError("invalid link index")
    q = np.asarray(q, dtype=float).reshape(-1)
    axes, points = _joint_frames(model, q)
    if point is None:
        link_poses, _ = forward_kinematics(model, q)
        point = link_poses[link].t
    p = np.asarray(point, dtype=float).reshape(3)
    J = np.zeros((6, model.n))
    for k in range(link + 1):
        J[:3, k] = np.cross(axes[k], p - points[k])
        J[3:, k] = axes[k]
    return J


def ee_jacobian(model: RobotModel, q: np.ndarray) -> np.ndarray:
    """Geometric Jacobian at the end-effector point."""
    link_poses, _ = forward_kinematics(model, q)
    ee = link_poses[-1] @ model.ee_offset
    return geometric_jacobian(model, q, model.n - 1, point=ee.t)


def sq_rate_matrix(p_w: np.ndarray, theta_w: np.ndarray) -> np.ndarray:
    """Map a body-carried world twist (v, w) at the link origin to the rate of
    the attached SQ's pose 6-vector (center translation, world axis-angle).

    ``p_w`` is the world-frame offset from the link origin to the SQ center;
    ``theta_w`` is the SQ's current world axis-angle.
    """
    X = np.zeros((6, 6))
    X[:3, :3] = np.eye(3)
    X[:3, 3:] = -hat(np.asarray(p_w, dtype=float))
    X[3:, 3:] = left_jacobian_inv(np.asarray(theta_w, dtype=float))
    return X


def twist_to_sq_rate(
    link_pose: Pose, attachment: Attachment, twist: np.ndarray
) -> np.ndarray:
    """Rate of the attached SQ's pose 6-vector given the link twist.

    ``twist`` is the link-origin spatial twist (linear, angular) in world
    frame, e.g. ``geometric_jacobian(...) @ u``.
    """
    twist = np.asarray(twist, dtype=float).reshape(6)
    p_w = link_pose.R @ attachment.offset.t
    theta_w = log_so3((link_pose @ attachment.offset).R)
    return sq_rate_matrix(p_w, theta_w) @ twist


def manipulability(
    model: RobotModel,
    q: np.ndarray,
    gradient: str = "fd",
    fd_step: float = 1e-6,
):
    """Manipulability mu = sqrt(det(J J^T)) at the end effector and its
    gradient w.r.t. q.

    ``gradient`` selects "fd" (central differences, the reference path),
    "analytic" (kinematic-Hessian formula), or "none".  Returns
    ``(mu, J_mu, valid)``; ``valid`` is False near singularities where the
    gradient is unreliable.
    """
    q = np.asarray(q, dtype=float).reshape(-1)
    rows = model.task_row_indices()

    def mu_of(qq: np.ndarray) -> float:
        J = ee_jacobian(model, qq)[rows]
        return float(np.sqrt(max(np.linalg.det(J @ J.T), 0.0)))

    mu = mu_of(q)
    if gradient == "none":
        return mu, np.zeros(model.n), False
    if mu < 1e-12:
        return mu, np.zeros(model.n), False
    if gradient == "fd":
        grad = np.empty(model.n)
        for k in range(model.n):
            e = np.zeros(model.n)
            e[k] = fd_step
            grad[k] = (mu_of(q + e) - mu_of(q - e)) / (2 * fd_step)
        return mu, grad, True
    if gradient != "analytic":
        raise ValueError(f"unknown gradient method {gradient!r}")

    axes, points = _joint_frames(model, q)
    link_poses, _ = forward_kinematics(model, q)
    p_e = (link_poses[-1] @ model.ee_offset).t
    J = ee_jacobian(model, q)
    JJ = J[rows] @ J[rows].T
    JJ_inv = np.linalg.inv(JJ)
    grad = np.empty(model.n)
    for j in range(model.n):
        dJ = np.zeros((6, model.n))
        for k in range(model.n):
            if j <= k:
                # joint j moves both axis k and the lever arm
                dJ[:3, k] = np.cross(axes[j], np.cross(axes[k], p_e - points[k]))
                dJ[3:, k] = np.cross(axes[j], axes[k])
            else:
                # joint j only moves the link-origin end of the lever arm
                dJ[:3, k] = np.cross(axes[k], np.cross(axes[j], p_e - points[j]))
        M = dJ[rows] @ J[rows].T
        grad[j] = 0.5 * mu * np.trace(JJ_inv @ (M + M.T))
    return mu, grad, True


# ---------------------------------------------------------------------------
# Serialization
# ---------------------------------------------------------------------------


def _pose_to_dict(pose: Pose) -> dict:
    return {"t": list(map(float, pose.t)), "aa": list(map(float, log_so3(pose.R)))}


def _pose_from_dict(d: dict) -> Pose:
    return Pose.from_axis_angle(
        np.asarray(d["t"], dtype=float), np.asarray(d["aa"], dtype=float)
    )


def robot_to_json(model: RobotModel) -> str:
    doc = {
        "name": model.name,
        "joints": [
            {"axis": list(map(float, j.axis)), "origin": _pose_to_dict(j.origin)}
            for j in model.joints
        ],
        "attachments": [
            {
                "link": a.link,
                "offset": _pose_to_dict(a.offset),
                "a": [a.sq.a1, a.sq.a2, a.sq.a3],
                "e": [a.sq.e1, a.sq.e2],
            }
            for a in model.attachments
        ],
        "velocity_limits": list(map(float, model.velocity_limits)),
        "ee_offset": _pose_to_dict(model.ee_offset),
    }
    if model.task_rows is not None:
        doc["task_rows"] = list(model.task_rows)
    return json.dumps(doc, indent=2)


def robot_from_json(text: str) -> RobotModel:
    doc = json.loads(text)
    joints = tuple(
        Joint(np.asarray(j["axis"], dtype=float), _pose_from_dict(j["origin"]))
        for j in doc["joints"]
    )
    attachments = tuple(
        Attachment(
            int(a["link"]),
            _pose_from_dict(a["offset"]),
            Superquadric(*a["a"], *a["e"]),
        )
        for a in doc["attachments"]
    )
    task_rows = tuple(doc["task_rows"]) if "task_rows" in doc else None
    return RobotModel(
        joints=joints,
        attachments=attachments,
        velocity_limits=np.asarray(doc["velocity_limits"], dtype=float),
        name=doc.get("name", "robot"),
        ee_offset=_pose_from_dict(doc.get("ee_offset", {"t": [0, 0, 0], "aa": [0, 0, 0]})),
        task_rows=task_rows,
    )


# ---------------------------------------------------------------------------
# Factories
# ---------------------------------------------------------------------------


def planar_2r_model(l1: float = 1.0, l2: float = 1.0) -> RobotModel:
    """Two-link planar arm in the xy-plane, revolute about +z, for analytic
    tests.  End effector at the tip of link 2."""
    z = np.array([0.0, 0.0, 1.0])
    joints = (
        Joint(z, Pose.identity()),
        Joint(z, Pose(np.eye(3), np.array([l1, 0.0, 0.0]))),
    )
    return RobotModel(
        joints=joints,
        attachments=(),
        velocity_limits=np.array([2.0, 2.0]),
        name="planar_2r",
        ee_offset=Pose(np.eye(3), np.array([l2, 0.0, 0.0])),
        task_rows=(0, 1),
    )


def _dh_origin(alpha: float, a: float, d: float) -> Pose:
    """Modified-DH inter-joint transform RotX(alpha) TransX(a) TransZ(d)."""
    Rx = rotation_about(np.array([1.0, 0.0, 0.0]), alpha)
    return Pose(Rx, Rx @ np.array([a, 0.0, 0.0]) + Rx @ np.array([0.0, 0.0, d]))


# Modified DH rows (alpha_{i-1}, a_{i-1}, d_i) of a widely published 7-DoF
# research arm; the flange sits 0.107 m beyond the last joint.
_SEVEN_DOF_DH = (
    (0.0, 0.0, 0.333),
    (-np.pi / 2, 0.0, 0.0),
    (np.pi / 2, 0.0, 0.316),
    (np.pi / 2, 0.0825, 0.0),
    (-np.pi / 2, -0.0825, 0.384),
    (np.pi / 2, 0.0, 0.0),
    (np.pi / 2, 0.088, 0.0),
)
_SEVEN_DOF_VLIM = np.array([2.62, 2.62, 2.62, 2.62, 5.26, 4.18, 5.26])


def _default_attachments() -> tuple:
    """Fifteen rounded SQ bodies covering the links.  Plausible stand-in
    geometry, not measured from any specific robot."""

    def capsule(link, z0, z1, r, lateral=0.0):
        mid = np.array([lateral, 0.0, 0.5 * (z0 + z1)])
        half = max(0.5 * abs(z1 - z0), r)
        return Attachment(
            link,
            Pose(np.eye(3), mid),
            Superquadric(r, r, half, 0.4, 1.0),
        )

    specs = [
        capsule(0, -0.28, -0.08, 0.075),
        capsule(0, -0.06, 0.04, 0.07),
        capsule(1, -0.05, 0.05, 0.072),
        capsule(1, 0.02, 0.16, 0.065),
        capsule(2, -0.16, -0.06, 0.058),
        capsule(2, -0.04, 0.04, 0.065),
        capsule(3, -0.05, 0.05, 0.062, lateral=-0.04),
        capsule(3, 0.02, 0.12, 0.058),
        capsule(4, -0.26, -0.14, 0.052),
        capsule(4, -0.14, -0.06, 0.056),
        capsule(5, -0.035, 0.035, 0.06),
        capsule(5, 0.01, 0.08, 0.05, lateral=0.045),
        capsule(6, -0.03, 0.02, 0.05),
        capsule(6, 0.04, 0.09, 0.042),
        Attachment(
            6,
            Pose(np.eye(3), np.array([0.0, 0.0, 0.15])),
            Superquadric(0.032, 0.032, 0.05, 0.3, 0.3),
        ),
    ]
    return tuple(specs)


def seven_dof_model(with_attachments: bool = True) -> RobotModel:
    """Default spatial test arm: 7-DoF serial chain from published modified-DH
    parameters with a 15-SQ collision-body stand-in."""
    joints = tuple(
        Joint(np.array([0.0, 0.0, 1.0]), _dh_origin(alpha, a, d))
        for alpha, a, d in _SEVEN_DOF_DH
    )
    return RobotModel(
        joints=joints,
        attachments=_default_attachments() if with_attachments else (),
        velocity_limits=_SEVEN_DOF_VLIM.copy(),
        name="seven_dof",
        ee_offset=Pose(np.eye(3), np.array([0.0, 0.0, 0.107])),
    )
