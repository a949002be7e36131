import numpy as np
import pytest

from sqfilter.distance import DistanceQuery, signed_distance
from sqfilter.filter import ConstraintRow, FilterConfig, SafetyFilter, default_self_pairs
from sqfilter.geometry import Pose, Superquadric
from sqfilter.kinematics import (
    Attachment,
    Joint,
    ObstacleState,
    RobotModel,
    ee_jacobian,
    forward_kinematics,
    seven_dof_model,
)

ARM = seven_dof_model()
Q_HOME = np.array([0.0, -0.6, 0.0, -2.0, 0.0, 1.6, 0.8])
BALL = Superquadric(0.08, 0.08, 0.08, 1.0, 1.0)


def _two_link_test_model():
    """Planar 2R with one SQ per link; self pair explicitly enabled."""
    z = np.array([0.0, 0.0, 1.0])
    joints = (
        Joint(z, Pose.identity()),
        Joint(z, Pose(np.eye(3), np.array([0.5, 0.0, 0.0]))),
    )
    atts = (
        Attachment(0, Pose(np.eye(3), np.array([0.25, 0.0, 0.0])),
                   Superquadric(0.2, 0.05, 0.05, 0.5, 1.0)),
        Attachment(1, Pose(np.eye(3), np.array([0.25, 0.0, 0.0])),
                   Superquadric(0.2, 0.05, 0.05, 0.5, 1.0)),
    )
    return RobotModel(joints=joints, attachments=atts,
                      velocity_limits=np.array([2.0, 2.0]),
                      name="test_2r",
                      ee_offset=Pose(np.eye(3), np.array([0.5, 0.0, 0.0])),
                      task_rows=(0, 1))


def _pipeline_min_distance(filt, q, obstacles):
    """Minimum signed distance over all pairs via the same meshes."""
    _, att_poses = forward_kinematics(filt.model, q)
    best = np.inf
    for i in range(len(filt.model.attachments)):
        for obs in obstacles:
            w = signed_distance(DistanceQuery(
                filt._robot_meshes[i], filt._mesh(obs.sq),
                att_poses[i], obs.pose))
            best = min(best, w.d)
    return best


class TestAssemble:
    def test_static_rhs_arithmetic(self):
        filt = SafetyFilter(ARM)
        obs = ObstacleState(BALL, Pose(np.eye(3), np.array([0.4, 0.0, 0.5])))
        rows, _, _ = filt.assemble(Q_HOME, [obs])
        dist_rows = [r for r in rows if r.kind == "env"]
        assert dist_rows
        for r in dist_rows:
            assert r.h == pytest.approx(r.d - 0.01, abs=1e-12)
            assert r.rhs == pytest.approx(-1.5 * r.h, abs=1e-12)

    def test_receding_obstacle_relaxes_rhs(self):
        filt = SafetyFilter(ARM)
        pose = Pose(np.eye(3), np.array([0.4, 0.0, 0.5]))
        static = ObstacleState(BALL, pose)
        rows_s, _, _ = filt.assemble(Q_HOME, [static])
        env_s = {r.pair: r for r in rows_s if r.kind == "env"}
        # pick the closest pair and recede along its witness direction
        pair = min(env_s.values(), key=lambda r: r.d).pair
        key = ("env", pair[0], pair[1])
        # cached direction is p_a - p_b; the obstacle recedes along -that
        away = -filt._grad_dir[key] / np.linalg.norm(filt._grad_dir[key])
        moving = ObstacleState(BALL, pose, np.concatenate([away, np.zeros(3)]))
        filt2 = SafetyFilter(ARM)
        rows_m, _, _ = filt2.assemble(Q_HOME, [moving])
        env_m = {r.pair: r for r in rows_m if r.kind == "env"}
        assert env_m[pair].rhs < env_s[pair].rhs - 0.5

    def test_culling_by_activation_radius(self):
        filt = SafetyFilter(ARM)
        far = ObstacleState(BALL, Pose(np.eye(3), np.array([5.0, 0.0, 0.5])))
        rows, d_min, _ = filt.assemble(Q_HOME, [far])
        assert not [r for r in rows if r.kind == "env"]
        assert d_min["env"] > 3.0  # distance still computed for diagnostics

    def test_env_row_matches_fd_along_u(self):
        rng = np.random.default_rng(2)
        filt = SafetyFilter(ARM)
        obs = ObstacleState(BALL, Pose(np.eye(3), np.array([0.35, 0.05, 0.45])))
        rows, _, _ = filt.assemble(Q_HOME, [obs])
        env = [r for r in rows if r.kind == "env"]
        assert env
        r = min(env, key=lambda r: r.d)
        i = r.pair[0]
        u = rng.normal(size=ARM.n)
        dt = 1e-6

        def dist(q):
            _, atts = forward_kinematics(ARM, q)
            return signed_distance(DistanceQuery(
                filt._robot_meshes[i], filt._mesh(obs.sq),
                atts[i], obs.pose)).d

        fd = (dist(Q_HOME + u * dt) - dist(Q_HOME - u * dt)) / (2 * dt)
        assert float(r.row @ u) == pytest.approx(fd, rel=0.01, abs=1e-6)

    def test_self_row_matches_fd_along_u(self):
        model = _two_link_test_model()
        cfg = FilterConfig(self_pairs=((0, 1),))
        filt = SafetyFilter(model, cfg)
        q = np.array([0.3, 2.2])  # folded; links close but separated
        rows, _, _ = filt.assemble(q, [])
        selfs = [r for r in rows if r.kind == "self"]
        assert len(selfs) == 1
        r = selfs[0]
        assert 0 < r.d < 0.3
        u = np.array([0.4, -1.0])
        dt = 1e-6

        def dist(qq):
            _, atts = forward_kinematics(model, qq)
            return signed_distance(DistanceQuery(
                filt._robot_meshes[0], filt._robot_meshes[1],
                atts[0], atts[1])).d

        fd = (dist(q + u * dt) - dist(q - u * dt)) / (2 * dt)
        assert float(r.row @ u) == pytest.approx(fd, rel=0.01, abs=1e-6)

    def test_manipulability_row_present(self):
        filt = SafetyFilter(ARM)
        rows, _, mu = filt.assemble(Q_HOME, [])
        mrows = [r for r in rows if r.kind == "manipulability"]
        assert len(mrows) == 1 and mu > 0.02
        assert mrows[0].rhs == pytest.approx(-0.1 * (mu - 0.02), abs=1e-12)

    def test_default_self_pairs_exclude_adjacent(self):
        for i, j in default_self_pairs(ARM):
            assert abs(ARM.attachments[i].link - ARM.attachments[j].link) >= 2


class TestSolve:
    def test_no_rows_returns_command(self):
        filt = SafetyFilter(ARM)
        u_cmd = np.array([0.3, -0.2, 0.1, 0.0, 0.4, -0.1, 0.2])
        filt.u_prev = u_cmd.copy()
        u, status, _, _ = filt.solve(u_cmd, [], ee_jacobian(ARM, Q_HOME))
        assert status == "optimal"
        np.testing.assert_allclose(u, u_cmd, atol=1e-9)

    def test_slack_row_returns_command(self):
        filt = SafetyFilter(ARM)
        u_cmd = 0.1 * np.ones(ARM.n)
        filt.u_prev = u_cmd.copy()
        row = ConstraintRow(np.ones(ARM.n), -5.0, "env", (0, 0), 1.0, 1.0)
        u, status, _, _ = filt.solve(u_cmd, [row], ee_jacobian(ARM, Q_HOME))
        assert status == "optimal"
        np.testing.assert_allclose(u, u_cmd, atol=1e-9)

    def test_relaxed_when_mildly_infeasible(self):
        filt = SafetyFilter(ARM)
        row = ConstraintRow(np.eye(ARM.n)[0], 2.65, "env", (0, 0), -0.1, -0.09)
        u, status, _, _ = filt.solve(np.zeros(ARM.n), [row],
                                     np.zeros((6, ARM.n)))
        assert status == "relaxed"
        assert u[0] == pytest.approx(2.62, abs=1e-6)  # pinned at the limit

    def test_halted_when_badly_infeasible(self):
        filt = SafetyFilter(ARM)
        row = ConstraintRow(np.eye(ARM.n)[0], 5.0, "env", (0, 0), -1.0, -0.99)
        u, status, _, _ = filt.solve(np.zeros(ARM.n), [row],
                                     np.zeros((6, ARM.n)))
        assert status == "halted"
        np.testing.assert_allclose(u, 0.0)


class TestStep:
    def test_minimal_intervention_far_world(self):
        filt = SafetyFilter(ARM)
        # gentle command: every self row stays slack at u_cmd
        u_cmd = 0.1 * np.array([0.3, -0.2, 0.1, 0.0, 0.4, -0.1, 0.2])
        filt.u_prev = u_cmd.copy()
        far = ObstacleState(BALL, Pose(np.eye(3), np.array([4.0, 0.0, 0.5])))
        res = filt.step(Q_HOME, [far], u_cmd)
        assert res.status == "optimal"
        np.testing.assert_allclose(res.u_star, u_cmd, atol=1e-9)

    def test_closed_loop_wall_approach_stays_safe(self):
        cfg = FilterConfig(mesh_n=32)
        filt = SafetyFilter(ARM, cfg)
        obs = ObstacleState(BALL, Pose(np.eye(3), np.array([0.6, 0.0, 0.45])))
        q = Q_HOME.copy()
        # drive the EE straight at the ball via a crude jacobian transpose law
        d_seen = []
        for _ in range(120):
            J = ee_jacobian(ARM, q)
            _, atts = forward_kinematics(ARM, q)
            ee = (forward_kinematics(ARM, q)[0][-1] @ ARM.ee_offset).t
            v = obs.pose.t - ee
            v = 0.8 * v / max(np.linalg.norm(v), 1e-9)
            u_cmd = np.linalg.lstsq(J[:3], v, rcond=None)[0]
            u_cmd = np.clip(u_cmd, -ARM.velocity_limits, ARM.velocity_limits)
            res = filt.step(q, [obs], u_cmd)
            assert res.status in ("optimal", "relaxed")
            q = q + res.u_star * cfg.period
            d_seen.append(res.d_min["env"])
        assert min(d_seen) >= 0.0
        assert min(d_seen) < 0.1  # it actually got close

    def test_evades_approaching_obstacle(self):
        cfg = FilterConfig(mesh_n=32)
        filt = SafetyFilter(ARM, cfg)
        q = Q_HOME.copy()
        _, atts = forward_kinematics(ARM, q)
        target = atts[10].t  # aim the ball at a mid-chain body
        start = target + np.array([0.25, 0.0, 0.0])
        vel = np.array([-0.8, 0.0, 0.0])
        moved = False
        pos = start.copy()
        for _ in range(60):
            obs = ObstacleState(BALL, Pose(np.eye(3), pos.copy()),
                                np.concatenate([vel, np.zeros(3)]))
            res = filt.step(q, [obs], np.zeros(ARM.n))
            assert res.d_min["env"] >= 0.0
            if np.linalg.norm(res.u_star) > 1e-3:
                moved = True
            q = q + res.u_star * cfg.period
            pos = pos + vel * cfg.period
        assert moved
