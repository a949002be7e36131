import numpy as np
import pytest

from sqfilter.geometry import Pose, Superquadric, sample_surface
from sqfilter.oracle import (
    InfeasibleQP,
    fd_gradient,
    implicit_surrogate,
    implicit_surrogate_value,
    qp_reference,
    sdf_reference,
    support_value,
)
from sqfilter.so3 import rotation_about

SPHERE = Superquadric(1, 1, 1, 1, 1)

FIG2_A = Superquadric(0.5, 1.5, 1.0, 0.2, 0.2)
FIG2_B = Superquadric(1.0, 0.5, 1.0, 0.2, 0.2)


def fig2_poses(x: float) -> tuple[Pose, Pose]:
    pa = Pose(rotation_about([0, 0, 1], np.pi / 3), np.zeros(3))
    pb = Pose(rotation_about([0, 0, 1], -np.pi / 4), np.array([x, 3.0, 0.0]))
    return pa, pb


class TestSupportValue:
    def test_sphere(self):
        assert support_value(SPHERE, np.array([0.0, 3.0, 0.0])) == pytest.approx(3.0)

    def test_ellipsoid(self):
        sq = Superquadric(0.5, 1.5, 1.0, 1.0, 1.0)
        n = np.array([1.0, 1.0, 0.0])
        assert support_value(sq, n) == pytest.approx(np.sqrt(0.25 + 2.25))

    def test_matches_polytope_support(self):
        rng = np.random.default_rng(2)
        for sq in (Superquadric(0.3, 0.5, 0.4, 0.2, 0.2),
                   Superquadric(0.2, 0.2, 0.6, 1.5, 0.7),
                   Superquadric(0.4, 0.3, 0.2, 2.0, 1.0)):
            poly = sample_surface(sq, 96, 96)
            for _ in range(20):
                n = rng.normal(size=3)
                smooth = support_value(sq, n)
                sampled = float((poly.vertices @ n).max())
                # polytope is inscribed: sampled <= smooth, close at this density
                assert sampled <= smooth + 1e-9
                assert smooth - sampled <= 0.02 * np.linalg.norm(n)


class TestSdfReference:
    def test_unit_spheres_3m_apart(self):
        d = sdf_reference(SPHERE, Pose.identity(), SPHERE,
                          Pose(np.eye(3), np.array([3.0, 0, 0])))
        assert d == pytest.approx(1.0, abs=1e-8)

    def test_identical_pose_penetrates(self):
        d = sdf_reference(SPHERE, Pose.identity(), SPHERE, Pose.identity())
        assert d <= 0.0

    def test_penetrating_spheres_depth(self):
        d = sdf_reference(SPHERE, Pose.identity(), SPHERE,
                          Pose(np.eye(3), np.array([1.0, 0, 0])))
        assert d == pytest.approx(-1.0, abs=1e-6)

    def test_symmetry(self):
        pa, pb = fig2_poses(0.0)
        d_ab = sdf_reference(FIG2_A, pa, FIG2_B, pb)
        d_ba = sdf_reference(FIG2_B, pb, FIG2_A, pa)
        assert d_ab == pytest.approx(d_ba, abs=1e-7)

    def test_sharp_pair_positive_and_close_to_gjk(self):
        from sqfilter.distance import DistanceQuery, signed_distance

        pa, pb = fig2_poses(0.0)
        d_ref = sdf_reference(FIG2_A, pa, FIG2_B, pb)
        assert d_ref > 0
        poly_a = sample_surface(FIG2_A, 200, 200)
        poly_b = sample_surface(FIG2_B, 200, 200)
        w = signed_distance(DistanceQuery(poly_a, poly_b, pa, pb))
        # smooth bodies contain their sampled polytopes
        assert d_ref <= w.d + 1e-8
        assert d_ref >= w.d - 5e-3


class TestFdGradient:
    def test_linear_function(self):
        a = np.array([1.0, -2.0, 0.5, 3.0, 0.0, -1.0])
        g = fd_gradient(lambda x: float(a @ x), np.zeros(6))
        np.testing.assert_allclose(g, a, atol=1e-10)

    def test_norm_at_offset(self):
        g = fd_gradient(np.linalg.norm, np.array([3.0, 0, 0, 0, 0, 0]))
        np.testing.assert_allclose(g, [1, 0, 0, 0, 0, 0], atol=1e-9)


class TestImplicitSurrogate:
    def test_concentric_is_negative(self):
        v = implicit_surrogate_value(SPHERE, Pose.identity(), SPHERE, Pose.identity(),
                                     n_starts=8)
        assert v < 0

    def test_fig2_blowup_exists(self):
        # far end of the sweep: the surrogate value alone exceeds 1e4
        pa, pb = fig2_poses(3.0)
        v, gx = implicit_surrogate(FIG2_A, pa, FIG2_B, pb, n_starts=8)
        assert max(abs(v), abs(gx)) > 1e4


class TestQpReference:
    def test_unconstrained(self):
        H = np.diag([2.0, 4.0])
        g = np.array([-2.0, -4.0])
        np.testing.assert_allclose(qp_reference(H, g, None, None), [1.0, 1.0], atol=1e-9)

    def test_single_active_bound(self):
        H = 2 * np.eye(1)
        g = np.array([-2.0])  # unconstrained minimum at 1
        u = qp_reference(H, g, None, None, lb=np.array([2.0]), ub=np.array([5.0]))
        assert u[0] == pytest.approx(2.0, abs=1e-8)

    def test_inactive_row(self):
        H = 2 * np.eye(1)
        g = np.array([-2.0])
        u = qp_reference(H, g, np.array([[1.0]]), np.array([0.2]))
        assert u[0] == pytest.approx(1.0, abs=1e-8)

    def test_active_row(self):
        H = 2 * np.eye(1)
        g = np.array([-2.0])
        u = qp_reference(H, g, np.array([[1.0]]), np.array([2.0]))
        assert u[0] == pytest.approx(2.0, abs=1e-8)

    def test_infeasible_detected(self):
        H = 2 * np.eye(1)
        g = np.zeros(1)
        C = np.array([[1.0], [-1.0]])
        b = np.array([1.0, 1.0])  # u >= 1 and u <= -1
        with pytest.raises(InfeasibleQP):
            qp_reference(H, g, C, b)

    def test_matches_kkt_on_random_feasible(self):
        rng = np.random.default_rng(11)
        for _ in range(10):
            n, m = 5, 12
            A = rng.normal(size=(n, n))
            H = A @ A.T + n * np.eye(n)
            g = rng.normal(size=n)
            C = rng.normal(size=(m, n))
            u_feas = rng.normal(size=n)
            b = C @ u_feas - rng.uniform(0.1, 1.0, size=m)
            u = qp_reference(H, g, C, b)
            assert (C @ u - b).min() >= -1e-8
            # stationarity with recovered multipliers
            act = (C @ u - b) < 1e-7
            if act.any():
                lam, *_ = np.linalg.lstsq(C[act].T, H @ u + g, rcond=None)
                assert np.all(lam >= -1e-6)
            else:
                np.testing.assert_allclose(H @ u + g, 0, atol=1e-7)
