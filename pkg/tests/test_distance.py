import numpy as np
import pytest

from sqfilter.distance import DistanceQuery, WitnessPair, signed_distance, support
from sqfilter.geometry import Pose, Superquadric, sample_surface
from sqfilter.so3 import rotation_about

SPHERE = Superquadric(1, 1, 1, 1, 1)


@pytest.fixture(scope="module")
def sphere_poly():
    return sample_surface(SPHERE, 200, 200)


@pytest.fixture(scope="module")
def box_poly():
    return sample_surface(Superquadric(0.3, 0.3, 0.3, 0.2, 0.2), 64, 64)


def _query(poly_a, poly_b, t_b, R_b=None, t_a=None, R_a=None):
    return DistanceQuery(
        poly_a, poly_b,
        Pose(R_a if R_a is not None else np.eye(3), t_a if t_a is not None else np.zeros(3)),
        Pose(R_b if R_b is not None else np.eye(3), np.asarray(t_b, dtype=float)),
    )


class TestSupport:
    def test_unit_sphere_along_x(self, sphere_poly):
        p, _ = support(sphere_poly, Pose.identity(), np.array([1.0, 0, 0]))
        np.testing.assert_allclose(p, [1, 0, 0], atol=2e-2)  # half a grid step off-axis

    def test_translation_equivariance(self, sphere_poly):
        p, _ = support(sphere_poly, Pose(np.eye(3), np.array([2.0, 0, 0])), np.array([1.0, 0, 0]))
        np.testing.assert_allclose(p, [3, 0, 0], atol=2e-2)

    def test_zero_direction_rejected(self, sphere_poly):
        with pytest.raises(ValueError):
            support(sphere_poly, Pose.identity(), np.zeros(3))

    def test_box_corner_vs_exhaustive(self, box_poly):
        d = np.array([1.0, 1.0, 1.0]) / np.sqrt(3)
        p, i = support(box_poly, Pose.identity(), d)
        brute = box_poly.vertices @ d
        assert p @ d == pytest.approx(brute.max())
        assert np.all(p > 0.2)  # near the (+,+,+) corner


class TestSignedDistance:
    def test_separated_spheres(self, sphere_poly):
        w = signed_distance(_query(sphere_poly, sphere_poly, [3.0, 0, 0]))
        mesh_err = 2 * 2e-4  # chord error of a 200x200 unit sphere, both bodies
        assert w.d == pytest.approx(1.0, abs=mesh_err)
        np.testing.assert_allclose(w.p_a, [1, 0, 0], atol=1e-2)
        np.testing.assert_allclose(w.p_b, [2, 0, 0], atol=1e-2)

    def test_penetrating_spheres(self, sphere_poly):
        w = signed_distance(_query(sphere_poly, sphere_poly, [1.0, 0, 0]))
        assert w.d == pytest.approx(-1.0, abs=1e-2)
        assert abs(w.d) == pytest.approx(np.linalg.norm(w.separation), abs=1e-9)

    def test_witness_norm_matches_distance(self, sphere_poly, box_poly):
        w = signed_distance(_query(sphere_poly, box_poly, [0.2, 2.5, 0.3]))
        assert np.linalg.norm(w.separation) == pytest.approx(abs(w.d), abs=1e-9)
        np.testing.assert_allclose(w.separation, w.p_a - w.p_b, atol=1e-12)

    def test_symmetry(self, sphere_poly, box_poly):
        q = _query(sphere_poly, box_poly, [0.4, 2.0, -0.7], R_b=rotation_about([0, 0, 1], 0.3))
        w_ab = signed_distance(q)
        w_ba = signed_distance(DistanceQuery(q.shape_b, q.shape_a, q.pose_b, q.pose_a))
        assert w_ab.d == pytest.approx(w_ba.d, abs=1e-9)
        np.testing.assert_allclose(w_ab.p_a, w_ba.p_b, atol=1e-6)

    def test_rigid_invariance(self, sphere_poly, box_poly):
        R = rotation_about([0.3, 1.0, -0.2], 1.1)
        t = np.array([0.5, -1.0, 2.0])
        q0 = _query(sphere_poly, box_poly, [0, 2.2, 0])
        w0 = signed_distance(q0)
        g = Pose(R, t)
        q1 = DistanceQuery(sphere_poly, box_poly, g @ q0.pose_a, g @ q0.pose_b)
        w1 = signed_distance(q1)
        assert w1.d == pytest.approx(w0.d, abs=1e-9)

    def test_translation_along_witness_direction(self, sphere_poly, box_poly):
        q = _query(sphere_poly, box_poly, [0, 2.2, 0])
        w0 = signed_distance(q)
        n = w0.separation / np.linalg.norm(w0.separation)
        for step in (0.1, 0.5, 1.0):
            q2 = DistanceQuery(q.shape_a, q.shape_b, q.pose_a,
                               Pose(q.pose_b.R, q.pose_b.t - step * n))
            w2 = signed_distance(q2)
            assert w2.d == pytest.approx(w0.d + step, abs=1e-6)

    def test_witness_points_on_hull_boundary(self, sphere_poly):
        w = signed_distance(_query(sphere_poly, sphere_poly, [2.5, 0.4, 0.1]))
        assert np.linalg.norm(w.p_a) == pytest.approx(1.0, abs=1e-3)
        assert np.linalg.norm(w.p_b - np.array([2.5, 0.4, 0.1])) == pytest.approx(1.0, abs=1e-3)

    def test_agreement_with_brute_force_vertex_pairs(self):
        rng = np.random.default_rng(7)
        pa = sample_surface(Superquadric(0.2, 0.3, 0.25, 0.6, 1.2), 32, 32)
        pb = sample_surface(Superquadric(0.4, 0.2, 0.3, 1.0, 0.4), 32, 32)
        for _ in range(10):
            t = rng.normal(size=3)
            t *= (1.2 + rng.uniform(0, 1.0)) / np.linalg.norm(t)
            R = rotation_about(rng.normal(size=3), rng.uniform(0, 3))
            q = _query(pa, pb, t, R_b=R)
            w = signed_distance(q)
            if w.d <= 0:
                continue
            va = pa.vertices
            vb = q.pose_b.apply(pb.vertices)
            # min vertex-pair distance upper-bounds hull distance; chord error below
            brute = np.sqrt(
                ((va[:, None, :] - vb[None, :, :]) ** 2).sum(-1).min()
                if len(va) * len(vb) < 5e6 else np.inf
            )
            assert w.d <= brute + 1e-9
            assert w.d >= brute - 0.02  # max chord error at this resolution

    def test_support_weights_convex(self, sphere_poly, box_poly):
        w = signed_distance(_query(box_poly, sphere_poly, [0, 2.0, 0]))
        for sup, poly in ((w.support_a, box_poly), (w.support_b, sphere_poly)):
            lam = np.array([l for _, l in sup])
            assert lam.sum() == pytest.approx(1.0)
            assert np.all(lam >= 0)
            ids = [i for i, _ in sup]
            assert all(0 <= i < len(poly) for i in ids)

    def test_fig2_style_pair_positive(self):
        s1 = sample_surface(Superquadric(0.5, 1.5, 1.0, 0.2, 0.2), 64, 64)
        s2 = sample_surface(Superquadric(1.0, 0.5, 1.0, 0.2, 0.2), 64, 64)
        q = DistanceQuery(
            s1, s2,
            Pose(rotation_about([0, 0, 1], np.pi / 3), np.zeros(3)),
            Pose(rotation_about([0, 0, 1], -np.pi / 4), np.array([0.0, 3.0, 0.0])),
        )
        w = signed_distance(q)
        assert w.d > 0

    def test_deep_overlap_exceeds_face_budget(self, sphere_poly):
        # deep penetration is out of the supported regime: EPA must fail loudly
        # with a usable best-effort bound rather than return a silent guess
        from sqfilter.distance import ConvergenceError

        with pytest.raises(ConvergenceError) as exc:
            signed_distance(_query(sphere_poly, sphere_poly, [0.0, 0, 0]))
        assert exc.value.best_bound == pytest.approx(-2.0, rel=0.1)

    def test_contact_reports_zero(self, sphere_poly):
        w = signed_distance(_query(sphere_poly, sphere_poly, [2.0, 0, 0]))
        assert w.d == pytest.approx(0.0, abs=5e-4)
