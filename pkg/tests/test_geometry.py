import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sqfilter.geometry import (
    ConvexPolytope,
    Pose,
    Superquadric,
    implicit_value,
    sample_surface,
    sq_set_from_json,
    sq_set_to_json,
    voxel_metrics,
)

UNIT_SPHERE = Superquadric(1, 1, 1, 1, 1)


class TestImplicitValue:
    def test_on_unit_sphere_boundary(self):
        assert implicit_value(UNIT_SPHERE, np.array([1.0, 0, 0])) == pytest.approx(0.0)

    def test_at_origin(self):
        assert implicit_value(UNIT_SPHERE, np.zeros(3)) == pytest.approx(-1.0)

    def test_sharp_exponent_hand_value(self):
        # direct evaluation with e1 = e2 = 0.2 at x just outside the a1 face:
        # (0.55/0.5)^10 - 1 = 1.1^10 - 1
        sq = Superquadric(0.5, 1.5, 1.0, 0.2, 0.2)
        expected = 1.1**10 - 1.0
        assert implicit_value(sq, np.array([0.55, 0, 0])) == pytest.approx(expected, rel=1e-12)

    def test_batch_shape(self):
        pts = np.random.default_rng(0).normal(size=(10, 4, 3))
        vals = implicit_value(UNIT_SPHERE, pts)
        assert vals.shape == (10, 4)

    @given(
        k=st.floats(0.1, 10.0),
        px=st.floats(-2, 2), py=st.floats(-2, 2), pz=st.floats(-2, 2),
        e1=st.floats(0.2, 2.0), e2=st.floats(0.2, 2.0),
    )
    @settings(max_examples=50, deadline=None)
    def test_scaling_equivariance(self, k, px, py, pz, e1, e2):
        sq = Superquadric(0.5, 0.8, 1.2, e1, e2)
        scaled = Superquadric(0.5 * k, 0.8 * k, 1.2 * k, e1, e2)
        p = np.array([px, py, pz])
        v1 = implicit_value(sq, p)
        v2 = implicit_value(scaled, k * p)
        assert v1 == pytest.approx(v2, rel=1e-9, abs=1e-9)

    @given(
        sx=st.sampled_from([-1, 1]), sy=st.sampled_from([-1, 1]), sz=st.sampled_from([-1, 1]),
        px=st.floats(-2, 2), py=st.floats(-2, 2), pz=st.floats(-2, 2),
    )
    @settings(max_examples=50, deadline=None)
    def test_coordinate_sign_symmetry(self, sx, sy, sz, px, py, pz):
        sq = Superquadric(0.5, 1.5, 1.0, 0.3, 0.7)
        p = np.array([px, py, pz])
        flipped = p * np.array([sx, sy, sz])
        assert implicit_value(sq, p) == pytest.approx(implicit_value(sq, flipped), rel=1e-12, abs=1e-15)

    def test_sign_vs_hull_membership_for_sphere(self):
        poly = sample_surface(UNIT_SPHERE, 48, 48)
        rng = np.random.default_rng(1)
        pts = rng.normal(size=(200, 3))
        pts *= rng.uniform(0.3, 1.5, size=(200, 1)) / np.linalg.norm(pts, axis=1, keepdims=True)
        for p in pts:
            f = implicit_value(UNIT_SPHERE, p)
            if f < -1e-3:
                # strictly inside the sphere must be inside the hull up to chord error
                r = np.linalg.norm(p)
                if r < 0.99:  # chord margin for a 48x48 sample
                    assert _inside_hull(poly, p)
            elif f > 1e-3:
                assert not _inside_hull(poly, p)


def _inside_hull(poly: ConvexPolytope, p: np.ndarray) -> bool:
    # direction-sampled separation test (sufficient for the sphere case used here)
    for d in _FIB_DIRS:
        if p @ d > (poly.vertices @ d).max() + 1e-12:
            return False
    return True


def _fibonacci_sphere(n: int) -> np.ndarray:
    i = np.arange(n) + 0.5
    phi = np.arccos(1 - 2 * i / n)
    theta = np.pi * (1 + 5**0.5) * i
    return np.stack([np.sin(phi) * np.cos(theta), np.sin(phi) * np.sin(theta), np.cos(phi)], axis=-1)


_FIB_DIRS = _fibonacci_sphere(256)


class TestConstruction:
    def test_rejects_nonpositive_axes(self):
        with pytest.raises(ValueError):
            Superquadric(0.0, 1, 1, 1, 1)

    def test_rejects_concave_exponents(self):
        with pytest.raises(ValueError):
            Superquadric(1, 1, 1, 2.5, 1)

    def test_rejects_tiny_exponents(self):
        with pytest.raises(ValueError):
            Superquadric(1, 1, 1, 0.01, 1)

    def test_pose_rejects_non_orthonormal(self):
        with pytest.raises(ValueError):
            Pose(np.eye(3) * 1.01, np.zeros(3))

    def test_pose_rejects_reflection(self):
        R = np.diag([1.0, 1.0, -1.0])
        with pytest.raises(ValueError):
            Pose(R, np.zeros(3))

    def test_pose_vector_round_trip(self):
        rng = np.random.default_rng(3)
        for _ in range(20):
            aa = rng.normal(size=3)
            aa *= rng.uniform(0, np.pi - 1e-3) / np.linalg.norm(aa)
            pose = Pose.from_axis_angle(rng.normal(size=3), aa)
            back = Pose.from_vector(pose.as_vector())
            np.testing.assert_allclose(back.R, pose.R, atol=1e-9)
            np.testing.assert_allclose(back.t, pose.t, atol=1e-12)


class TestSampleSurface:
    def test_sphere_vertices_on_unit_radius(self):
        poly = sample_surface(UNIT_SPHERE, 200, 200)
        r = np.linalg.norm(poly.vertices, axis=1)
        np.testing.assert_allclose(r, 1.0, atol=1e-6)

    def test_vertices_on_zero_level_set(self):
        sq = Superquadric(0.1, 0.1, 0.1, 0.3, 0.3)
        poly = sample_surface(sq, 200, 200)
        residuals = np.abs(implicit_value(sq, poly.vertices))
        assert residuals.max() <= 1e-6

    def test_sphere_hausdorff_chord_bound(self):
        poly = sample_surface(UNIT_SPHERE, 200, 200)
        # realized max angular gap to the nearest vertex over dense probes
        probes = _fibonacci_sphere(5000)
        dist, _ = poly.kdtree.query(probes)
        theta_max = 2 * np.arcsin(dist.max() / 2)
        chord_bound = 1 - np.cos(theta_max)
        # hull support deficit along each probe must stay within the bound
        deficit = 1.0 - np.array([(poly.vertices @ d).max() for d in probes[::25]])
        assert deficit.max() <= chord_bound + 1e-12

    def test_rejects_low_resolution(self):
        with pytest.raises(ValueError):
            sample_surface(UNIT_SPHERE, 3, 8)

    def test_neighbor_graph_connected(self):
        poly = sample_surface(Superquadric(0.2, 0.3, 0.5, 0.4, 1.3), 16, 12)
        reached = poly.neighborhood([0], depth=10**6)
        assert len(reached) == len(poly)

    def test_equal_arc_beats_uniform_on_sharp_shapes(self):
        sq = Superquadric(0.1, 0.1, 0.1, 0.3, 0.3)
        ea = sample_surface(sq, 64, 64)
        ua = sample_surface(sq, 64, 64, equal_arc=False)

        def max_gap(poly):
            d, _ = poly.kdtree.query(_probe_surface(sq, 4001))
            return d.max()

        assert max_gap(ea) <= max_gap(ua)

    def test_support_tie_break_lowest_id(self):
        verts = np.array([[1.0, 0, 0], [1.0, 0, 0], [-1.0, 0, 0]])
        poly = ConvexPolytope(verts, [np.array([1]), np.array([0]), np.array([0])])
        _, i = poly.support_local(np.array([1.0, 0, 0]))
        assert i == 0

    def test_hillclimb_matches_argmax(self):
        sq = Superquadric(0.3, 0.3, 0.3, 0.2, 0.2)
        poly = sample_surface(sq, 32, 32)
        rng = np.random.default_rng(5)
        for _ in range(50):
            d = rng.normal(size=3)
            p_ref, _ = poly.support_local(d)
            p_hc, _ = poly.support_local_hillclimb(d, start=rng.integers(len(poly)))
            assert p_hc @ d >= p_ref @ d - 1e-12


def _probe_surface(sq: Superquadric, n: int) -> np.ndarray:
    dirs = _fibonacci_sphere(n)
    # radial scaling onto the boundary: f homogeneous in the nested-norm sense
    pts = []
    for d in dirs:
        lo, hi = 0.0, 4 * max(sq.a1, sq.a2, sq.a3)
        for _ in range(60):
            mid = (lo + hi) / 2
            if implicit_value(sq, mid * d) <= 0:
                lo = mid
            else:
                hi = mid
        pts.append(lo * d)
    return np.array(pts)


class TestVoxelMetrics:
    def test_identity_is_exact(self):
        shapes = [(Superquadric(0.1, 0.2, 0.15, 0.4, 1.1), Pose.from_axis_angle([0.1, 0, 0.05], [0.2, 0.1, 0]))]
        cov, over = voxel_metrics(shapes, shapes, 0.01)
        assert cov == 1.0
        assert over == 0.0

    def test_concentric_spheres_volume_ratio(self):
        small = [(Superquadric(0.1, 0.1, 0.1, 1, 1), Pose.identity())]
        big = [(Superquadric(0.2, 0.2, 0.2, 1, 1), Pose.identity())]
        cov, over = voxel_metrics(big, small, 0.005)
        assert cov == 1.0
        assert over == pytest.approx(7.0, rel=0.05)

    def test_empty_reference_raises(self):
        tiny = [(Superquadric(0.001, 0.001, 0.001, 1, 1), Pose.identity())]
        big = [(Superquadric(0.2, 0.2, 0.2, 1, 1), Pose.identity())]
        with pytest.raises(ValueError):
            voxel_metrics(big, tiny, 0.05)


class TestJsonRoundTrip:
    def test_round_trip(self):
        shapes = [
            (Superquadric(0.5, 1.5, 1.0, 0.2, 0.2), Pose.from_axis_angle([0, 3, 0], [0, 0, -np.pi / 4])),
            (Superquadric(1.0, 0.5, 1.0, 0.2, 0.2), Pose.identity()),
        ]
        back = sq_set_from_json(sq_set_to_json(shapes))
        for (sq0, p0), (sq1, p1) in zip(shapes, back):
            np.testing.assert_allclose(sq0.params, sq1.params)
            np.testing.assert_allclose(p0.R, p1.R, atol=1e-9)
            np.testing.assert_allclose(p0.t, p1.t, atol=1e-12)
