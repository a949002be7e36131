"""Superquadric primitives: implicit function, surface sampling, voxel metrics.

A superquadric is parameterized by semi-axes (a1, a2, a3) and shape exponents
(e1, e2). We restrict exponents to (0, 2] so every shape is convex. The
inside-outside function is evaluated with |.| on each normalized coordinate,
which makes it total and even in each coordinate.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from .so3 import exp_so3, log_so3

MIN_EXPONENT = 0.05  # below this, 2/e exponents overflow doubles for routine inputs


@dataclass(frozen=True)
class Superquadric:
    a1: float
    a2: float
    a3: float
    e1: float
    e2: float

    def __post_init__(self):
        for name in ("a1", "a2", "a3"):
            if not getattr(self, name) > 0.0:
                raise ValueError(f"semi-axis {name} must be positive")
        for name in ("e1", "e2"):
            e = getattr(self, name)
            if not (MIN_EXPONENT <= e <= 2.0):
                raise ValueError(
                    f"exponent {name}={e} outside [{MIN_EXPONENT}, 2.0] (convex regime)"
                )

    @property
    def semi_axes(self) -> np.ndarray:
        return np.array([self.a1, self.a2, self.a3])

    @property
    def params(self) -> np.ndarray:
        return np.array([self.a1, self.a2, self.a3, self.e1, self.e2])

    def to_dict(self) -> dict:
        return {"a": [self.a1, self.a2, self.a3], "e": [self.e1, self.e2]}

    @classmethod
    def from_dict(cls, d: dict) -> "Superquadric":
        return cls(*d["a"], *d["e"])


class Pose:
    """Rigid transform: 3x3 rotation + translation, validated at construction."""

    __slots__ = ("R", "t")

    def __init__(self, R: np.ndarray, t: np.ndarray):
        R = np.array(R, dtype=float)
        t = np.array(t, dtype=float).reshape(3)
        if not np.allclose(R.T @ R, np.eye(3), atol=1e-9):
            raise ValueError("rotation is not orthonormal")
        if not abs(np.linalg.det(R) - 1.0) < 1e-9:
            raise ValueError("rotation determinant is not +1")
        R.setflags(write=False)
        t.setflags(write=False)
        object.__setattr__(self, "R", R)
        object.__setattr__(self, "t", t)

    def __setattr__(self, *a):
        raise AttributeError("Pose is immutable")

    @classmethod
    def _trusted(cls, R: np.ndarray, t: np.ndarray) -> "Pose":
        """Skip validation for rotations that are orthonormal by construction
        (products of validated rotations, Rodrigues outputs)."""
        p = object.__new__(cls)
        object.__setattr__(p, "R", R)
        object.__setattr__(p, "t", t)
        return p

    @classmethod
    def identity(cls) -> "Pose":
        return cls(np.eye(3), np.zeros(3))

    @classmethod
    def from_axis_angle(cls, t, aa) -> "Pose":
        return cls(exp_so3(np.asarray(aa, dtype=float)), t)

    @property
    def axis_angle(self) -> np.ndarray:
        return log_so3(self.R)

    def as_vector(self) -> np.ndarray:
        """6-vector chart: translation + axis-angle. Exact round trip for angle < pi."""
        return np.concatenate([self.t, self.axis_angle])

    @classmethod
    def from_vector(cls, x) -> "Pose":
        x = np.asarray(x, dtype=float)
        return cls.from_axis_angle(x[:3], x[3:])

    def compose(self, other: "Pose") -> "Pose":
        return Pose._trusted(self.R @ other.R, self.R @ other.t + self.t)

    def __matmul__(self, other: "Pose") -> "Pose":
        return self.compose(other)

    def inverse(self) -> "Pose":
        return Pose._trusted(np.ascontiguousarray(self.R.T), -self.R.T @ self.t)

    def apply(self, points: np.ndarray) -> np.ndarray:
        return np.asarray(points) @ self.R.T + self.t

    def apply_inverse(self, points: np.ndarray) -> np.ndarray:
        return (np.asarray(points) - self.t) @ self.R

    def to_dict(self) -> dict:
        return {"t": self.t.tolist(), "aa": self.axis_angle.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "Pose":
        return cls.from_axis_angle(d["t"], d["aa"])

    def __repr__(self):
        return f"Pose(t={self.t.tolist()}, aa={self.axis_angle.tolist()})"


def implicit_value(sq: Superquadric, p: np.ndarray) -> np.ndarray | float:
    """Inside-outside value: negative inside, zero on the surface, positive outside.

    Accepts a single point (3,) or a batch (..., 3).
    """
    p = np.asarray(p, dtype=float)
    x = np.abs(p[..., 0] / sq.a1)
    y = np.abs(p[..., 1] / sq.a2)
    z = np.abs(p[..., 2] / sq.a3)
    with np.errstate(over="ignore"):
        xy = x ** (2.0 / sq.e2) + y ** (2.0 / sq.e2)
        f = xy ** (sq.e2 / sq.e1) + z ** (2.0 / sq.e1) - 1.0
    if f.ndim == 0:
        return float(f)
    return f


def implicit_gradient(sq: Superquadric, p: np.ndarray) -> np.ndarray:
    """Analytic gradient of the inside-outside function (away from axes planes)."""
    p = np.asarray(p, dtype=float)
    a = sq.semi_axes
    e1, e2 = sq.e1, sq.e2
    u = p / a
    au = np.abs(u)
    with np.errstate(over="ignore", divide="ignore", invalid="ignore"):
        xy = au[..., 0] ** (2.0 / e2) + au[..., 1] ** (2.0 / e2)
        gx = (
            (e2 / e1)
            * np.where(xy > 0, xy ** (e2 / e1 - 1.0), 0.0)
            * (2.0 / e2)
            * au[..., 0] ** (2.0 / e2 - 1.0)
            * np.sign(u[..., 0])
            / a[0]
        )
        gy = (
            (e2 / e1)
            * np.where(xy > 0, xy ** (e2 / e1 - 1.0), 0.0)
            * (2.0 / e2)
            * au[..., 1] ** (2.0 / e2 - 1.0)
            * np.sign(u[..., 1])
            / a[1]
        )
        gz = (2.0 / e1) * au[..., 2] ** (2.0 / e1 - 1.0) * np.sign(u[..., 2]) / a[2]
    return np.stack([gx, gy, gz], axis=-1)


def _spow(t: np.ndarray, e: float) -> np.ndarray:
    return np.sign(t) * np.abs(t) ** e


def _equal_arc_params(curve, lo: float, hi: float, n: int, dense: int = 4096,
                      endpoint: bool = False) -> np.ndarray:
    """Parameters giving approximately equal arc-length spacing along curve(theta).

    With endpoint=False the n samples sit at interior arc positions (half-open),
    leaving the curve endpoints free (used to keep grid rows off the poles).
    """
    theta = np.linspace(lo, hi, dense)
    pts = curve(theta)
    seg = np.linalg.norm(np.diff(pts, axis=0), axis=1)
    s = np.concatenate([[0.0], np.cumsum(seg)])
    total = s[-1]
    if endpoint:
        targets = np.linspace(0.0, total, n)
    else:
        targets = (np.arange(n) + 0.5) / n * total
    return np.interp(targets, s, theta)


def sample_surface(sq: Superquadric, n_u: int, n_v: int,
                   equal_arc: bool = True) -> "ConvexPolytope":
    """Sample the SQ surface into a vertex grid and wrap it as a ConvexPolytope.

    n_u is the longitudinal resolution (around the z axis), n_v the latitudinal
    one. Two pole vertices are appended so the neighbor graph covers the whole
    surface. equal_arc=False falls back to uniform angular spacing.
    """
    if n_u < 4 or n_v < 4:
        raise ValueError("n_u and n_v must be >= 4")

    if equal_arc:
        omega = _equal_arc_params(
            lambda w: np.stack(
                [sq.a1 * _spow(np.cos(w), sq.e2), sq.a2 * _spow(np.sin(w), sq.e2)],
                axis=-1,
            ),
            -np.pi, np.pi, n_u, dense=8 * 1024,
        )
        a_eq = 0.5 * (sq.a1 + sq.a2)
        eta = _equal_arc_params(
            lambda h: np.stack(
                [a_eq * _spow(np.cos(h), sq.e1), sq.a3 * _spow(np.sin(h), sq.e1)],
                axis=-1,
            ),
            -np.pi / 2, np.pi / 2, n_v, dense=8 * 1024,
        )
    else:
        omega = -np.pi + 2 * np.pi * np.arange(n_u) / n_u
        eta = -np.pi / 2 + np.pi * (np.arange(n_v) + 0.5) / n_v

    ce = _spow(np.cos(eta), sq.e1)[:, None]
    se = _spow(np.sin(eta), sq.e1)
    cw = _spow(np.cos(omega), sq.e2)[None, :]
    sw = _spow(np.sin(omega), sq.e2)[None, :]
    x = sq.a1 * ce * cw
    y = sq.a2 * ce * sw
    z = np.broadcast_to((sq.a3 * se)[:, None], x.shape)
    grid = np.stack([x, y, z], axis=-1).reshape(n_v * n_u, 3)
    poles = np.array([[0.0, 0.0, -sq.a3], [0.0, 0.0, sq.a3]])
    vertices = np.vstack([grid, poles])

    neighbors = _grid_adjacency(n_u, n_v)
    return ConvexPolytope(vertices, neighbors, grid_shape=(n_v, n_u))


def _grid_adjacency(n_u: int, n_v: int) -> list[np.ndarray]:
    """8-connected adjacency on the (n_v x n_u) grid, wrapping in u; poles attach
    to the first and last latitude rows."""
    idx = np.arange(n_v * n_u).reshape(n_v, n_u)
    south, north = n_v * n_u, n_v * n_u + 1
    adj: list[list[int]] = [[] for _ in range(n_v * n_u + 2)]
    for i in range(n_v):
        for j in range(n_u):
            me = idx[i, j]
            for di in (-1, 0, 1):
                ii = i + di
                if ii < 0 or ii >= n_v:
                    continue
                for dj in (-1, 0, 1):
                    if di == 0 and dj == 0:
                        continue
                    adj[me].append(idx[ii, (j + dj) % n_u])
    for j in range(n_u):
        adj[idx[0, j]].append(south)
        adj[south].append(idx[0, j])
        adj[idx[n_v - 1, j]].append(north)
        adj[north].append(idx[n_v - 1, j])
    return [np.array(sorted(set(a)), dtype=np.int32) for a in adj]


class ConvexPolytope:
    """Sampled SQ surface: vertex array, nearest-vertex k-d tree, neighbor graph.

    Immutable after construction; safe to share read-only across workers.
    """

    def __init__(self, vertices: np.ndarray, neighbors: list[np.ndarray],
                 grid_shape: tuple[int, int] | None = None):
        vertices = np.array(vertices, dtype=float)
        if vertices.ndim != 2 or vertices.shape[1] != 3 or len(vertices) == 0:
            raise ValueError("vertices must be a nonempty (N, 3) array")
        if len(neighbors) != len(vertices):
            raise ValueError("neighbor list length mismatch")
        vertices.setflags(write=False)
        self.vertices = vertices
        self.neighbors = neighbors
        self.grid_shape = grid_shape
        self.kdtree = cKDTree(vertices)
        self.centroid = vertices.mean(axis=0)
        self.bounding_radius = float(np.linalg.norm(vertices, axis=1).max())
        self._hood_cache: dict = {}

    def __len__(self):
        return len(self.vertices)

    def support_local(self, direction: np.ndarray) -> tuple[np.ndarray, int]:
        """Extreme vertex along `direction` in the body frame.

        Ties break to the lowest vertex id (argmax returns the first maximum).
        """
        d = np.asarray(direction, dtype=float)
        if not np.linalg.norm(d) > 0.0:
            raise ValueError("zero support direction")
        i = int(np.argmax(self.vertices @ d))
        return self.vertices[i], i

    def support_local_hillclimb(self, direction: np.ndarray, start: int) -> tuple[np.ndarray, int]:
        """Greedy ascent over the neighbor graph from a warm-start vertex.

        Exact on this vertex set for convex samples; useful when a previous
        cycle's witness vertex is available.
        """
        d = np.asarray(direction, dtype=float)
        if not np.linalg.norm(d) > 0.0:
            raise ValueError("zero support direction")
        best = int(start)
        best_val = float(self.vertices[best] @ d)
        while True:
            nb = self.neighbors[best]
            vals = self.vertices[nb] @ d
            k = int(np.argmax(vals))
            if vals[k] > best_val + 1e-15:
                best, best_val = int(nb[k]), float(vals[k])
            else:
                return self.vertices[best], best

    def nearest_vertex(self, point: np.ndarray) -> int:
        return int(self.kdtree.query(np.asarray(point, dtype=float))[1])

    def neighborhood(self, seeds, depth: int) -> np.ndarray:
        """Vertex ids within `depth` BFS steps of the seed set (memoized)."""
        key = (tuple(sorted(int(s) for s in np.atleast_1d(seeds))), depth)
        cached = self._hood_cache.get(key)
        if cached is not None:
            return cached
        seen = set(key[0])
        frontier = list(seen)
        for _ in range(depth):
            nxt = []
            for v in frontier:
                for w in self.neighbors[v]:
                    w = int(w)
                    if w not in seen:
                        seen.add(w)
                        nxt.append(w)
            if not nxt:
                break
            frontier = nxt
        out = np.fromiter(sorted(seen), dtype=np.int64)
        out.setflags(write=False)
        if len(self._hood_cache) < 4096:
            self._hood_cache[key] = out
        return out


def posed_aabb(sq: Superquadric, pose: Pose, pad: float = 0.0) -> tuple[np.ndarray, np.ndarray]:
    """Axis-aligned bounds of the posed SQ via its bounding box [-a, a]^3."""
    ext = np.abs(pose.R) @ sq.semi_axes + pad
    return pose.t - ext, pose.t + ext


def voxel_metrics(model, reference, delta: float) -> tuple[float, float]:
    """Coverage and over-approximation ratio of `model` w.r.t. `reference`.

    Both arguments are lists of (Superquadric, Pose). Membership uses the
    voxel-center inside test at resolution `delta`.
    """
    if delta <= 0:
        raise ValueError("delta must be positive")
    model = list(model)
    reference = list(reference)
    los, his = zip(*[posed_aabb(sq, pose, pad=delta) for sq, pose in model + reference])
    lo = np.min(los, axis=0)
    hi = np.max(his, axis=0)
    axes = [np.arange(lo[k] + delta / 2, hi[k], delta) for k in range(3)]
    gx, gy, gz = np.meshgrid(*axes, indexing="ij")
    centers = np.stack([gx.ravel(), gy.ravel(), gz.ravel()], axis=-1)

    def occupied(shapes):
        inside = np.zeros(len(centers), dtype=bool)
        for sq, pose in shapes:
            todo = ~inside
            local = pose.apply_inverse(centers[todo])
            inside[todo] = implicit_value(sq, local) <= 0.0
        return inside

    v_ref = occupied(reference)
    v_mod = occupied(model)
    n_ref = int(v_ref.sum())
    if n_ref == 0:
        raise ValueError("reference occupies zero voxels at this resolution")
    coverage = float((v_ref & v_mod).sum() / n_ref)
    over = float((v_mod & ~v_ref).sum() / n_ref)
    return coverage, over


def sq_set_to_json(shapes) -> str:
    """Serialize a list of (Superquadric, Pose) to the wire/file JSON format."""
    return json.dumps(
        {"sqs": [{**sq.to_dict(), "pose": pose.to_dict()} for sq, pose in shapes]}
    )


def sq_set_from_json(text: str) -> list[tuple[Superquadric, Pose]]:
    data = json.loads(text)
    return [
        (Superquadric.from_dict(item), Pose.from_dict(item["pose"]))
        for item in data["sqs"]
    ]
