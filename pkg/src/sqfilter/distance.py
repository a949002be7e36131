"""Signed distance between posed convex polytopes via GJK (separation) and
EPA (penetration), with witness points and their supporting vertex weights."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .geometry import ConvexPolytope, Pose

GJK_MAX_ITERS = 128
GJK_PROGRESS_TOL = 1e-10
EPA_TOL = 1e-8
EPA_MAX_FACES = 256
CONTACT_TOL = 1e-10


class ConvergenceError(RuntimeError):
    """Raised when GJK/EPA exceeds its iteration budget; carries the best bound."""

    def __init__(self, msg: str, best_bound: float):
        super().__init__(f"{msg} (best bound {best_bound:.3e})")
        self.best_bound = best_bound


@dataclass
class DistanceQuery:
    shape_a: ConvexPolytope
    shape_b: ConvexPolytope
    pose_a: Pose
    pose_b: Pose
    # optional warm start: previous cycle's witness vertex ids
    warm_a: int | None = None
    warm_b: int | None = None


@dataclass
class WitnessPair:
    d: float
    p_a: np.ndarray
    p_b: np.ndarray
    separation: np.ndarray  # p_a - p_b
    # supporting vertices and convex weights on each body (local ids)
    support_a: list[tuple[int, float]] = field(default_factory=list)
    support_b: list[tuple[int, float]] = field(default_factory=list)
    method: str = "gjk"
    iterations: int = 0

    def swapped(self) -> "WitnessPair":
        return WitnessPair(self.d, self.p_b, self.p_a, -self.separation,
                           self.support_b, self.support_a, self.method,
                           self.iterations)


def support(shape: ConvexPolytope, pose: Pose, direction: np.ndarray,
            warm: int | None = None) -> tuple[np.ndarray, int]:
    """World-frame support point of a posed polytope along a world direction."""
    d = np.asarray(direction, dtype=float)
    local_dir = pose.R.T @ d
    if warm is None:
        p, i = shape.support_local(local_dir)
    else:
        p, i = shape.support_local_hillclimb(local_dir, warm)
    return pose.R @ p + pose.t, i


class _Minkowski:
    """Support oracle over the Minkowski difference A - B in world frame."""

    def __init__(self, q: DistanceQuery):
        self.q = q
        self.Va = q.shape_a.vertices @ q.pose_a.R.T + q.pose_a.t
        self.Vb = q.shape_b.vertices @ q.pose_b.R.T + q.pose_b.t

    def support(self, direction: np.ndarray) -> tuple[np.ndarray, int, int]:
        ia = int(np.argmax(self.Va @ direction))
        ib = int(np.argmax(self.Vb @ -direction))
        return self.Va[ia] - self.Vb[ib], ia, ib


_SUBSETS = {
    m: tuple(
        tuple(i for i in range(m) if mask >> i & 1) for mask in range(1, 1 << m)
    )
    for m in range(1, 5)
}

_ONE = np.array([1.0])


def _affine_bary(Ws: np.ndarray):
    """Barycentric coordinates of the origin's projection onto the affine
    hull of the rows of Ws; None when affinely dependent."""
    k = len(Ws)
    if k == 1:
        return _ONE
    D = Ws[1:] - Ws[0]
    rhs = -(D @ Ws[0])
    if k == 2:
        m00 = D[0] @ D[0]
        if m00 <= 1e-300:
            return None
        mu = rhs / m00
        return np.array([1.0 - mu[0], mu[0]])
    M = D @ D.T
    if k == 3:
        det = M[0, 0] * M[1, 1] - M[0, 1] * M[1, 0]
        if abs(det) <= 1e-14 * max(M[0, 0] * M[1, 1], 1e-300):
            return None
        mu0 = (M[1, 1] * rhs[0] - M[0, 1] * rhs[1]) / det
        mu1 = (M[0, 0] * rhs[1] - M[1, 0] * rhs[0]) / det
        return np.array([1.0 - mu0 - mu1, mu0, mu1])
    try:
        mu = np.linalg.solve(M, rhs)
    except np.linalg.LinAlgError:
        return None
    if not np.all(np.isfinite(mu)):
        return None
    lam = np.empty(k)
    lam[0] = 1.0 - mu.sum()
    lam[1:] = mu
    return lam


def _seg_origin(A: np.ndarray, B: np.ndarray):
    """Closest point to the origin on segment AB (closed form)."""
    d = B - A
    dd = float(d @ d)
    if dd <= 1e-300:
        return A, _ONE, [0]
    t = -float(A @ d) / dd
    if t <= 0.0:
        return A, _ONE, [0]
    if t >= 1.0:
        return B, _ONE, [1]
    return A + t * d, np.array([1.0 - t, t]), [0, 1]


def _tri_origin(A: np.ndarray, B: np.ndarray, C: np.ndarray):
    """Closest point to the origin on triangle ABC (Voronoi-region walk).

    Returns None for a degenerate (near-collinear) triangle.
    """
    ab = B - A
    ac = C - A
    d1 = -float(ab @ A)
    d2 = -float(ac @ A)
    if d1 <= 0.0 and d2 <= 0.0:
        return A, _ONE, [0]
    d3 = -float(ab @ B)
    d4 = -float(ac @ B)
    if d3 >= 0.0 and d4 <= d3:
        return B, _ONE, [1]
    vc = d1 * d4 - d3 * d2
    if vc <= 0.0 and d1 >= 0.0 and d3 <= 0.0:
        v = d1 / (d1 - d3)
        return A + v * ab, np.array([1.0 - v, v]), [0, 1]
    d5 = -float(ab @ C)
    d6 = -float(ac @ C)
    if d6 >= 0.0 and d5 <= d6:
        return C, _ONE, [2]
    vb = d5 * d2 - d1 * d6
    if vb <= 0.0 and d2 >= 0.0 and d6 <= 0.0:
        w = d2 / (d2 - d6)
        return A + w * ac, np.array([1.0 - w, w]), [0, 2]
    va = d3 * d6 - d5 * d4
    if va <= 0.0 and d4 >= d3 and d5 >= d6:
        w = (d4 - d3) / ((d4 - d3) + (d5 - d6))
        return B + w * (C - B), np.array([1.0 - w, w]), [1, 2]
    denom = va + vb + vc
    if denom <= 1e-300:
        return None  # degenerate: caller falls back to enumeration
    v = vb / denom
    w = vc / denom
    lam = np.clip(np.array([1.0 - v - w, v, w]), 0.0, None)
    lam = lam / lam.sum()
    return A + v * ab + w * ac, lam, [0, 1, 2]


def _closest_on_simplex(W: np.ndarray, must_include: int | None = None):
    """Closest point to the origin on the convex hull of <= 4 points.

    Returns (point, lambdas, kept_indices). Segments and triangles use closed
    forms; the tetrahedron is an interior test plus its four faces. Degenerate
    simplices fall back to enumerating feasible sub-simplices, where
    ``must_include`` restricts the subsets considered (the GJK invariant:
    after adding a support point the new closest sub-simplex contains it).
    """
    k = len(W)
    if k == 1:
        return W[0], _ONE, [0]
    if k == 2:
        return _seg_origin(W[0], W[1])
    if k == 3:
        out = _tri_origin(W[0], W[1], W[2])
        if out is not None:
            return out
    if k == 4:
        lam = _affine_bary(W)
        if lam is not None and lam.min() >= -1e-12:
            lam = np.clip(lam, 0.0, None)
            lam = lam / lam.sum()
            return lam @ W, lam, [0, 1, 2, 3]
        best = None
        faces = ((0, 1, 2), (0, 1, 3), (0, 2, 3), (1, 2, 3))
        for face in faces:
            out = _tri_origin(W[face[0]], W[face[1]], W[face[2]])
            if out is None:
                best = None
                break  # degenerate face: use the enumeration fallback
            v, lam, kept = out
            dist = float(v @ v)
            if best is None or dist < best[0] - 1e-18:
                best = (dist, v, lam, [face[i] for i in kept])
        if best is not None:
            return best[1], best[2], best[3]
    return _enumerate_subsets(W, must_include)


def _enumerate_subsets(W: np.ndarray, must_include: int | None = None):
    best = None
    for idx in _SUBSETS[len(W)]:
        if must_include is not None and must_include not in idx:
            continue
        Ws = W[list(idx)] if len(idx) > 1 else W[idx[0]:idx[0] + 1]
        lam = _affine_bary(Ws)
        if lam is None or lam.min() < -1e-12:
            continue
        v = lam @ Ws
        dist = float(v @ v)
        if best is None or dist < best[0] - 1e-18 or (
                abs(dist - best[0]) <= 1e-18 and len(idx) < len(best[3])):
            best = (dist, v, np.clip(lam, 0.0, None), idx)
    if best is None:
        if must_include is not None:
            return _enumerate_subsets(W)
        raise ConvergenceError("degenerate simplex", float("nan"))
    _, v, lam, idx = best
    lam = lam / lam.sum()
    return v, lam, list(idx)


def _witnesses(mink: _Minkowski, entries, lam) -> tuple:
    pa = sum(l * mink.Va[ia] for l, (ia, _) in zip(lam, entries))
    pb = sum(l * mink.Vb[ib] for l, (_, ib) in zip(lam, entries))
    sup_a: dict[int, float] = {}
    sup_b: dict[int, float] = {}
    for l, (ia, ib) in zip(lam, entries):
        sup_a[ia] = sup_a.get(ia, 0.0) + float(l)
        sup_b[ib] = sup_b.get(ib, 0.0) + float(l)
    return pa, pb, sorted(sup_a.items()), sorted(sup_b.items())


def signed_distance(q: DistanceQuery) -> WitnessPair:
    """GJK distance with witness points; falls through to EPA on overlap."""
    mink = _Minkowski(q)
    if q.warm_a is not None and q.warm_b is not None:
        # previous cycle's witness vertices give a near-optimal direction
        v = mink.Va[q.warm_a] - mink.Vb[q.warm_b]
    else:
        ca = q.pose_a.apply(q.shape_a.centroid)
        cb = q.pose_b.apply(q.shape_b.centroid)
        v = ca - cb
    if np.linalg.norm(v) < 1e-12:
        v = np.array([1.0, 0.0, 0.0])

    W = []       # Minkowski points
    ids = []     # (ia, ib) per point
    lam = None
    prev_dist = np.inf
    for it in range(GJK_MAX_ITERS):
        w, ia, ib = mink.support(-v)
        # duality gap: |v|^2 - v.w bounds the improvement still available
        gap = float(v @ v - v @ w)
        if it > 0 and gap < GJK_PROGRESS_TOL * max(1.0, float(v @ v)):
            break
        if (ia, ib) in ids:
            break
        W.append(w)
        ids.append((ia, ib))
        v, lam, keep = _closest_on_simplex(np.array(W), must_include=len(W) - 1)
        W = [W[i] for i in keep]
        ids = [ids[i] for i in keep]
        dist = float(np.linalg.norm(v))
        if dist < CONTACT_TOL and len(W) == 4:
            return _penetration(q, mink, W, ids, it + 1)
        if dist < CONTACT_TOL:
            return _penetration(q, mink, W, ids, it + 1)
        if prev_dist - dist < GJK_PROGRESS_TOL and it > 0:
            break
        prev_dist = dist
    else:
        raise ConvergenceError("GJK did not converge", float(np.linalg.norm(v)))

    pa, pb, sup_a, sup_b = _witnesses(mink, ids, lam)
    d = float(np.linalg.norm(v))
    if d < CONTACT_TOL:
        return WitnessPair(0.0, pa, pb, pa - pb, sup_a, sup_b, "contact", it + 1)
    return WitnessPair(d, pa, pb, pa - pb, sup_a, sup_b, "gjk", it + 1)


def _blow_up_simplex(mink: _Minkowski, W: list, ids: list):
    """Extend a degenerate simplex to a non-degenerate tetrahedron."""
    dirs = [np.array([1.0, 0, 0]), np.array([-1.0, 0, 0]), np.array([0, 1.0, 0]),
            np.array([0, -1.0, 0]), np.array([0, 0, 1.0]), np.array([0, 0, -1.0])]
    if len(W) >= 2:
        e = W[1] - W[0]
        n = np.linalg.norm(e)
        if n > 0:
            e = e / n
            base = np.array([1.0, 0, 0]) if abs(e[0]) < 0.9 else np.array([0, 1.0, 0])
            t1 = np.cross(e, base)
            t1 /= np.linalg.norm(t1)
            t2 = np.cross(e, t1)
            dirs = [t1, -t1, t2, -t2] + dirs
    if len(W) >= 3:
        n = np.cross(W[1] - W[0], W[2] - W[0])
        nn = np.linalg.norm(n)
        if nn > 0:
            dirs = [n / nn, -n / nn] + dirs
    for dvec in dirs:
        if len(W) == 4 and abs(_tetra_volume(W)) > 1e-18:
            break
        w, ia, ib = mink.support(dvec)
        if not any(np.allclose(w, wk, atol=1e-14) for wk in W):
            W.append(w)
            ids.append((ia, ib))
            if len(W) == 4 and abs(_tetra_volume(W)) < 1e-18:
                W.pop()
                ids.pop()
    return W, ids


def _tetra_volume(W) -> float:
    return float(np.linalg.det(np.array([W[1] - W[0], W[2] - W[0], W[3] - W[0]])))


def _penetration(q: DistanceQuery, mink: _Minkowski, W: list, ids: list,
                 gjk_iters: int) -> WitnessPair:
    W = list(W)
    ids = list(ids)
    if len(W) < 4:
        W, ids = _blow_up_simplex(mink, W, ids)
    if len(W) < 4:
        # flat Minkowski difference: treat as contact
        v, lam, keep = _closest_on_simplex(np.array(W))
        pa, pb, sa, sb = _witnesses(mink, [ids[i] for i in keep], lam)
        return WitnessPair(0.0, pa, pb, pa - pb, sa, sb, "contact", gjk_iters)

    verts = list(W)
    vids = list(ids)
    center = np.mean(verts, axis=0)

    def make_face(i, j, k):
        n = np.cross(verts[j] - verts[i], verts[k] - verts[i])
        nn = np.linalg.norm(n)
        if nn < 1e-18:
            return None
        n = n / nn
        if n @ (verts[i] - center) < 0.0:
            i, j, k = i, k, j
            n = -n
        return [i, j, k, n, float(n @ verts[i])]

    faces = [f for f in (make_face(0, 1, 2), make_face(0, 1, 3),
                         make_face(0, 2, 3), make_face(1, 2, 3)) if f]
    if len(faces) < 4 or min(f[4] for f in faces) < -1e-9:
        # origin not strictly inside the blown-up tetra: contact
        v, lam, keep = _closest_on_simplex(np.array(W))
        pa, pb, sa, sb = _witnesses(mink, [ids[i] for i in keep], lam)
        return WitnessPair(0.0, pa, pb, pa - pb, sa, sb, "contact", gjk_iters)

    for it in range(4 * EPA_MAX_FACES):
        fbest = min(faces, key=lambda f: f[4])
        i, j, k, n, dist = fbest
        w, ia, ib = mink.support(n)
        growth = float(n @ w) - dist
        if growth < EPA_TOL or len(faces) >= EPA_MAX_FACES:
            if len(faces) >= EPA_MAX_FACES and growth >= EPA_TOL:
                raise ConvergenceError("EPA face budget exhausted", -dist)
            # project origin onto the closest face for barycentric witnesses
            Ws = np.array([verts[i], verts[j], verts[k]])
            _, lam, keep = _closest_on_simplex(Ws)
            entries = [vids[[i, j, k][m]] for m in keep]
            pa, pb, sa, sb = _witnesses(mink, entries, lam)
            depth = dist
            if depth <= CONTACT_TOL:
                return WitnessPair(0.0, pa, pb, pa - pb, sa, sb, "contact",
                                   gjk_iters + it)
            return WitnessPair(-depth, pa, pb, pa - pb, sa, sb, "epa",
                               gjk_iters + it)
        verts.append(w)
        vids.append((ia, ib))
        new_id = len(verts) - 1
        visible = [f for f in faces if f[3] @ w > f[4] + 1e-12]
        if not visible:
            visible = [fbest]
        faces = [f for f in faces if f not in visible]
        # horizon: edges of visible faces not shared by two visible faces
        edge_count: dict[tuple[int, int], int] = {}
        for f in visible:
            for a, b in ((f[0], f[1]), (f[1], f[2]), (f[2], f[0])):
                key = (min(a, b), max(a, b))
                edge_count[key] = edge_count.get(key, 0) + 1
        for (a, b), cnt in edge_count.items():
            if cnt == 1:
                nf = make_face(a, b, new_id)
                if nf is not None:
                    faces.append(nf)
        if not faces:
            raise ConvergenceError("EPA polytope collapsed", 0.0)
    raise ConvergenceError("EPA did not converge", min(f[4] for f in faces))
