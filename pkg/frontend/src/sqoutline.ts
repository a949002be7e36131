/** Client-side superquadric outlines for the orthographic viewports.
 *
 * The server sends only SQ parameters and poses; outlines are produced here
 * by sampling the surface at low resolution (n = 24) and taking the convex
 * hull of the projection onto the view plane.
 */

import { PoseDict, SqDict } from "./protocol.js";

export type Vec3 = [number, number, number];
export type Vec2 = [number, number];

function spow(base: number, exp: number): number {
  return Math.sign(base) * Math.pow(Math.abs(base), exp);
}

/** Rodrigues rotation of v by the axis-angle vector aa. */
export function rotate(aa: Vec3, v: Vec3): Vec3 {
  const angle = Math.hypot(aa[0], aa[1], aa[2]);
  if (angle < 1e-12) return [v[0], v[1], v[2]];
  const k: Vec3 = [aa[0] / angle, aa[1] / angle, aa[2] / angle];
  const c = Math.cos(angle);
  const s = Math.sin(angle);
  const kd = k[0] * v[0] + k[1] * v[1] + k[2] * v[2];
  const cross: Vec3 = [
    k[1] * v[2] - k[2] * v[1],
    k[2] * v[0] - k[0] * v[2],
    k[0] * v[1] - k[1] * v[0],
  ];
  return [
    v[0] * c + cross[0] * s + k[0] * kd * (1 - c),
    v[1] * c + cross[1] * s + k[1] * kd * (1 - c),
    v[2] * c + cross[2] * s + k[2] * kd * (1 - c),
  ];
}

export function applyPose(pose: PoseDict, v: Vec3): Vec3 {
  const r = rotate(pose.aa, v);
  return [r[0] + pose.t[0], r[1] + pose.t[1], r[2] + pose.t[2]];
}

/** Surface samples of a posed SQ on an n x (n/2) spherical-product grid. */
export function sampleSurface(sq: SqDict, n = 24): Vec3[] {
  const [a1, a2, a3] = sq.a;
  const [e1, e2] = sq.e;
  const points: Vec3[] = [];
  const nv = Math.max(4, Math.floor(n / 2));
  for (let j = 0; j <= nv; j++) {
    const v = -Math.PI / 2 + (Math.PI * j) / nv; // latitude
    const cv = Math.cos(v);
    const sv = Math.sin(v);
    for (let i = 0; i < n; i++) {
      const u = -Math.PI + (2 * Math.PI * i) / n; // longitude
      const cu = Math.cos(u);
      const su = Math.sin(u);
      const local: Vec3 = [
        a1 * spow(cv, e1) * spow(cu, e2),
        a2 * spow(cv, e1) * spow(su, e2),
        a3 * spow(sv, e1),
      ];
      points.push(applyPose(sq.pose, local));
      if (j === 0 || j === nv) break; // poles collapse to one point
    }
  }
  return points;
}

/** Monotone-chain convex hull; returns vertices in counterclockwise order. */
export function convexHull(points: Vec2[]): Vec2[] {
  if (points.length < 3) return [...points];
  const pts = [...points].sort((p, q) => (p[0] - q[0]) || (p[1] - q[1]));
  const cross = (o: Vec2, a: Vec2, b: Vec2) =>
    (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0]);
  const lower: Vec2[] = [];
  for (const p of pts) {
    while (lower.length >= 2 && cross(lower[lower.length - 2], lower[lower.length - 1], p) <= 0) {
      lower.pop();
    }
    lower.push(p);
  }
  const upper: Vec2[] = [];
  for (let i = pts.length - 1; i >= 0; i--) {
    const p = pts[i];
    while (upper.length >= 2 && cross(upper[upper.length - 2], upper[upper.length - 1], p) <= 0) {
      upper.pop();
    }
    upper.push(p);
  }
  lower.pop();
  upper.pop();
  return lower.concat(upper);
}

export type ViewPlane = "top" | "side";

/** 2D outline polygon of a posed SQ in the given orthographic view. */
export function outline(sq: SqDict, view: ViewPlane, n = 24): Vec2[] {
  const project: (p: Vec3) => Vec2 =
    view === "top" ? (p) => [p[0], p[1]] : (p) => [p[0], p[2]];
  return convexHull(sampleSurface(sq, n).map(project));
}
