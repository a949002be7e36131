/** Canvas rendering: dual orthographic viewports, badges, and the distance
 * sparkline. Every displayed number originates from a server frame; this
 * module holds only presentation state (view scaling, sparkline history).
 */

import { interventionMagnitude, StateFrame } from "./protocol.js";
import { outline, Vec2, ViewPlane } from "./sqoutline.js";

export interface Viewport {
  x: number;
  y: number;
  w: number;
  h: number;
  view: ViewPlane;
  /** meters -> pixels */
  scale: number;
  /** world point mapped to the viewport center */
  center: Vec2;
}

/** Body color from its barrier value: green (safe) to red (at the margin). */
export function barrierColor(h: number | null, horizon = 0.3): string {
  if (h === null) return "#3a7d44";
  const f = Math.max(0, Math.min(1, h / horizon));
  const r = Math.round(200 * (1 - f) + 40 * f);
  const g = Math.round(40 * (1 - f) + 160 * f);
  return `rgb(${r},${g},52)`;
}

export class Sparkline {
  readonly capacity: number;
  values: Array<number | null> = [];

  constructor(capacity = 300) {
    this.capacity = capacity;
  }

  push(v: number | null): void {
    this.values.push(v);
    if (this.values.length > this.capacity) this.values.shift();
  }

  draw(ctx: CanvasRenderingContext2D, x: number, y: number, w: number, h: number,
       margin: number): void {
    ctx.save();
    ctx.strokeStyle = "#888";
    ctx.strokeRect(x, y, w, h);
    const finite = this.values.filter((v): v is number => v !== null);
    if (finite.length > 1) {
      const hi = Math.max(...finite, margin * 4);
      const toY = (v: number) => y + h - (Math.max(v, 0) / hi) * h;
      // margin line: the sparkline should plateau here during a wall approach
      ctx.strokeStyle = "#c33";
      ctx.beginPath();
      ctx.moveTo(x, toY(margin));
      ctx.lineTo(x + w, toY(margin));
      ctx.stroke();
      ctx.strokeStyle = "#2a6";
      ctx.beginPath();
      this.values.forEach((v, i) => {
        if (v === null) return;
        const px = x + (i / (this.capacity - 1)) * w;
        if (i === 0) ctx.moveTo(px, toY(v));
        else ctx.lineTo(px, toY(v));
      });
      ctx.stroke();
    }
    ctx.restore();
  }
}

function toPixels(vp: Viewport, p: Vec2): Vec2 {
  return [
    vp.x + vp.w / 2 + (p[0] - vp.center[0]) * vp.scale,
    vp.y + vp.h / 2 - (p[1] - vp.center[1]) * vp.scale,
  ];
}

export function drawFrame(ctx: CanvasRenderingContext2D, frame: StateFrame,
                          viewports: Viewport[], stale: boolean): void {
  for (const vp of viewports) {
    ctx.save();
    ctx.strokeStyle = "#555";
    ctx.strokeRect(vp.x, vp.y, vp.w, vp.h);
    ctx.beginPath();
    ctx.rect(vp.x, vp.y, vp.w, vp.h);
    ctx.clip();
    for (const sq of frame.obstacles) {
      drawPoly(ctx, vp, outline(sq, vp.view), "#777", true);
    }
    const color = barrierColor(frame.h_min);
    for (const sq of frame.robot_sqs) {
      drawPoly(ctx, vp, outline(sq, vp.view), color, false);
    }
    const ee = toPixels(vp, vp.view === "top"
      ? [frame.ee_pose.t[0], frame.ee_pose.t[1]]
      : [frame.ee_pose.t[0], frame.ee_pose.t[2]]);
    ctx.fillStyle = "#46c";
    ctx.beginPath();
    ctx.arc(ee[0], ee[1], 4, 0, 2 * Math.PI);
    ctx.fill();
    if (stale) {
      ctx.fillStyle = "rgba(128,128,128,0.6)";
      ctx.fillRect(vp.x, vp.y, vp.w, vp.h);
    }
    ctx.restore();
  }
}

function drawPoly(ctx: CanvasRenderingContext2D, vp: Viewport, poly: Vec2[],
                  color: string, fill: boolean): void {
  if (poly.length < 2) return;
  ctx.beginPath();
  poly.forEach((p, i) => {
    const [px, py] = toPixels(vp, p);
    if (i === 0) ctx.moveTo(px, py);
    else ctx.lineTo(px, py);
  });
  ctx.closePath();
  if (fill) {
    ctx.fillStyle = color;
    ctx.globalAlpha = 0.35;
    ctx.fill();
    ctx.globalAlpha = 1;
  }
  ctx.strokeStyle = color;
  ctx.stroke();
}

/** True when this frame should light the intervention indicator. */
export function isIntervening(frame: StateFrame, tol = 1e-6): boolean {
  return interventionMagnitude(frame) > tol;
}
