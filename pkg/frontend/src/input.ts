/** Operator jog input: keyboard WASD/QE plus on-screen sliders.
 *
 * Keys map to EE-frame axes (matching the server's command mapping);
 * key and slider contributions are summed component-wise, then the linear
 * and angular parts are clamped to the configured maximum magnitudes.
 */

export type Twist = [number, number, number, number, number, number];

export interface JogLimits {
  /** maximum linear speed [m/s] */
  maxLinear: number;
  /** maximum angular speed [rad/s] */
  maxAngular: number;
}

export const DEFAULT_LIMITS: JogLimits = { maxLinear: 0.5, maxAngular: 1.0 };

/** key -> (axis index, sign); WASD drives xy, Q/E drives z */
const KEY_AXES: Record<string, [number, number]> = {
  w: [0, +1],
  s: [0, -1],
  a: [1, +1],
  d: [1, -1],
  q: [2, +1],
  e: [2, -1],
};

export class JogInput {
  private pressed = new Set<string>();
  /** slider values, one per twist component, in physical units */
  sliders: Twist = [0, 0, 0, 0, 0, 0];
  readonly limits: JogLimits;
  /** speed contributed by a held key, before clamping */
  keySpeed: number;

  constructor(limits: JogLimits = DEFAULT_LIMITS, keySpeed?: number) {
    this.limits = limits;
    this.keySpeed = keySpeed ?? limits.maxLinear;
  }

  keyDown(key: string): void {
    const k = key.toLowerCase();
    if (k in KEY_AXES) this.pressed.add(k);
  }

  keyUp(key: string): void {
    this.pressed.delete(key.toLowerCase());
  }

  releaseAll(): void {
    this.pressed.clear();
  }

  setSlider(index: number, value: number): void {
    if (index >= 0 && index < 6 && Number.isFinite(value)) {
      this.sliders[index] = value;
    }
  }

  get anyActive(): boolean {
    return this.pressed.size > 0 || this.sliders.some((v) => v !== 0);
  }

  /** Component-wise key+slider sum, clamped per the configured limits. */
  twist(): Twist {
    const out: Twist = [...this.sliders];
    for (const k of this.pressed) {
      const [axis, sign] = KEY_AXES[k];
      out[axis] += sign * this.keySpeed;
    }
    clampPart(out, 0, this.limits.maxLinear);
    clampPart(out, 3, this.limits.maxAngular);
    return out;
  }
}

function clampPart(twist: Twist, offset: number, max: number): void {
  const norm = Math.hypot(twist[offset], twist[offset + 1], twist[offset + 2]);
  if (norm > max && norm > 0) {
    const s = max / norm;
    twist[offset] *= s;
    twist[offset + 1] *= s;
    twist[offset + 2] *= s;
  }
}
