/**
 * Pure pixel math for the fusion viewer.
 *
 * All functions are non-destructive: sources are never mutated, every
 * call writes into a caller-provided or freshly allocated output.
 */

export interface FusionSettings {
  /** attention threshold in [0, 1]; pixels at or above get full restoration */
  threshold: number;
  /** blending strength tau in [0, 1] for the below-threshold region */
  tau: number;
}

/**
 * Selective fusion of the restored output with the original input:
 *   M = attention >= threshold
 *   fused = M * out + (1 - M) * (tau * out + (1 - tau) * in)
 *
 * Inputs are grayscale intensities in [0, 1]; output is written to `dst`
 * (allocated when omitted) and returned.
 */
export function blend(
  input: Float32Array,
  output: Float32Array,
  attention: Float32Array,
  settings: FusionSettings,
  dst?: Float32Array,
): Float32Array {
  const n = input.length;
  if (output.length !== n || attention.length !== n) {
    throw new Error(`blend: length mismatch (${n}, ${output.length}, ${attention.length})`);
  }
  const out = dst ?? new Float32Array(n);
  const { threshold, tau } = settings;
  for (let i = 0; i < n; i++) {
    out[i] = attention[i] >= threshold
      ? output[i]
      : tau * output[i] + (1 - tau) * input[i];
  }
  return out;
}

/** Quantize [0,1] intensities to 8-bit, matching PNG export rounding. */
export function toBytes(values: Float32Array, dst?: Uint8ClampedArray): Uint8ClampedArray {
  const out = dst ?? new Uint8ClampedArray(values.length);
  for (let i = 0; i < values.length; i++) {
    out[i] = Math.round(Math.min(Math.max(values[i], 0), 1) * 255);
  }
  return out;
}

/** Decode 8-bit grayscale samples to [0,1] floats. */
export function fromBytes(bytes: Uint8Array | Uint8ClampedArray): Float32Array {
  const out = new Float32Array(bytes.length);
  for (let i = 0; i < bytes.length; i++) out[i] = bytes[i] / 255;
  return out;
}

/** Display window presets applied to the already-exported intensities. */
export const DISPLAY_WINDOWS = {
  exported: { lo: 0.0, hi: 1.0 },
  "soft-contrast": { lo: 0.1, hi: 0.6 },
  "high-contrast": { lo: 0.2, hi: 0.45 },
} as const;

export type WindowName = keyof typeof DISPLAY_WINDOWS;

/** Linear window/level mapping of [0,1] intensities for display. */
export function applyWindow(values: Float32Array, name: WindowName): Float32Array {
  const { lo, hi } = DISPLAY_WINDOWS[name];
  const out = new Float32Array(values.length);
  const scale = 1 / (hi - lo);
  for (let i = 0; i < values.length; i++) {
    out[i] = Math.min(Math.max((values[i] - lo) * scale, 0), 1);
  }
  return out;
}

/**
 * Compose the attention overlay: grayscale base with the attention map
 * alpha-blended on top (red channel emphasis), RGBA output for a canvas.
 */
export function attentionOverlay(
  base: Float32Array,
  attention: Float32Array,
  alpha: number,
  dst?: Uint8ClampedArray,
): Uint8ClampedArray {
  const n = base.length;
  const out = dst ?? new Uint8ClampedArray(n * 4);
  for (let i = 0; i < n; i++) {
    const g = Math.round(Math.min(Math.max(base[i], 0), 1) * 255);
    const a = Math.min(Math.max(attention[i], 0), 1) * alpha;
    out[i * 4] = Math.round(g * (1 - a) + 255 * a);
    out[i * 4 + 1] = Math.round(g * (1 - a));
    out[i * 4 + 2] = Math.round(g * (1 - a));
    out[i * 4 + 3] = 255;
  }
  return out;
}
