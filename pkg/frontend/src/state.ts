/**
 * Viewer state: a loaded bundle plus the current control settings.
 * DOM-free so the loading/validation logic is unit-testable.
 */

import { blend, FusionSettings, WindowName } from "./blend.js";

export interface BundleMeta {
  version: number;
  width: number;
  height: number;
  hu_window: [number, number];
  files: { input: string; output: string; attention: string };
  checkpoint?: string;
  created?: string;
}

export interface ImagePlane {
  width: number;
  height: number;
  /** grayscale intensities in [0, 1], row-major */
  values: Float32Array;
}

export interface ViewerState {
  meta: BundleMeta;
  input: ImagePlane;
  output: ImagePlane;
  /** null when the bundle ships no usable attention map (fusion disabled) */
  attention: ImagePlane | null;
  settings: FusionSettings;
  window: WindowName;
  overlay: boolean;
}

export class BundleError extends Error {}

export function validateMeta(raw: unknown): BundleMeta {
  const m = raw as Partial<BundleMeta> | null;
  if (!m || typeof m !== "object") throw new BundleError("meta.json is not an object");
  if (typeof m.width !== "number" || typeof m.height !== "number"
      || m.width < 1 || m.height < 1) {
    throw new BundleError("meta.json: missing or invalid width/height");
  }
  const files = m.files as BundleMeta["files"] | undefined;
  if (!files || !files.input || !files.output || !files.attention) {
    throw new BundleError("meta.json: files.{input,output,attention} required");
  }
  const win = (m.hu_window ?? [0, 1]) as [number, number];
  return {
    version: m.version ?? 1,
    width: m.width,
    height: m.height,
    hu_window: win,
    files,
    checkpoint: m.checkpoint,
    created: m.created,
  };
}

export function makeState(
  meta: BundleMeta,
  input: ImagePlane,
  output: ImagePlane,
  attention: ImagePlane | null,
): ViewerState {
  for (const [name, plane] of [["input", input], ["output", output]] as const) {
    if (plane.width !== meta.width || plane.height !== meta.height) {
      throw new BundleError(
        `${name}.png is ${plane.width}x${plane.height}, meta says ${meta.width}x${meta.height}`);
    }
  }
  if (attention
      && (attention.width !== meta.width || attention.height !== meta.height)) {
    throw new BundleError("attention.png dimensions disagree with meta.json");
  }
  return {
    meta,
    input,
    output,
    attention,
    settings: { threshold: 0.5, tau: 1.0 },
    window: "exported",
    overlay: true,
  };
}

/**
 * Current fused image under the state's settings.  Pass-through display
 * of the restored output when the attention map is missing.
 */
export function fusedImage(state: ViewerState): Float32Array {
  if (!state.attention) return state.output.values.slice();
  return blend(state.input.values, state.output.values,
               state.attention.values, state.settings);
}
