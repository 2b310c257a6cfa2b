/** DOM wiring: bundle loading, sliders, and canvas rendering. */

import { applyWindow, attentionOverlay, toBytes, WindowName } from "./blend.js";
import { BundleError, fusedImage, ImagePlane, makeState, validateMeta, ViewerState } from "./state.js";

let state: ViewerState | null = null;
let renderQueued = false;

const $ = (id: string) => document.getElementById(id) as HTMLElement;

function banner(message: string | null): void {
  const el = $("banner");
  el.textContent = message ?? "";
  el.style.display = message ? "block" : "none";
}

function notice(message: string | null): void {
  const el = $("notice");
  el.textContent = message ?? "";
  el.style.display = message ? "block" : "none";
}

async function decodePng(blob: Blob): Promise<ImagePlane> {
  const bitmap = await createImageBitmap(blob);
  const canvas = document.createElement("canvas");
  canvas.width = bitmap.width;
  canvas.height = bitmap.height;
  const ctx = canvas.getContext("2d", { willReadFrequently: true })!;
  ctx.drawImage(bitmap, 0, 0);
  const data = ctx.getImageData(0, 0, bitmap.width, bitmap.height).data;
  const values = new Float32Array(bitmap.width * bitmap.height);
  for (let i = 0; i < values.length; i++) values[i] = data[i * 4] / 255;
  return { width: bitmap.width, height: bitmap.height, values };
}

async function loadFromFiles(files: FileList): Promise<void> {
  const byName = new Map<string, File>();
  for (const f of Array.from(files)) byName.set(f.name, f);
  const metaFile = byName.get("meta.json");
  if (!metaFile) throw new BundleError("select the bundle's meta.json and PNG files");
  const meta = validateMeta(JSON.parse(await metaFile.text()));
  const need = (name: string) => {
    const f = byName.get(name);
    if (!f) throw new BundleError(`missing bundle member ${name}`);
    return f;
  };
  const input = await decodePng(need(meta.files.input));
  const output = await decodePng(need(meta.files.output));
  let attention: ImagePlane | null = null;
  const attFile = byName.get(meta.files.attention);
  if (attFile) attention = await decodePng(attFile);
  applyBundle(meta, input, output, attention);
}

async function loadFromUrl(dir: string): Promise<void> {
  const fetchJson = async (p: string) => {
    const r = await fetch(p);
    if (!r.ok) throw new BundleError(`cannot fetch ${p}: ${r.status}`);
    return r.json();
  };
  const fetchPng = async (p: string) => {
    const r = await fetch(p);
    if (!r.ok) throw new BundleError(`cannot fetch ${p}: ${r.status}`);
    return decodePng(await r.blob());
  };
  const meta = validateMeta(await fetchJson(`${dir}/meta.json`));
  const input = await fetchPng(`${dir}/${meta.files.input}`);
  const output = await fetchPng(`${dir}/${meta.files.output}`);
  let attention: ImagePlane | null = null;
  try {
    attention = await fetchPng(`${dir}/${meta.files.attention}`);
  } catch {
    attention = null;
  }
  applyBundle(meta, input, output, attention);
}

function applyBundle(meta: ReturnType<typeof validateMeta>, input: ImagePlane,
                     output: ImagePlane, attention: ImagePlane | null): void {
  state = makeState(meta, input, output, attention);
  banner(null);
  notice(attention ? null
                   : "no attention map in bundle: fusion disabled, showing the restored output as-is");
  const controls = $("controls") as HTMLFieldSetElement;
  controls.disabled = false;
  ($("tau") as HTMLInputElement).value = String(state.settings.tau);
  ($("threshold") as HTMLInputElement).value = String(state.settings.threshold);
  $("meta-line").textContent =
    `${meta.width}×${meta.height}  HU window [${meta.hu_window[0]}, ${meta.hu_window[1]}]`
    + (meta.checkpoint ? `  checkpoint: ${meta.checkpoint}` : "");
  queueRender();
}

function paintGray(canvas: HTMLCanvasElement, values: Float32Array,
                   width: number, height: number): void {
  canvas.width = width;
  canvas.height = height;
  const ctx = canvas.getContext("2d")!;
  const img = ctx.createImageData(width, height);
  const bytes = toBytes(values);
  for (let i = 0; i < bytes.length; i++) {
    img.data[i * 4] = img.data[i * 4 + 1] = img.data[i * 4 + 2] = bytes[i];
    img.data[i * 4 + 3] = 255;
  }
  ctx.putImageData(img, 0, 0);
}

function render(): void {
  renderQueued = false;
  if (!state) return;
  const { width, height } = state.meta;
  const win = state.window;
  paintGray($("pane-input") as HTMLCanvasElement,
            applyWindow(state.input.values, win), width, height);
  const fused = fusedImage(state);
  paintGray($("pane-fused") as HTMLCanvasElement, applyWindow(fused, win),
            width, height);
  const overlayCanvas = $("pane-attention") as HTMLCanvasElement;
  overlayCanvas.width = width;
  overlayCanvas.height = height;
  const ctx = overlayCanvas.getContext("2d")!;
  const img = ctx.createImageData(width, height);
  const base = applyWindow(fused, win);
  if (state.attention && state.overlay) {
    img.data.set(attentionOverlay(base, state.attention.values, 0.6));
  } else {
    const bytes = toBytes(base);
    for (let i = 0; i < bytes.length; i++) {
      img.data[i * 4] = img.data[i * 4 + 1] = img.data[i * 4 + 2] = bytes[i];
      img.data[i * 4 + 3] = 255;
    }
  }
  ctx.putImageData(img, 0, 0);
  $("readout").textContent =
    `t = ${state.settings.threshold.toFixed(2)}   τ = ${state.settings.tau.toFixed(2)}`;
}

/** Coalesce control changes into one repaint per animation frame. */
function queueRender(): void {
  if (!renderQueued) {
    renderQueued = true;
    requestAnimationFrame(render);
  }
}

function wire(): void {
  ($("file-input") as HTMLInputElement).addEventListener("change", (e) => {
    const files = (e.target as HTMLInputElement).files;
    if (files && files.length) {
      loadFromFiles(files).catch((err) => banner(String(err.message ?? err)));
    }
  });
  $("load-url").addEventListener("click", () => {
    const dir = ($("url-input") as HTMLInputElement).value.replace(/\/$/, "");
    loadFromUrl(dir).catch((err) => banner(String(err.message ?? err)));
  });
  ($("tau") as HTMLInputElement).addEventListener("input", (e) => {
    if (state) {
      state.settings.tau = Number((e.target as HTMLInputElement).value);
      queueRender();
    }
  });
  ($("threshold") as HTMLInputElement).addEventListener("input", (e) => {
    if (state) {
      state.settings.threshold = Number((e.target as HTMLInputElement).value);
      queueRender();
    }
  });
  ($("window-select") as HTMLSelectElement).addEventListener("change", (e) => {
    if (state) {
      state.window = (e.target as HTMLSelectElement).value as WindowName;
      queueRender();
    }
  });
  ($("overlay") as HTMLInputElement).addEventListener("change", (e) => {
    if (state) {
      state.overlay = (e.target as HTMLInputElement).checked;
      queueRender();
    }
  });
}

wire();
