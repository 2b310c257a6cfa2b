/**
 * Cross-component consistency: the viewer's blend on one exported bundle
 * must match the primary package's clinical_fuse within 1/255 per pixel
 * across a 5x5 grid of (threshold, tau) settings.  Fixtures are produced
 * by frontend/tools/make_fixtures.py from a real simulate/train/infer/
 * export-ui run.
 */

import { readFileSync } from "node:fs";
import { dirname, join } from "node:path";
import { fileURLToPath } from "node:url";

import { describe, expect, it } from "vitest";

import { blend, fromBytes, toBytes } from "../src/blend.js";
import { decodeGrayPng } from "./png.js";

const here = dirname(fileURLToPath(import.meta.url));
const fixtures = join(here, "fixtures");

function loadPlane(name: string) {
  const img = decodeGrayPng(readFileSync(join(fixtures, name)));
  return { ...img, values: fromBytes(img.pixels) };
}

describe("viewer blend vs primary clinical_fuse", () => {
  const input = loadPlane("input.png");
  const output = loadPlane("output.png");
  const attention = loadPlane("attention.png");
  const meta = JSON.parse(readFileSync(join(fixtures, "meta.json"), "utf8"));
  const expected = JSON.parse(readFileSync(join(fixtures, "expected.json"), "utf8"));

  it("bundle planes agree with meta.json dimensions", () => {
    for (const plane of [input, output, attention]) {
      expect(plane.width).toBe(meta.width);
      expect(plane.height).toBe(meta.height);
    }
  });

  it("matches within 1/255 on the full 5x5 settings grid", () => {
    const grid: number[] = expected.grid;
    expect(grid.length).toBe(5);
    for (const t of grid) {
      for (const tau of grid) {
        const fused = blend(input.values, output.values, attention.values,
                            { threshold: t, tau });
        const bytes = toBytes(fused);
        const key = `t${t.toFixed(2)}_tau${tau.toFixed(2)}`;
        const want: number[] = expected.fused[key];
        expect(want.length).toBe(bytes.length);
        let worst = 0;
        for (let i = 0; i < bytes.length; i++) {
          worst = Math.max(worst, Math.abs(bytes[i] - want[i]));
        }
        expect(worst, `grid point ${key}`).toBeLessThanOrEqual(1);
      }
    }
  });

  it("tau = 1 reproduces output.png bytes exactly", () => {
    const fused = blend(input.values, output.values, attention.values,
                        { threshold: 0.5, tau: 1 });
    expect(Array.from(toBytes(fused))).toEqual(Array.from(output.pixels));
  });
});
