import { describe, expect, it } from "vitest";

import { COLORMAP_ANCHORS, blendOverlay, colormapValue } from "../src/colormap";

// the service's anchor definition, pinned verbatim
const SERVICE_ANCHORS = [
  [0, [0, 0, 1]],
  [1 / 3, [0, 1, 1]],
  [2 / 3, [1, 1, 0]],
  [1, [1, 0, 0]],
];

// colormap(k/16) computed by the service implementation
const SERVICE_RAMP = [
  [0.0, 0.0, 1.0], [0.0, 0.1875, 1.0], [0.0, 0.375, 1.0],
  [0.0, 0.5625, 1.0], [0.0, 0.75, 1.0], [0.0, 0.9375, 1.0],
  [0.125, 1.0, 0.875], [0.3125, 1.0, 0.6875], [0.5, 1.0, 0.5],
  [0.6875, 1.0, 0.3125], [0.875, 1.0, 0.125], [1.0, 0.9375, 0.0],
  [1.0, 0.75, 0.0], [1.0, 0.5625, 0.0], [1.0, 0.375, 0.0],
  [1.0, 0.1875, 0.0], [1.0, 0.0, 0.0],
];

describe("colormap", () => {
  it("pins the anchor definition to the service's", () => {
    expect(COLORMAP_ANCHORS.map(([p, c]) => [p, [...c]]))
      .toEqual(SERVICE_ANCHORS);
  });

  it("matches the service ramp at 17 sample points", () => {
    for (let k = 0; k <= 16; k++) {
      const got = colormapValue(k / 16);
      const want = SERVICE_RAMP[k]!;
      for (let ch = 0; ch < 3; ch++) {
        expect(Math.abs(got[ch]! - want[ch]!)).toBeLessThan(1e-9);
      }
    }
  });

  it("clamps out-of-range values", () => {
    expect(colormapValue(-0.5)).toEqual([0, 0, 1]);
    expect(colormapValue(1.5)).toEqual([1, 0, 0]);
  });
});

describe("blendOverlay", () => {
  const width = 2;
  const height = 2;
  const image = new Uint8ClampedArray([
    10, 20, 30, 255, 40, 50, 60, 255,
    70, 80, 90, 255, 200, 210, 220, 255,
  ]);
  const saliency = [0, 0.25, 0.75, 1];

  it("is pixel-identical to the source at alpha 0", () => {
    const out = blendOverlay(image, saliency, width, height, 0);
    expect([...out]).toEqual([...image]);
  });

  it("is the pure colormap at alpha 1", () => {
    const out = blendOverlay(image, saliency, width, height, 1);
    const expected = saliency.flatMap((v, p) => {
      const [r, g, b] = colormapValue(v);
      return [Math.round(r * 255), Math.round(g * 255), Math.round(b * 255),
              image[p * 4 + 3]!];
    });
    expect([...out]).toEqual(expected);
  });

  it("interpolates linearly in between", () => {
    const out = blendOverlay(image, saliency, width, height, 0.5);
    // pixel 0: saliency 0 -> blue (0,0,255)
    expect(out[0]).toBe(Math.round(0.5 * 10));
    expect(out[1]).toBe(Math.round(0.5 * 20));
    expect(out[2]).toBe(Math.round(0.5 * 30 + 0.5 * 255));
  });

  it("rejects mismatched buffer sizes", () => {
    expect(() => blendOverlay(image, [0], width, height, 0.5)).toThrow();
    expect(() => blendOverlay(new Uint8ClampedArray(4), saliency, width,
                              height, 0.5)).toThrow();
  });
});
