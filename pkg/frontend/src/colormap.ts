/**
 * Saliency colormap and overlay blending, kept formula-identical to the
 * service's renderer: anchors 0 -> blue, 1/3 -> cyan, 2/3 -> yellow,
 * 1 -> red with linear interpolation, blend = (1-alpha)*image + alpha*color.
 * Snapshot tests pin these anchors against the server's definition.
 */

export type Rgb = readonly [number, number, number];

export const COLORMAP_ANCHORS: ReadonlyArray<readonly [number, Rgb]> = [
  [0, [0, 0, 1]],
  [1 / 3, [0, 1, 1]],
  [2 / 3, [1, 1, 0]],
  [1, [1, 0, 0]],
];

export function colormapValue(value: number): Rgb {
  const v = Math.min(1, Math.max(0, value));
  let idx = COLORMAP_ANCHORS.length - 2;
  for (let i = 0; i < COLORMAP_ANCHORS.length - 1; i++) {
    const next = COLORMAP_ANCHORS[i + 1]!;
    if (v <= next[0]) {
      idx = i;
      break;
    }
  }
  const [leftPos, leftColor] = COLORMAP_ANCHORS[idx]!;
  const [rightPos, rightColor] = COLORMAP_ANCHORS[idx + 1]!;
  const t = (v - leftPos) / (rightPos - leftPos);
  return [
    leftColor[0] * (1 - t) + rightColor[0] * t,
    leftColor[1] * (1 - t) + rightColor[1] * t,
    leftColor[2] * (1 - t) + rightColor[2] * t,
  ];
}

/**
 * Blend a saliency grid over RGBA pixel data. Pure; at alpha = 0 the output
 * bytes equal the input bytes exactly.
 */
export function blendOverlay(
  imageRgba: Uint8ClampedArray,
  saliency: ReadonlyArray<number>,
  width: number,
  height: number,
  alpha: number,
): Uint8ClampedArray {
  if (imageRgba.length !== width * height * 4) {
    throw new Error(`pixel buffer length ${imageRgba.length} != ${width}x${height}x4`);
  }
  if (saliency.length !== width * height) {
    throw new Error(`saliency length ${saliency.length} != ${width}x${height}`);
  }
  const out = new Uint8ClampedArray(imageRgba.length);
  for (let p = 0; p < width * height; p++) {
    const [cr, cg, cb] = colormapValue(saliency[p]!);
    const base = p * 4;
    out[base] = Math.round((1 - alpha) * imageRgba[base]! + alpha * cr * 255);
    out[base + 1] = Math.round((1 - alpha) * imageRgba[base + 1]! + alpha * cg * 255);
    out[base + 2] = Math.round((1 - alpha) * imageRgba[base + 2]! + alpha * cb * 255);
    out[base + 3] = imageRgba[base + 3]!;
  }
  return out;
}
