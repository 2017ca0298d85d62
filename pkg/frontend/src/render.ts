/** DOM-free compositing: grayscale base, translucent uncertainty heatmap,
 * and a marching-squares mask contour. Outputs plain RGBA buffers and
 * segment lists so rendering is testable without a canvas. */

export interface Toggles {
  uncertainty: boolean;
  mask: boolean;
}

/** Composite one slice into an RGBA buffer of height*width pixels.
 *
 * The uncertainty map is normalized to [0, 1] by its max before coloring,
 * so an all-zero map contributes nothing (alpha 0 everywhere).
 */
export function compositeSlice(
  image: Uint8Array,
  uncertainty: Float32Array | null,
  height: number,
  width: number,
  toggles: Toggles,
): Uint8ClampedArray {
  const n = height * width;
  if (image.length !== n) throw new Error("image size mismatch");
  const out = new Uint8ClampedArray(n * 4);
  let uMax = 0;
  if (toggles.uncertainty && uncertainty) {
    for (let i = 0; i < uncertainty.length; i++) {
      if (uncertainty[i] > uMax) uMax = uncertainty[i];
    }
  }
  for (let i = 0; i < n; i++) {
    let r = image[i];
    let g = image[i];
    let b = image[i];
    if (toggles.uncertainty && uncertainty && uMax > 0) {
      const u = uncertainty[i] / uMax; // in [0, 1]
      const a = 0.6 * u;
      // blend towards an orange-red ramp, hotter with u
      r = (1 - a) * r + a * 255;
      g = (1 - a) * g + a * (160 * (1 - u));
      b = (1 - a) * b + a * 0;
    }
    out[4 * i] = r;
    out[4 * i + 1] = g;
    out[4 * i + 2] = b;
    out[4 * i + 3] = 255;
  }
  return out;
}

export type Segment = [[number, number], [number, number]]; // [[y0,x0],[y1,x1]]

// marching squares edge table; corner bits: 1=tl 2=tr 4=br 8=bl,
// edges keyed t/r/b/l at cell-edge midpoints
const EDGE_TABLE: string[][] = [
  [], ["lt"], ["tr"], ["lr"],
  ["rb"], ["lt", "rb"], ["tb"], ["lb"],
  ["bl"], ["tb"], ["tr", "bl"], ["rb"],
  ["lr"], ["tr"], ["lt"], [],
];

/** Contour segments of a binary mask in pixel-center coordinates.
 * Every segment endpoint sits at the midpoint between two pixels with
 * different mask values. */
export function maskContour(mask: Uint8Array, height: number, width: number): Segment[] {
  const at = (r: number, c: number) => (mask[r * width + c] > 0 ? 1 : 0);
  const segments: Segment[] = [];
  for (let r = 0; r < height - 1; r++) {
    for (let c = 0; c < width - 1; c++) {
      const idx =
        at(r, c) | (at(r, c + 1) << 1) | (at(r + 1, c + 1) << 2) | (at(r + 1, c) << 3);
      const mids: Record<string, [number, number]> = {
        t: [r, c + 0.5],
        r: [r + 0.5, c + 1],
        b: [r + 1, c + 0.5],
        l: [r + 0.5, c],
      };
      for (const pair of EDGE_TABLE[idx]) {
        segments.push([mids[pair[0]], mids[pair[1]]]);
      }
    }
  }
  return segments;
}
