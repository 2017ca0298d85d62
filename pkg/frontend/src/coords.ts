/** Canvas <-> image pixel mapping under zoom and pan.
 *
 * Image pixel (r, c) occupies the canvas square
 * [panX + c*zoom, panX + (c+1)*zoom) x [panY + r*zoom, panY + (r+1)*zoom),
 * so a pixel's canvas center is at (c + 0.5) * zoom + panX.
 */

export interface View {
  zoom: number;
  panX: number;
  panY: number;
}

export interface Pixel {
  r: number;
  c: number;
}

export function pixelCenterToCanvas(p: Pixel, v: View): { x: number; y: number } {
  return {
    x: (p.c + 0.5) * v.zoom + v.panX,
    y: (p.r + 0.5) * v.zoom + v.panY,
  };
}

export function canvasToPixel(
  x: number,
  y: number,
  v: View,
  height: number,
  width: number,
): Pixel {
  const c = Math.floor((x - v.panX) / v.zoom);
  const r = Math.floor((y - v.panY) / v.zoom);
  return {
    r: Math.min(Math.max(r, 0), height - 1),
    c: Math.min(Math.max(c, 0), width - 1),
  };
}

/** Downsample a pointer path so consecutive points are at most maxStep
 * pixels apart in image space, dropping exact repeats. A single click
 * yields a one-point polyline. */
export function downsamplePath(points: Pixel[], maxStep = 2): Pixel[] {
  if (points.length === 0) return [];
  const out: Pixel[] = [points[0]];
  for (const p of points.slice(1)) {
    const last = out[out.length - 1];
    const d = Math.max(Math.abs(p.r - last.r), Math.abs(p.c - last.c));
    if (d >= maxStep) {
      out.push(p);
    }
  }
  // keep the final point so the stroke ends where the pointer lifted
  const tail = points[points.length - 1];
  const last = out[out.length - 1];
  if (tail.r !== last.r || tail.c !== last.c) {
    out.push(tail);
  }
  return out;
}
