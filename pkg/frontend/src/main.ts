/** Browser entry point: wires the canvas viewer to the session service. */

import { createApi } from "./api.js";
import { Bundle } from "./bundle.js";
import { canvasToPixel, downsamplePath, Pixel, View } from "./coords.js";
import { compositeSlice, maskContour } from "./render.js";
import {
  addStroke,
  applyAdvance,
  clearStrokes,
  initialState,
  toScribbleSet,
  undoStroke,
  ViewerState,
} from "./state.js";

const api = createApi("");

let state: ViewerState | null = null;
let bundle: Bundle | null = null;
let view: View = { zoom: 6, panX: 0, panY: 0 };
let path: Pixel[] = [];
let drawing = false;

const canvas = document.getElementById("viewer") as HTMLCanvasElement;
const ctx = canvas.getContext("2d")!;
const status = document.getElementById("status")!;

function dims(): { h: number; w: number } {
  const d = bundle!.arrays["image_u8"].dims;
  return { h: d[0], w: d[1] };
}

function redraw() {
  if (!state || !bundle) return;
  const { h, w } = dims();
  const rgba = compositeSlice(
    bundle.arrays["image_u8"].data as Uint8Array,
    state.overlays.uncertainty ? (bundle.arrays["variance"].data as Float32Array) : null,
    h,
    w,
    { uncertainty: state.overlays.uncertainty, mask: state.overlays.mask },
  );
  const off = new OffscreenCanvas(w, h);
  off.getContext("2d")!.putImageData(new ImageData(new Uint8ClampedArray(rgba), w, h), 0, 0);
  ctx.imageSmoothingEnabled = false;
  ctx.clearRect(0, 0, canvas.width, canvas.height);
  ctx.drawImage(off, view.panX, view.panY, w * view.zoom, h * view.zoom);

  if (state.overlays.mask) {
    ctx.strokeStyle = "#00e5ff";
    ctx.lineWidth = 1.5;
    ctx.beginPath();
    for (const [[y0, x0], [y1, x1]] of maskContour(bundle.arrays["mask"].data as Uint8Array, h, w)) {
      ctx.moveTo((x0 + 0.5) * view.zoom + view.panX, (y0 + 0.5) * view.zoom + view.panY);
      ctx.lineTo((x1 + 0.5) * view.zoom + view.panX, (y1 + 0.5) * view.zoom + view.panY);
    }
    ctx.stroke();
  }

  // in-progress and committed strokes
  for (const s of [...state.strokes.map((st) => st.polyline), path.map((p) => [p.r, p.c])]) {
    ctx.strokeStyle = state.brush.label === "fg" ? "#7CFC00" : "#ff5252";
    ctx.lineWidth = Math.max(1, state.brush.radius * view.zoom);
    ctx.beginPath();
    for (let i = 0; i < s.length; i++) {
      const x = (s[i][1] + 0.5) * view.zoom + view.panX;
      const y = (s[i][0] + 0.5) * view.zoom + view.panY;
      if (i === 0) ctx.moveTo(x, y);
      else ctx.lineTo(x, y);
    }
    ctx.stroke();
  }
}

async function loadCurrent() {
  if (!state || state.current === null) return;
  bundle = await api.getSlice(state.sessionId, state.current);
  status.textContent = `slice ${state.current} (score ${(bundle.meta["score"] as number).toFixed(4)})`;
  redraw();
}

async function advance() {
  if (!state) return;
  const resp = await api.advance(state.sessionId);
  state = applyAdvance(state, resp);
  if (state.phase === "done") {
    status.textContent = "review finished";
    const link = document.getElementById("export") as HTMLAnchorElement;
    link.href = api.exportUrl(state.sessionId);
    link.hidden = false;
    bundle = null;
    redraw();
  } else {
    await loadCurrent();
  }
}

canvas.addEventListener("pointerdown", (ev) => {
  if (!state || state.phase !== "reviewing" || !bundle) return;
  drawing = true;
  path = [];
  const { h, w } = dims();
  path.push(canvasToPixel(ev.offsetX, ev.offsetY, view, h, w));
});

canvas.addEventListener("pointermove", (ev) => {
  if (!drawing || !bundle) return;
  const { h, w } = dims();
  path.push(canvasToPixel(ev.offsetX, ev.offsetY, view, h, w));
  redraw();
});

canvas.addEventListener("pointerup", () => {
  if (!drawing || !state) return;
  drawing = false;
  state = addStroke(state, downsamplePath(path));
  path = [];
  redraw();
});

canvas.addEventListener("wheel", (ev) => {
  ev.preventDefault();
  const factor = ev.deltaY < 0 ? 1.25 : 0.8;
  // zoom about the cursor so the pixel under it stays put
  view = {
    zoom: view.zoom * factor,
    panX: ev.offsetX - (ev.offsetX - view.panX) * factor,
    panY: ev.offsetY - (ev.offsetY - view.panY) * factor,
  };
  redraw();
});

function button(id: string, handler: () => void) {
  document.getElementById(id)!.addEventListener("click", handler);
}

button("start", async () => {
  const form = new FormData();
  for (const name of ["stack_header", "stack_raw", "probs_header", "probs_raw"]) {
    const input = document.getElementById(name) as HTMLInputElement;
    if (!input.files?.length) {
      status.textContent = `missing file: ${name}`;
      return;
    }
    form.append(name, input.files[0]);
  }
  form.append("config", "{}");
  const summary = await api.createSession(form);
  state = initialState(summary.id, summary.num_slices);
  await advance();
});

button("refine", async () => {
  if (!state || state.current === null) return;
  bundle = await api.submitScribbles(state.sessionId, toScribbleSet(state));
  state = clearStrokes(state);
  redraw();
});

button("skip", advance);
button("undo", () => {
  if (!state) return;
  state = undoStroke(state);
  redraw();
});
button("brush-fg", () => state && (state = { ...state, brush: { ...state.brush, label: "fg" } }));
button("brush-bg", () => state && (state = { ...state, brush: { ...state.brush, label: "bg" } }));
button("toggle-heat", () => {
  if (!state) return;
  state = { ...state, overlays: { ...state.overlays, uncertainty: !state.overlays.uncertainty } };
  redraw();
});
button("toggle-mask", () => {
  if (!state) return;
  state = { ...state, overlays: { ...state.overlays, mask: !state.overlays.mask } };
  redraw();
});
