/** Viewer session state machine.
 *
 * During an active session the viewer is locked to the queue: the only way
 * to reach a new slice is the service's advance endpoint, and only the
 * current slice accepts scribbles. Once the service reports done, the
 * session switches to a read-only browse mode over all slices.
 */

import { Pixel } from "./coords.js";

export type BrushLabel = "fg" | "bg";

export interface Stroke {
  label: BrushLabel;
  polyline: [number, number][]; // (r, c) pixels
  radius: number;
}

export interface ScribbleSetJson {
  slice: number;
  strokes: { label: BrushLabel; polyline: number[][]; radius: number }[];
}

export interface Overlays {
  uncertainty: boolean;
  mask: boolean;
  probability: boolean;
}

export interface Brush {
  label: BrushLabel;
  radius: number;
}

export type Phase = "idle" | "reviewing" | "done";

export interface ViewerState {
  sessionId: string;
  numSlices: number;
  phase: Phase;
  current: number | null; // slice offered by the service, null before first advance
  visited: number[]; // slices fetched so far, in queue order
  strokes: Stroke[]; // undo stack for the current slice
  overlays: Overlays;
  brush: Brush;
}

export interface AdvanceResponse {
  done: boolean;
  next?: number;
  score?: number;
}

export function initialState(sessionId: string, numSlices: number): ViewerState {
  if (numSlices < 1) throw new Error("session has no slices");
  return {
    sessionId,
    numSlices,
    phase: "idle",
    current: null,
    visited: [],
    strokes: [],
    overlays: { uncertainty: true, mask: true, probability: false },
    brush: { label: "fg", radius: 1 },
  };
}

export function applyAdvance(state: ViewerState, resp: AdvanceResponse): ViewerState {
  if (state.phase === "done") throw new Error("session already finished");
  if (resp.done) {
    return { ...state, phase: "done", current: null, strokes: [] };
  }
  if (resp.next === undefined || resp.next < 0 || resp.next >= state.numSlices) {
    throw new Error(`advance returned bad slice ${resp.next}`);
  }
  return {
    ...state,
    phase: "reviewing",
    current: resp.next,
    visited: [...state.visited, resp.next],
    strokes: [],
  };
}

/** Queue discipline: while the session runs, only the offered slice is
 * viewable; after done, everything is (read-only browsing). */
export function canView(state: ViewerState, slice: number): boolean {
  if (slice < 0 || slice >= state.numSlices) return false;
  if (state.phase === "done") return true;
  return state.current === slice;
}

export function addStroke(state: ViewerState, polyline: Pixel[]): ViewerState {
  if (state.phase !== "reviewing") throw new Error("no active slice");
  if (polyline.length === 0) return state;
  const stroke: Stroke = {
    label: state.brush.label,
    polyline: polyline.map((p) => [p.r, p.c]),
    radius: state.brush.radius,
  };
  return { ...state, strokes: [...state.strokes, stroke] };
}

export function undoStroke(state: ViewerState): ViewerState {
  return { ...state, strokes: state.strokes.slice(0, -1) };
}

export function clearStrokes(state: ViewerState): ViewerState {
  return { ...state, strokes: [] };
}

/** Serialize the current slice's strokes in the service's scribble schema. */
export function toScribbleSet(state: ViewerState): ScribbleSetJson {
  if (state.current === null) throw new Error("no active slice");
  return {
    slice: state.current,
    strokes: state.strokes.map((s) => ({
      label: s.label,
      polyline: s.polyline.map((p) => [p[0], p[1]]),
      radius: s.radius,
    })),
  };
}
