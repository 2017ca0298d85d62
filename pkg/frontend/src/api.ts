/** Thin client for the refinement service HTTP API. */

import { Bundle, decodeBundle } from "./bundle.js";
import { AdvanceResponse, ScribbleSetJson } from "./state.js";

export interface SessionSummary {
  id: string;
  num_slices: number;
  cutoff: number;
  queue: { slice: number; score: number }[];
  state: string;
}

export type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

export class ApiError extends Error {
  constructor(public status: number, message: string) {
    super(message);
  }
}

async function check(resp: Response): Promise<Response> {
  if (!resp.ok) {
    throw new ApiError(resp.status, await resp.text());
  }
  return resp;
}

export function createApi(baseUrl: string, fetchImpl: FetchLike = fetch) {
  const url = (path: string) => baseUrl.replace(/\/$/, "") + path;
  return {
    async createSession(form: FormData): Promise<SessionSummary> {
      const resp = await check(await fetchImpl(url("/sessions"), { method: "POST", body: form }));
      return resp.json();
    },
    async getSession(id: string): Promise<SessionSummary> {
      const resp = await check(await fetchImpl(url(`/sessions/${id}`)));
      return resp.json();
    },
    async advance(id: string): Promise<AdvanceResponse> {
      const resp = await check(await fetchImpl(url(`/sessions/${id}/advance`), { method: "POST" }));
      return resp.json();
    },
    async getSlice(id: string, k: number): Promise<Bundle> {
      const resp = await check(await fetchImpl(url(`/sessions/${id}/slices/${k}`)));
      return decodeBundle(await resp.arrayBuffer());
    },
    async submitScribbles(id: string, scribbles: ScribbleSetJson): Promise<Bundle> {
      const resp = await check(
        await fetchImpl(url(`/sessions/${id}/slices/${scribbles.slice}/scribbles`), {
          method: "POST",
          headers: { "Content-Type": "application/json" },
          body: JSON.stringify(scribbles),
        }),
      );
      return decodeBundle(await resp.arrayBuffer());
    },
    exportUrl(id: string): string {
      return url(`/sessions/${id}/export`);
    },
  };
}

export type Api = ReturnType<typeof createApi>;
