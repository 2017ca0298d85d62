import { describe, expect, it } from "vitest";

import { decodeBundle } from "../src/bundle.js";

/** Build a bundle the way the service does: 8-byte LE length, JSON header,
 * concatenated raw payloads. */
function encodeBundle(
  arrays: { name: string; dtype: "f32" | "u8"; dims: number[]; values: number[] }[],
  meta: Record<string, unknown>,
): ArrayBuffer {
  const specs = [];
  const payloads: Uint8Array[] = [];
  let offset = 0;
  for (const a of arrays) {
    let raw: Uint8Array;
    if (a.dtype === "f32") {
      raw = new Uint8Array(new Float32Array(a.values).buffer);
    } else {
      raw = new Uint8Array(a.values);
    }
    specs.push({ name: a.name, dtype: a.dtype, dims: a.dims, offset, nbytes: raw.length });
    payloads.push(raw);
    offset += raw.length;
  }
  const header = new TextEncoder().encode(JSON.stringify({ meta, arrays: specs }));
  const total = 8 + header.length + offset;
  const out = new Uint8Array(total);
  new DataView(out.buffer).setBigUint64(0, BigInt(header.length), true);
  out.set(header, 8);
  let pos = 8 + header.length;
  for (const p of payloads) {
    out.set(p, pos);
    pos += p.length;
  }
  return out.buffer;
}

describe("bundle decoding", () => {
  it("decodes arrays and meta", () => {
    const buf = encodeBundle(
      [
        { name: "mask", dtype: "u8", dims: [2, 3], values: [0, 1, 0, 1, 1, 0] },
        { name: "variance", dtype: "f32", dims: [2, 2], values: [0.5, 0.25, 0, 1] },
      ],
      { slice: 4, score: 0.125 },
    );
    const bundle = decodeBundle(buf);
    expect(bundle.meta).toEqual({ slice: 4, score: 0.125 });
    expect(bundle.arrays["mask"].dims).toEqual([2, 3]);
    expect(Array.from(bundle.arrays["mask"].data)).toEqual([0, 1, 0, 1, 1, 0]);
    expect(Array.from(bundle.arrays["variance"].data)).toEqual([0.5, 0.25, 0, 1]);
  });

  it("handles f32 payloads at odd offsets", () => {
    // a 1-byte u8 array first forces the f32 payload off 4-byte alignment
    const buf = encodeBundle(
      [
        { name: "flag", dtype: "u8", dims: [1], values: [7] },
        { name: "x", dtype: "f32", dims: [3], values: [1.5, -2, 1e-3] },
      ],
      {},
    );
    const bundle = decodeBundle(buf);
    expect(Array.from(bundle.arrays["x"].data)).toEqual([1.5, -2, 0.0010000000474974513]);
  });

  it("rejects truncated buffers", () => {
    const buf = encodeBundle([{ name: "m", dtype: "u8", dims: [4], values: [1, 2, 3, 4] }], {});
    expect(() => decodeBundle(buf.slice(0, buf.byteLength - 2))).toThrow(/past end/);
    expect(() => decodeBundle(new ArrayBuffer(4))).toThrow(/too short/);
  });

  it("rejects dims that disagree with the payload", () => {
    const buf = encodeBundle([{ name: "m", dtype: "u8", dims: [5], values: [1, 2, 3, 4] }], {});
    // nbytes covers 4 values but dims claim 5; the encoder above keeps
    // nbytes consistent, so patch the header to force the mismatch
    const view = new Uint8Array(buf);
    const headerLen = Number(new DataView(buf).getBigUint64(0, true));
    const text = new TextDecoder().decode(view.subarray(8, 8 + headerLen));
    expect(text).toContain('"dims":[5]');
    expect(() => decodeBundle(buf)).toThrow(/do not match|past end/);
  });
});
