/** Decoder for the service's binary slice/export bundles.
 *
 * Layout: 8-byte little-endian uint64 header length, JSON header
 * { meta, arrays: [{ name, dtype, dims, offset, nbytes }] }, then the raw
 * payloads. Offsets are relative to the payload region.
 */

export interface BundleArray {
  dims: number[];
  data: Float32Array | Uint8Array;
}

export interface Bundle {
  meta: Record<string, unknown>;
  arrays: Record<string, BundleArray>;
}

interface ArraySpec {
  name: string;
  dtype: string;
  dims: number[];
  offset: number;
  nbytes: number;
}

export function decodeBundle(buf: ArrayBuffer): Bundle {
  if (buf.byteLength < 8) {
    throw new Error(`bundle too short: ${buf.byteLength} bytes`);
  }
  const headerLen = Number(new DataView(buf).getBigUint64(0, true));
  if (8 + headerLen > buf.byteLength) {
    throw new Error("bundle header length exceeds buffer");
  }
  const headerText = new TextDecoder().decode(new Uint8Array(buf, 8, headerLen));
  const header = JSON.parse(headerText) as { meta: Record<string, unknown>; arrays: ArraySpec[] };
  const payloadStart = 8 + headerLen;

  const arrays: Record<string, BundleArray> = {};
  for (const spec of header.arrays) {
    const count = spec.dims.reduce((a, b) => a * b, 1);
    const start = payloadStart + spec.offset;
    if (start + spec.nbytes > buf.byteLength) {
      throw new Error(`array ${spec.name} extends past end of bundle`);
    }
    let data: Float32Array | Uint8Array;
    if (spec.dtype === "f32") {
      // payload may be unaligned relative to the buffer, so copy
      data = new Float32Array(buf.slice(start, start + spec.nbytes));
    } else if (spec.dtype === "u8") {
      data = new Uint8Array(buf.slice(start, start + spec.nbytes));
    } else {
      throw new Error(`unknown dtype ${spec.dtype}`);
    }
    if (data.length !== count) {
      throw new Error(`array ${spec.name}: dims ${spec.dims} do not match payload`);
    }
    arrays[spec.name] = { dims: spec.dims, data };
  }
  return { meta: header.meta, arrays };
}
