/**
 * Minimal byte-level helpers: PNG dimension parsing and Middlebury .flo
 * encoding. The stub backend only needs image dimensions and zero-flow
 * fixtures, so no full PNG pixel decode is required here.
 */

const PNG_SIGNATURE = Buffer.from([0x89, 0x50, 0x4e, 0x47, 0x0d, 0x0a, 0x1a, 0x0a]);

export const FLO_MAGIC = 202021.25;

export interface PngInfo {
  width: number;
  height: number;
  bitDepth: number;
  colorType: number;
}

/** Parse the IHDR chunk of a PNG buffer. Throws on anything malformed. */
export function pngInfo(data: Buffer): PngInfo {
  if (data.length < 33 || !data.subarray(0, 8).equals(PNG_SIGNATURE)) {
    throw new Error("not a PNG: bad signature");
  }
  const length = data.readUInt32BE(8);
  const tag = data.toString("latin1", 12, 16);
  if (tag !== "IHDR" || length !== 13) {
    throw new Error(`expected IHDR as first chunk, found ${tag}`);
  }
  return {
    width: data.readUInt32BE(16),
    height: data.readUInt32BE(20),
    bitDepth: data.readUInt8(24),
    colorType: data.readUInt8(25),
  };
}

/** Serialize a dense (u, v) field as little-endian .flo bytes. */
export function encodeFlo(u: Float32Array, v: Float32Array, width: number, height: number): Buffer {
  if (u.length !== width * height || v.length !== width * height) {
    throw new Error("flow component length does not match dimensions");
  }
  const out = Buffer.alloc(12 + 8 * width * height);
  out.writeFloatLE(FLO_MAGIC, 0);
  out.writeInt32LE(width, 4);
  out.writeInt32LE(height, 8);
  for (let i = 0; i < width * height; i++) {
    out.writeFloatLE(u[i], 12 + 8 * i);
    out.writeFloatLE(v[i], 16 + 8 * i);
  }
  return out;
}
