/**
 * Deterministic stub backend for protocol conformance testing.
 *
 * No models are loaded: "generate" echoes the source image count times and
 * "flow" returns an all-zero field matching the input dimensions — the
 * fixture a real flow model should approximate on a self-pair.
 */

import { Backend, FlowPayload, GeneratePayload } from "./protocol.js";
import { encodeFlo, pngInfo } from "./formats.js";

export class StubBackend implements Backend {
  capabilities() {
    return { generate: true, flow: true };
  }

  generate(payload: GeneratePayload): { images: string[] } {
    const count = Number(payload.count);
    if (!Number.isInteger(count) || count < 1) {
      throw new Error(`count must be a positive integer, got ${payload.count}`);
    }
    const image = Buffer.from(String(payload.image), "base64");
    pngInfo(image); // validates the input is a PNG
    return { images: Array.from({ length: count }, () => image.toString("base64")) };
  }

  flow(payload: FlowPayload): { flo: string } {
    const img0 = pngInfo(Buffer.from(String(payload.image0), "base64"));
    const img1 = pngInfo(Buffer.from(String(payload.image1), "base64"));
    if (img0.width !== img1.width || img0.height !== img1.height) {
      throw new Error(
        `image dimensions differ: ${img0.width}x${img0.height} vs ${img1.width}x${img1.height}`,
      );
    }
    const n = img0.width * img0.height;
    const flo = encodeFlo(new Float32Array(n), new Float32Array(n), img0.width, img0.height);
    return { flo: flo.toString("base64") };
  }
}
