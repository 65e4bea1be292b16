/**
 * Wire protocol shared by every bridge backend.
 *
 * One JSON object per line over stdin/stdout. Every message carries a
 * protocol version field "v": 1. Requests carry an integer id that the
 * matching response echoes; a malformed request line is answered with an
 * error response whose id is null. Images cross the boundary as base64 PNG
 * bytes, flows as base64 Middlebury .flo bytes.
 */

export const PROTOCOL_VERSION = 1;

export type Op = "capabilities" | "generate" | "flow";

export interface BridgeRequest {
  v: number;
  id: number;
  op: Op;
  payload?: Record<string, unknown>;
}

export interface BridgeResponse {
  v: number;
  id: number | null;
  ok: boolean;
  payload?: Record<string, unknown>;
  error?: string;
}

export interface GeneratePayload {
  image: string; // base64 PNG
  count: number;
  delta: number;
  t_inv: number;
  prompt_token?: string;
  seed?: number;
}

export interface FlowPayload {
  image0: string; // base64 PNG
  image1: string; // base64 PNG
}

/** A backend hosts the actual models (or deterministic stub fixtures). */
export interface Backend {
  capabilities(): { generate: boolean; flow: boolean };
  generate(payload: GeneratePayload): { images: string[] };
  flow(payload: FlowPayload): { flo: string };
}

export function okResponse(id: number, payload: Record<string, unknown>): BridgeResponse {
  return { v: PROTOCOL_VERSION, id, ok: true, payload };
}

export function errorResponse(id: number | null, message: string): BridgeResponse {
  return { v: PROTOCOL_VERSION, id, ok: false, error: message };
}
