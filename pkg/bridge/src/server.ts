/**
 * JSON-lines server loop: reads one request per line from an input stream,
 * dispatches to a backend, and writes exactly one response line per request,
 * strictly in arrival order.
 */

import { createInterface } from "node:readline";
import { Readable, Writable } from "node:stream";
import {
  Backend,
  BridgeRequest,
  FlowPayload,
  GeneratePayload,
  PROTOCOL_VERSION,
  errorResponse,
  okResponse,
} from "./protocol.js";

export function handleLine(backend: Backend, line: string): string | null {
  if (!line.trim()) return null;
  let request: BridgeRequest;
  try {
    request = JSON.parse(line);
  } catch {
    return JSON.stringify(errorResponse(null, "malformed JSON"));
  }
  const id = typeof request.id === "number" ? request.id : null;
  if (request.v !== PROTOCOL_VERSION) {
    return JSON.stringify(errorResponse(id, `unsupported protocol version ${request.v}`));
  }
  if (id === null) {
    return JSON.stringify(errorResponse(null, "request id must be an integer"));
  }
  try {
    switch (request.op) {
      case "capabilities":
        return JSON.stringify(okResponse(id, backend.capabilities()));
      case "generate":
        return JSON.stringify(
          okResponse(id, backend.generate((request.payload ?? {}) as unknown as GeneratePayload)),
        );
      case "flow":
        return JSON.stringify(
          okResponse(id, backend.flow((request.payload ?? {}) as unknown as FlowPayload)),
        );
      default:
        return JSON.stringify(errorResponse(id, "unsupported op"));
    }
  } catch (err) {
    return JSON.stringify(errorResponse(id, err instanceof Error ? err.message : String(err)));
  }
}

export async function serve(
  backend: Backend,
  input: Readable = process.stdin,
  output: Writable = process.stdout,
): Promise<void> {
  const rl = createInterface({ input });
  for await (const line of rl) {
    const response = handleLine(backend, line);
    if (response !== null) {
      output.write(response + "\n");
    }
  }
}
