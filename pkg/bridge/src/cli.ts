#!/usr/bin/env node
/**
 * Bridge process entry point.
 *
 * Usage: flowdist-bridge [--backend stub]
 *
 * Only the stub backend ships here; a real backend would load model weights
 * named by additional flags and register itself under a new --backend value.
 */

import { serve } from "./server.js";
import { StubBackend } from "./stub.js";

function main(): void {
  const args = process.argv.slice(2);
  let backend = "stub";
  for (let i = 0; i < args.length; i++) {
    if (args[i] === "--backend") {
      backend = args[i + 1] ?? "";
      i++;
    } else if (args[i] === "--help" || args[i] === "-h") {
      process.stdout.write("usage: flowdist-bridge [--backend stub]\n");
      process.exit(0);
    } else {
      process.stderr.write(`unknown argument: ${args[i]}\n`);
      process.exit(2);
    }
  }
  if (backend !== "stub") {
    process.stderr.write(`unknown backend: ${backend}\n`);
    process.exit(2);
  }
  serve(new StubBackend()).catch((err) => {
    process.stderr.write(`fatal: ${err}\n`);
    process.exit(1);
  });
}

main();
