/**
 * Line-delimited scoring protocol, one JSON object per UTF-8 line:
 *
 *   handshake (first line out): {"classes":[...],"max_batch":N}
 *   request  (line in):         {"id":k,"batch":[["tok",...],...]}
 *   response (line out):        {"id":k,"scores":[[...],...]}
 *   error    (line out):        {"id":k|null,"error":"..."}
 *
 * Responses come in request order (single-threaded loop). The returned exit
 * code is 1 if any error response was emitted, 0 on clean input close.
 */
import { createInterface } from "node:readline";
import type { Readable, Writable } from "node:stream";

export type Scorer = (batch: string[][]) => number[][];

export interface ServerConfig {
  scorer: Scorer;
  classes: string[];
  maxBatch: number;
}

function writeLine(output: Writable, message: unknown): void {
  output.write(JSON.stringify(message) + "\n");
}

function parseRequest(line: string): { id: number | null; batch: string[][] | null } {
  let id: number | null = null;
  let batch: string[][] | null = null;
  try {
    const msg = JSON.parse(line);
    if (typeof msg === "object" && msg !== null) {
      if (typeof msg.id === "number" && Number.isInteger(msg.id)) {
        id = msg.id;
      }
      if (
        Array.isArray(msg.batch) &&
        msg.batch.every((row: unknown) => Array.isArray(row))
      ) {
        batch = msg.batch as string[][];
      }
    }
  } catch {
    // fall through with nulls
  }
  return { id, batch };
}

export async function serve(
  input: Readable,
  output: Writable,
  config: ServerConfig,
): Promise<number> {
  if (config.classes.length < 2) {
    throw new Error("at least 2 classes required");
  }
  if (config.maxBatch < 1) {
    throw new Error("max_batch must be >= 1");
  }
  writeLine(output, { classes: config.classes, max_batch: config.maxBatch });
  let hadError = false;
  const lines = createInterface({ input, crlfDelay: Infinity });
  for await (const raw of lines) {
    const line = raw.trim();
    if (line === "") {
      continue;
    }
    const { id, batch } = parseRequest(line);
    if (id === null || batch === null) {
      writeLine(output, { id, error: "malformed request" });
      hadError = true;
      continue;
    }
    if (batch.length > config.maxBatch) {
      writeLine(output, { id, error: "batch exceeds max_batch" });
      hadError = true;
      continue;
    }
    const scores = config.scorer(batch);
    writeLine(output, { id, scores });
  }
  return hadError ? 1 : 0;
}
