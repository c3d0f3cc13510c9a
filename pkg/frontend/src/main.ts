import { parseArgs } from "node:util";
import { pathToFileURL } from "node:url";
import { resolve } from "node:path";

import { serve, type Scorer } from "./server.js";
import { STUB_CLASSES, stubScores } from "./stub.js";

async function loadScorer(model: string): Promise<{ scorer: Scorer; classes: string[] }> {
  if (model === "stub") {
    return { scorer: stubScores, classes: STUB_CLASSES };
  }
  // anything else is a path to a module exporting score(batch) -> number[][]
  // and optionally classes: string[]
  const mod = await import(pathToFileURL(resolve(model)).href);
  const scorer: Scorer | undefined = mod.score ?? mod.default;
  if (typeof scorer !== "function") {
    throw new Error(`model module ${model} exports no score(batch) function`);
  }
  return { scorer, classes: mod.classes ?? STUB_CLASSES };
}

async function main(): Promise<number> {
  const { values } = parseArgs({
    options: {
      model: { type: "string", default: "stub" },
      classes: { type: "string" },
      "max-batch": { type: "string", default: "64" },
    },
  });
  const { scorer, classes } = await loadScorer(values.model as string);
  const declared = values.classes
    ? (values.classes as string).split(",").filter((c) => c.length > 0)
    : classes;
  const maxBatch = Number.parseInt(values["max-batch"] as string, 10);
  return serve(process.stdin, process.stdout, {
    scorer,
    classes: declared,
    maxBatch,
  });
}

main().then(
  (code) => process.exit(code),
  (err) => {
    console.error(String(err));
    process.exit(70);
  },
);
