#!/usr/bin/env node
/**
 * dronetrack-export: run a detector + embedder over a frame directory and
 * write dronetrack-format detection and embedding files.
 *
 * The built-in adapter is a deterministic bright-blob detector meant for
 * pipelines and tests; wire a real model through the ExportAdapter
 * interface in ./adapter.
 */

import { parseArgs } from "node:util";

import { brightBlobAdapter } from "./adapter";
import { runExport } from "./export";

async function main(): Promise<number> {
  let parsed;
  try {
    parsed = parseArgs({
      options: {
        frames: { type: "string" },
        detections: { type: "string" },
        embeddings: { type: "string" },
        "score-floor": { type: "string", default: "0.05" },
        "patch-size": { type: "string", default: "128" },
        "class-id": { type: "string", default: "1" },
        threshold: { type: "string", default: "160" },
        manifest: { type: "string" },
        help: { type: "boolean", default: false },
      },
    });
  } catch (err) {
    console.error(`usage error: ${(err as Error).message}`);
    return 2;
  }
  const values = parsed.values;
  if (values.help) {
    console.log(
      "usage: dronetrack-export --frames DIR --detections OUT.txt --embeddings OUT.emb\n" +
        "  [--score-floor 0.05] [--patch-size 128] [--class-id 1] [--threshold 160]\n" +
        "  [--manifest OUT.json]",
    );
    return 0;
  }
  if (!values.frames || !values.detections || !values.embeddings) {
    console.error("usage error: --frames, --detections and --embeddings are required");
    return 2;
  }

  try {
    const summary = await runExport({
      framesDir: values.frames,
      detectionsPath: values.detections,
      embeddingsPath: values.embeddings,
      scoreFloor: Number(values["score-floor"]),
      patchSize: Number(values["patch-size"]),
      manifestPath: values.manifest,
      adapter: brightBlobAdapter({
        classId: Number(values["class-id"]),
        threshold: Number(values.threshold),
      }),
    });
    console.log(
      `exported ${summary.detections} detections (dim ${summary.embeddingDim}) ` +
        `from ${summary.frames} frames` +
        (summary.skipped.length ? `, skipped ${summary.skipped.join(", ")}` : ""),
    );
    return 0;
  } catch (err) {
    console.error(`error: ${(err as Error).message}`);
    return 1;
  }
}

main().then((code) => {
  process.exitCode = code;
});
