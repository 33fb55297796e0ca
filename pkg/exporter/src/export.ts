import * as fs from "fs";
import * as path from "path";

import { ExportAdapter, brightBlobAdapter } from "./adapter";
import { DetectionRow, writeDetections, writeEmbeddings } from "./formats";
import { cropResize } from "./patch";
import { decodeNetpbm } from "./ppm";

export interface ExportJob {
  /** Directory of .ppm / .pgm frames, ordered by name. */
  framesDir: string;
  detectionsPath: string;
  embeddingsPath: string;
  /** Detections below this confidence are not emitted. */
  scoreFloor?: number;
  /** Side length patches are resized to before embedding. */
  patchSize?: number;
  adapter?: ExportAdapter;
  manifestPath?: string;
}

export interface ExportSummary {
  frames: number;
  skipped: string[];
  detections: number;
  embeddingDim: number;
}

const DEFAULT_SCORE_FLOOR = 0.05;
const DEFAULT_PATCH_SIZE = 128;

/** Frame id from trailing digits in the file stem, else 1-based position. */
function frameIdFor(name: string, position: number): number {
  const match = /(\d+)\.[^.]+$/.exec(name);
  return match ? parseInt(match[1], 10) : position + 1;
}

export async function runExport(job: ExportJob): Promise<ExportSummary> {
  const adapter = job.adapter ?? brightBlobAdapter();
  const scoreFloor = job.scoreFloor ?? DEFAULT_SCORE_FLOOR;
  const patchSize = job.patchSize ?? DEFAULT_PATCH_SIZE;
  if (patchSize < 1) throw new Error("patch size must be >= 1");

  const names = fs
    .readdirSync(job.framesDir)
    .filter((n) => /\.(ppm|pgm)$/i.test(n))
    .sort();

  const rows: DetectionRow[] = [];
  const embeddings: Float32Array[] = [];
  const skipped: string[] = [];

  names.forEach((name, position) => {
    const framePath = path.join(job.framesDir, name);
    let image;
    try {
      image = decodeNetpbm(fs.readFileSync(framePath));
    } catch (err) {
      console.warn(`skipping ${name}: ${(err as Error).message}`);
      skipped.push(name);
      return;
    }
    const frame = frameIdFor(name, position);
    const kept = adapter.detect(image).filter((box) => box.score >= scoreFloor);
    for (const box of kept) {
      if (box.score < 0 || box.score > 1) {
        throw new Error(`adapter produced confidence ${box.score} outside [0, 1]`);
      }
    }
    const patches = kept.map((box) => cropResize(image, box, patchSize));
    const vectors = adapter.embed(patches);
    if (vectors.length !== kept.length) {
      throw new Error(
        `adapter returned ${vectors.length} embeddings for ${kept.length} detections`,
      );
    }
    kept.forEach((box, i) => {
      rows.push({ frame, box });
      embeddings.push(vectors[i]);
    });
  });

  writeDetections(job.detectionsPath, rows);
  writeEmbeddings(job.embeddingsPath, adapter.embeddingDim, embeddings);

  const summary: ExportSummary = {
    frames: names.length - skipped.length,
    skipped,
    detections: rows.length,
    embeddingDim: adapter.embeddingDim,
  };
  if (job.manifestPath) {
    const manifest = {
      command: "export",
      settings: {
        framesDir: job.framesDir,
        scoreFloor,
        patchSize,
      },
      outputs: [job.detectionsPath, job.embeddingsPath],
      ...summary,
    };
    fs.writeFileSync(job.manifestPath, JSON.stringify(manifest, null, 2) + "\n");
  }
  return summary;
}
