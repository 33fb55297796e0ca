/**
 * Writers for the dronetrack on-disk formats.
 *
 * Detections: one `frame,x,y,w,h,score,class` line per record.
 * Embeddings: 16-byte header (magic "DTEB", u32 version=1, u32 dim,
 * u32 count, little-endian) followed by count*dim float32 LE values, row i
 * aligned with detection line i.
 */

import * as fs from "fs";

import { DetectedBox } from "./adapter";

export const EMBEDDING_MAGIC = "DTEB";
export const EMBEDDING_VERSION = 1;

export interface DetectionRow {
  frame: number;
  box: DetectedBox;
}

export function formatDetectionLine(frame: number, box: DetectedBox): string {
  return [
    frame,
    box.left,
    box.top,
    box.width,
    box.height,
    box.score,
    box.classId,
  ].join(",");
}

export function writeDetections(path: string, rows: DetectionRow[]): void {
  const body = rows.map((r) => formatDetectionLine(r.frame, r.box) + "\n").join("");
  fs.writeFileSync(path, body, "utf-8");
}

export function encodeEmbeddings(dim: number, rows: Float32Array[]): Buffer {
  if (dim < 1) throw new Error("embedding dimension must be >= 1");
  const header = Buffer.alloc(16);
  header.write(EMBEDDING_MAGIC, 0, "ascii");
  header.writeUInt32LE(EMBEDDING_VERSION, 4);
  header.writeUInt32LE(dim, 8);
  header.writeUInt32LE(rows.length, 12);

  const payload = Buffer.alloc(rows.length * dim * 4);
  rows.forEach((row, i) => {
    if (row.length !== dim) {
      throw new Error(`embedding row ${i} has width ${row.length}, expected ${dim}`);
    }
    for (let j = 0; j < dim; j++) {
      payload.writeFloatLE(row[j], (i * dim + j) * 4);
    }
  });
  return Buffer.concat([header, payload]);
}

export function writeEmbeddings(path: string, dim: number, rows: Float32Array[]): void {
  fs.writeFileSync(path, encodeEmbeddings(dim, rows));
}
