import { RawImage, luminance } from "./ppm";
import { Box } from "./patch";

export interface DetectedBox extends Box {
  /** Detector confidence in [0, 1]. */
  score: number;
  classId: number;
}

/**
 * The two-function boundary a model integration must implement. `detect`
 * maps a frame to boxes; `embed` maps fixed-size RGB patches (one per
 * emitted detection, in order) to fixed-width appearance vectors. Swap in
 * any pretrained detector/re-id model here; the pipeline does not care
 * where the numbers come from.
 */
export interface ExportAdapter {
  /** Width of the vectors `embed` returns; defines the output file header. */
  readonly embeddingDim: number;
  detect(image: RawImage): DetectedBox[];
  embed(patches: RawImage[]): Float32Array[];
}

export interface BlobAdapterOptions {
  /** Luminance threshold separating foreground from background. */
  threshold?: number;
  /** Components smaller than this many pixels are noise. */
  minArea?: number;
  classId?: number;
  /** Patches are mean-pooled onto a grid x grid x 3 descriptor. */
  poolGrid?: number;
}

/**
 * Deterministic dependency-free adapter used for tests and smoke runs:
 * detects bright 4-connected components and describes patches by a
 * mean-pooled color grid, L2-normalized.
 */
export function brightBlobAdapter(options: BlobAdapterOptions = {}): ExportAdapter {
  const threshold = options.threshold ?? 160;
  const minArea = options.minArea ?? 9;
  const classId = options.classId ?? 1;
  const poolGrid = options.poolGrid ?? 8;

  function detect(image: RawImage): DetectedBox[] {
    const { width, height } = image;
    const seen = new Uint8Array(width * height);
    const boxes: DetectedBox[] = [];
    const stack: number[] = [];

    for (let start = 0; start < width * height; start++) {
      if (seen[start]) continue;
      const sy = Math.floor(start / width);
      const sx = start - sy * width;
      if (luminance(image, sx, sy) < threshold) {
        seen[start] = 1;
        continue;
      }
      // flood-fill one component
      let minX = sx, maxX = sx, minY = sy, maxY = sy;
      let area = 0;
      let lumaSum = 0;
      stack.push(start);
      seen[start] = 1;
      while (stack.length > 0) {
        const idx = stack.pop() as number;
        const y = Math.floor(idx / width);
        const x = idx - y * width;
        const value = luminance(image, x, y);
        area++;
        lumaSum += value;
        if (x < minX) minX = x;
        if (x > maxX) maxX = x;
        if (y < minY) minY = y;
        if (y > maxY) maxY = y;
        const neighbors = [
          x > 0 ? idx - 1 : -1,
          x < width - 1 ? idx + 1 : -1,
          y > 0 ? idx - width : -1,
          y < height - 1 ? idx + width : -1,
        ];
        for (const n of neighbors) {
          if (n < 0 || seen[n]) continue;
          seen[n] = 1;
          const ny = Math.floor(n / width);
          const nx = n - ny * width;
          if (luminance(image, nx, ny) >= threshold) stack.push(n);
        }
      }
      if (area >= minArea) {
        boxes.push({
          left: minX,
          top: minY,
          width: maxX - minX + 1,
          height: maxY - minY + 1,
          score: lumaSum / area / 255,
          classId,
        });
      }
    }
    // deterministic order: top-left first
    boxes.sort((a, b) => a.top - b.top || a.left - b.left);
    return boxes;
  }

  function embed(patches: RawImage[]): Float32Array[] {
    return patches.map((patch) => {
      const vec = new Float32Array(poolGrid * poolGrid * 3);
      const cellW = patch.width / poolGrid;
      const cellH = patch.height / poolGrid;
      for (let gy = 0; gy < poolGrid; gy++) {
        for (let gx = 0; gx < poolGrid; gx++) {
          let sums = [0, 0, 0];
          let count = 0;
          const x0 = Math.floor(gx * cellW);
          const x1 = Math.max(x0 + 1, Math.floor((gx + 1) * cellW));
          const y0 = Math.floor(gy * cellH);
          const y1 = Math.max(y0 + 1, Math.floor((gy + 1) * cellH));
          for (let y = y0; y < y1; y++) {
            for (let x = x0; x < x1; x++) {
              const base = (y * patch.width + x) * patch.channels;
              for (let c = 0; c < 3; c++) {
                sums[c] += patch.data[patch.channels === 3 ? base + c : base];
              }
              count++;
            }
          }
          for (let c = 0; c < 3; c++) {
            vec[(gy * poolGrid + gx) * 3 + c] = sums[c] / count / 255;
          }
        }
      }
      let norm = 0;
      for (const v of vec) norm += v * v;
      norm = Math.sqrt(norm);
      if (norm > 1e-12) {
        for (let i = 0; i < vec.length; i++) vec[i] /= norm;
      } else {
        vec[0] = 1.0; // all-black patch: fixed unit vector keeps rows valid
      }
      return vec;
    });
  }

  return { embeddingDim: poolGrid * poolGrid * 3, detect, embed };
}
