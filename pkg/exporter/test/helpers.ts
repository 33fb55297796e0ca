import { RawImage } from "../src/ppm";

export interface Rect {
  left: number;
  top: number;
  width: number;
  height: number;
  value?: number;
}

/** Dark frame with bright rectangles painted on it. */
export function makeFrame(
  width: number,
  height: number,
  rects: Rect[],
  channels: 1 | 3 = 3,
  background = 20,
): RawImage {
  const data = new Uint8Array(width * height * channels).fill(background);
  for (const rect of rects) {
    const value = rect.value ?? 230;
    for (let y = rect.top; y < rect.top + rect.height; y++) {
      for (let x = rect.left; x < rect.left + rect.width; x++) {
        if (x < 0 || y < 0 || x >= width || y >= height) continue;
        for (let c = 0; c < channels; c++) {
          data[(y * width + x) * channels + c] = value;
        }
      }
    }
  }
  return { width, height, channels, data };
}
