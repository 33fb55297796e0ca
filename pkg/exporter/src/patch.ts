import { RawImage } from "./ppm";

export interface Box {
  left: number;
  top: number;
  width: number;
  height: number;
}

/**
 * Crops a box out of the frame and resizes it to size x size RGB with
 * bilinear sampling. Grayscale input is replicated across channels so
 * every patch has the same layout regardless of the source format.
 */
export function cropResize(image: RawImage, box: Box, size: number): RawImage {
  const left = Math.max(0, Math.min(box.left, image.width - 1));
  const top = Math.max(0, Math.min(box.top, image.height - 1));
  const right = Math.max(left + 1, Math.min(box.left + box.width, image.width));
  const bottom = Math.max(top + 1, Math.min(box.top + box.height, image.height));
  const cropW = right - left;
  const cropH = bottom - top;

  const out = new Uint8Array(size * size * 3);
  for (let py = 0; py < size; py++) {
    const srcY = top + ((py + 0.5) / size) * cropH - 0.5;
    const y0 = Math.max(0, Math.floor(srcY));
    const y1 = Math.min(image.height - 1, y0 + 1);
    const fy = Math.min(1, Math.max(0, srcY - y0));
    for (let px = 0; px < size; px++) {
      const srcX = left + ((px + 0.5) / size) * cropW - 0.5;
      const x0 = Math.max(0, Math.floor(srcX));
      const x1 = Math.min(image.width - 1, x0 + 1);
      const fx = Math.min(1, Math.max(0, srcX - x0));
      for (let c = 0; c < 3; c++) {
        const src = image.channels === 3 ? c : 0;
        const v00 = image.data[(y0 * image.width + x0) * image.channels + src];
        const v01 = image.data[(y0 * image.width + x1) * image.channels + src];
        const v10 = image.data[(y1 * image.width + x0) * image.channels + src];
        const v11 = image.data[(y1 * image.width + x1) * image.channels + src];
        const topMix = v00 + (v01 - v00) * fx;
        const botMix = v10 + (v11 - v10) * fx;
        out[(py * size + px) * 3 + c] = Math.round(topMix + (botMix - topMix) * fy);
      }
    }
  }
  return { width: size, height: size, channels: 3, data: out };
}
