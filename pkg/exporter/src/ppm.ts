/**
 * Minimal binary Netpbm decoding: P5 (grayscale) and P6 (RGB), 8-bit only.
 * Keeps the exporter free of native image dependencies; anything fancier
 * belongs in a custom adapter.
 */

export interface RawImage {
  width: number;
  height: number;
  channels: 1 | 3;
  /** Row-major, channel-interleaved 8-bit samples. */
  data: Uint8Array;
}

function isSpace(byte: number): boolean {
  return byte === 0x20 || byte === 0x09 || byte === 0x0a || byte === 0x0d;
}

/** Reads the next whitespace-delimited token, skipping `#` comments. */
function nextToken(buf: Buffer, offset: number): { token: string; offset: number } {
  let i = offset;
  for (;;) {
    while (i < buf.length && isSpace(buf[i])) i++;
    if (i < buf.length && buf[i] === 0x23 /* '#' */) {
      while (i < buf.length && buf[i] !== 0x0a) i++;
      continue;
    }
    break;
  }
  const start = i;
  while (i < buf.length && !isSpace(buf[i])) i++;
  if (start === i) throw new Error("unexpected end of header");
  return { token: buf.subarray(start, i).toString("ascii"), offset: i };
}

export function decodeNetpbm(buf: Buffer): RawImage {
  if (buf.length < 2) throw new Error("not a netpbm file: too short");
  const magic = buf.subarray(0, 2).toString("ascii");
  if (magic !== "P5" && magic !== "P6") {
    throw new Error(`not a binary netpbm file (magic ${JSON.stringify(magic)})`);
  }
  const channels = magic === "P6" ? 3 : 1;

  let cursor = 2;
  const fields: number[] = [];
  for (let k = 0; k < 3; k++) {
    const { token, offset } = nextToken(buf, cursor);
    const value = Number(token);
    if (!Number.isInteger(value) || value <= 0) {
      throw new Error(`bad header field ${JSON.stringify(token)}`);
    }
    fields.push(value);
    cursor = offset;
  }
  const [width, height, maxval] = fields;
  if (maxval > 255) throw new Error(`only 8-bit images supported (maxval ${maxval})`);

  cursor += 1; // single whitespace byte after maxval
  const expected = width * height * channels;
  const payload = buf.subarray(cursor, cursor + expected);
  if (payload.length !== expected) {
    throw new Error(`truncated payload: ${payload.length} of ${expected} bytes`);
  }
  return { width, height, channels: channels as 1 | 3, data: new Uint8Array(payload) };
}

export function encodeNetpbm(image: RawImage): Buffer {
  const magic = image.channels === 3 ? "P6" : "P5";
  const header = Buffer.from(`${magic}\n${image.width} ${image.height}\n255\n`, "ascii");
  return Buffer.concat([header, Buffer.from(image.data)]);
}

export function luminance(image: RawImage, x: number, y: number): number {
  const idx = (y * image.width + x) * image.channels;
  if (image.channels === 1) return image.data[idx];
  return Math.round(
    0.299 * image.data[idx] + 0.587 * image.data[idx + 1] + 0.114 * image.data[idx + 2],
  );
}
