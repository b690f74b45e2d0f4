// Row-major run-length coding of binary masks, matching the engine's format:
// runs alternate starting with a zero-run, and must cover height * width.

import type { MaskRle } from "./types.js";

export function encodeMaskRle(mask: Uint8Array, width: number, height: number): MaskRle {
  if (mask.length !== width * height) {
    throw new Error(`mask length ${mask.length} != ${width}x${height}`);
  }
  const counts: number[] = [];
  let value = 0;
  let run = 0;
  for (let i = 0; i < mask.length; i++) {
    const bit = mask[i] ? 1 : 0;
    if (bit === value) {
      run += 1;
    } else {
      counts.push(run);
      value = bit;
      run = 1;
    }
  }
  counts.push(run);
  return { size: [height, width], counts };
}

export function decodeMaskRle(rle: MaskRle): Uint8Array {
  const [height, width] = rle.size;
  const total = width * height;
  const mask = new Uint8Array(total);
  let pos = 0;
  let value = 0;
  for (const run of rle.counts) {
    if (value) {
      mask.fill(1, pos, pos + run);
    }
    pos += run;
    value = value ? 0 : 1;
  }
  if (pos !== total) {
    throw new Error(`RLE counts cover ${pos} of ${total} pixels`);
  }
  return mask;
}
