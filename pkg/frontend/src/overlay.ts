// Mapping-preview helpers: pick a bounded, deterministic subset of mapped
// pairs to draw as arrows (the full set stays available for export).

import type { MappedPairRecord } from "./types.js";

export const MAX_OVERLAY_ARROWS = 200;

export function decimatePairs(
  pairs: MappedPairRecord[],
  max: number = MAX_OVERLAY_ARROWS,
): MappedPairRecord[] {
  if (pairs.length <= max) return pairs.slice();
  const out: MappedPairRecord[] = [];
  const stride = pairs.length / max;
  for (let i = 0; i < max; i++) {
    out.push(pairs[Math.floor(i * stride)]);
  }
  return out;
}

export interface Arrow {
  x0: number;
  y0: number;
  x1: number;
  y1: number;
  headLeft: [number, number];
  headRight: [number, number];
}

/** Arrow geometry from handle to target, with a small open head. */
export function arrowGeometry(pair: MappedPairRecord, headLength = 4): Arrow {
  const { hx, hy, tx, ty } = pair;
  const angle = Math.atan2(ty - hy, tx - hx);
  const spread = Math.PI / 7;
  return {
    x0: hx,
    y0: hy,
    x1: tx,
    y1: ty,
    headLeft: [
      tx - headLength * Math.cos(angle - spread),
      ty - headLength * Math.sin(angle - spread),
    ],
    headRight: [
      tx - headLength * Math.cos(angle + spread),
      ty - headLength * Math.sin(angle + spread),
    ],
  };
}
