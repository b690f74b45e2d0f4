// Wire types shared with the engine's /v1 endpoints and manifest formats.

export interface MaskRle {
  size: [number, number]; // [height, width]
  counts: number[]; // alternating run lengths, starting with zeros
}

export interface PolygonRegionRecord {
  type: "polygon";
  vertices: [number, number][];
  image_w: number;
  image_h: number;
}

export interface BrushRegionRecord {
  type: "brush";
  mask_rle: MaskRle;
  image_w: number;
  image_h: number;
}

export type RegionRecord = PolygonRegionRecord | BrushRegionRecord;

export interface RegionPairRecord {
  handle: RegionRecord;
  target: RegionRecord;
}

export interface MappedPairRecord {
  hx: number;
  hy: number;
  tx: number;
  ty: number;
  pair_index: number;
}

export interface MapResponse {
  pairs: MappedPairRecord[];
  count: number;
  space: string;
  column_snaps: number;
  hole_snaps: number;
  conflicts_dropped: number;
}

export interface EditConfigPatch {
  total_trained_steps?: number;
  sampler_steps?: number;
  invert_to?: number;
  cp_stop?: number;
  blend_alpha?: number;
  eta?: number;
  kv_swap?: boolean;
  cp_mode?: "multi-step" | "initial-only";
  seed?: number;
}

export interface EditRequest {
  image_b64?: string;
  fixture?: string;
  prompt?: string;
  regions: RegionPairRecord[];
  config?: EditConfigPatch;
  backend?: string;
  seed?: number;
}

export interface EditResponse {
  image_b64: string;
  timings: Record<string, number | number[]>;
  mapped_point_count: number;
  warnings: string[];
  seed: number;
  backend: string;
}

export interface ApiError {
  error: string;
  stage?: string;
  timestep?: number;
}
