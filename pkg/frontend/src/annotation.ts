// Annotation model: handle/target region drafts per pair, brush and polygon
// tools, and (de)serialization to the engine's region records.
//
// Brush strokes rasterize onto a logical binary mask with integer circle
// stamping, independent of any canvas anti-aliasing, so the exported record
// is exactly what the engine would validate and rasterize itself.

import { decodeMaskRle, encodeMaskRle } from "./rle.js";
import type { RegionPairRecord, RegionRecord } from "./types.js";

export type Tool = "brush" | "polygon";
export type Role = "handle" | "target";

export const ROLE_COLORS: Record<Role, string> = {
  handle: "rgba(220, 50, 47, 0.55)", // red, matching the docs' convention
  target: "rgba(38, 99, 235, 0.55)", // blue
};

export class RegionDraft {
  readonly imageW: number;
  readonly imageH: number;
  mask: Uint8Array;
  vertices: [number, number][] = [];
  mode: Tool | null = null;

  constructor(imageW: number, imageH: number) {
    this.imageW = imageW;
    this.imageH = imageH;
    this.mask = new Uint8Array(imageW * imageH);
  }

  isEmpty(): boolean {
    if (this.mode === "polygon") return this.vertices.length < 3;
    if (this.mode === "brush") return !this.mask.some((v) => v !== 0);
    return true;
  }

  pixelCount(): number {
    let n = 0;
    for (let i = 0; i < this.mask.length; i++) n += this.mask[i];
    return n;
  }

  clear(): void {
    this.mask.fill(0);
    this.vertices = [];
    this.mode = null;
  }

  brushDot(x: number, y: number, radius: number): void {
    this.mode = "brush";
    const cx = Math.round(x);
    const cy = Math.round(y);
    const r = Math.max(0, Math.round(radius));
    for (let py = Math.max(0, cy - r); py <= Math.min(this.imageH - 1, cy + r); py++) {
      for (let px = Math.max(0, cx - r); px <= Math.min(this.imageW - 1, cx + r); px++) {
        const dx = px - cx;
        const dy = py - cy;
        if (dx * dx + dy * dy <= r * r) {
          this.mask[py * this.imageW + px] = 1;
        }
      }
    }
  }

  brushStroke(x0: number, y0: number, x1: number, y1: number, radius: number): void {
    // stamp dots densely enough that consecutive stamps overlap
    const dist = Math.hypot(x1 - x0, y1 - y0);
    const steps = Math.max(1, Math.ceil(dist / Math.max(1, radius / 2)));
    for (let i = 0; i <= steps; i++) {
      const t = i / steps;
      this.brushDot(x0 + (x1 - x0) * t, y0 + (y1 - y0) * t, radius);
    }
  }

  addVertex(x: number, y: number): void {
    this.mode = "polygon";
    const px = Math.min(this.imageW - 1, Math.max(0, Math.round(x)));
    const py = Math.min(this.imageH - 1, Math.max(0, Math.round(y)));
    this.vertices.push([px, py]);
  }

  popVertex(): void {
    this.vertices.pop();
    if (this.vertices.length === 0 && this.mode === "polygon") this.mode = null;
  }

  toRecord(): RegionRecord | null {
    if (this.isEmpty()) return null;
    if (this.mode === "polygon") {
      return {
        type: "polygon",
        vertices: this.vertices.map(([x, y]) => [x, y] as [number, number]),
        image_w: this.imageW,
        image_h: this.imageH,
      };
    }
    return {
      type: "brush",
      mask_rle: encodeMaskRle(this.mask, this.imageW, this.imageH),
      image_w: this.imageW,
      image_h: this.imageH,
    };
  }

  static fromRecord(record: RegionRecord): RegionDraft {
    const draft = new RegionDraft(record.image_w, record.image_h);
    if (record.type === "polygon") {
      draft.mode = "polygon";
      draft.vertices = record.vertices.map(([x, y]) => [x, y] as [number, number]);
    } else {
      draft.mode = "brush";
      const mask = decodeMaskRle(record.mask_rle);
      if (mask.length !== draft.mask.length) {
        throw new Error("mask size disagrees with region dims");
      }
      draft.mask = mask;
    }
    return draft;
  }
}

export class PairDraft {
  handle: RegionDraft;
  target: RegionDraft;

  constructor(imageW: number, imageH: number) {
    this.handle = new RegionDraft(imageW, imageH);
    this.target = new RegionDraft(imageW, imageH);
  }

  isComplete(): boolean {
    return !this.handle.isEmpty() && !this.target.isEmpty();
  }

  toRecord(): RegionPairRecord | null {
    const handle = this.handle.toRecord();
    const target = this.target.toRecord();
    return handle && target ? { handle, target } : null;
  }
}

export class AnnotationState {
  readonly imageW: number;
  readonly imageH: number;
  tool: Tool = "brush";
  role: Role = "handle";
  brushRadius = 4;
  pairs: PairDraft[] = [];
  activePair = 0;

  constructor(imageW: number, imageH: number) {
    if (imageW < 1 || imageH < 1) throw new Error("image dims must be positive");
    this.imageW = imageW;
    this.imageH = imageH;
    this.pairs.push(new PairDraft(imageW, imageH));
  }

  current(): PairDraft {
    return this.pairs[this.activePair];
  }

  activeDraft(): RegionDraft {
    return this.role === "handle" ? this.current().handle : this.current().target;
  }

  beginPair(): number {
    this.pairs.push(new PairDraft(this.imageW, this.imageH));
    this.activePair = this.pairs.length - 1;
    this.role = "handle";
    return this.activePair;
  }

  removePair(index: number): void {
    if (this.pairs.length <= 1) {
      this.pairs[0] = new PairDraft(this.imageW, this.imageH);
      this.activePair = 0;
      return;
    }
    this.pairs.splice(index, 1);
    this.activePair = Math.min(this.activePair, this.pairs.length - 1);
  }

  completePairs(): RegionPairRecord[] {
    const records: RegionPairRecord[] = [];
    for (const pair of this.pairs) {
      const record = pair.toRecord();
      if (record) records.push(record);
    }
    return records;
  }

  /** Submittable only when at least one pair has both regions drawn. */
  canSubmit(): boolean {
    return this.completePairs().length > 0;
  }

  exportAnnotation(): string {
    return JSON.stringify({ regions: this.completePairs() }, null, 2);
  }

  static importAnnotation(text: string): AnnotationState {
    const payload = JSON.parse(text);
    const records: RegionPairRecord[] = Array.isArray(payload) ? payload : payload.regions;
    if (!records || records.length === 0) {
      throw new Error("annotation file has no region pairs");
    }
    const w = records[0].handle.image_w;
    const h = records[0].handle.image_h;
    const state = new AnnotationState(w, h);
    state.pairs = records.map((rec) => {
      const pair = new PairDraft(w, h);
      pair.handle = RegionDraft.fromRecord(rec.handle);
      pair.target = RegionDraft.fromRecord(rec.target);
      return pair;
    });
    state.activePair = 0;
    return state;
  }
}
