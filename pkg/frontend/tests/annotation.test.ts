import { describe, expect, test } from "vitest";

import { AnnotationState, PairDraft, RegionDraft } from "../src/annotation.js";
import { decodeMaskRle } from "../src/rle.js";

describe("RegionDraft brush", () => {
  test("radius zero stamps a single pixel", () => {
    const draft = new RegionDraft(16, 16);
    draft.brushDot(5, 7, 0);
    expect(draft.pixelCount()).toBe(1);
    expect(draft.mask[7 * 16 + 5]).toBe(1);
  });

  test("disc rasterization uses the integer circle rule", () => {
    const draft = new RegionDraft(9, 9);
    draft.brushDot(4, 4, 2);
    // dx^2 + dy^2 <= 4 has exactly 13 lattice points
    expect(draft.pixelCount()).toBe(13);
    expect(draft.mask[4 * 9 + 2]).toBe(1); // (2,4) on the rim
    expect(draft.mask[2 * 9 + 2]).toBe(0); // (2,2) outside
  });

  test("dots clamp at the canvas edge", () => {
    const draft = new RegionDraft(8, 8);
    draft.brushDot(0, 0, 3);
    expect(draft.pixelCount()).toBeGreaterThan(0);
    // nothing out of bounds is addressable, mask length unchanged
    expect(draft.mask.length).toBe(64);
  });

  test("stroke connects distant dots", () => {
    const draft = new RegionDraft(32, 8);
    draft.brushStroke(2, 4, 28, 4, 1);
    // every column along the stroke is covered
    for (let x = 2; x <= 28; x++) {
      expect(draft.mask[4 * 32 + x]).toBe(1);
    }
  });

  test("fractional input rounds to lattice pixels", () => {
    const draft = new RegionDraft(16, 16);
    draft.brushDot(5.4, 6.6, 0);
    expect(draft.mask[7 * 16 + 5]).toBe(1);
  });
});

describe("RegionDraft polygon", () => {
  test("needs three vertices to be non-empty", () => {
    const draft = new RegionDraft(16, 16);
    draft.addVertex(1, 1);
    draft.addVertex(5, 1);
    expect(draft.isEmpty()).toBe(true);
    draft.addVertex(3, 6);
    expect(draft.isEmpty()).toBe(false);
  });

  test("vertices clamp into the canvas", () => {
    const draft = new RegionDraft(16, 16);
    draft.addVertex(-3, 20);
    expect(draft.vertices[0]).toEqual([0, 15]);
  });

  test("undo removes the last vertex", () => {
    const draft = new RegionDraft(16, 16);
    draft.addVertex(1, 1);
    draft.addVertex(2, 2);
    draft.popVertex();
    expect(draft.vertices).toEqual([[1, 1]]);
  });
});

describe("records", () => {
  test("brush record round trip preserves the pixel set", () => {
    const draft = new RegionDraft(12, 10);
    draft.brushDot(6, 5, 2);
    const record = draft.toRecord()!;
    expect(record.type).toBe("brush");
    const again = RegionDraft.fromRecord(record);
    expect(Array.from(again.mask)).toEqual(Array.from(draft.mask));
    if (record.type === "brush") {
      expect(Array.from(decodeMaskRle(record.mask_rle))).toEqual(Array.from(draft.mask));
    }
  });

  test("polygon record round trip preserves vertices", () => {
    const draft = new RegionDraft(20, 20);
    for (const [x, y] of [[2, 2], [10, 3], [7, 12]]) draft.addVertex(x, y);
    const record = draft.toRecord()!;
    const again = RegionDraft.fromRecord(record);
    expect(again.vertices).toEqual(draft.vertices);
  });

  test("empty draft has no record", () => {
    expect(new RegionDraft(8, 8).toRecord()).toBeNull();
  });
});

describe("AnnotationState", () => {
  function drawnState(): AnnotationState {
    const state = new AnnotationState(32, 32);
    state.role = "handle";
    state.activeDraft().brushDot(5, 5, 2);
    state.role = "target";
    state.activeDraft().brushDot(20, 5, 2);
    return state;
  }

  test("pair submittable only when both regions drawn", () => {
    const state = new AnnotationState(32, 32);
    expect(state.canSubmit()).toBe(false);
    state.activeDraft().brushDot(5, 5, 2); // handle only
    expect(state.canSubmit()).toBe(false);
    state.role = "target";
    state.activeDraft().brushDot(20, 5, 2);
    expect(state.canSubmit()).toBe(true);
  });

  test("single brush dot is an acceptable minimal region", () => {
    const state = new AnnotationState(32, 32);
    state.brushRadius = 0;
    state.activeDraft().brushDot(3, 3, 0);
    state.role = "target";
    state.activeDraft().brushDot(4, 3, 0);
    expect(state.canSubmit()).toBe(true);
    const records = state.completePairs();
    expect(records).toHaveLength(1);
  });

  test("incomplete pairs are excluded from submission", () => {
    const state = drawnState();
    state.beginPair(); // second pair stays empty
    expect(state.completePairs()).toHaveLength(1);
  });

  test("export import round trip reproduces identical records", () => {
    const state = drawnState();
    state.beginPair();
    state.role = "handle";
    for (const [x, y] of [[8, 8], [16, 8], [12, 16]]) state.activeDraft().addVertex(x, y);
    state.role = "target";
    for (const [x, y] of [[8, 20], [16, 20], [12, 28]]) state.activeDraft().addVertex(x, y);

    const text = state.exportAnnotation();
    const again = AnnotationState.importAnnotation(text);
    expect(again.exportAnnotation()).toBe(text);
    expect(again.pairs).toHaveLength(2);
  });

  test("import rejects empty annotation", () => {
    expect(() => AnnotationState.importAnnotation('{"regions": []}')).toThrow();
  });

  test("removing the last pair resets instead of leaving none", () => {
    const state = drawnState();
    state.removePair(0);
    expect(state.pairs).toHaveLength(1);
    expect(state.canSubmit()).toBe(false);
  });

  test("a failed submit leaves the annotation untouched", () => {
    const state = drawnState();
    const before = state.exportAnnotation();
    // submission only reads completePairs(); simulate a failed round trip
    try {
      state.completePairs();
      throw new Error("server down");
    } catch {
      // the UI shows a banner; the state must be unchanged
    }
    expect(state.exportAnnotation()).toBe(before);
  });
});

describe("PairDraft", () => {
  test("completeness requires both sides", () => {
    const pair = new PairDraft(16, 16);
    pair.handle.brushDot(2, 2, 1);
    expect(pair.isComplete()).toBe(false);
    pair.target.brushDot(10, 2, 1);
    expect(pair.isComplete()).toBe(true);
  });
});
