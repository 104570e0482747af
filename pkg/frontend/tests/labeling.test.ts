import { readFileSync } from "node:fs";
import { dirname, join } from "node:path";
import { fileURLToPath } from "node:url";
import { describe, expect, it } from "vitest";

import { BatchLabeling } from "../src/labeling.js";
import type { BatchPayload } from "../src/types.js";

const batch: BatchPayload = JSON.parse(
  readFileSync(join(dirname(fileURLToPath(import.meta.url)), "..", "fixtures", "batch.json"), "utf-8"),
);

describe("BatchLabeling", () => {
  it("starts with nothing labeled and cannot submit", () => {
    const state = new BatchLabeling(batch);
    expect(state.size).toBe(10);
    expect(state.labeledCount).toBe(0);
    expect(state.allLabeled).toBe(false);
    expect(() => state.buildSubmission()).toThrow(/cannot submit/);
  });

  it("tracks labels and relabeling", () => {
    const state = new BatchLabeling(batch);
    const id = batch.pairs[0].pair_id;
    state.setLabel(id, 1);
    expect(state.labelOf(id)).toBe(1);
    state.setLabel(id, 0);
    expect(state.labelOf(id)).toBe(0);
    expect(state.labeledCount).toBe(1);
  });

  it("rejects labels for pairs outside the batch", () => {
    const state = new BatchLabeling(batch);
    expect(() => state.setLabel("not-a-pair", 1)).toThrow(/not in the pending batch/);
  });

  it("builds the submission in batch order once complete", () => {
    const state = new BatchLabeling(batch);
    // Label in reverse order; submission must still follow batch order.
    for (const pair of [...batch.pairs].reverse()) {
      state.setLabel(pair.pair_id, 0);
    }
    expect(state.allLabeled).toBe(true);
    const submission = state.buildSubmission();
    expect(submission.map((s) => s.pair_id)).toEqual(batch.pairs.map((p) => p.pair_id));
  });
});
