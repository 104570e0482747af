// Labeling state for one pending batch: which pairs have a decision, and the
// exact submission payload the service expects. Submission is batch-atomic:
// it can only be built once every pair is labeled.

import type { BatchPayload, LabelSubmission } from "./types.js";

export class BatchLabeling {
  private readonly labels = new Map<string, 0 | 1>();

  constructor(public readonly batch: BatchPayload) {}

  get size(): number {
    return this.batch.pairs.length;
  }

  get labeledCount(): number {
    return this.labels.size;
  }

  get allLabeled(): boolean {
    return this.labels.size === this.batch.pairs.length && this.size > 0;
  }

  labelOf(pairId: string): 0 | 1 | undefined {
    return this.labels.get(pairId);
  }

  setLabel(pairId: string, label: 0 | 1): void {
    if (!this.batch.pairs.some((p) => p.pair_id === pairId)) {
      throw new Error(`pair_id ${pairId} is not in the pending batch`);
    }
    this.labels.set(pairId, label);
  }

  /** Submission in batch order, exactly matching the service schema. */
  buildSubmission(): LabelSubmission[] {
    if (!this.allLabeled) {
      throw new Error(
        `cannot submit: ${this.labeledCount}/${this.size} pairs labeled`,
      );
    }
    return this.batch.pairs.map((p) => ({
      pair_id: p.pair_id,
      label: this.labels.get(p.pair_id)!,
    }));
  }
}
