// Wire types for the labeling session service (HTTP+JSON on localhost).

export type Category =
  | "certain_positive"
  | "certain_negative"
  | "uncertain_positive"
  | "uncertain_negative";

export type Lifecycle = "awaiting_labels" | "retraining" | "idle" | "done";

export interface Metrics {
  precision: number;
  recall: number;
  f1: number;
  tp: number;
  fp: number;
  fn: number;
  tn: number;
}

export interface HistoryEntry {
  iteration: number;
  labeled_positive: number;
  labeled_negative: number;
  unlabeled: number;
  oracle_labels: number;
  metrics: Metrics | null;
}

export interface SessionStatus {
  session_id: string;
  lifecycle: Lifecycle;
  iteration: number;
  pools: { positive: number; negative: number; unlabeled: number };
  metrics: Metrics | null;
  history: HistoryEntry[];
  bootstrap_positives: { left_id: string; right_id: string }[];
}

export interface BatchPair {
  pair_id: string;
  left_id: string;
  right_id: string;
  left_values: string[];
  right_values: string[];
  category: Category;
  probability: number;
}

export interface BatchPayload {
  iteration: number;
  columns: string[];
  pairs: BatchPair[];
}

export interface LabelSubmission {
  pair_id: string;
  label: 0 | 1;
}
