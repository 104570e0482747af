// Metric trajectory for the progress chart, derived verbatim from the
// /session history payload (iteration 0 is the bootstrap-trained model).

import type { SessionStatus } from "./types.js";

export interface ProgressPoint {
  iteration: number;
  precision: number;
  recall: number;
  f1: number;
}

export function buildProgressSeries(status: SessionStatus): ProgressPoint[] {
  return status.history
    .filter((entry) => entry.metrics !== null)
    .map((entry) => ({
      iteration: entry.iteration,
      precision: entry.metrics!.precision,
      recall: entry.metrics!.recall,
      f1: entry.metrics!.f1,
    }));
}

/** Polyline points attribute for an SVG chart of one metric in [0, 1]. */
export function toPolylinePoints(
  series: ProgressPoint[],
  metric: "precision" | "recall" | "f1",
  width: number,
  height: number,
  pad = 4,
): string {
  if (series.length === 0) {
    return "";
  }
  const maxIter = Math.max(1, series[series.length - 1].iteration);
  return series
    .map((point) => {
      const x = pad + (point.iteration / maxIter) * (width - 2 * pad);
      const y = height - pad - point[metric] * (height - 2 * pad);
      return `${x.toFixed(2)},${y.toFixed(2)}`;
    })
    .join(" ");
}
