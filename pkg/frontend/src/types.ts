/** Shared domain types mirroring the service's JSON payloads. */

/** Normalized center-format box: cx, cy, w, h, all in [0, 1]. */
export interface NormalizedBox {
  cx: number;
  cy: number;
  w: number;
  h: number;
}

/** Pixel-space rectangle on the annotation canvas. */
export interface PixelRect {
  x: number;
  y: number;
  width: number;
  height: number;
}

export type PointStatus = "suggested" | "unlabeled" | "labeled";

export interface ProjectionPoint {
  imageId: string;
  x: number;
  y: number;
  status: PointStatus;
  /** Present only for labeled points: the majority class of its boxes. */
  majorityClass?: number | null;
}

export interface HeatmapGrid {
  xMin: number;
  xMax: number;
  yMin: number;
  yMax: number;
  nx: number;
  ny: number;
  /** Row-major values[ix][iy]. */
  values: number[][];
  colormap: string;
  degenerate: boolean;
}

export interface ClassConfidenceSummary {
  empty: boolean;
  min: number;
  q1: number;
  median: number;
  q3: number;
  max: number;
  outliers: number[];
}

export interface StateSnapshot {
  iteration: number;
  phase: "annotating" | "ready_to_train" | "training" | "completed";
  budget: number;
  budgetProgress: number;
  labeledCount: number;
  suggestions: string[];
  points: ProjectionPoint[];
  modelVersion: number;
  confidenceDistribution: Record<string, ClassConfidenceSummary>;
  classBalance: { prior: Record<string, number>; new: Record<string, number> };
  faults: string[];
}

export interface Prediction {
  class: number;
  box: [number, number, number, number];
  conf: number;
}

export interface EvalPoint {
  map50: number;
  map75: number;
  map50_95: number;
  precision: number;
  recall: number;
}

export type TrainingEvent =
  | { type: "epoch"; epoch: number; map50: number; map50_95: number; box_loss: number; cls_loss: number }
  | { type: "done"; version: number }
  | { type: "failed"; detail: string };
