/** Labeled panel, Model View chart data, and the live training page. */

import type {
  ClassConfidenceSummary,
  EvalPoint,
  StateSnapshot,
  TrainingEvent,
} from "./types";
import { classColor } from "./scene";

// -- labeled panel / retrain gating -----------------------------------------

/** Retrain unlocks only when the full budget of pending annotations is in. */
export function retrainEnabled(snapshot: Pick<StateSnapshot, "budget" | "budgetProgress" | "phase">): boolean {
  return snapshot.phase === "ready_to_train" && snapshot.budgetProgress === snapshot.budget;
}

export interface UndoRequest {
  kind: "undo";
  imageId: string;
}

/** Dragging a pending thumbnail back to the pool emits an undo request. */
export function dragBack(imageId: string): UndoRequest {
  return { kind: "undo", imageId };
}

export type ThumbnailIcon = "orange_triangle" | "red_cross" | "green_check";

export function thumbnailIcon(status: "suggested" | "unlabeled" | "labeled"): ThumbnailIcon {
  switch (status) {
    case "suggested":
      return "orange_triangle";
    case "unlabeled":
      return "red_cross";
    case "labeled":
      return "green_check";
  }
}

// -- model view --------------------------------------------------------------

export interface BoxPlotMark {
  classId: number;
  color: string;
  empty: boolean;
  whiskerLow: number;
  q1: number;
  median: number;
  q3: number;
  whiskerHigh: number;
  outliers: number[];
}

export function boxPlotMarks(
  distribution: Record<string, ClassConfidenceSummary>
): BoxPlotMark[] {
  return Object.entries(distribution)
    .map(([key, s]) => ({
      classId: Number(key),
      color: classColor(Number(key)),
      empty: s.empty,
      whiskerLow: s.min,
      q1: s.q1,
      median: s.median,
      q3: s.q3,
      whiskerHigh: s.max,
      outliers: s.outliers,
    }))
    .sort((a, b) => a.classId - b.classId);
}

export interface StackedBar {
  classId: number;
  /** Instances labeled in earlier iterations, rendered in the darker shade. */
  prior: number;
  /** Instances from the current iteration, rendered in the lighter shade. */
  fresh: number;
  darkColor: string;
  lightColor: string;
}

function lighten(rgbHex: string): string {
  const n = parseInt(rgbHex.slice(1), 16);
  const mix = (c: number) => Math.round(c + (255 - c) * 0.5);
  const r = mix((n >> 16) & 0xff);
  const g = mix((n >> 8) & 0xff);
  const b = mix(n & 0xff);
  return `rgb(${r},${g},${b})`;
}

export function classBalanceBars(balance: {
  prior: Record<string, number>;
  new: Record<string, number>;
}): StackedBar[] {
  const ids = new Set([...Object.keys(balance.prior), ...Object.keys(balance.new)]);
  return [...ids]
    .map(Number)
    .sort((a, b) => a - b)
    .map((classId) => ({
      classId,
      prior: balance.prior[String(classId)] ?? 0,
      fresh: balance.new[String(classId)] ?? 0,
      darkColor: classColor(classId),
      lightColor: lighten(classColor(classId)),
    }));
}

export interface TrajectorySeries {
  name: string;
  dotted: boolean;
  values: number[];
}

/** Session curve solid; the automatic baseline overlays as a dotted series. */
export function trajectoryChart(
  session: EvalPoint[],
  baseline: EvalPoint[],
  metric: keyof EvalPoint = "map50_95"
): TrajectorySeries[] {
  const series: TrajectorySeries[] = [
    { name: "session", dotted: false, values: session.map((p) => p[metric]) },
  ];
  if (baseline.length > 0) {
    series.push({ name: "baseline", dotted: true, values: baseline.map((p) => p[metric]) });
  }
  return series;
}

// -- training page -----------------------------------------------------------

export interface TrainingPageState {
  epochs: { epoch: number; map50: number; map50_95: number; boxLoss: number; clsLoss: number }[];
  terminal: { type: "done"; version: number } | { type: "failed"; detail: string } | null;
}

export function newTrainingPage(): TrainingPageState {
  return { epochs: [], terminal: null };
}

/** Append one ordered stream event; epoch events after a terminal are bugs. */
export function applyTrainingEvent(page: TrainingPageState, event: TrainingEvent): TrainingPageState {
  if (page.terminal !== null) {
    throw new Error("training stream continued past its terminal event");
  }
  if (event.type === "epoch") {
    return {
      ...page,
      epochs: [
        ...page.epochs,
        {
          epoch: event.epoch,
          map50: event.map50,
          map50_95: event.map50_95,
          boxLoss: event.box_loss,
          clsLoss: event.cls_loss,
        },
      ],
    };
  }
  return { ...page, terminal: event };
}
