import { describe, expect, it } from "vitest";

import {
  applyTrainingEvent,
  boxPlotMarks,
  classBalanceBars,
  dragBack,
  newTrainingPage,
  retrainEnabled,
  thumbnailIcon,
  trajectoryChart,
} from "../src/panels";
import type { StateSnapshot, TrainingEvent } from "../src/types";

function snapshot(progress: number, phase: StateSnapshot["phase"]): Pick<StateSnapshot, "budget" | "budgetProgress" | "phase"> {
  return { budget: 30, budgetProgress: progress, phase };
}

describe("retrain gating", () => {
  it("is enabled exactly at 30/30", () => {
    expect(retrainEnabled(snapshot(30, "ready_to_train"))).toBe(true);
    expect(retrainEnabled(snapshot(29, "annotating"))).toBe(false);
    expect(retrainEnabled(snapshot(0, "annotating"))).toBe(false);
  });

  it("disables again after an undo drops progress to 29/30", () => {
    expect(retrainEnabled(snapshot(30, "ready_to_train"))).toBe(true);
    // service responds to the DELETE with the reverted phase/progress
    expect(retrainEnabled(snapshot(29, "annotating"))).toBe(false);
  });

  it("is disabled while training or completed", () => {
    expect(retrainEnabled(snapshot(30, "training"))).toBe(false);
    expect(retrainEnabled(snapshot(0, "completed"))).toBe(false);
  });
});

describe("labeled panel", () => {
  it("drag-back emits an undo request", () => {
    expect(dragBack("img_007")).toEqual({ kind: "undo", imageId: "img_007" });
  });

  it("status icons map one-to-one", () => {
    expect(thumbnailIcon("suggested")).toBe("orange_triangle");
    expect(thumbnailIcon("unlabeled")).toBe("red_cross");
    expect(thumbnailIcon("labeled")).toBe("green_check");
  });
});

describe("model view", () => {
  it("box plot marks carry the five-number summary and outliers", () => {
    const marks = boxPlotMarks({
      "1": { empty: false, min: 0.1, q1: 0.3, median: 0.5, q3: 0.7, max: 0.9, outliers: [0.01] },
      "0": { empty: true, min: 0, q1: 0, median: 0, q3: 0, max: 0, outliers: [] },
    });
    expect(marks.map((m) => m.classId)).toEqual([0, 1]);
    expect(marks[1]).toMatchObject({
      whiskerLow: 0.1,
      q1: 0.3,
      median: 0.5,
      q3: 0.7,
      whiskerHigh: 0.9,
      outliers: [0.01],
    });
    expect(marks[0]!.empty).toBe(true);
  });

  it("stacked bars split prior (dark) and new (light) per class", () => {
    const bars = classBalanceBars({ prior: { "0": 15, "2": 9 }, new: { "0": 5, "1": 7 } });
    expect(bars.map((b) => b.classId)).toEqual([0, 1, 2]);
    expect(bars[0]).toMatchObject({ prior: 15, fresh: 5 });
    expect(bars[1]).toMatchObject({ prior: 0, fresh: 7 });
    expect(bars[0]!.darkColor).not.toBe(bars[0]!.lightColor);
  });

  it("trajectory chart overlays the baseline as a dotted series", () => {
    const point = { map50: 0.5, map75: 0.3, map50_95: 0.25, precision: 0.8, recall: 0.7 };
    const series = trajectoryChart([point, point], [point]);
    expect(series).toHaveLength(2);
    expect(series[0]).toMatchObject({ name: "session", dotted: false });
    expect(series[1]).toMatchObject({ name: "baseline", dotted: true });
    expect(series[0]!.values).toEqual([0.25, 0.25]);
  });
});

describe("training page", () => {
  const epoch = (n: number): TrainingEvent => ({
    type: "epoch",
    epoch: n,
    map50: n / 100,
    map50_95: n / 200,
    box_loss: 1 / n,
    cls_loss: 1 / n,
  });

  it("appends 50 epoch events in order then the terminal state", () => {
    let page = newTrainingPage();
    for (let n = 1; n <= 50; n++) {
      page = applyTrainingEvent(page, epoch(n));
    }
    page = applyTrainingEvent(page, { type: "done", version: 2 });
    expect(page.epochs).toHaveLength(50);
    expect(page.epochs.map((e) => e.epoch)).toEqual(
      Array.from({ length: 50 }, (_, i) => i + 1)
    );
    expect(page.terminal).toEqual({ type: "done", version: 2 });
  });

  it("records failures as terminal", () => {
    let page = newTrainingPage();
    page = applyTrainingEvent(page, epoch(1));
    page = applyTrainingEvent(page, { type: "failed", detail: "backend crashed" });
    expect(page.terminal).toMatchObject({ type: "failed" });
  });

  it("rejects events after the terminal", () => {
    let page = newTrainingPage();
    page = applyTrainingEvent(page, { type: "done", version: 1 });
    expect(() => applyTrainingEvent(page, epoch(2))).toThrow();
  });
});
