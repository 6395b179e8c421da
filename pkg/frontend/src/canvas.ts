/** Annotation canvas geometry: screen pixels <-> normalized center boxes. */

import type { NormalizedBox, PixelRect } from "./types";

export class ZeroAreaBox extends Error {}

/** Drags smaller than this (in either dimension, screen px) are ignored. */
export const MIN_DRAG_PX = 2;

export interface CanvasGeometry {
  /** Natural image size in pixels. */
  imageWidth: number;
  imageHeight: number;
  /** Screen px per image px. */
  zoom: number;
}

/** Convert a screen-space drag rectangle to a normalized center-format box. */
export function normalizeBox(rect: PixelRect, geom: CanvasGeometry): NormalizedBox {
  if (rect.width < MIN_DRAG_PX || rect.height < MIN_DRAG_PX) {
    throw new ZeroAreaBox(`drag of ${rect.width}x${rect.height}px is below ${MIN_DRAG_PX}px`);
  }
  const iw = geom.imageWidth * geom.zoom;
  const ih = geom.imageHeight * geom.zoom;
  return {
    cx: (rect.x + rect.width / 2) / iw,
    cy: (rect.y + rect.height / 2) / ih,
    w: rect.width / iw,
    h: rect.height / ih,
  };
}

/** Convert a normalized center-format box back to screen pixels. */
export function denormalizeBox(box: NormalizedBox, geom: CanvasGeometry): PixelRect {
  const iw = geom.imageWidth * geom.zoom;
  const ih = geom.imageHeight * geom.zoom;
  return {
    x: (box.cx - box.w / 2) * iw,
    y: (box.cy - box.h / 2) * ih,
    width: box.w * iw,
    height: box.h * ih,
  };
}

export type EditEvent =
  | { kind: "add"; classId: number; box: NormalizedBox }
  | { kind: "clear_all" }
  | { kind: "confirm" };

/** Pending edit state for one annotation modal. */
export class AnnotationCanvas {
  readonly geom: CanvasGeometry;
  private edits: { classId: number; box: NormalizedBox }[] = [];
  private predictionsVisible = true;
  private confirmed = false;

  constructor(geom: CanvasGeometry) {
    this.geom = geom;
  }

  drawBox(classId: number, rect: PixelRect): EditEvent {
    const box = normalizeBox(rect, this.geom);
    this.edits.push({ classId, box });
    return { kind: "add", classId, box };
  }

  clearAll(): EditEvent {
    this.edits = [];
    return { kind: "clear_all" };
  }

  /** Hides/shows the model-prediction layer; never touches user edits. */
  togglePredictions(): boolean {
    this.predictionsVisible = !this.predictionsVisible;
    return this.predictionsVisible;
  }

  get showPredictions(): boolean {
    return this.predictionsVisible;
  }

  get pendingBoxes(): readonly { classId: number; box: NormalizedBox }[] {
    return this.edits;
  }

  confirm(): { classId: number; box: NormalizedBox }[] {
    this.confirmed = true;
    return [...this.edits];
  }

  get isOpen(): boolean {
    return !this.confirmed;
  }
}
