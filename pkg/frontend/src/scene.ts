/** Data View scene assembly: point marks with status encodings + contours. */

import { buildContourLayers, type ContourLayer } from "./contours";
import type { HeatmapGrid, PointStatus, ProjectionPoint, StateSnapshot } from "./types";

export type Symbol = "triangle" | "diamond" | "circle";

export interface PointMark {
  imageId: string;
  x: number;
  y: number;
  symbol: Symbol;
  color: string;
  size: number;
  status: PointStatus;
}

export interface Scene {
  points: PointMark[];
  contours: ContourLayer[];
}

export const SUGGESTED_COLOR = "#ff8c00"; // orange
export const UNLABELED_COLOR = "#9e9e9e"; // gray
export const BASE_POINT_SIZE = 6;
export const SUGGESTED_POINT_SIZE = 10;

export const CLASS_COLORS = [
  "#1f77b4",
  "#2ca02c",
  "#d62728",
  "#9467bd",
  "#8c564b",
  "#e377c2",
  "#17becf",
  "#bcbd22",
];

export function classColor(classId: number): string {
  return CLASS_COLORS[classId % CLASS_COLORS.length]!;
}

export interface ViewState {
  showHeatmap: boolean;
  showLabeled: boolean;
  showUnlabeled: boolean;
  showSuggested: boolean;
  lassoPath: { x: number; y: number }[];
  selectedIds: string[];
}

export function initialViewState(): ViewState {
  return {
    showHeatmap: true,
    showLabeled: true,
    showUnlabeled: true,
    showSuggested: true,
    lassoPath: [],
    selectedIds: [],
  };
}

/** Exactly one (symbol, color, size) encoding per point status. */
export function encodePoint(point: ProjectionPoint): PointMark {
  switch (point.status) {
    case "suggested":
      return {
        imageId: point.imageId,
        x: point.x,
        y: point.y,
        symbol: "triangle",
        color: SUGGESTED_COLOR,
        size: SUGGESTED_POINT_SIZE,
        status: "suggested",
      };
    case "unlabeled":
      return {
        imageId: point.imageId,
        x: point.x,
        y: point.y,
        symbol: "diamond",
        color: UNLABELED_COLOR,
        size: BASE_POINT_SIZE,
        status: "unlabeled",
      };
    case "labeled":
      return {
        imageId: point.imageId,
        x: point.x,
        y: point.y,
        symbol: "circle",
        color:
          point.majorityClass === null || point.majorityClass === undefined
            ? UNLABELED_COLOR
            : classColor(point.majorityClass),
        size: BASE_POINT_SIZE,
        status: "labeled",
      };
  }
}

export function renderDataView(
  snapshot: Pick<StateSnapshot, "points">,
  heatmap: HeatmapGrid | null,
  view: ViewState
): Scene {
  const visible = (status: PointStatus): boolean =>
    status === "labeled"
      ? view.showLabeled
      : status === "suggested"
        ? view.showSuggested
        : view.showUnlabeled;
  return {
    points: snapshot.points.filter((p) => visible(p.status)).map(encodePoint),
    contours: view.showHeatmap && heatmap ? buildContourLayers(heatmap) : [],
  };
}
