/** Marching-squares contour extraction for the density heatmap overlay. */

import type { HeatmapGrid } from "./types";

export const CONTOUR_LEVELS = 8;
export const CONTOUR_OPACITY = 0.35;

export interface ContourSegment {
  x1: number;
  y1: number;
  x2: number;
  y2: number;
}

export interface ContourLayer {
  level: number;
  /** Fill color from the grid's colormap ramp, light to dark. */
  color: string;
  opacity: number;
  segments: ContourSegment[];
}

/** Evenly spaced levels strictly between the grid's min and max. */
export function contourLevels(grid: HeatmapGrid, count = CONTOUR_LEVELS): number[] {
  let lo = Infinity;
  let hi = -Infinity;
  for (const row of grid.values) {
    for (const v of row) {
      if (v < lo) lo = v;
      if (v > hi) hi = v;
    }
  }
  if (!(hi > lo)) return [];
  const levels: number[] = [];
  for (let i = 1; i <= count; i++) {
    levels.push(lo + ((hi - lo) * i) / (count + 1));
  }
  return levels;
}

/** Sequential "Reds"-style ramp: light for low levels, dark for high. */
export function rampColor(levelIndex: number, levelCount: number): string {
  const t = levelCount <= 1 ? 1 : levelIndex / (levelCount - 1);
  const r = 255;
  const g = Math.round(235 - 185 * t);
  const b = Math.round(230 - 190 * t);
  return `rgb(${r},${g},${b})`;
}

function interp(level: number, a: number, b: number): number {
  return a === b ? 0.5 : (level - a) / (b - a);
}

/**
 * Classic 16-case marching squares over cell centers. Returns line segments
 * in data coordinates; saddle cases split by the cell-average rule.
 */
export function marchingSquares(grid: HeatmapGrid, level: number): ContourSegment[] {
  const { nx, ny, values } = grid;
  const dx = (grid.xMax - grid.xMin) / nx;
  const dy = (grid.yMax - grid.yMin) / ny;
  const cx = (i: number) => grid.xMin + (i + 0.5) * dx;
  const cy = (j: number) => grid.yMin + (j + 0.5) * dy;
  const segments: ContourSegment[] = [];

  for (let i = 0; i < nx - 1; i++) {
    for (let j = 0; j < ny - 1; j++) {
      const v00 = values[i]![j]!; // bottom-left of the 2x2 patch
      const v10 = values[i + 1]![j]!;
      const v11 = values[i + 1]![j + 1]!;
      const v01 = values[i]![j + 1]!;
      let code = 0;
      if (v00 >= level) code |= 1;
      if (v10 >= level) code |= 2;
      if (v11 >= level) code |= 4;
      if (v01 >= level) code |= 8;
      if (code === 0 || code === 15) continue;

      // edge midpoints by linear interpolation
      const bottom = { x: cx(i) + interp(level, v00, v10) * dx, y: cy(j) };
      const right = { x: cx(i + 1), y: cy(j) + interp(level, v10, v11) * dy };
      const top = { x: cx(i) + interp(level, v01, v11) * dx, y: cy(j + 1) };
      const left = { x: cx(i), y: cy(j) + interp(level, v00, v01) * dy };

      const add = (a: { x: number; y: number }, b: { x: number; y: number }) =>
        segments.push({ x1: a.x, y1: a.y, x2: b.x, y2: b.y });

      switch (code) {
        case 1: case 14: add(left, bottom); break;
        case 2: case 13: add(bottom, right); break;
        case 3: case 12: add(left, right); break;
        case 4: case 11: add(right, top); break;
        case 6: case 9: add(bottom, top); break;
        case 7: case 8: add(left, top); break;
        case 5: {
          const center = (v00 + v10 + v11 + v01) / 4;
          if (center >= level) { add(left, top); add(bottom, right); }
          else { add(left, bottom); add(right, top); }
          break;
        }
        case 10: {
          const center = (v00 + v10 + v11 + v01) / 4;
          if (center >= level) { add(left, bottom); add(right, top); }
          else { add(left, top); add(bottom, right); }
          break;
        }
      }
    }
  }
  return segments;
}

/** Full contour overlay: 8 filled levels from the heatmap grid. */
export function buildContourLayers(grid: HeatmapGrid): ContourLayer[] {
  if (grid.degenerate) return [];
  const levels = contourLevels(grid);
  return levels.map((level, idx) => ({
    level,
    color: rampColor(idx, levels.length),
    opacity: CONTOUR_OPACITY,
    segments: marchingSquares(grid, level),
  }));
}
