/** Lasso selection over the projection scatterplot. */

import type { ProjectionPoint } from "./types";

export interface Vertex {
  x: number;
  y: number;
}

export class DegeneratePath extends Error {
  constructor(size: number) {
    super(`lasso path needs at least 3 vertices, got ${size}`);
  }
}

/**
 * Even-odd rule: cast a horizontal ray to +x and count edge crossings.
 * Points exactly on an edge count as outside ("strictly inside").
 */
export function pointInPolygon(point: Vertex, polygon: Vertex[]): boolean {
  const n = polygon.length;
  // boundary points are outside, including those on horizontal edges the
  // ray test below cannot see
  for (let i = 0, j = n - 1; i < n; j = i++) {
    const a = polygon[i]!;
    const b = polygon[j]!;
    const cross = (b.x - a.x) * (point.y - a.y) - (b.y - a.y) * (point.x - a.x);
    if (
      cross === 0 &&
      point.x >= Math.min(a.x, b.x) &&
      point.x <= Math.max(a.x, b.x) &&
      point.y >= Math.min(a.y, b.y) &&
      point.y <= Math.max(a.y, b.y)
    ) {
      return false;
    }
  }
  let inside = false;
  for (let i = 0, j = n - 1; i < n; j = i++) {
    const a = polygon[i]!;
    const b = polygon[j]!;
    // the edge straddles the point's y; compute the crossing's x
    if (a.y > point.y !== b.y > point.y) {
      const xCross = a.x + ((point.y - a.y) / (b.y - a.y)) * (b.x - a.x);
      if (point.x < xCross) inside = !inside;
    }
  }
  return inside;
}

/**
 * Ids of points strictly inside the closed lasso polygon, in projection
 * order. The path is closed implicitly (last vertex connects to first).
 */
export function lassoSelect(path: Vertex[], points: ProjectionPoint[]): string[] {
  if (path.length < 3) {
    throw new DegeneratePath(path.length);
  }
  return points
    .filter((p) => pointInPolygon({ x: p.x, y: p.y }, path))
    .map((p) => p.imageId);
}
