/** Topology slice extraction and color mapping. The service returns an
 * n^3 lattice flattened in z0-major (i, j, k) order; a slice fixes one axis
 * and shows the remaining two as a heat map. */

import type { DescriptorSet, TopologyPoint } from "./api.js";
import type { Axis } from "./state.js";

export function latticeIndex(i: number, j: number, k: number, n: number): number {
  return (i * n + j) * n + k;
}

/** Index of the lattice plane nearest to a coordinate value. */
export function nearestPlane(value: number, lo: number, hi: number, n: number): number {
  if (n < 2) return 0;
  const t = (value - lo) / (hi - lo);
  return Math.min(n - 1, Math.max(0, Math.round(t * (n - 1))));
}

/** Extract an [n][n] grid of one descriptor across the slice through
 * `plane` along `axis`. Row/column order follows the other two axes in
 * ascending z order. */
export function sliceGrid(
  points: TopologyPoint[],
  n: number,
  axis: Axis,
  plane: number,
  field: keyof DescriptorSet,
): number[][] {
  if (points.length !== n * n * n) {
    throw new Error(`expected ${n ** 3} lattice points, got ${points.length}`);
  }
  const grid: number[][] = [];
  for (let a = 0; a < n; a++) {
    const row: number[] = [];
    for (let b = 0; b < n; b++) {
      let i: number, j: number, k: number;
      if (axis === 0) [i, j, k] = [plane, a, b];
      else if (axis === 1) [i, j, k] = [a, plane, b];
      else [i, j, k] = [a, b, plane];
      row.push(points[latticeIndex(i, j, k, n)][field]);
    }
    grid.push(row);
  }
  return grid;
}

/** Monotone blue->yellow color scale over [lo, hi]. */
export function valueToColor(
  v: number,
  lo: number,
  hi: number,
): [number, number, number] {
  const t = hi > lo ? Math.min(1, Math.max(0, (v - lo) / (hi - lo))) : 0;
  return [Math.round(255 * t), Math.round(64 + 128 * t), Math.round(255 * (1 - t))];
}

export function gridExtent(grid: number[][]): [number, number] {
  let lo = Infinity;
  let hi = -Infinity;
  for (const row of grid)
    for (const v of row) {
      if (v < lo) lo = v;
      if (v > hi) hi = v;
    }
  return [lo, hi];
}
