import { describe, expect, it } from "vitest";

import type { TopologyPoint } from "../src/api.js";
import {
  gridExtent,
  latticeIndex,
  nearestPlane,
  sliceGrid,
  valueToColor,
} from "../src/heatmap.js";

function lattice(n: number): TopologyPoint[] {
  // centroid encodes the lattice coordinates so slices are verifiable
  const pts: TopologyPoint[] = [];
  for (let i = 0; i < n; i++)
    for (let j = 0; j < n; j++)
      for (let k = 0; k < n; k++)
        pts.push({
          z: [i, j, k],
          flatness: 0.1,
          centroid: 100 * i + 10 * j + k,
          rolloff: 0,
          loudness: -20,
        });
  return pts;
}

describe("slice extraction", () => {
  it("pass-through: slice values equal the topology field", () => {
    const n = 4;
    const pts = lattice(n);
    const grid = sliceGrid(pts, n, 2, 1, "centroid");
    for (let i = 0; i < n; i++)
      for (let j = 0; j < n; j++)
        expect(grid[i][j]).toBe(100 * i + 10 * j + 1);
  });

  it("axis-0 slice fixes the first coordinate", () => {
    const n = 3;
    const grid = sliceGrid(lattice(n), n, 0, 2, "centroid");
    for (let j = 0; j < n; j++)
      for (let k = 0; k < n; k++) expect(grid[j][k]).toBe(200 + 10 * j + k);
  });

  it("rejects wrong point counts", () => {
    expect(() => sliceGrid(lattice(3).slice(1), 3, 0, 0, "centroid")).toThrow();
  });

  it("lattice index matches meshgrid ij order", () => {
    expect(latticeIndex(0, 0, 0, 5)).toBe(0);
    expect(latticeIndex(0, 0, 4, 5)).toBe(4);
    expect(latticeIndex(1, 0, 0, 5)).toBe(25);
  });
});

describe("plane selection", () => {
  it("maps coordinates to the nearest lattice plane", () => {
    expect(nearestPlane(-3, -3, 3, 9)).toBe(0);
    expect(nearestPlane(3, -3, 3, 9)).toBe(8);
    expect(nearestPlane(0, -3, 3, 9)).toBe(4);
    expect(nearestPlane(10, -3, 3, 9)).toBe(8); // clamped
  });
});

describe("color scale", () => {
  it("is monotone in red and bounded", () => {
    let prev = -1;
    for (let v = 0; v <= 10; v++) {
      const [r, , b] = valueToColor(v, 0, 10);
      expect(r).toBeGreaterThanOrEqual(prev);
      expect(r).toBeGreaterThanOrEqual(0);
      expect(b).toBeLessThanOrEqual(255);
      prev = r;
    }
  });

  it("extent covers all grid values", () => {
    const [lo, hi] = gridExtent([
      [3, 1],
      [7, 5],
    ]);
    expect(lo).toBe(1);
    expect(hi).toBe(7);
  });
});
