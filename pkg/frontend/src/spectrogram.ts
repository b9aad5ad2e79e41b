/** Render a [T][B] log-magnitude matrix as pixel data (time left-to-right,
 * frequency bottom-to-top). Pure so it can be tested off-DOM. */

import { gridExtent, valueToColor } from "./heatmap.js";

export function spectrogramPixels(matrix: number[][]): {
  width: number;
  height: number;
  rgba: Uint8ClampedArray;
} {
  const t = matrix.length;
  const b = t > 0 ? matrix[0].length : 0;
  const [lo, hi] = gridExtent(matrix);
  const rgba = new Uint8ClampedArray(t * b * 4);
  for (let x = 0; x < t; x++) {
    for (let y = 0; y < b; y++) {
      const [r, g, bl] = valueToColor(matrix[x][y], lo, hi);
      // row 0 of the image = highest bin
      const idx = 4 * ((b - 1 - y) * t + x);
      rgba[idx] = r;
      rgba[idx + 1] = g;
      rgba[idx + 2] = bl;
      rgba[idx + 3] = 255;
    }
  }
  return { width: t, height: b, rgba };
}
