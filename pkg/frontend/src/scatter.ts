/** Minimal 3-D scatter math: rotation, perspective-free projection and the
 * inverse mapping used to drag the cursor in the current view plane. */

export interface View {
  yaw: number; // rotation about the vertical axis
  pitch: number; // rotation about the horizontal axis
  scale: number; // pixels per latent unit
  cx: number; // canvas center x
  cy: number; // canvas center y
}

export type Vec3 = [number, number, number];

export function rotate(p: Vec3, view: View): Vec3 {
  const [x, y, z] = p;
  const cy = Math.cos(view.yaw);
  const sy = Math.sin(view.yaw);
  const cp = Math.cos(view.pitch);
  const sp = Math.sin(view.pitch);
  // yaw about y, then pitch about x
  const x1 = cy * x + sy * z;
  const z1 = -sy * x + cy * z;
  const y2 = cp * y - sp * z1;
  const z2 = sp * y + cp * z1;
  return [x1, y2, z2];
}

export function project(p: Vec3, view: View): { x: number; y: number; depth: number } {
  const [rx, ry, rz] = rotate(p, view);
  return { x: view.cx + view.scale * rx, y: view.cy - view.scale * ry, depth: rz };
}

/** Map a screen-pixel delta onto a latent delta lying in the view plane
 * (the plane orthogonal to the camera direction). */
export function screenDeltaToLatent(dx: number, dy: number, view: View): Vec3 {
  const ux = dx / view.scale;
  const uy = -dy / view.scale;
  // inverse of the rotation applied to the in-plane basis vectors
  const cy = Math.cos(view.yaw);
  const sy = Math.sin(view.yaw);
  const cp = Math.cos(view.pitch);
  const sp = Math.sin(view.pitch);
  // right vector (screen x) and up vector (screen y) in latent coordinates
  const right: Vec3 = [cy, 0, -sy];
  const up: Vec3 = [sy * sp, cp, cy * sp];
  return [
    ux * right[0] + uy * up[0],
    ux * right[1] + uy * up[1],
    ux * right[2] + uy * up[2],
  ];
}

export const INSTRUMENT_PALETTE = [
  "#4e79a7",
  "#f28e2b",
  "#59a14f",
  "#e15759",
  "#b07aa1",
  "#76b7b2",
  "#edc948",
  "#9c755f",
];

export const PITCH_PALETTE = Array.from({ length: 12 }, (_, i) => {
  const hue = Math.round((360 * i) / 12);
  return `hsl(${hue}, 70%, 55%)`;
});
