/** Explorer state and its URL serialization: reloading a shared URL must
 * reproduce cursor, condition, overlay and slice choice. */

import type { Condition, DescriptorSet, ModelInfo } from "./api.js";
import { DESCRIPTOR_NAMES } from "./api.js";

export type Overlay = keyof DescriptorSet;
export type Axis = 0 | 1 | 2;

export interface ExplorerState {
  cursor: [number, number, number];
  condition: Condition;
  overlay: Overlay;
  sliceAxis: Axis;
  box: [number, number];
}

export interface AbSlot {
  z: [number, number, number];
  condition: Condition;
}

export function defaultState(): ExplorerState {
  return {
    cursor: [0, 0, 0],
    condition: { pitch_class: 9, octave: 4, instrument: 0 },
    overlay: "centroid",
    sliceAxis: 2,
    box: [-3, 3],
  };
}

const clamp = (v: number, lo: number, hi: number) =>
  Math.min(Math.max(v, lo), hi);

/** Clamp cursor into the latent box and condition into the model vocab. */
export function sanitizeState(state: ExplorerState, info?: ModelInfo): ExplorerState {
  const [lo, hi] = state.box[0] < state.box[1] ? state.box : [-3, 3];
  const cursor = state.cursor.map((v) =>
    clamp(Number.isFinite(v) ? v : 0, lo, hi),
  ) as [number, number, number];
  const maxInstrument = info ? info.instruments.length - 1 : 127;
  const condition = {
    pitch_class: clamp(Math.round(state.condition.pitch_class), 0, 11),
    octave: clamp(Math.round(state.condition.octave), 0, 8),
    instrument: clamp(Math.round(state.condition.instrument), 0, maxInstrument),
  };
  const overlay = DESCRIPTOR_NAMES.includes(state.overlay)
    ? state.overlay
    : "centroid";
  const sliceAxis = ([0, 1, 2] as Axis[]).includes(state.sliceAxis)
    ? state.sliceAxis
    : 2;
  return { cursor, condition, overlay, sliceAxis, box: [lo, hi] };
}

export function encodeStateToUrl(state: ExplorerState): string {
  const p = new URLSearchParams({
    z: state.cursor.map((v) => v.toFixed(4)).join(","),
    pc: String(state.condition.pitch_class),
    oct: String(state.condition.octave),
    inst: String(state.condition.instrument),
    overlay: state.overlay,
    axis: String(state.sliceAxis),
    box: `${state.box[0]},${state.box[1]}`,
  });
  return `#${p.toString()}`;
}

export function decodeStateFromUrl(
  fragment: string,
  info?: ModelInfo,
): ExplorerState {
  const base = defaultState();
  const raw = fragment.startsWith("#") ? fragment.slice(1) : fragment;
  if (!raw) return base;
  const p = new URLSearchParams(raw);
  const nums = (key: string, fallback: number[]): number[] => {
    const v = p.get(key);
    if (!v) return fallback;
    const parts = v.split(",").map(Number);
    return parts.length === fallback.length && parts.every(Number.isFinite)
      ? parts
      : fallback;
  };
  const state: ExplorerState = {
    cursor: nums("z", base.cursor) as [number, number, number],
    condition: {
      pitch_class: Number(p.get("pc") ?? base.condition.pitch_class),
      octave: Number(p.get("oct") ?? base.condition.octave),
      instrument: Number(p.get("inst") ?? base.condition.instrument),
    },
    overlay: (p.get("overlay") as Overlay) ?? base.overlay,
    sliceAxis: Number(p.get("axis") ?? base.sliceAxis) as Axis,
    box: nums("box", base.box) as [number, number],
  };
  return sanitizeState(state, info);
}

/** Per-descriptor differences between two readouts (B minus A). */
export function descriptorDeltas(
  a: DescriptorSet,
  b: DescriptorSet,
): DescriptorSet {
  return {
    flatness: b.flatness - a.flatness,
    centroid: b.centroid - a.centroid,
    rolloff: b.rolloff - a.rolloff,
    loudness: b.loudness - a.loudness,
  };
}

export function sameState(a: AbSlot, b: AbSlot): boolean {
  return (
    a.z.every((v, i) => v === b.z[i]) &&
    a.condition.pitch_class === b.condition.pitch_class &&
    a.condition.octave === b.condition.octave &&
    a.condition.instrument === b.condition.instrument
  );
}
