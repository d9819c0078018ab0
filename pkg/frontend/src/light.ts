/** Hemisphere light picker: azimuth/elevation on a shaded dome, static or
 * keyframed per frame. Zenith exports (0, 0, 1) in the reference camera
 * frame; azimuth sweeps the x-y plane. */

import { LightJson } from "./schema.js";

export interface LightKey {
  frame: number; // 0-based frame index
  azimuthDeg: number;
  elevationDeg: number; // 90 = zenith
}

export interface LightPickerState {
  mode: "static" | "per_frame";
  keys: LightKey[]; // one key when static
}

export function directionFromAngles(azimuthDeg: number, elevationDeg: number): number[] {
  const az = (azimuthDeg * Math.PI) / 180;
  const el = (elevationDeg * Math.PI) / 180;
  const c = Math.cos(el);
  const d = [c * Math.cos(az), c * Math.sin(az), Math.sin(el)];
  const n = Math.hypot(d[0], d[1], d[2]);
  return [d[0] / n, d[1] / n, d[2] / n];
}

function slerp(a: number[], b: number[], t: number): number[] {
  let dot = a[0] * b[0] + a[1] * b[1] + a[2] * b[2];
  dot = Math.min(1, Math.max(-1, dot));
  const omega = Math.acos(dot);
  if (omega < 1e-9) return [...a];
  const sa = Math.sin((1 - t) * omega) / Math.sin(omega);
  const sb = Math.sin(t * omega) / Math.sin(omega);
  const v = [sa * a[0] + sb * b[0], sa * a[1] + sb * b[1], sa * a[2] + sb * b[2]];
  const n = Math.hypot(v[0], v[1], v[2]);
  return [v[0] / n, v[1] / n, v[2] / n];
}

/** Export the picker state to the light JSON schema (directions in the
 * reference camera frame; per-frame keys slerped across frames). */
export function exportLight(state: LightPickerState, frames: number): LightJson {
  if (!state.keys.length) throw new Error("light picker has no keys");
  if (state.mode === "static") {
    const k = state.keys[0];
    return { mode: "static", directions: [directionFromAngles(k.azimuthDeg, k.elevationDeg)] };
  }
  const keys = [...state.keys].sort((x, y) => x.frame - y.frame);
  const dirs: number[][] = [];
  for (let f = 0; f < frames; f++) {
    let hi = 0;
    while (hi < keys.length && keys[hi].frame < f) hi++;
    if (hi === 0) {
      dirs.push(directionFromAngles(keys[0].azimuthDeg, keys[0].elevationDeg));
    } else if (hi >= keys.length) {
      const k = keys[keys.length - 1];
      dirs.push(directionFromAngles(k.azimuthDeg, k.elevationDeg));
    } else {
      const a = keys[hi - 1];
      const b = keys[hi];
      const t = b.frame === a.frame ? 0 : (f - a.frame) / (b.frame - a.frame);
      dirs.push(slerp(
        directionFromAngles(a.azimuthDeg, a.elevationDeg),
        directionFromAngles(b.azimuthDeg, b.elevationDeg), t));
    }
  }
  return { mode: "per_frame", directions: dirs };
}
