/** Camera path drafting: draggable keyframes (position + look-at) resampled
 * to F world-to-camera poses via a Catmull-Rom spline. Conventions match
 * the service: +z looks forward, rows of R are the camera axes. */

import { CameraJson, Intrinsics } from "./schema.js";

export type Vec3 = [number, number, number];

export interface CameraKeyframe {
  position: Vec3;
  target: Vec3;
}

export interface CameraPathDraft {
  keyframes: CameraKeyframe[];
  up: Vec3;
}

function sub(a: Vec3, b: Vec3): Vec3 {
  return [a[0] - b[0], a[1] - b[1], a[2] - b[2]];
}

function cross(a: Vec3, b: Vec3): Vec3 {
  return [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]];
}

function norm(a: Vec3): number {
  return Math.hypot(a[0], a[1], a[2]);
}

function scale(a: Vec3, s: number): Vec3 {
  return [a[0] * s, a[1] * s, a[2] * s];
}

export function lookAtPose(eye: Vec3, target: Vec3, up: Vec3): { R: number[]; t: number[] } {
  const fwd = sub(target, eye);
  const fn = norm(fwd);
  if (fn < 1e-12) throw new Error("eye and target coincide");
  const f = scale(fwd, 1 / fn);
  let right = cross(f, up);
  let rn = norm(right);
  if (rn < 1e-9) {
    const alt: Vec3 = Math.abs(f[0]) < 0.9 ? [1, 0, 0] : [0, 1, 0];
    right = cross(f, alt);
    rn = norm(right);
  }
  right = scale(right, 1 / rn);
  const down = cross(f, right);
  const R = [right[0], right[1], right[2], down[0], down[1], down[2], f[0], f[1], f[2]];
  const t = [
    -(R[0] * eye[0] + R[1] * eye[1] + R[2] * eye[2]),
    -(R[3] * eye[0] + R[4] * eye[1] + R[5] * eye[2]),
    -(R[6] * eye[0] + R[7] * eye[1] + R[8] * eye[2]),
  ];
  return { R, t };
}

function catmullRom(control: Vec3[], samples: number): Vec3[] {
  if (control.length === 1) {
    return Array.from({ length: samples }, () => [...control[0]] as Vec3);
  }
  const ext: Vec3[] = [
    sub(scale(control[0], 2), control[1]),
    ...control,
    sub(scale(control[control.length - 1], 2), control[control.length - 2]),
  ];
  const out: Vec3[] = [];
  for (let i = 0; i < samples; i++) {
    const t = (i / Math.max(samples - 1, 1)) * (control.length - 1);
    const seg = Math.min(Math.floor(t), control.length - 2);
    const u = t - seg;
    const [p0, p1, p2, p3] = [ext[seg], ext[seg + 1], ext[seg + 2], ext[seg + 3]];
    const v: Vec3 = [0, 0, 0];
    for (let k = 0; k < 3; k++) {
      v[k] = 0.5 * (
        2 * p1[k] +
        (-p0[k] + p2[k]) * u +
        (2 * p0[k] - 5 * p1[k] + 4 * p2[k] - p3[k]) * u * u +
        (-p0[k] + 3 * p1[k] - 3 * p2[k] + p3[k]) * u * u * u
      );
    }
    out.push(v);
  }
  return out;
}

/** Resample the draft to exactly `frames` poses in the camera JSON schema. */
export function exportCameraPath(draft: CameraPathDraft, intrinsics: Intrinsics,
                                 frames: number): CameraJson {
  if (!draft.keyframes.length) throw new Error("camera draft has no keyframes");
  const positions = catmullRom(draft.keyframes.map((k) => k.position), frames);
  const targets = catmullRom(draft.keyframes.map((k) => k.target), frames);
  const out: CameraJson = { intrinsics, frames: [] };
  for (let f = 0; f < frames; f++) {
    out.frames.push(lookAtPose(positions[f], targets[f], draft.up));
  }
  return out;
}
