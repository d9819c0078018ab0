/** JSON wire schemas shared with the session service, plus validators.
 *
 * The studio never computes conditioning math locally; these types mirror
 * the service's formats exactly so every export round-trips through HTTP.
 */

export interface Intrinsics {
  fx: number;
  fy: number;
  cx: number;
  cy: number;
  width: number;
  height: number;
}

export interface CameraFrame {
  R: number[]; // 9 floats, row-major, world-to-camera
  t: number[]; // 3 floats
}

export interface CameraJson {
  intrinsics: Intrinsics;
  frames: CameraFrame[];
}

export interface TrackJson {
  id: number;
  points: number[][]; // [x, y] per frame
}

export interface TrajectoriesJson {
  frame_count: number;
  width: number;
  height: number;
  tracks: TrackJson[];
}

export interface LightJson {
  mode: "static" | "per_frame";
  directions: number[][];
}

export type ControlName = "camera" | "object" | "light";

export interface SessionExport {
  camera: CameraJson;
  trajectories: TrajectoriesJson;
  light: LightJson;
  controls: ControlName[];
  steps: number;
  guidance: number;
  seed: number;
}

const EPS = 1e-6;

export function validateCamera(cam: CameraJson, expectFrames?: number): void {
  const { intrinsics, frames } = cam;
  if (intrinsics.fx <= 0 || intrinsics.fy <= 0) throw new Error("focal lengths must be positive");
  if (intrinsics.cx < 0 || intrinsics.cx >= intrinsics.width ||
      intrinsics.cy < 0 || intrinsics.cy >= intrinsics.height) {
    throw new Error("principal point outside image");
  }
  if (!frames.length) throw new Error("camera trajectory has no frames");
  if (expectFrames !== undefined && frames.length !== expectFrames) {
    throw new Error(`expected ${expectFrames} camera frames, got ${frames.length}`);
  }
  for (const f of frames) {
    if (f.R.length !== 9 || f.t.length !== 3) throw new Error("frame needs R[9] and t[3]");
    assertOrthonormal(f.R);
  }
}

function assertOrthonormal(r: number[]): void {
  // R^T R = I within 1e-6
  for (let i = 0; i < 3; i++) {
    for (let j = 0; j < 3; j++) {
      let dot = 0;
      for (let k = 0; k < 3; k++) dot += r[k * 3 + i] * r[k * 3 + j];
      const want = i === j ? 1 : 0;
      if (Math.abs(dot - want) > 1e-5) throw new Error("rotation is not orthonormal");
    }
  }
}

export function validateTrajectories(trajs: TrajectoriesJson, expectFrames?: number): void {
  if (expectFrames !== undefined && trajs.frame_count !== expectFrames) {
    throw new Error(`expected frame_count ${expectFrames}, got ${trajs.frame_count}`);
  }
  for (const track of trajs.tracks) {
    if (track.points.length !== trajs.frame_count) {
      throw new Error(`track ${track.id} has ${track.points.length} points, want ${trajs.frame_count}`);
    }
    for (const [x, y] of track.points) {
      if (x < 0 || x >= trajs.width || y < 0 || y >= trajs.height) {
        throw new Error(`track ${track.id} leaves the image bounds`);
      }
    }
  }
}

export function validateLight(light: LightJson, expectFrames?: number): void {
  if (light.mode !== "static" && light.mode !== "per_frame") {
    throw new Error(`unknown light mode ${light.mode}`);
  }
  if (!light.directions.length) throw new Error("light needs at least one direction");
  if (light.mode === "static" && light.directions.length !== 1) {
    throw new Error("static light takes exactly one direction");
  }
  if (light.mode === "per_frame" && expectFrames !== undefined &&
      light.directions.length !== expectFrames) {
    throw new Error(`per_frame light needs ${expectFrames} directions`);
  }
  for (const d of light.directions) {
    if (d.length !== 3) throw new Error("light directions are 3-vectors");
    const n = Math.hypot(d[0], d[1], d[2]);
    if (Math.abs(n - 1) > EPS) throw new Error("light directions must be unit vectors");
  }
}
