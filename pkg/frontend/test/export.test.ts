import { describe, expect, it } from "vitest";

import { exportCameraPath, lookAtPose } from "../src/camera.js";
import { exportSession, importSession, StudioState } from "../src/export.js";
import { directionFromAngles, exportLight } from "../src/light.js";
import { arcLengths, resampleTrack } from "../src/resample.js";
import {
  validateCamera,
  validateLight,
  validateTrajectories,
  Intrinsics,
} from "../src/schema.js";
import { exportTracks } from "../src/tracks.js";

const INTR: Intrinsics = { fx: 64, fy: 64, cx: 31.5, cy: 15.5, width: 64, height: 32 };

function baseState(frames = 5): StudioState {
  return {
    frames,
    width: 64,
    height: 32,
    intrinsics: INTR,
    cameraDraft: {
      keyframes: [
        { position: [0, 0, 0], target: [0, 0, 2] },
        { position: [0.08, 0.03, -0.02], target: [0, 0, 2] },
      ],
      up: [0, -1, 0],
    },
    tracks: [
      { id: 0, color: "#f55", polyline: [[10, 20], [30, 12]], easing: "linear" },
    ],
    light: { mode: "static", keys: [{ frame: 0, azimuthDeg: 30, elevationDeg: 45 }] },
    controls: ["camera", "object", "light"],
    steps: 4,
    guidance: 2.0,
    seed: 7,
    pinned: {},
  };
}

describe("track resampling", () => {
  it("a 2-point polyline exports F points with matching endpoints", () => {
    const out = resampleTrack([[10, 20], [30, 12]], 5);
    expect(out).toHaveLength(5);
    expect(out[0]).toEqual([10, 20]);
    expect(out[4][0]).toBeCloseTo(30, 9);
    expect(out[4][1]).toBeCloseTo(12, 9);
  });

  it("spaces points uniformly by arc length", () => {
    const out = resampleTrack([[0, 0], [10, 0], [10, 10]], 5);
    const acc = arcLengths(out);
    const steps = acc.slice(1).map((v, i) => v - acc[i]);
    for (const s of steps) expect(s).toBeCloseTo(5, 9);
  });

  it("ease keeps endpoints and slows the start", () => {
    const lin = resampleTrack([[0, 0], [20, 0]], 9, "linear");
    const ease = resampleTrack([[0, 0], [20, 0]], 9, "ease");
    expect(ease[0]).toEqual(lin[0]);
    expect(ease[8]).toEqual(lin[8]);
    expect(ease[1][0]).toBeLessThan(lin[1][0]);
  });

  it("rejects empty input", () => {
    expect(() => resampleTrack([], 5)).toThrow();
  });
});

describe("light picker", () => {
  it("zenith exports (0, 0, 1)", () => {
    const d = directionFromAngles(0, 90);
    expect(d[0]).toBeCloseTo(0, 12);
    expect(d[1]).toBeCloseTo(0, 12);
    expect(d[2]).toBeCloseTo(1, 12);
  });

  it("static export validates and is unit norm", () => {
    const light = exportLight({ mode: "static", keys: [{ frame: 0, azimuthDeg: 70, elevationDeg: 10 }] }, 5);
    validateLight(light, 5);
    expect(light.directions).toHaveLength(1);
  });

  it("per-frame keyframes slerp to F unit vectors", () => {
    const light = exportLight({
      mode: "per_frame",
      keys: [
        { frame: 0, azimuthDeg: 0, elevationDeg: 0 },
        { frame: 4, azimuthDeg: 90, elevationDeg: 0 },
      ],
    }, 5);
    validateLight(light, 5);
    expect(light.directions).toHaveLength(5);
    const mid = light.directions[2];
    expect(Math.atan2(mid[1], mid[0]) * 180 / Math.PI).toBeCloseTo(45, 6);
  });
});

describe("camera drafting", () => {
  it("look-at pose is orthonormal and sends eye to the origin", () => {
    const { R, t } = lookAtPose([0.2, -0.1, 0.3], [0, 0, 2], [0, -1, 0]);
    validateCamera({ intrinsics: INTR, frames: [{ R, t }] });
    const eye = [0.2, -0.1, 0.3];
    for (let r = 0; r < 3; r++) {
      const v = R[r * 3] * eye[0] + R[r * 3 + 1] * eye[1] + R[r * 3 + 2] * eye[2] + t[r];
      expect(v).toBeCloseTo(0, 10);
    }
  });

  it("export resamples keyframes to exactly F valid poses", () => {
    const cam = exportCameraPath(baseState().cameraDraft, INTR, 5);
    validateCamera(cam, 5);
    expect(cam.frames).toHaveLength(5);
  });
});

describe("session export", () => {
  it("export validates against every schema", () => {
    const payload = exportSession(baseState());
    validateCamera(payload.camera, 5);
    validateTrajectories(payload.trajectories, 5);
    validateLight(payload.light, 5);
    expect(payload.trajectories.tracks[0].points).toHaveLength(5);
  });

  it("import(export(s)) round-trips the payloads exactly", () => {
    const payload = exportSession(baseState());
    const reimported = importSession(structuredClone(payload), INTR);
    const again = exportSession(reimported);
    expect(again).toEqual(payload);
  });

  it("track export clamps to image bounds", () => {
    const state = baseState();
    state.tracks = [{ id: 0, color: "#f55", polyline: [[-5, 10], [80, 40]], easing: "linear" }];
    const payload = exportSession(state);
    for (const [x, y] of payload.trajectories.tracks[0].points) {
      expect(x).toBeGreaterThanOrEqual(0);
      expect(x).toBeLessThan(64);
      expect(y).toBeGreaterThanOrEqual(0);
      expect(y).toBeLessThan(32);
    }
  });

  it("rejects non-unit light directions", () => {
    expect(() => validateLight({ mode: "static", directions: [[0, 0, 2]] })).toThrow();
  });

  it("rejects non-orthonormal rotations", () => {
    const cam = exportCameraPath(baseState().cameraDraft, INTR, 3);
    cam.frames[1].R[0] = 2.0;
    expect(() => validateCamera(cam)).toThrow();
  });
});
