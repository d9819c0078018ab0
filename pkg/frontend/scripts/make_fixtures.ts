/** Write the three scripted session exports used by the UI/CLI parity
 * harness. Deterministic: fixed keyframes, seeds, and sampler settings
 * matching the harness model (5 frames, 64x32). */

import { mkdirSync, writeFileSync } from "node:fs";
import { dirname, join } from "node:path";
import { fileURLToPath } from "node:url";

import { exportSession, StudioState } from "../src/export.js";
import { Intrinsics } from "../src/schema.js";

const FRAMES = 5;
const INTR: Intrinsics = { fx: 64, fy: 64, cx: 31.5, cy: 15.5, width: 64, height: 32 };

function session(seed: number, opts: Partial<StudioState>): StudioState {
  return {
    frames: FRAMES,
    width: 64,
    height: 32,
    intrinsics: INTR,
    cameraDraft: {
      keyframes: [
        { position: [0, 0, 0], target: [0, 0, 2] },
        { position: [0.06, 0.02, -0.01], target: [0, 0, 2] },
      ],
      up: [0, -1, 0],
    },
    tracks: [{ id: 0, color: "#f55", polyline: [[12, 18], [34, 10]], easing: "linear" }],
    light: { mode: "static", keys: [{ frame: 0, azimuthDeg: 20, elevationDeg: 55 }] },
    controls: ["camera", "object", "light"],
    steps: 2,
    guidance: 2.0,
    seed,
    pinned: {},
    ...opts,
  };
}

const sessions: Record<string, StudioState> = {
  // all three controls active
  session_full: session(41, {}),
  // camera toggled off: parity against a CLI run with no --camera flag
  session_no_camera: session(42, { controls: ["object", "light"] }),
  // eased two-track drawing, per-frame light sweep
  session_motion: session(43, {
    controls: ["camera", "object"],
    tracks: [
      { id: 0, color: "#f55", polyline: [[8, 8], [25, 20], [40, 12]], easing: "ease" },
      { id: 1, color: "#4cf", polyline: [[50, 25], [44, 6]], easing: "linear" },
    ],
    light: {
      mode: "per_frame",
      keys: [
        { frame: 0, azimuthDeg: -60, elevationDeg: 30 },
        { frame: 4, azimuthDeg: 60, elevationDeg: 70 },
      ],
    },
  }),
};

const outDir = join(dirname(fileURLToPath(import.meta.url)), "..", "..", "fixtures");
mkdirSync(outDir, { recursive: true });
for (const [name, state] of Object.entries(sessions)) {
  const payload = { ...exportSession(state), reference_seed: state.seed };
  writeFileSync(join(outDir, `${name}.json`), JSON.stringify(payload, null, 1) + "\n");
  console.log(`wrote fixtures/${name}.json`);
}
