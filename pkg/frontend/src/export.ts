/** Session export/import: the exact JSON payloads the service consumes.
 *
 * Imported payloads are pinned verbatim so import(export(s)) round-trips
 * exactly; editing a control in the studio replaces its pin with a fresh
 * export from the draft widgets.
 */

import { CameraPathDraft, exportCameraPath } from "./camera.js";
import { LightPickerState, exportLight } from "./light.js";
import { CanvasTrack, exportTracks, importTracks } from "./tracks.js";
import {
  CameraJson,
  ControlName,
  Intrinsics,
  LightJson,
  SessionExport,
  TrajectoriesJson,
  validateCamera,
  validateLight,
  validateTrajectories,
} from "./schema.js";

export interface PinnedPayloads {
  camera?: CameraJson;
  trajectories?: TrajectoriesJson;
  light?: LightJson;
}

export interface StudioState {
  frames: number;
  width: number;
  height: number;
  intrinsics: Intrinsics;
  cameraDraft: CameraPathDraft;
  tracks: CanvasTrack[];
  light: LightPickerState;
  controls: ControlName[];
  steps: number;
  guidance: number;
  seed: number;
  pinned: PinnedPayloads;
}

export function exportSession(state: StudioState): SessionExport {
  const camera = state.pinned.camera
    ?? exportCameraPath(state.cameraDraft, state.intrinsics, state.frames);
  const trajectories = state.pinned.trajectories
    ?? exportTracks(state.tracks, state.frames, state.width, state.height);
  const light = state.pinned.light ?? exportLight(state.light, state.frames);
  validateCamera(camera, state.frames);
  validateTrajectories(trajectories, state.frames);
  validateLight(light, state.frames);
  return {
    camera,
    trajectories,
    light,
    controls: [...state.controls],
    steps: state.steps,
    guidance: state.guidance,
    seed: state.seed,
  };
}

/** Parse an export back into editable state, pinning payloads verbatim. */
export function importSession(payload: SessionExport, intrinsics: Intrinsics): StudioState {
  validateCamera(payload.camera);
  validateTrajectories(payload.trajectories);
  validateLight(payload.light);
  return {
    frames: payload.camera.frames.length,
    width: payload.trajectories.width,
    height: payload.trajectories.height,
    intrinsics,
    cameraDraft: { keyframes: [], up: [0, -1, 0] },
    tracks: importTracks(payload.trajectories),
    light: { mode: payload.light.mode, keys: [] },
    controls: [...payload.controls],
    steps: payload.steps,
    guidance: payload.guidance,
    seed: payload.seed,
    pinned: {
      camera: payload.camera,
      trajectories: payload.trajectories,
      light: payload.light,
    },
  };
}

/** Drop a pin after the user edits the corresponding widget. */
export function unpin(state: StudioState, control: ControlName): void {
  if (control === "camera") delete state.pinned.camera;
  if (control === "object") delete state.pinned.trajectories;
  if (control === "light") delete state.pinned.light;
}
