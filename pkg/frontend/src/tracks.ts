/** User-drawn object trajectories on the reference image. */

import { Pt, Easing, clampToImage, resampleTrack } from "./resample.js";
import { TrajectoriesJson } from "./schema.js";

export interface CanvasTrack {
  id: number;
  color: string;
  polyline: Pt[];
  easing: Easing;
}

export function exportTracks(tracks: CanvasTrack[], frames: number,
                             width: number, height: number): TrajectoriesJson {
  return {
    frame_count: frames,
    width,
    height,
    tracks: tracks.map((t) => ({
      id: t.id,
      points: clampToImage(resampleTrack(t.polyline, frames, t.easing), width, height)
        .map(([x, y]) => [x, y]),
    })),
  };
}

export function importTracks(json: TrajectoriesJson): CanvasTrack[] {
  const palette = ["#ff5555", "#4fc3f7", "#ffd54f", "#81c784", "#ba68c8"];
  return json.tracks.map((t, i) => ({
    id: t.id,
    color: palette[i % palette.length],
    polyline: t.points.map(([x, y]) => [x, y] as Pt),
    easing: "linear" as Easing,
  }));
}
