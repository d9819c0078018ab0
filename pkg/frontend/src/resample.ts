/** Arc-length resampling of drawn polylines onto the frame grid. */

export type Pt = [number, number];

export type Easing = "linear" | "ease";

function smoothstep(t: number): number {
  return t * t * (3 - 2 * t);
}

/** Cumulative arc length of a polyline; first entry is 0. */
export function arcLengths(points: Pt[]): number[] {
  const acc = [0];
  for (let i = 1; i < points.length; i++) {
    const d = Math.hypot(points[i][0] - points[i - 1][0], points[i][1] - points[i - 1][1]);
    acc.push(acc[i - 1] + d);
  }
  return acc;
}

/**
 * Resample a drawn polyline to exactly `frames` points by arc length.
 * Endpoints always coincide with the drawn endpoints; an optional ease
 * curve reparameterizes time (slow start/finish) without moving them.
 */
export function resampleTrack(points: Pt[], frames: number, easing: Easing = "linear"): Pt[] {
  if (frames < 1) throw new Error("need at least one frame");
  if (points.length === 0) throw new Error("empty polyline");
  if (points.length === 1 || frames === 1) {
    return Array.from({ length: frames }, () => [points[0][0], points[0][1]] as Pt);
  }
  const acc = arcLengths(points);
  const total = acc[acc.length - 1];
  if (total === 0) {
    return Array.from({ length: frames }, () => [points[0][0], points[0][1]] as Pt);
  }
  const out: Pt[] = [];
  for (let f = 0; f < frames; f++) {
    let t = f / (frames - 1);
    if (easing === "ease") t = smoothstep(t);
    const target = t * total;
    let seg = 1;
    while (seg < acc.length - 1 && acc[seg] < target) seg++;
    const span = acc[seg] - acc[seg - 1];
    const a = span > 0 ? (target - acc[seg - 1]) / span : 0;
    out.push([
      points[seg - 1][0] + a * (points[seg][0] - points[seg - 1][0]),
      points[seg - 1][1] + a * (points[seg][1] - points[seg - 1][1]),
    ]);
  }
  return out;
}

/** Clamp points into [0, w) x [0, h) as the track schema requires. */
export function clampToImage(points: Pt[], width: number, height: number): Pt[] {
  const ex = 1e-3;
  return points.map(([x, y]) => [
    Math.min(Math.max(x, 0), width - ex),
    Math.min(Math.max(y, 0), height - ex),
  ] as Pt);
}
