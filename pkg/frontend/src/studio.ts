/** Studio wiring: draw tracks over the reference, edit the camera path on a
 * top-down gizmo, pick lighting on a hemisphere, preview renders/flow, and
 * play sampled results. Previews are debounced and one sample job runs at
 * a time. */

import { StudioClient, SessionInfo } from "./client.js";
import { exportSession, StudioState, unpin } from "./export.js";
import { CanvasTrack } from "./tracks.js";
import { ControlName } from "./schema.js";
import { directionFromAngles } from "./light.js";

const SCALE = 8; // canvas pixels per image pixel

interface PlaybackState {
  frames: string[]; // object URLs
  timer: number | null;
}

export class Studio {
  client = new StudioClient();
  session: SessionInfo | null = null;
  state: StudioState | null = null;
  drawing: CanvasTrack | null = null;
  frame = 0;
  playback: PlaybackState = { frames: [], timer: null };
  jobActive = false;
  previewTimer: number | null = null;

  constructor(private root: Document) {}

  el<T extends HTMLElement>(id: string): T {
    const node = this.root.getElementById(id);
    if (!node) throw new Error(`missing element #${id}`);
    return node as T;
  }

  async start(): Promise<void> {
    this.el<HTMLInputElement>("reference-file").addEventListener("change", (e) => {
      const input = e.target as HTMLInputElement;
      if (input.files && input.files[0]) void this.createSession(input.files[0]);
    });
    this.el<HTMLInputElement>("frame-slider").addEventListener("input", () => {
      this.frame = Number(this.el<HTMLInputElement>("frame-slider").value);
      this.schedulePreview();
    });
    const canvas = this.el<HTMLCanvasElement>("draw-canvas");
    canvas.addEventListener("mousedown", (e) => this.beginTrack(e));
    canvas.addEventListener("mousemove", (e) => this.extendTrack(e));
    canvas.addEventListener("mouseup", () => this.finishTrack());
    this.el<HTMLButtonElement>("clear-tracks").addEventListener("click", () => {
      if (!this.state) return;
      this.state.tracks = [];
      unpin(this.state, "object");
      void this.pushTracks();
    });
    for (const axis of ["azimuth", "elevation"]) {
      this.el<HTMLInputElement>(`light-${axis}`).addEventListener("input", () => {
        void this.pushLight();
      });
    }
    this.el<HTMLButtonElement>("sample").addEventListener("click", () => {
      void this.requestSample();
    });
  }

  imageCoords(e: MouseEvent): [number, number] {
    const canvas = this.el<HTMLCanvasElement>("draw-canvas");
    const rect = canvas.getBoundingClientRect();
    return [(e.clientX - rect.left) / SCALE, (e.clientY - rect.top) / SCALE];
  }

  async createSession(file: File): Promise<void> {
    const bytes = new Uint8Array(await file.arrayBuffer());
    let binary = "";
    bytes.forEach((b) => (binary += String.fromCharCode(b)));
    this.session = await this.client.createSession(btoa(binary));
    const { frames, width, height } = this.session;
    this.state = {
      frames,
      width,
      height,
      intrinsics: { fx: width, fy: width, cx: (width - 1) / 2, cy: (height - 1) / 2,
                    width, height },
      cameraDraft: {
        keyframes: [
          { position: [0, 0, 0], target: [0, 0, 2] },
          { position: [0.05, 0.02, 0], target: [0, 0, 2] },
        ],
        up: [0, -1, 0],
      },
      tracks: [],
      light: { mode: "static", keys: [{ frame: 0, azimuthDeg: 0, elevationDeg: 60 }] },
      controls: ["camera", "object", "light"] as ControlName[],
      steps: 25,
      guidance: 7.5,
      seed: 0,
      pinned: {},
    };
    const slider = this.el<HTMLInputElement>("frame-slider");
    slider.max = String(frames - 1);
    slider.value = "0";
    const canvas = this.el<HTMLCanvasElement>("draw-canvas");
    canvas.width = width * SCALE;
    canvas.height = height * SCALE;
    await this.pushCamera();
    await this.pushLight();
    this.schedulePreview();
  }

  beginTrack(e: MouseEvent): void {
    if (!this.state) return;
    const [x, y] = this.imageCoords(e);
    this.drawing = {
      id: this.state.tracks.length,
      color: ["#ff5555", "#4fc3f7", "#ffd54f"][this.state.tracks.length % 3],
      polyline: [[x, y]],
      easing: "linear",
    };
  }

  extendTrack(e: MouseEvent): void {
    if (!this.drawing) return;
    this.drawing.polyline.push(this.imageCoords(e));
    this.redraw();
  }

  finishTrack(): void {
    if (!this.drawing || !this.state) return;
    if (this.drawing.polyline.length >= 2) {
      this.state.tracks.push(this.drawing);
      unpin(this.state, "object");
      void this.pushTracks();
    }
    this.drawing = null;
  }

  async pushCamera(): Promise<void> {
    if (!this.session || !this.state) return;
    const payload = exportSession(this.state);
    await this.client.putCamera(this.session.id, payload.camera);
  }

  async pushTracks(): Promise<void> {
    if (!this.session || !this.state) return;
    if (!this.state.tracks.length) {
      this.redraw();
      return;
    }
    const payload = exportSession(this.state);
    await this.client.putTrajectories(this.session.id, payload.trajectories);
    this.schedulePreview();
  }

  async pushLight(): Promise<void> {
    if (!this.session || !this.state) return;
    const az = Number(this.el<HTMLInputElement>("light-azimuth").value);
    const el = Number(this.el<HTMLInputElement>("light-elevation").value);
    this.state.light = { mode: "static", keys: [{ frame: 0, azimuthDeg: az, elevationDeg: el }] };
    unpin(this.state, "light");
    const payload = exportSession(this.state);
    await this.client.putLight(this.session.id, payload.light);
    const d = directionFromAngles(az, el);
    this.el<HTMLSpanElement>("light-vector").textContent =
      `(${d.map((v) => v.toFixed(3)).join(", ")})`;
  }

  schedulePreview(): void {
    if (this.previewTimer !== null) window.clearTimeout(this.previewTimer);
    this.previewTimer = window.setTimeout(() => void this.refreshPreview(), 120);
  }

  async refreshPreview(): Promise<void> {
    if (!this.session) return;
    const sid = this.session.id;
    this.el<HTMLImageElement>("render-preview").src =
      this.client.renderPreviewUrl(sid, this.frame) + `&_=${Date.now()}`;
    if (this.state?.tracks.length) {
      this.el<HTMLImageElement>("flow-preview").src =
        this.client.flowPreviewUrl(sid, this.frame) + `&_=${Date.now()}`;
    }
    this.redraw();
  }

  redraw(): void {
    if (!this.state) return;
    const canvas = this.el<HTMLCanvasElement>("draw-canvas");
    const ctx = canvas.getContext("2d");
    if (!ctx) return;
    ctx.clearRect(0, 0, canvas.width, canvas.height);
    const all = this.drawing ? [...this.state.tracks, this.drawing] : this.state.tracks;
    for (const track of all) {
      ctx.strokeStyle = track.color;
      ctx.lineWidth = 2;
      ctx.beginPath();
      track.polyline.forEach(([x, y], i) => {
        if (i === 0) ctx.moveTo(x * SCALE, y * SCALE);
        else ctx.lineTo(x * SCALE, y * SCALE);
      });
      ctx.stroke();
    }
  }

  activeControls(): ControlName[] {
    const out: ControlName[] = [];
    for (const name of ["camera", "object", "light"] as ControlName[]) {
      if (this.el<HTMLInputElement>(`control-${name}`).checked) out.push(name);
    }
    return out;
  }

  async requestSample(): Promise<void> {
    if (!this.session || !this.state || this.jobActive) return;
    this.jobActive = true;
    const status = this.el<HTMLSpanElement>("job-status");
    try {
      const seed = Number(this.el<HTMLInputElement>("seed").value);
      const { job_id } = await this.client.submitSample(
        this.session.id, this.activeControls(), this.state.steps,
        this.state.guidance, seed);
      status.textContent = "sampling...";
      const final = await this.client.pollJob(job_id, (p) => {
        status.textContent = `sampling ${(p * 100).toFixed(0)}%`;
      });
      if (final.state === "failed") {
        status.textContent = `failed: ${final.error}`;
        return;
      }
      status.textContent = "done";
      const blob = await this.client.jobResultFrames(job_id);
      await this.loadPlayback(blob);
    } finally {
      this.jobActive = false;
    }
  }

  async loadPlayback(zipBlob: Blob): Promise<void> {
    const { parseZip } = await import("./zip.js");
    for (const url of this.playback.frames) URL.revokeObjectURL(url);
    const entries = await parseZip(await zipBlob.arrayBuffer());
    this.playback.frames = entries.map((e) =>
      URL.createObjectURL(new Blob([e.data as BlobPart], { type: "image/png" })));
    const scrub = this.el<HTMLInputElement>("playback-slider");
    scrub.max = String(this.playback.frames.length - 1);
    scrub.value = "0";
    scrub.oninput = () => this.showPlaybackFrame(Number(scrub.value));
    const playBtn = this.el<HTMLButtonElement>("playback-toggle");
    playBtn.onclick = () => this.togglePlayback();
    this.showPlaybackFrame(0);

    const url = URL.createObjectURL(zipBlob);
    const link = this.el<HTMLAnchorElement>("result-link");
    link.href = url;
    link.style.display = "inline";
  }

  showPlaybackFrame(i: number): void {
    if (!this.playback.frames.length) return;
    const idx = Math.min(Math.max(i, 0), this.playback.frames.length - 1);
    this.el<HTMLImageElement>("playback-frame").src = this.playback.frames[idx];
    this.el<HTMLInputElement>("playback-slider").value = String(idx);
  }

  togglePlayback(): void {
    if (this.playback.timer !== null) {
      window.clearInterval(this.playback.timer);
      this.playback.timer = null;
      return;
    }
    let i = Number(this.el<HTMLInputElement>("playback-slider").value);
    this.playback.timer = window.setInterval(() => {
      i = (i + 1) % this.playback.frames.length;
      this.showPlaybackFrame(i);
    }, 120);
  }
}

export function boot(): void {
  const studio = new Studio(document);
  void studio.start();
}

if (typeof document !== "undefined" && document.getElementById("draw-canvas")) {
  boot();
}
