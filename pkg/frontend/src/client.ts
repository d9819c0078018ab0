/** Thin HTTP client for the session service; all math stays server-side. */

import { CameraJson, ControlName, LightJson, TrajectoriesJson } from "./schema.js";

export interface SessionInfo {
  id: string;
  frames: number;
  width: number;
  height: number;
}

export interface JobStatus {
  id: string;
  kind: string;
  state: "queued" | "running" | "done" | "failed";
  progress: number;
  error: string;
}

export class StudioClient {
  constructor(private base: string = "") {}

  private async request<T>(method: string, path: string, body?: unknown): Promise<T> {
    const res = await fetch(this.base + path, {
      method,
      headers: body !== undefined ? { "content-type": "application/json" } : undefined,
      body: body !== undefined ? JSON.stringify(body) : undefined,
    });
    if (!res.ok) {
      const detail = await res.text();
      throw new Error(`${method} ${path} -> ${res.status}: ${detail}`);
    }
    return (await res.json()) as T;
  }

  createSession(referencePngB64: string, cloudPlyB64?: string): Promise<SessionInfo> {
    const body: Record<string, string> = { reference: referencePngB64 };
    if (cloudPlyB64) body.cloud = cloudPlyB64;
    return this.request("POST", "/sessions", body);
  }

  putCamera(sid: string, camera: CameraJson): Promise<CameraJson> {
    return this.request("PUT", `/sessions/${sid}/camera`, camera);
  }

  putTrajectories(sid: string, trajs: TrajectoriesJson): Promise<TrajectoriesJson> {
    return this.request("PUT", `/sessions/${sid}/trajectories`, trajs);
  }

  putLight(sid: string, light: LightJson): Promise<{ per_frame_directions: number[][] }> {
    return this.request("PUT", `/sessions/${sid}/light`, light);
  }

  renderPreviewUrl(sid: string, frame: number): string {
    return `${this.base}/sessions/${sid}/preview/render?frame=${frame}`;
  }

  flowPreviewUrl(sid: string, frame: number): string {
    return `${this.base}/sessions/${sid}/preview/flow?frame=${frame}`;
  }

  submitSample(sid: string, controls: ControlName[], steps: number, guidance: number,
               seed: number): Promise<{ job_id: string }> {
    return this.request("POST", `/sessions/${sid}/sample`,
                        { controls, steps, guidance, seed });
  }

  jobStatus(jobId: string): Promise<JobStatus> {
    return this.request("GET", `/jobs/${jobId}`);
  }

  async pollJob(jobId: string, onProgress?: (p: number) => void,
                intervalMs = 250): Promise<JobStatus> {
    for (;;) {
      const status = await this.jobStatus(jobId);
      if (onProgress) onProgress(status.progress);
      if (status.state === "done" || status.state === "failed") return status;
      await new Promise((r) => setTimeout(r, intervalMs));
    }
  }

  async jobResultFrames(jobId: string): Promise<Blob> {
    const res = await fetch(`${this.base}/jobs/${jobId}/result`);
    if (!res.ok) throw new Error(`result fetch failed: ${res.status}`);
    return await res.blob();
  }
}
