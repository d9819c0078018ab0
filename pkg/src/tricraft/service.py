"""HTTP service exposing the conditioning pipeline and sampler.

A thin adapter over the library: every response is reproducible by direct
library calls on the same inputs. Sessions are in-memory (optionally
mirrored to TRICRAFT_DATA_DIR); sampling runs on a small FIFO worker pool
while previews are served synchronously.
"""

from __future__ import annotations

import argparse
import base64
import itertools
import json
import os
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from fastapi import Body, FastAPI, HTTPException, Query, Response

from . import geometry as geo
from . import lighting as lit
from . import motion as mo
from .diffusion import ControlDiffusionModel, load_checkpoint
from .diffusion.sampling import sample_video
from .forge import conditioning_renders
from .images import flow_to_rgb, frames_to_zip, from_png_bytes, to_png_bytes

DEFAULT_PLANE_DEPTH = 2.0
DEFAULT_FLOW_SIGMA = 1.5
CONTROL_NAMES = ("camera", "object", "light")


@dataclass
class Job:
    id: str
    kind: str
    state: str = "queued"  # queued -> running -> done | failed
    progress: float = 0.0
    result: Optional[bytes] = None
    error: str = ""
    session_id: str = ""

    def to_json(self):
        return {"id": self.id, "kind": self.kind, "state": self.state,
                "progress": round(self.progress, 4), "error": self.error}


@dataclass
class Session:
    id: str
    reference: np.ndarray  # (H,W,3) float in [0,1]
    cloud: Optional[geo.PointCloud] = None
    trajectory: Optional[list] = None
    intrinsics: Optional[geo.CameraIntrinsics] = None
    tracks: Optional[mo.TrajectorySet] = None
    light_json: Optional[dict] = None
    lock: threading.Lock = field(default_factory=threading.Lock)
    active_jobs: int = 0


class ServiceState:
    def __init__(self, model, workers=2, data_dir=None):
        self.model = model
        self.sessions = {}
        self.jobs = {}
        self.pool = ThreadPoolExecutor(max_workers=workers)
        self.data_dir = data_dir
        self._counter = itertools.count(1)
        self._registry_lock = threading.Lock()

    def new_id(self, prefix):
        with self._registry_lock:
            return f"{prefix}-{next(self._counter):06d}"


def _b64_bytes(payload, key):
    raw = payload.get(key)
    if raw is None:
        return None
    try:
        return base64.b64decode(raw, validate=True)
    except Exception as exc:
        raise HTTPException(422, detail=f"{key} is not valid base64: {exc}")


def _get_session(state, sid):
    sess = state.sessions.get(sid)
    if sess is None:
        raise HTTPException(404, detail=f"unknown session {sid}")
    return sess


def _writer(state, sess):
    """Serialize writes; reject concurrent writers and writes during jobs."""
    if sess.active_jobs > 0:
        raise HTTPException(409, detail="session has a running job")
    if not sess.lock.acquire(blocking=False):
        raise HTTPException(409, detail="another writer holds this session")
    return sess.lock


def _persist(state, sess):
    if not state.data_dir:
        return
    d = os.path.join(state.data_dir, sess.id)
    os.makedirs(d, exist_ok=True)
    with open(os.path.join(d, "reference.png"), "wb") as f:
        f.write(to_png_bytes(sess.reference))
    blob = {}
    if sess.trajectory is not None:
        blob["camera"] = geo.trajectory_to_json(sess.trajectory, sess.intrinsics)
    if sess.tracks is not None:
        blob["trajectories"] = mo.trajectories_to_json(sess.tracks)
    if sess.light_json is not None:
        blob["light"] = sess.light_json
    with open(os.path.join(d, "session.json"), "w") as f:
        json.dump(blob, f, indent=1, sort_keys=True)


def session_bundle(model, sess, controls, plane_depth=DEFAULT_PLANE_DEPTH,
                   flow_sigma=DEFAULT_FLOW_SIGMA):
    """Build the sampling bundle for a subset of this session's controls.

    Identical to the CLI pathway: omitted controls stay null and get
    substituted inside sample_video.
    """
    cfg = model.config
    renders = None
    if "camera" in controls:
        if sess.trajectory is None:
            raise HTTPException(422, detail="session has no camera trajectory")
        if sess.cloud is not None:
            frames = geo.render_sequence(sess.cloud, sess.trajectory, sess.intrinsics,
                                         sess.reference)
            renders = np.stack([fr.image for fr in frames]).astype(np.float32)
        else:
            renders = conditioning_renders(sess.reference, sess.trajectory,
                                           sess.intrinsics, plane_depth)
    flow = None
    if "object" in controls:
        if sess.tracks is None:
            raise HTTPException(422, detail="session has no object trajectories")
        flow = mo.gaussian_smooth(mo.scatter_flow(sess.tracks), flow_sigma)
    light_spec = None
    if "light" in controls:
        if sess.light_json is None:
            raise HTTPException(422, detail="session has no light direction")
        # propagate along the conditioning camera only when camera control is
        # active, mirroring the CLI's --camera/--light pairing exactly
        traj = sess.trajectory if ("camera" in controls and sess.trajectory is not None) \
            else [geo.Pose.identity()] * cfg.frames
        light_spec = lit.resolve_light(sess.light_json, traj[0], traj)
    return model.build_bundle(sess.reference, None, renders=renders, flow=flow,
                              light=light_spec)


def create_app(model=None, checkpoint=None, workers=2, data_dir=None):
    if model is None:
        if checkpoint:
            model, _ = load_checkpoint(checkpoint)
        else:
            model = ControlDiffusionModel()
    state = ServiceState(model, workers=workers,
                         data_dir=data_dir or os.environ.get("TRICRAFT_DATA_DIR"))
    app = FastAPI(title="tricraft session service")
    app.state.service = state
    cfg = model.config

    @app.post("/sessions")
    def create_session(payload: dict = Body(...)):
        png = _b64_bytes(payload, "reference")
        if png is None:
            raise HTTPException(422, detail="missing reference image")
        try:
            ref = from_png_bytes(png)
        except Exception as exc:
            raise HTTPException(422, detail=f"reference is not a decodable PNG: {exc}")
        if ref.shape[:2] != (cfg.video_height, cfg.video_width):
            raise HTTPException(422, detail=(
                f"reference must be {cfg.video_height}x{cfg.video_width}, "
                f"got {ref.shape[0]}x{ref.shape[1]}"))
        cloud = None
        ply = _b64_bytes(payload, "cloud")
        if ply is not None:
            import io
            import tempfile
            with tempfile.NamedTemporaryFile("wb", suffix=".ply", delete=False) as tmp:
                tmp.write(ply)
                path = tmp.name
            try:
                cloud = geo.ply_read(path)
            except ValueError as exc:
                raise HTTPException(422, detail=f"invalid PLY: {exc}")
            finally:
                os.unlink(path)
        sid = state.new_id("session")
        state.sessions[sid] = Session(id=sid, reference=ref, cloud=cloud)
        _persist(state, state.sessions[sid])
        return {"id": sid, "frames": cfg.frames,
                "width": cfg.video_width, "height": cfg.video_height}

    @app.put("/sessions/{sid}/camera")
    def put_camera(sid: str, payload: dict = Body(...)):
        sess = _get_session(state, sid)
        lock = _writer(state, sess)
        try:
            try:
                trajectory, intr = geo.trajectory_from_json(payload)
            except (ValueError, KeyError, TypeError) as exc:
                raise HTTPException(422, detail=f"invalid camera schema: {exc}")
            if len(trajectory) != cfg.frames:
                raise HTTPException(422, detail=f"expected {cfg.frames} frames, "
                                                f"got {len(trajectory)}")
            if (intr.height, intr.width) != (cfg.video_height, cfg.video_width):
                raise HTTPException(422, detail="intrinsics extents do not match the model")
            sess.trajectory = trajectory
            sess.intrinsics = intr
            _persist(state, sess)
            return geo.trajectory_to_json(trajectory, intr)
        finally:
            lock.release()

    @app.put("/sessions/{sid}/trajectories")
    def put_trajectories(sid: str, payload: dict = Body(...)):
        sess = _get_session(state, sid)
        lock = _writer(state, sess)
        try:
            try:
                tracks = mo.trajectories_from_json(payload)
            except (ValueError, KeyError, TypeError) as exc:
                raise HTTPException(422, detail=f"invalid trajectory schema: {exc}")
            if tracks.frame_count != cfg.frames:
                raise HTTPException(422, detail=f"expected {cfg.frames} frames per track")
            if (tracks.height, tracks.width) != (cfg.video_height, cfg.video_width):
                raise HTTPException(422, detail="track extents do not match the model")
            sess.tracks = tracks
            _persist(state, sess)
            return mo.trajectories_to_json(tracks)
        finally:
            lock.release()

    @app.put("/sessions/{sid}/light")
    def put_light(sid: str, payload: dict = Body(...)):
        sess = _get_session(state, sid)
        lock = _writer(state, sess)
        try:
            dirs = np.asarray(payload.get("directions", []), dtype=np.float64)
            if dirs.ndim != 2 or dirs.shape[-1] != 3 or len(dirs) == 0:
                raise HTTPException(422, detail="directions must be a list of 3-vectors")
            norms = np.linalg.norm(dirs, axis=1)
            if (norms < 1e-9).any():
                raise HTTPException(422, detail="zero-length light direction")
            if np.abs(norms - 1.0).max() > 1e-6:
                suggestion = (dirs / norms[:, None]).tolist()
                raise HTTPException(422, detail={
                    "error": "light directions must be unit vectors",
                    "normalized_suggestion": suggestion})
            try:
                spec_ref = lit.light_from_json(payload, n_frames=cfg.frames)
            except ValueError as exc:
                raise HTTPException(422, detail=f"invalid light schema: {exc}")
            sess.light_json = payload
            traj = sess.trajectory if sess.trajectory is not None else \
                [geo.Pose.identity()] * cfg.frames
            resolved = lit.resolve_light(payload, traj[0], traj)
            _persist(state, sess)
            return {"mode": payload["mode"],
                    "per_frame_directions": resolved.directions.tolist()}
        finally:
            lock.release()

    @app.get("/sessions/{sid}/preview/render")
    def preview_render(sid: str, frame: int = Query(0, ge=0)):
        sess = _get_session(state, sid)
        if frame >= cfg.frames:
            raise HTTPException(422, detail=f"frame must be below {cfg.frames}")
        if frame == 0:
            return Response(to_png_bytes(sess.reference), media_type="image/png")
        if sess.trajectory is None:
            raise HTTPException(422, detail="session has no camera trajectory")
        if sess.cloud is not None:
            rendered = geo.render_point_cloud(sess.cloud, sess.trajectory[frame],
                                              sess.intrinsics)
            img = rendered.image
        else:
            img = conditioning_renders(sess.reference, sess.trajectory,
                                       sess.intrinsics, DEFAULT_PLANE_DEPTH)[frame]
        return Response(to_png_bytes(img), media_type="image/png")

    @app.get("/sessions/{sid}/preview/flow")
    def preview_flow(sid: str, frame: int = Query(0, ge=0)):
        sess = _get_session(state, sid)
        if sess.tracks is None:
            raise HTTPException(422, detail="session has no object trajectories")
        if frame >= cfg.frames:
            raise HTTPException(422, detail=f"frame must be below {cfg.frames}")
        flow = mo.gaussian_smooth(mo.scatter_flow(sess.tracks), DEFAULT_FLOW_SIGMA)
        return Response(to_png_bytes(flow_to_rgb(flow.values[frame])),
                        media_type="image/png")

    @app.post("/sessions/{sid}/sample")
    def submit_sample(sid: str, payload: dict = Body(default={})):
        sess = _get_session(state, sid)
        controls = payload.get("controls", list(CONTROL_NAMES))
        bad = set(controls) - set(CONTROL_NAMES)
        if bad:
            raise HTTPException(422, detail=f"unknown controls {sorted(bad)}")
        steps = int(payload.get("steps", 25))
        guidance = float(payload.get("guidance", 7.5))
        seed = int(payload.get("seed", 0))
        if steps <= 0:
            raise HTTPException(422, detail="steps must be positive")
        lock = _writer(state, sess)  # snapshot under the writer lock
        try:
            bundle = session_bundle(model, sess, controls)
            sess.active_jobs += 1
        finally:
            lock.release()

        job = Job(id=state.new_id("job"), kind="sample", session_id=sid)
        state.jobs[job.id] = job

        def run():
            job.state = "running"
            try:
                def progress(p):
                    job.progress = p
                video = sample_video(model, bundle, steps=steps, guidance=guidance,
                                     seed=seed, progress=progress)
                job.result = frames_to_zip([f.transpose(1, 2, 0) for f in video])
                job.state = "done"
                job.progress = 1.0
            except Exception as exc:  # surfaced through the job record
                job.state = "failed"
                job.error = f"{type(exc).__name__}: {exc}"
            finally:
                with state._registry_lock:
                    sess.active_jobs -= 1

        state.pool.submit(run)
        return {"job_id": job.id}

    @app.get("/jobs/{jid}")
    def job_status(jid: str):
        job = state.jobs.get(jid)
        if job is None:
            raise HTTPException(404, detail=f"unknown job {jid}")
        return job.to_json()

    @app.get("/jobs/{jid}/result")
    def job_result(jid: str):
        job = state.jobs.get(jid)
        if job is None:
            raise HTTPException(404, detail=f"unknown job {jid}")
        if job.state == "failed":
            raise HTTPException(409, detail=f"job failed: {job.error}")
        if job.state != "done" or job.result is None:
            raise HTTPException(409, detail=f"job is {job.state}")
        return Response(job.result, media_type="application/zip")

    return app


def main(argv=None):
    parser = argparse.ArgumentParser(prog="tricraft-serve",
                                     description="Run the session service")
    parser.add_argument("--port", type=int, default=8000)
    parser.add_argument("--host", default="127.0.0.1")
    parser.add_argument("--checkpoint", default=None, help="model checkpoint directory")
    parser.add_argument("--workers", type=int, default=2, help="sampling worker threads")
    args = parser.parse_args(argv)
    import uvicorn
    app = create_app(checkpoint=args.checkpoint, workers=args.workers)
    uvicorn.run(app, host=args.host, port=args.port)
    return 0


if __name__ == "__main__":
    main()
