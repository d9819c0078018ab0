"""Drive the HTTP session service in-process: create a session, upload
controls, fetch previews, and run a sampling job to a ZIP of frames."""

import base64
import io
import os
import time
import zipfile

import numpy as np
from fastapi.testclient import TestClient

from tricraft import geometry as geo
from tricraft import motion as mo
from tricraft.diffusion import ControlDiffusionModel, ModelConfig
from tricraft.forge import ForgeConfig, generate_lambert_world
from tricraft.images import to_png_bytes
from tricraft.service import create_app

out = os.path.join(os.path.dirname(__file__), "out", "service")
os.makedirs(out, exist_ok=True)

cfg = ModelConfig(frames=5, video_height=32, video_width=64,
                  stage_widths=(16, 24, 32, 48), d_model=48, d_cond=16,
                  temb_dim=32, groups=4, timesteps=200, seed=2)
client = TestClient(create_app(model=ControlDiffusionModel(cfg), workers=1))

scene = generate_lambert_world(seed=8, config=ForgeConfig(frames=5))
ref = scene.frames[0].transpose(1, 2, 0)
r = client.post("/sessions", json={"reference": base64.b64encode(to_png_bytes(ref)).decode()})
sid = r.json()["id"]
print("session:", r.json())

cam = geo.trajectory_to_json(scene.trajectory, scene.intrinsics)
print("PUT camera:", client.put(f"/sessions/{sid}/camera", json=cam).status_code)

tracks = mo.trajectories_to_json(scene.hero_track)
print("PUT trajectories:", client.put(f"/sessions/{sid}/trajectories", json=tracks).status_code)

bad = client.put(f"/sessions/{sid}/light",
                 json={"mode": "static", "directions": [[0, 0, -3.0]]})
print("PUT non-unit light ->", bad.status_code,
      "suggestion:", bad.json()["detail"]["normalized_suggestion"])
good = client.put(f"/sessions/{sid}/light",
                  json={"mode": "static", "directions": [[0.0, 0.0, -1.0]]})
print("PUT light:", good.status_code)

for kind in ("render", "flow"):
    png = client.get(f"/sessions/{sid}/preview/{kind}", params={"frame": 2})
    path = os.path.join(out, f"preview_{kind}.png")
    with open(path, "wb") as f:
        f.write(png.content)
    print(f"preview {kind}: {png.status_code} -> {path}")

job = client.post(f"/sessions/{sid}/sample",
                  json={"steps": 6, "guidance": 1.0, "seed": 1}).json()
while True:
    status = client.get(f"/jobs/{job['job_id']}").json()
    print("job:", status["state"], f"{status['progress']:.0%}")
    if status["state"] in ("done", "failed"):
        break
    time.sleep(0.3)

archive = client.get(f"/jobs/{job['job_id']}/result").content
with zipfile.ZipFile(io.BytesIO(archive)) as zf:
    names = zf.namelist()
    zf.extractall(out)
print(f"result: {len(names)} frames extracted to {out}")
