"""Procedural Lambert-world dataset and the clip-curation heuristics.

A Lambert-world scene is a textured background plane plus 1-3 colored
billboard sprites; one "hero" sprite follows a smooth world-space path.
Every pixel is shaded albedo * max(0, n . L_f) with n expressed in each
frame's camera coordinates, so the camera path, object track, and
per-frame light labels are exact by construction.

The curation heuristics (motion-score quartile filter, camera-dominance
classifier, length filter, length-weighted sparse sampler) run on pseudo
grid tracks derived from the known scene motion, mirroring a tracker on
a 16x16 first-frame grid.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, field

import numpy as np

from . import geometry as geo
from . import lighting as lit
from . import motion as mo
from .diffusion.training import TrainSample
from .tensor import load_tnsr, save_tnsr

__all__ = [
    "ClipTracks",
    "LambertScene",
    "ForgeConfig",
    "motion_score_filter",
    "classify_camera_dominated",
    "filter_by_length",
    "sample_sparse",
    "generate_lambert_world",
    "build_training_corpus",
    "CorpusDataset",
    "conditioning_renders",
    "track_sprite",
    "sample_brightness",
    "COLORS",
    "SHAPES",
]

COLORS = {
    "red": (0.90, 0.12, 0.12),
    "green": (0.10, 0.80, 0.15),
    "blue": (0.15, 0.25, 0.92),
    "yellow": (0.90, 0.85, 0.10),
    "magenta": (0.88, 0.15, 0.85),
    "cyan": (0.10, 0.82, 0.85),
}
SHAPES = ("disc", "square")
_COLOR_NAMES = tuple(COLORS)


def caption_tokens(color, shape):
    return np.array([_COLOR_NAMES.index(color), len(_COLOR_NAMES) + SHAPES.index(shape)])


def caption_id(color, shape):
    return _COLOR_NAMES.index(color) * len(SHAPES) + SHAPES.index(shape)


# -- clip curation ------------------------------------------------------------


@dataclass
class ClipTracks:
    """Grid tracks of one clip plus its mean-flow motion score."""

    tracks: mo.TrajectorySet
    motion_score: float
    clip_id: int

    def __post_init__(self):
        if self.motion_score < 0:
            raise ValueError("motion score must be nonnegative")


def motion_score(tracks):
    """Mean per-step displacement magnitude over all tracks."""
    if len(tracks) == 0 or tracks.frame_count < 2:
        return 0.0
    steps = np.diff(tracks.points, axis=1)
    return float(np.linalg.norm(steps, axis=2).mean())


def motion_score_filter(clips):
    """Drop the lowest-quartile motion scores (ties by clip_id); keeps ceil(0.75 n)."""
    if len(clips) == 0:
        raise ValueError("no clips to filter")
    order = sorted(range(len(clips)), key=lambda i: (clips[i].motion_score, clips[i].clip_id))
    n_drop = len(clips) - math.ceil(0.75 * len(clips))
    dropped = set(order[:n_drop])
    return [c for i, c in enumerate(clips) if i not in dropped]


def classify_camera_dominated(tracks, height, width):
    """True when at least 60% of tracks move more than 3% of the image
    diagonal per frame on average (strict > on the displacement test)."""
    if len(tracks) == 0:
        raise ValueError("no tracks")
    diag = math.sqrt(height * height + width * width)
    steps = np.diff(tracks.points, axis=1)
    mean_disp = np.linalg.norm(steps, axis=2).mean(axis=1)
    exceed = int((mean_disp > 0.03 * diag).sum())
    return exceed * 5 >= len(tracks) * 3  # integer form of exceed/n >= 0.60


def filter_by_length(tracks):
    """Drop tracks with total path length strictly below the clip mean."""
    if len(tracks) == 0:
        raise ValueError("no tracks")
    lengths = tracks.path_lengths()
    keep = np.nonzero(lengths >= lengths.mean())[0]
    return tracks.subset(keep)


def sample_sparse(tracks, rng, k=None):
    """Draw k ~ U{1..min(8,n)} tracks without replacement, weight ~ path length."""
    n = len(tracks)
    if n == 0:
        raise ValueError("no tracks to sample")
    k_max = min(8, n)
    if k is None:
        k = int(rng.integers(1, k_max + 1))
    if not 1 <= k <= k_max:
        raise ValueError(f"k must be in 1..{k_max}")
    weights = tracks.path_lengths().astype(np.float64)
    chosen = []
    avail = list(range(n))
    for _ in range(k):
        w = weights[avail]
        total = w.sum()
        p = np.full(len(avail), 1.0 / len(avail)) if total <= 0 else w / total
        pick = int(rng.choice(len(avail), p=p))
        chosen.append(avail.pop(pick))
    return tracks.subset(chosen)


# -- Lambert world -------------------------------------------------------------


@dataclass
class Sprite:
    position: np.ndarray  # world (3,) at frame 1; hero animates in xy
    albedo: np.ndarray  # (3,)
    normal: np.ndarray  # world unit (3,)
    radius_px: float  # half-extent at reference depth
    shape: str
    color_name: str


@dataclass
class LambertScene:
    frames: np.ndarray  # (F,3,H,W) float32 in [0,1]
    trajectory: list  # [Pose; F]
    intrinsics: geo.CameraIntrinsics
    sprites: list
    hero_path_world: np.ndarray  # (F,3)
    hero_track: mo.TrajectorySet  # projected hero centers (the ground truth)
    grid_tracks: mo.TrajectorySet
    light: lit.LightSpec  # per-frame camera-coordinate directions
    light_json: dict  # reference-frame schema as stored on disk
    caption: str
    caption_id: int
    text_ids: np.ndarray
    meta: dict = field(default_factory=dict)


@dataclass
class ForgeConfig:
    frames: int = 25
    width: int = 64
    height: int = 32
    focal: float = 64.0
    plane_depth: float = 2.0
    sprite_depth: float = 1.85
    static_depth: float = 1.92
    max_sprites: int = 3
    hero_radius: tuple = (2.6, 4.2)
    static_radius: tuple = (2.0, 3.2)
    camera_box_xy: float = 0.10
    camera_box_z: float = 0.04
    hero_span_px: tuple = (9.0, 18.0)  # total projected path length target
    light_min_elevation: float = 0.35  # |z| of sampled light directions
    time_varying_light_prob: float = 0.5
    flow_sigma: float = 1.5
    grid: int = 16
    val_scenes: int = 64

    def intrinsics(self):
        return geo.CameraIntrinsics(fx=self.focal, fy=self.focal,
                                    cx=(self.width - 1) / 2.0, cy=(self.height - 1) / 2.0,
                                    width=self.width, height=self.height)

    def to_json(self):
        d = {k: getattr(self, k) for k in self.__dataclass_fields__}
        for k, v in d.items():
            if isinstance(v, tuple):
                d[k] = list(v)
        return d

    @staticmethod
    def from_json(obj):
        obj = dict(obj)
        for k in ("hero_radius", "static_radius", "hero_span_px"):
            if k in obj:
                obj[k] = tuple(obj[k])
        return ForgeConfig(**obj)


def _unit(v):
    return v / np.linalg.norm(v)


def _tilted_normal(rng, max_tilt_deg, min_tilt_deg=0.0):
    """Unit normal near (0,0,-1), tilted by an angle in the given range."""
    tilt = np.deg2rad(rng.uniform(min_tilt_deg, max_tilt_deg))
    az = rng.uniform(0, 2 * np.pi)
    s = np.sin(tilt)
    return np.array([s * np.cos(az), s * np.sin(az), -np.cos(tilt)])


def _hemisphere_dir(rng, min_z):
    """Area-uniform direction facing the camera (negative z), |z| >= min_z."""
    z = rng.uniform(min_z, 1.0)
    phi = rng.uniform(0, 2 * np.pi)
    s = math.sqrt(max(0.0, 1.0 - z * z))
    return np.array([s * math.cos(phi), s * math.sin(phi), -z])


def _slerp_dirs(a, b, n):
    dot = float(np.clip(np.dot(a, b), -1.0, 1.0))
    omega = math.acos(dot)
    if omega < 1e-6:
        return np.tile(a, (n, 1))
    ts = np.linspace(0.0, 1.0, n)
    out = np.stack([
        (math.sin((1 - t) * omega) * a + math.sin(t * omega) * b) / math.sin(omega)
        for t in ts
    ])
    return out / np.linalg.norm(out, axis=1, keepdims=True)


def _camera_path(rng, cfg):
    target = np.array([0.0, 0.0, cfg.plane_depth])
    ctrl = np.stack([
        np.array([rng.uniform(-cfg.camera_box_xy, cfg.camera_box_xy),
                  rng.uniform(-cfg.camera_box_xy, cfg.camera_box_xy),
                  rng.uniform(-cfg.camera_box_z, cfg.camera_box_z)])
        for _ in range(4)
    ])
    positions = geo.catmull_rom(ctrl, cfg.frames)
    return [geo.look_at(p, target, up=(0.0, -1.0, 0.0)) for p in positions]


def _hero_world_path(rng, cfg, start_xy):
    """Smooth world path in the sprite plane with a target projected span."""
    span_px = rng.uniform(*cfg.hero_span_px)
    span_world = span_px * cfg.sprite_depth / cfg.focal
    ctrl = [np.array([start_xy[0], start_xy[1]])]
    heading = rng.uniform(0, 2 * np.pi)
    for _ in range(3):
        heading += rng.uniform(-1.2, 1.2)
        step = span_world / 3.0
        ctrl.append(ctrl[-1] + step * np.array([math.cos(heading), math.sin(heading)]))
    path_xy = geo.catmull_rom(np.stack(ctrl), cfg.frames)
    z = np.full((cfg.frames, 1), cfg.sprite_depth)
    return np.concatenate([path_xy, z], axis=1)


def _texture(rng):
    base = rng.uniform(0.22, 0.50, size=(6, 10, 1))
    tint = rng.uniform(-0.05, 0.05, size=(6, 10, 3))
    return np.clip(base + tint, 0.05, 0.7)


def _sample_texture(tex, x, y, extent):
    th, tw, _ = tex.shape
    u = np.clip((x / extent + 1.0) * 0.5 * (tw - 1), 0, tw - 1)
    v = np.clip((y / extent + 1.0) * 0.5 * (th - 1), 0, th - 1)
    u0, v0 = np.floor(u).astype(int), np.floor(v).astype(int)
    u1, v1 = np.minimum(u0 + 1, tw - 1), np.minimum(v0 + 1, th - 1)
    fu, fv = (u - u0)[..., None], (v - v0)[..., None]
    top = tex[v0, u0] * (1 - fu) + tex[v0, u1] * fu
    bot = tex[v1, u0] * (1 - fu) + tex[v1, u1] * fu
    return top * (1 - fv) + bot * fv


_BG_EXTENT = 1.8  # world half-width of the background texture


def _render_frame(cfg, intr, pose, light_dir, tex, bg_normal, sprites, hero_pos):
    h, w = cfg.height, cfg.width
    r, t = pose.rotation, pose.translation

    # background: intersect each pixel ray with the plane z = plane_depth
    vs, us = np.mgrid[0:h, 0:w].astype(np.float64)
    d_cam = np.stack([(us - intr.cx) / intr.fx, (vs - intr.cy) / intr.fy,
                      np.ones_like(us)], axis=-1)
    d_world = d_cam @ r  # == R^T d
    origin = pose.camera_center()
    s = (cfg.plane_depth - origin[2]) / d_world[..., 2]
    pts = origin + s[..., None] * d_world
    albedo = _sample_texture(tex, pts[..., 0], pts[..., 1], _BG_EXTENT)
    n_cam = r @ bg_normal
    shade = max(0.0, float(n_cam @ light_dir))
    image = albedo * shade
    depth = np.full((h, w), cfg.plane_depth)

    # sprites, painted far to near
    order = sorted(range(len(sprites)), key=lambda i: -(sprites[i].position[2]))
    centers = {}
    for i in order:
        sp = sprites[i]
        pos = hero_pos if i == 0 else sp.position
        pr = geo.project(pos, pose, intr)
        if pr is None:
            continue
        cu, cv, cd = pr
        centers[i] = (cu, cv)
        rad = sp.radius_px * cfg.sprite_depth / cd
        du = us - cu
        dv = vs - cv
        if sp.shape == "disc":
            mask = du * du + dv * dv <= rad * rad
        else:
            mask = np.maximum(np.abs(du), np.abs(dv)) <= rad
        mask &= cd < depth
        n_cam_s = r @ sp.normal
        shade_s = max(0.0, float(n_cam_s @ light_dir))
        image[mask] = sp.albedo * shade_s
        depth[mask] = cd
    return np.clip(image, 0.0, 1.0), centers


def _grid_tracks(cfg, intr, trajectory, sprites, hero_path):
    """Pseudo point tracks for a 16x16 grid placed on the first frame."""
    g = cfg.grid
    e1 = trajectory[0]
    us = (np.arange(g) + 0.5) * cfg.width / g - 0.5
    vs = (np.arange(g) + 0.5) * cfg.height / g - 0.5
    uu, vv = np.meshgrid(us, vs)
    pts0 = np.stack([uu.ravel(), vv.ravel()], axis=1)

    # classify each grid point on frame 1: hero sprite, static sprite, or background
    hero = sprites[0]
    pr0 = geo.project(hero_path[0], e1, intr)
    tracks = np.zeros((len(pts0), cfg.frames, 2))
    for i, (u0, v0) in enumerate(pts0):
        on_hero = False
        if pr0 is not None:
            du, dv = u0 - pr0[0], v0 - pr0[1]
            rad = hero.radius_px * cfg.sprite_depth / pr0[2]
            on_hero = (du * du + dv * dv <= rad * rad if hero.shape == "disc"
                       else max(abs(du), abs(dv)) <= rad)
        if on_hero:
            # ride the hero: constant world offset from its center
            ray = np.array([(u0 - intr.cx) / intr.fx, (v0 - intr.cy) / intr.fy, 1.0])
            world = geo.pose_inverse(e1).apply(ray * pr0[2])
            offset = world - hero_path[0]
            for f, pose in enumerate(trajectory):
                p = geo.project(hero_path[f] + offset, pose, intr)
                tracks[i, f] = _clamp_uv(p, cfg) if p else tracks[i, f - 1]
        else:
            # static world point at the background (or static sprite) depth
            depth = cfg.plane_depth
            for sp in sprites[1:]:
                prs = geo.project(sp.position, e1, intr)
                if prs is None:
                    continue
                du, dv = u0 - prs[0], v0 - prs[1]
                rad = sp.radius_px * cfg.sprite_depth / prs[2]
                hit = (du * du + dv * dv <= rad * rad if sp.shape == "disc"
                       else max(abs(du), abs(dv)) <= rad)
                if hit:
                    depth = sp.position[2]
                    break
            ray = np.array([(u0 - intr.cx) / intr.fx, (v0 - intr.cy) / intr.fy, 1.0])
            world = geo.pose_inverse(e1).apply(ray * depth)
            for f, pose in enumerate(trajectory):
                p = geo.project(world, pose, intr)
                tracks[i, f] = _clamp_uv(p, cfg) if p else tracks[i, f - 1]
    return mo.TrajectorySet(tracks, cfg.frames, cfg.width, cfg.height)


def _clamp_uv(pr, cfg):
    return (min(max(pr[0], 0.0), cfg.width - 1e-3), min(max(pr[1], 0.0), cfg.height - 1e-3))


def generate_lambert_world(seed, config=None):
    """Deterministically build one fully labeled scene."""
    cfg = config or ForgeConfig()
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0x1a3b]))
    intr = cfg.intrinsics()

    trajectory = _camera_path(rng, cfg)
    tex = _texture(rng)
    bg_normal = _tilted_normal(rng, max_tilt_deg=14.0)

    # hero sprite: color/shape from the caption vocabulary, tilted normal
    color_name = _COLOR_NAMES[rng.integers(0, len(_COLOR_NAMES))]
    shape = SHAPES[rng.integers(0, len(SHAPES))]
    hero = Sprite(position=np.array([0.0, 0.0, cfg.sprite_depth]),
                  albedo=np.array(COLORS[color_name]),
                  normal=_tilted_normal(rng, max_tilt_deg=55.0, min_tilt_deg=25.0),
                  radius_px=rng.uniform(*cfg.hero_radius), shape=shape,
                  color_name=color_name)
    sprites = [hero]
    for _ in range(int(rng.integers(0, cfg.max_sprites))):
        cname = _COLOR_NAMES[rng.integers(0, len(_COLOR_NAMES))]
        if cname == color_name:
            continue  # keep the hero color unique for unambiguous tracking
        pos_px = np.array([rng.uniform(6, cfg.width - 6), rng.uniform(4, cfg.height - 4)])
        world = geo.pose_inverse(trajectory[0]).apply(
            np.array([(pos_px[0] - intr.cx) / intr.fx, (pos_px[1] - intr.cy) / intr.fy, 1.0])
            * cfg.static_depth)
        sprites.append(Sprite(position=world, albedo=np.array(COLORS[cname]),
                              normal=_tilted_normal(rng, max_tilt_deg=50.0),
                              radius_px=rng.uniform(*cfg.static_radius), shape=SHAPES[
                                  rng.integers(0, len(SHAPES))],
                              color_name=cname))

    # hero path: retry until the projected track stays inside the frame margin
    hero_path = None
    for attempt in range(20):
        sub = np.random.default_rng(np.random.SeedSequence([seed, 0x77, attempt]))
        start = np.array([sub.uniform(-0.35, 0.35), sub.uniform(-0.18, 0.18)])
        cand = _hero_world_path(sub, cfg, start)
        ok = True
        margin = hero.radius_px + 1.5
        for f, pose in enumerate(trajectory):
            pr = geo.project(cand[f], pose, intr)
            if pr is None or not (margin <= pr[0] < cfg.width - margin
                                  and margin <= pr[1] < cfg.height - margin):
                ok = False
                break
        if ok:
            hero_path = cand
            break
    if hero_path is None:
        hero_path = np.tile(np.array([0.0, 0.0, cfg.sprite_depth]), (cfg.frames, 1))

    # lighting: static or slerped time-varying, given in the reference frame
    l_start = _hemisphere_dir(rng, cfg.light_min_elevation)
    if rng.random() < cfg.time_varying_light_prob:
        l_end = _hemisphere_dir(rng, cfg.light_min_elevation)
        ref_dirs = _slerp_dirs(l_start, l_end, cfg.frames)
        light_json = lit.light_to_json(lit.LightSpec(ref_dirs), mode="per_frame")
    else:
        ref_dirs = np.tile(l_start, (cfg.frames, 1))
        light_json = lit.light_to_json(l_start)
    light = lit.resolve_light(light_json, trajectory[0], trajectory)

    frames = np.empty((cfg.frames, 3, cfg.height, cfg.width), dtype=np.float32)
    track = np.zeros((cfg.frames, 2))
    for f, pose in enumerate(trajectory):
        img, centers = _render_frame(cfg, intr, pose, light.directions[f], tex,
                                     bg_normal, sprites, hero_path[f])
        frames[f] = img.transpose(2, 0, 1).astype(np.float32)
        track[f] = _clamp_uv(centers[0], cfg) if 0 in centers else track[f - 1]

    hero_track = mo.TrajectorySet(track[None], cfg.frames, cfg.width, cfg.height, ids=[0])
    grid = _grid_tracks(cfg, intr, trajectory, sprites, hero_path)
    caption = f"{color_name} {shape}"

    return LambertScene(
        frames=frames, trajectory=trajectory, intrinsics=intr, sprites=sprites,
        hero_path_world=hero_path, hero_track=hero_track, grid_tracks=grid,
        light=light, light_json=light_json, caption=caption,
        caption_id=caption_id(color_name, shape),
        text_ids=caption_tokens(color_name, shape),
        meta={
            "seed": int(seed),
            "hero_albedo": [float(x) for x in hero.albedo],
            "hero_normal_world": [float(x) for x in hero.normal],
            "hero_radius_px": float(hero.radius_px),
            "hero_shape": shape,
            "hero_color": color_name,
            "bg_normal_world": [float(x) for x in bg_normal],
            "plane_depth": cfg.plane_depth,
            "sprite_depth": cfg.sprite_depth,
        },
    )


# -- corpus ----------------------------------------------------------------


def _scene_tracks(scene, cfg, rng):
    """Run the curation pipeline on the grid tracks of one scene."""
    grid = scene.grid_tracks
    if classify_camera_dominated(grid, cfg.height, cfg.width):
        dense = scene.hero_track  # camera-dominated never happens at this scale
    else:
        dense = filter_by_length(grid)
    sparse = sample_sparse(dense, rng)
    return dense, sparse


def _flow_for(tracks, sigma):
    return mo.gaussian_smooth(mo.scatter_flow(tracks), sigma)


def build_training_corpus(out_dir, n_scenes, mode="both", seed=0, config=None,
                          progress=None):
    """Write scene directories plus a manifest; byte-stable for a fixed seed."""
    if mode not in ("dense", "sparse", "both"):
        raise ValueError(f"mode must be dense, sparse or both, got {mode!r}")
    cfg = config or ForgeConfig()
    os.makedirs(out_dir, exist_ok=True)
    scene_ids = []
    for i in range(n_scenes):
        scene = generate_lambert_world(seed + i, cfg)
        rng = np.random.default_rng(np.random.SeedSequence([seed + i, 0x5a]))
        dense, sparse = _scene_tracks(scene, cfg, rng)
        sid = f"scene_{i:05d}"
        sdir = os.path.join(out_dir, sid)
        os.makedirs(sdir, exist_ok=True)

        save_tnsr(os.path.join(sdir, "video.tnsr"), scene.frames)
        geo.save_trajectory(os.path.join(sdir, "cam.json"), scene.trajectory, scene.intrinsics)
        with open(os.path.join(sdir, "light.json"), "w") as f:
            json.dump(scene.light_json, f, sort_keys=True)
        with open(os.path.join(sdir, "caption.txt"), "w") as f:
            f.write(scene.caption + "\n")

        canonical = sparse if mode in ("sparse", "both") else dense
        mo.save_trajectories(os.path.join(sdir, "tracks.json"), canonical)
        save_tnsr(os.path.join(sdir, "flow.tnsr"),
                  _flow_for(canonical, cfg.flow_sigma).values)
        if mode == "both":
            mo.save_trajectories(os.path.join(sdir, "tracks_dense.json"), dense)
            save_tnsr(os.path.join(sdir, "flow_dense.tnsr"),
                      _flow_for(dense, cfg.flow_sigma).values)

        gt = {
            "caption_id": int(scene.caption_id),
            "text_ids": [int(x) for x in scene.text_ids],
            "hero_track": [[float(x), float(y)] for x, y in scene.hero_track.points[0]],
            **scene.meta,
        }
        with open(os.path.join(sdir, "scene.json"), "w") as f:
            json.dump(gt, f, sort_keys=True)
        scene_ids.append(sid)
        if progress is not None:
            progress(i + 1, n_scenes)

    n_val = min(cfg.val_scenes, max(1, n_scenes // 8)) if n_scenes > 1 else 0
    manifest = {
        "scenes": scene_ids,
        "splits": {"train": scene_ids[: n_scenes - n_val], "val": scene_ids[n_scenes - n_val:]},
        "mode": mode,
        "seed": int(seed),
        "config": cfg.to_json(),
    }
    with open(os.path.join(out_dir, "manifest.json"), "w") as f:
        json.dump(manifest, f, indent=1, sort_keys=True)
    return manifest


def conditioning_renders(video_or_ref, trajectory, intr, plane_depth, splat_radius_px=1):
    """Camera-conditioning renders: unproject the reference frame at the
    (near-planar) scene depth and splat it along the trajectory."""
    ref = np.asarray(video_or_ref, dtype=np.float64)
    if ref.ndim == 4:
        ref = ref[0].transpose(1, 2, 0)
    cloud = geo.unproject_image(ref, plane_depth, trajectory[0], intr)
    frames = geo.render_sequence(cloud, trajectory, intr, ref, splat_radius_px)
    return np.stack([f.image for f in frames]).astype(np.float32)


class CorpusDataset:
    """Lazy reader over a forge corpus; items are model-ready TrainSamples."""

    def __init__(self, root, split="train", trajectory_mode="sparse", cache_size=64):
        self.root = root
        with open(os.path.join(root, "manifest.json")) as f:
            self.manifest = json.load(f)
        self.config = ForgeConfig.from_json(self.manifest["config"])
        if split == "all":
            self.scene_ids = list(self.manifest["scenes"])
        else:
            self.scene_ids = list(self.manifest["splits"][split])
        corpus_mode = self.manifest["mode"]
        if trajectory_mode == "dense" and corpus_mode == "sparse":
            raise ValueError("corpus was built sparse-only; dense tracks unavailable")
        if trajectory_mode == "sparse" and corpus_mode == "dense":
            raise ValueError("corpus was built dense-only; sparse tracks unavailable")
        self.trajectory_mode = trajectory_mode
        self._cache = {}
        self._cache_size = cache_size

    def __len__(self):
        return len(self.scene_ids)

    def scene_dir(self, i):
        return os.path.join(self.root, self.scene_ids[i])

    def __getitem__(self, i):
        key = (i, self.trajectory_mode)
        if key in self._cache:
            return self._cache[key]
        sample = self._load(i)
        if len(self._cache) >= self._cache_size:
            self._cache.pop(next(iter(self._cache)))
        self._cache[key] = sample
        return sample

    def _load(self, i):
        sdir = self.scene_dir(i)
        cfg = self.config
        video = load_tnsr(os.path.join(sdir, "video.tnsr")).astype(np.float32)
        trajectory, intr = geo.load_trajectory(os.path.join(sdir, "cam.json"))
        with open(os.path.join(sdir, "light.json")) as f:
            light_json = json.load(f)
        light = lit.resolve_light(light_json, trajectory[0], trajectory)
        with open(os.path.join(sdir, "scene.json")) as f:
            meta = json.load(f)

        dense_first = self.trajectory_mode == "dense" and self.manifest["mode"] == "both"
        flow_file = "flow_dense.tnsr" if dense_first else "flow.tnsr"
        tracks_file = "tracks_dense.json" if dense_first else "tracks.json"
        flow = mo.FlowField(load_tnsr(os.path.join(sdir, flow_file)).astype(np.float32))
        tracks = mo.load_trajectories(os.path.join(sdir, tracks_file))

        renders = conditioning_renders(video, trajectory, intr, cfg.plane_depth)
        return TrainSample(video=video, renders=renders, flow=flow, light=light,
                           text_ids=np.asarray(meta["text_ids"]),
                           scene_id=self.scene_ids[i], tracks=tracks, meta=meta)

    def trajectory(self, i):
        return geo.load_trajectory(os.path.join(self.scene_dir(i), "cam.json"))


# -- evaluation helpers ----------------------------------------------------


def track_sprite(frames, albedo, min_brightness=0.04):
    """Estimate the per-frame center of the sprite with the given albedo by
    chromaticity matching; a crude stand-in for a point tracker."""
    vid = np.asarray(frames, dtype=np.float64)
    if vid.ndim != 4:
        raise ValueError("expected (F,3,H,W) frames")
    f, _, h, w = vid.shape
    a = np.asarray(albedo, dtype=np.float64)
    a = a / np.linalg.norm(a)
    out = np.zeros((f, 2))
    vs, us = np.mgrid[0:h, 0:w]
    prev = np.array([w / 2.0, h / 2.0])
    for i in range(f):
        px = vid[i].transpose(1, 2, 0)
        mag = np.linalg.norm(px, axis=2)
        sim = (px @ a) / np.maximum(mag, 1e-9)
        weight = np.where((sim > 0.97) & (mag > min_brightness), (sim - 0.97) * mag, 0.0)
        total = weight.sum()
        if total < 1e-9:
            out[i] = prev
        else:
            out[i] = [float((weight * us).sum() / total), float((weight * vs).sum() / total)]
            prev = out[i]
    out[:, 0] = np.clip(out[:, 0], 0, w - 1e-3)
    out[:, 1] = np.clip(out[:, 1], 0, h - 1e-3)
    return mo.TrajectorySet(out[None], f, w, h, ids=[0])


def sample_brightness(frames, track, radius):
    """Mean luminance inside a disc around the (single) track per frame."""
    vid = np.asarray(frames, dtype=np.float64)
    f, _, h, w = vid.shape
    vs, us = np.mgrid[0:h, 0:w]
    vals = []
    for i in range(f):
        cu, cv = track.points[0, i]
        mask = (us - cu) ** 2 + (vs - cv) ** 2 <= radius * radius
        if not mask.any():
            vals.append(0.0)
            continue
        vals.append(float(vid[i].mean(axis=0)[mask].mean()))
    return np.asarray(vals)
