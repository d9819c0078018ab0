"""Command-line front door: forge, train, sample, render, eval.

Exit codes: 0 success, 2 validation failure, 3 runtime failure. Every run
writes the resolved configuration and SHA-1 content hashes of its file
inputs into MANIFEST.json under the output directory.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
import time

import numpy as np

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_RUNTIME = 3


class ValidationError(Exception):
    """Bad or missing inputs; maps to exit code 2."""


def _sha1(path):
    h = hashlib.sha1()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _hash_inputs(paths):
    return {str(p): _sha1(p) for p in paths if p and os.path.isfile(p)}


def _require_file(path, kind):
    if path is None:
        raise ValidationError(f"missing required {kind}")
    if not os.path.isfile(path):
        raise ValidationError(f"{kind} not found: {path}")
    return path


def _require_dir(path, kind):
    if path is None or not os.path.isdir(path):
        raise ValidationError(f"{kind} directory not found: {path}")
    return path


def _write_manifest(out_dir, command, config, input_hashes, extra=None):
    os.makedirs(out_dir, exist_ok=True)
    manifest = {"command": command, "config": config, "inputs": input_hashes}
    if extra:
        manifest.update(extra)
    with open(os.path.join(out_dir, "MANIFEST.json"), "w") as f:
        json.dump(manifest, f, indent=1, sort_keys=True)
    print(f"[tricraft] {command}: config {json.dumps(config, sort_keys=True)}")
    for path, digest in input_hashes.items():
        print(f"[tricraft] input {path} sha1={digest}")


def _load_config_file(path):
    if path is None:
        return {}
    _require_file(path, "config file")
    with open(path) as f:
        obj = json.load(f)
    if not isinstance(obj, dict):
        raise ValidationError("config file must hold a JSON object")
    return obj


def _resolved(defaults, config_file, cli_overrides):
    """Config precedence: defaults < config file < explicit CLI values."""
    out = dict(defaults)
    out.update(config_file)
    out.update({k: v for k, v in cli_overrides.items() if v is not None})
    return out


# -- subcommands ---------------------------------------------------------------


def cmd_forge(args):
    from .forge import ForgeConfig, build_training_corpus

    cfg = _resolved(
        {"scenes": 512, "mode": "both", "seed": 0},
        _load_config_file(args.config),
        {"scenes": args.scenes, "mode": args.mode, "seed": args.seed},
    )
    if args.out is None:
        raise ValidationError("--out is required")
    forge_cfg = ForgeConfig.from_json(cfg["forge"]) if "forge" in cfg else ForgeConfig()
    t0 = time.time()
    manifest = build_training_corpus(args.out, int(cfg["scenes"]), mode=cfg["mode"],
                                     seed=int(cfg["seed"]), config=forge_cfg,
                                     progress=_progress("forge"))
    cfg["forge"] = forge_cfg.to_json()
    _write_manifest(args.out, "forge", cfg, {},
                    extra={"scenes": len(manifest["scenes"]),
                           "elapsed_s": round(time.time() - t0, 2)})
    return EXIT_OK


def _progress(tag, every=64):
    def cb(done, total):
        if done % every == 0 or done == total:
            print(f"[tricraft] {tag}: {done}/{total}")
    return cb


def cmd_train(args):
    from .diffusion import (ControlDiffusionModel, ModelConfig, load_checkpoint,
                            make_stage, save_checkpoint, train)
    from .forge import CorpusDataset

    _require_dir(args.data, "corpus")
    cfg = _resolved(
        {"stage": 1, "lr": 1e-5, "batch_size": 2, "p_uncond": 0.05,
         "scale": 1.0, "seed": 0, "iters": None},
        _load_config_file(args.config),
        {"stage": args.stage, "lr": args.lr, "batch_size": args.batch_size,
         "scale": args.scale, "seed": args.seed, "iters": args.iters},
    )
    stage = make_stage(int(cfg["stage"]), iterations=cfg["iters"], scale=float(cfg["scale"]))
    dataset = CorpusDataset(args.data, split="train", trajectory_mode=stage.trajectory_mode)

    if args.ckpt_in:
        _require_dir(args.ckpt_in, "input checkpoint")
        model, _ = load_checkpoint(args.ckpt_in)
    else:
        fc = dataset.config
        model = ControlDiffusionModel(ModelConfig(frames=fc.frames,
                                                  video_height=fc.height,
                                                  video_width=fc.width,
                                                  seed=int(cfg["seed"])))
    if model.config.frames != dataset.config.frames:
        raise ValidationError("checkpoint frame count does not match the corpus")

    t0 = time.time()
    losses = train(model, dataset, stage, batch_size=int(cfg["batch_size"]),
                   lr=float(cfg["lr"]), p_uncond=float(cfg["p_uncond"]),
                   seed=int(cfg["seed"]),
                   log_fn=lambda it, loss: print(
                       f"[tricraft] train stage {stage.stage} iter {it}/{stage.iterations} "
                       f"loss {loss:.5f}"))
    save_checkpoint(model, args.ckpt_out, stage=stage.stage, iteration=stage.iterations)
    with open(os.path.join(args.ckpt_out, "losses.json"), "w") as f:
        json.dump({"losses": losses}, f)
    cfg["iters"] = stage.iterations
    _write_manifest(args.ckpt_out, "train", cfg,
                    _hash_inputs([os.path.join(args.data, "manifest.json")]),
                    extra={"elapsed_s": round(time.time() - t0, 2),
                           "final_loss": losses[-1]})
    return EXIT_OK


def _parse_caption(caption):
    from .forge import COLORS, SHAPES, caption_tokens
    words = caption.strip().split()
    if len(words) != 2 or words[0] not in COLORS or words[1] not in SHAPES:
        raise ValidationError(
            f"caption must be '<color> <shape>' with color in {sorted(COLORS)} "
            f"and shape in {sorted(SHAPES)}")
    return caption_tokens(words[0], words[1])


def load_controls(model, ref_path, camera=None, tracks=None, light=None, ply=None,
                  caption=None, plane_depth=2.0, flow_sigma=1.5):
    """Translate CLI/service control files into a ConditionBundle."""
    from . import geometry as geo
    from . import lighting as lit
    from . import motion as mo
    from .forge import conditioning_renders
    from .images import load_png

    ref = load_png(_require_file(ref_path, "reference image"))
    cfg = model.config
    if ref.shape[:2] != (cfg.video_height, cfg.video_width):
        raise ValidationError(
            f"reference image must be {cfg.video_height}x{cfg.video_width}, "
            f"got {ref.shape[0]}x{ref.shape[1]}")

    trajectory = None
    renders = None
    if camera is not None:
        with open(_require_file(camera, "camera JSON")) as f:
            trajectory, intr = geo.trajectory_from_json(json.load(f))
        if len(trajectory) != cfg.frames:
            raise ValidationError(f"camera trajectory must have {cfg.frames} frames")
        if (intr.height, intr.width) != (cfg.video_height, cfg.video_width):
            raise ValidationError("camera intrinsics extents do not match the model")
        if ply is not None:
            cloud = geo.ply_read(_require_file(ply, "PLY file"))
            frames = geo.render_sequence(cloud, trajectory, intr, ref)
            renders = np.stack([fr.image for fr in frames]).astype(np.float32)
        else:
            renders = conditioning_renders(ref, trajectory, intr, plane_depth)

    flow = None
    track_set = None
    if tracks is not None:
        with open(_require_file(tracks, "tracks JSON")) as f:
            track_set = mo.trajectories_from_json(json.load(f))
        if track_set.frame_count != cfg.frames:
            raise ValidationError(f"tracks must have {cfg.frames} frames")
        if (track_set.height, track_set.width) != (cfg.video_height, cfg.video_width):
            raise ValidationError("track extents do not match the model")
        flow = mo.gaussian_smooth(mo.scatter_flow(track_set), flow_sigma)

    light_spec = None
    if light is not None:
        with open(_require_file(light, "light JSON")) as f:
            light_json = json.load(f)
        resolve_traj = trajectory if trajectory is not None else \
            [geo.Pose.identity()] * cfg.frames
        light_spec = lit.resolve_light(light_json, resolve_traj[0], resolve_traj)

    text_ids = _parse_caption(caption) if caption else None
    return model.build_bundle(ref, text_ids, renders=renders, flow=flow, light=light_spec)


def cmd_sample(args):
    from .diffusion import load_checkpoint
    from .diffusion.sampling import sample_video
    from .images import save_png

    _require_dir(args.ckpt, "checkpoint")
    cfg = _resolved(
        {"steps": 25, "guidance": 7.5, "seed": 0, "plane_depth": 2.0, "flow_sigma": 1.5},
        _load_config_file(args.config),
        {"steps": args.steps, "guidance": args.guidance, "seed": args.seed},
    )
    model, _ = load_checkpoint(args.ckpt)
    try:
        bundle = load_controls(model, args.ref, camera=args.camera, tracks=args.tracks,
                               light=args.light, ply=args.ply, caption=args.caption,
                               plane_depth=float(cfg["plane_depth"]),
                               flow_sigma=float(cfg["flow_sigma"]))
    except (ValueError, KeyError, json.JSONDecodeError) as exc:
        raise ValidationError(f"invalid control input: {exc}") from exc
    video = sample_video(model, bundle, steps=int(cfg["steps"]),
                         guidance=float(cfg["guidance"]), seed=int(cfg["seed"]))
    os.makedirs(args.out, exist_ok=True)
    for i, frame in enumerate(video):
        save_png(os.path.join(args.out, f"frame_{i:03d}.png"), frame.transpose(1, 2, 0))
    controls = {k: bool(v) for k, v in
                (("camera", args.camera), ("object", args.tracks), ("light", args.light))}
    _write_manifest(args.out, "sample", cfg,
                    _hash_inputs([args.ref, args.camera, args.tracks, args.light, args.ply]),
                    extra={"frames": len(video), "controls": controls})
    return EXIT_OK


def cmd_render(args):
    from . import geometry as geo
    from .images import save_png

    cloud = geo.ply_read(_require_file(args.ply, "PLY file"))
    with open(_require_file(args.camera, "camera JSON")) as f:
        trajectory, intr = geo.trajectory_from_json(json.load(f))
    if args.ref:
        from .images import load_png
        ref = load_png(args.ref)
        if ref.shape[:2] != (intr.height, intr.width):
            raise ValidationError("reference image extents do not match intrinsics")
    else:
        ref = geo.render_point_cloud(cloud, trajectory[0], intr,
                                     args.splat_radius).image
    frames = geo.render_sequence(cloud, trajectory, intr, ref, args.splat_radius)
    os.makedirs(args.out, exist_ok=True)
    for i, fr in enumerate(frames):
        save_png(os.path.join(args.out, f"render_{i:03d}.png"), fr.image)
    _write_manifest(args.out, "render", {"splat_radius": args.splat_radius},
                    _hash_inputs([args.ply, args.camera, args.ref]),
                    extra={"frames": len(frames)})
    return EXIT_OK


def cmd_eval(args):
    from . import geometry as geo
    from . import motion as mo
    from .metrics import CAM_MC_NOTE, MetricReport, cam_mc, obj_mc, psnr, ssim, write_report
    from .tensor import load_tnsr

    pred_dir = _require_dir(args.pred, "prediction")
    gt_dir = _require_dir(args.gt, "ground truth")
    wanted = [m.strip() for m in args.metrics.split(",") if m.strip()]
    known = {"objmc", "cammc", "psnr", "ssim"}
    bad = set(wanted) - known
    if bad:
        raise ValidationError(f"unknown metrics {sorted(bad)}; choose from {sorted(known)}")

    scenes = sorted(d for d in os.listdir(gt_dir)
                    if os.path.isdir(os.path.join(gt_dir, d)) and d.startswith("scene_"))
    if not scenes:
        raise ValidationError(f"no scene_* directories in {gt_dir}")
    reports = {m: MetricReport(m, note=CAM_MC_NOTE if m == "cammc" else "") for m in wanted}
    for sid in scenes:
        pdir, gdir = os.path.join(pred_dir, sid), os.path.join(gt_dir, sid)
        if not os.path.isdir(pdir):
            raise ValidationError(f"prediction missing scene {sid}")
        if "objmc" in reports:
            p = mo.load_trajectories(os.path.join(pdir, "tracks.json"))
            g = mo.load_trajectories(os.path.join(gdir, "tracks.json"))
            reports["objmc"].add(obj_mc(p, g))
        if "cammc" in reports:
            pt, _ = geo.load_trajectory(os.path.join(pdir, "cam.json"))
            gt, _ = geo.load_trajectory(os.path.join(gdir, "cam.json"))
            reports["cammc"].add(cam_mc(pt, gt))
        if "psnr" in reports or "ssim" in reports:
            pv = load_tnsr(os.path.join(pdir, "video.tnsr"))
            gv = load_tnsr(os.path.join(gdir, "video.tnsr"))
            if "psnr" in reports:
                reports["psnr"].add(psnr(pv, gv))
            if "ssim" in reports:
                reports["ssim"].add(ssim(pv.transpose(0, 2, 3, 1), gv.transpose(0, 2, 3, 1)))

    out_dir = os.path.dirname(os.path.abspath(args.out)) or "."
    os.makedirs(out_dir, exist_ok=True)
    payload = write_report(args.out, list(reports.values()))
    for rep in payload["reports"]:
        print(f"[tricraft] {rep['metric']}: mean {rep['mean']:.6g} over {rep['count']} scenes")
    _write_manifest(out_dir, "eval", {"metrics": wanted},
                    _hash_inputs([os.path.join(gt_dir, "manifest.json")]))
    return EXIT_OK


# -- parser ----------------------------------------------------------------


def build_parser():
    p = argparse.ArgumentParser(
        prog="tricraft",
        description="Desk-scale controllable video diffusion toolkit")
    sub = p.add_subparsers(dest="command", required=True)

    f = sub.add_parser("forge", help="generate a Lambert-world training corpus")
    f.add_argument("--scenes", type=int, default=None, help="number of scenes (default 512)")
    f.add_argument("--mode", choices=["dense", "sparse", "both"], default=None,
                   help="trajectory channel to export (default both)")
    f.add_argument("--seed", type=int, default=None, help="corpus seed (default 0)")
    f.add_argument("--out", required=True, help="output corpus directory")
    f.add_argument("--config", default=None, help="JSON config file")
    f.set_defaults(fn=cmd_forge)

    t = sub.add_parser("train", help="run one training stage")
    t.add_argument("--stage", type=int, choices=[1, 2, 3], default=None,
                   help="training stage (default 1)")
    t.add_argument("--data", required=True, help="corpus directory")
    t.add_argument("--ckpt-in", default=None, help="checkpoint to resume from")
    t.add_argument("--ckpt-out", required=True, help="output checkpoint directory")
    t.add_argument("--iters", type=int, default=None,
                   help="iteration count (default: stage default x scale)")
    t.add_argument("--scale", type=float, default=None,
                   help="multiplier on the stage's default iterations (default 1.0)")
    t.add_argument("--lr", type=float, default=None, help="Adam learning rate (default 1e-5)")
    t.add_argument("--batch-size", type=int, default=None, help="batch size (default 2)")
    t.add_argument("--seed", type=int, default=None, help="training seed (default 0)")
    t.add_argument("--config", default=None, help="JSON config file")
    t.set_defaults(fn=cmd_train)

    s = sub.add_parser("sample", help="sample a video from a checkpoint")
    s.add_argument("--ckpt", required=True, help="checkpoint directory")
    s.add_argument("--ref", required=True, help="reference image PNG")
    s.add_argument("--camera", default=None, help="camera trajectory JSON")
    s.add_argument("--tracks", default=None, help="sparse trajectories JSON")
    s.add_argument("--light", default=None, help="light direction JSON")
    s.add_argument("--ply", default=None, help="point cloud PLY for camera renders")
    s.add_argument("--caption", default=None, help="caption, e.g. 'red disc'")
    s.add_argument("--steps", type=int, default=None, help="DDIM steps (default 25)")
    s.add_argument("--guidance", type=float, default=None,
                   help="classifier-free guidance scale (default 7.5)")
    s.add_argument("--seed", type=int, default=None, help="sampling seed (default 0)")
    s.add_argument("--out", required=True, help="output directory for PNG frames")
    s.add_argument("--config", default=None, help="JSON config file")
    s.set_defaults(fn=cmd_sample)

    r = sub.add_parser("render", help="preview a point cloud along a trajectory")
    r.add_argument("--ply", required=True, help="point cloud PLY")
    r.add_argument("--camera", required=True, help="camera trajectory JSON")
    r.add_argument("--ref", default=None, help="reference image for frame 1")
    r.add_argument("--splat-radius", type=int, default=1, help="splat radius px (default 1)")
    r.add_argument("--out", required=True, help="output directory")
    r.set_defaults(fn=cmd_render)

    e = sub.add_parser("eval", help="score predictions against ground truth")
    e.add_argument("--pred", required=True, help="prediction corpus directory")
    e.add_argument("--gt", required=True, help="ground-truth corpus directory")
    e.add_argument("--metrics", default="objmc,cammc,psnr,ssim",
                   help="comma list (default objmc,cammc,psnr,ssim)")
    e.add_argument("--out", required=True, help="report JSON path")
    e.set_defaults(fn=cmd_eval)
    return p


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except ValidationError as exc:
        print(f"[tricraft] validation error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except (OSError, ValueError, KeyError, json.JSONDecodeError) as exc:
        print(f"[tricraft] error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
