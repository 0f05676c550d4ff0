"""Command-line interface: render | trajectory | edit | sweep | eval | demo.

Exit codes: 0 success, 2 usage or configuration error, 3 runtime failure.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import asdict, fields
from pathlib import Path

import numpy as np

from . import io
from .demo import DEMO_RECOLOR, demo_inputs
from .metrics import (PoseSequence, eta_sweep, format_report, plot_report, reprojection_consistency,
                      rot_err, seed_means, trans_err)
from .pipeline import EditConfig, EditSpec, edited_video_prior, make_editor, oracle_edit, run_vip3de
from .scene import rasterize, render_all
from .trajectory import CameraPath, build_trajectory

log = logging.getLogger("vip3de")

EDITOR_KEYS = ["editor", "recolor_matrix", "recolor_offset", "hue_degrees", "region_box", "region_color"]
CONFIG_KEYS = [f.name for f in fields(EditConfig)] + EDITOR_KEYS


class UsageError(Exception):
    pass


def _floats(text: str) -> list[float]:
    return [float(v) for v in text.replace(",", " ").split()]


def _coerce(key: str, value: str):
    if key in EDITOR_KEYS:
        return value
    kind = {f.name: f.type for f in fields(EditConfig)}[key]
    if value.lower() in ("none", "") and "None" in str(kind):
        return None
    if "bool" in str(kind):
        if value.lower() not in ("true", "false", "1", "0", "yes", "no"):
            raise ValueError(f"{key}: expected a boolean, got {value!r}")
        return value.lower() in ("true", "1", "yes")
    if "int" in str(kind):
        return int(value)
    return float(value)


def load_settings(args) -> tuple[EditConfig, dict]:
    """Defaults, then the config file, then ``--set`` overrides, then ``--seed``/``--threads``."""
    raw = {}
    if getattr(args, "config", None):
        path = Path(args.config)
        if not path.is_file():
            raise UsageError(f"config file not found: {path}")
        try:
            raw.update(io.read_config(path, CONFIG_KEYS))
        except io.FormatError as err:
            raise UsageError(f"{path}: {err}") from err
    for item in getattr(args, "set", None) or []:
        if "=" not in item:
            raise UsageError(f"--set expects key=value, got {item!r}")
        k, v = (s.strip() for s in item.split("=", 1))
        if k not in CONFIG_KEYS:
            raise UsageError(f"unknown key {k!r}")
        raw[k] = v
    if getattr(args, "seed", None) is not None:
        raw["seed"] = str(args.seed)
    if getattr(args, "threads", None) is not None:
        raw["threads"] = str(args.threads)
    editor = {k: raw.pop(k) for k in EDITOR_KEYS if k in raw}
    try:
        values = {k: _coerce(k, v) for k, v in raw.items()}
        cfg = EditConfig(**values)
    except ValueError as err:
        raise UsageError(str(err)) from err
    return cfg, editor


def build_editor(opts: dict, default: str = "recolor"):
    kind = opts.get("editor", default)
    params = {}
    try:
        if kind == "recolor":
            params["matrix"] = _floats(opts["recolor_matrix"]) if "recolor_matrix" in opts else DEMO_RECOLOR["matrix"]
            params["offset"] = _floats(opts["recolor_offset"]) if "recolor_offset" in opts else DEMO_RECOLOR["offset"]
        elif kind == "hue":
            params["degrees"] = float(opts.get("hue_degrees", 120.0))
        elif kind == "region":
            if "region_box" not in opts:
                raise ValueError("region editor needs region_box")
            params["box"] = _floats(opts["region_box"])
            params["color"] = _floats(opts.get("region_color", "1 0 0"))
        return make_editor(kind, params)
    except (ValueError, KeyError) as err:
        raise UsageError(f"editor: {err}") from err


def _need_file(path) -> Path:
    p = Path(path)
    if not p.is_file():
        raise UsageError(f"file not found: {p}")
    return p


def _read_inputs(args):
    try:
        scene = io.read_scene(_need_file(args.scene))
        cams = io.read_cameras(_need_file(args.trajectory if hasattr(args, "trajectory") else args.cameras))
    except io.FormatError as err:
        raise UsageError(str(err)) from err
    cams = cams.cameras if isinstance(cams, CameraPath) else cams
    if len(cams) < 2:
        raise UsageError("trajectory too short")
    return scene, cams


def _read_masks(directory, cameras):
    if directory is None:
        return None
    masks = []
    for i, cam in enumerate(cameras):
        m = io.read_png(_need_file(Path(directory) / f"mask_{i:03d}.png"))[..., 0] > 0.5
        if m.shape != cam.shape:
            raise UsageError(f"mask {i} has shape {m.shape}, expected {cam.shape}")
        masks.append(m.astype(np.float64))
    return masks


def _out(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_json(path, obj):
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


# ---------------------------------------------------------------------------


def cmd_render(args) -> int:
    scene, cams = _read_inputs(args)
    out = _out(args)
    frames = render_all(scene, cams)
    manifest = {"count": len(frames), "width": cams[0].width, "height": cams[0].height,
                "depth_format": "float32 little-endian row-major, +inf = empty", "frames": []}
    for i, fr in enumerate(frames):
        io.write_png(out / f"frame_{i:03d}.png", fr.rgb)
        io.write_depth(out / f"depth_{i:03d}.bin", fr.depth)
        manifest["frames"].append({"rgb": f"frame_{i:03d}.png", "depth": f"depth_{i:03d}.bin"})
    io.write_cameras(out / "cameras.txt", cams)
    _write_json(out / "manifest.json", manifest)
    print(f"rendered {len(frames)} frames to {out}")
    return 0


def cmd_trajectory(args) -> int:
    try:
        cams = io.read_cameras(_need_file(args.cameras))
    except io.FormatError as err:
        raise UsageError(str(err)) from err
    cams = cams.cameras if isinstance(cams, CameraPath) else cams
    if len(cams) < 2:
        raise UsageError("trajectory too short")
    if args.scene_radius <= 0:
        raise UsageError("scene radius must be positive")
    try:
        path = build_trajectory(cams, args.keys, args.frames, args.scene_radius, seed=args.seed)
    except ValueError as err:
        raise UsageError(str(err)) from err
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    io.write_trajectory(out, path)
    print(f"wrote {len(path)} cameras (keys {path.key_indices}) to {out}")
    return 0


def _edit(scene, cams, cfg, editor, masks, out: Path, oracle=None, denoiser=None) -> dict:
    res = run_vip3de(scene, cams, EditSpec(editor, masks), cfg, denoiser)
    for i, rgb in enumerate(res.frames):
        io.write_png(out / f"edited_{i:03d}.png", rgb)
    io.write_png(out / "condition.png", res.condition)
    io.write_scene(out / "edited_scene.txt", res.scene)
    io.write_latent(out / "latent.latv", res.latent)
    summary = {
        "eta": cfg.eta, "tau": cfg.tau, "w_min": cfg.w_min, "w_max": cfg.w_max, "steps": cfg.steps,
        "factor": cfg.factor, "update_iters": cfg.update_iters, "seed": cfg.seed,
        "frames": len(cams), "condition_index": res.condition_index,
        "invert_count": res.counters["invert"], "sample_count": res.counters["sample"],
        "counters": res.counters,
        "config": asdict(cfg),
    }
    seen = np.zeros(len(scene), dtype=bool)
    for cam in cams:
        idx, _ = rasterize(scene, cam)
        seen[idx[idx >= 0]] = True
    summary["mean_color_change"] = float(np.abs(res.scene.colors - scene.colors)[seen].mean()) if seen.any() else 0.0
    if oracle is not None:
        summary["oracle_color_error"] = float(np.abs(res.scene.colors - oracle.colors)[seen].mean())
    _write_json(out / "summary.json", summary)
    # wall-clock numbers live apart from summary.json so reruns stay byte-identical
    _write_json(out / "timings.json", {k: round(v, 6) for k, v in res.timings.items()})
    return summary


def cmd_edit(args) -> int:
    cfg, editor_opts = load_settings(args)
    editor = build_editor(editor_opts)
    scene, cams = _read_inputs(args)
    if cams[0].height % cfg.factor or cams[0].width % cfg.factor:
        raise UsageError(f"factor {cfg.factor} does not divide image size {cams[0].shape}")
    masks = _read_masks(args.masks, cams)
    out = _out(args)
    summary = _edit(scene, cams, cfg, editor, masks, out)
    print(f"edited {summary['frames']} views; invert_count={summary['invert_count']} "
          f"sample_count={summary['sample_count']}; outputs in {out}")
    return 0


def cmd_sweep(args) -> int:
    cfg, editor_opts = load_settings(args)
    editor = build_editor(editor_opts)
    scene, cams = _read_inputs(args)
    etas, seeds = _floats(args.etas), [int(s) for s in _floats(args.seeds)]
    if any(not 0 <= e <= 1 for e in etas):
        raise UsageError("eta out of range")
    out = _out(args)
    rows = eta_sweep(scene, cams, EditSpec(editor), etas, seeds, cfg)
    (out / "sweep.csv").write_text(format_report(rows))
    plot_report(rows, out / "sweep.png")
    for eta, (pose, app) in seed_means(rows).items():
        print(f"eta={eta:.3f} pose_err={pose:.5f} appearance_dist={app:.5f}")
    return 0


def cmd_eval(args) -> int:
    try:
        gt = io.read_cameras(_need_file(args.gt))
        est = io.read_cameras(_need_file(args.est))
    except io.FormatError as err:
        raise UsageError(str(err)) from err
    gt = gt.cameras if isinstance(gt, CameraPath) else gt
    est = est.cameras if isinstance(est, CameraPath) else est
    if len(gt) != len(est):
        raise UsageError(f"pose files differ in length: {len(gt)} vs {len(est)}")
    g, e = PoseSequence.from_cameras(gt), PoseSequence.from_cameras(est)
    result = {"trans_err": trans_err(g, e), "rot_err": rot_err(g, e), "frames": len(gt)}
    if args.frames:
        d = Path(args.frames)
        manifest = json.loads(_need_file(d / "manifest.json").read_text())
        H, W = manifest["height"], manifest["width"]
        rgb = [io.read_png(d / f["rgb"]) for f in manifest["frames"]]
        depth = [io.read_depth(d / f["depth"], H, W) for f in manifest["frames"]]
        if len(rgb) != len(gt):
            raise UsageError("frame count does not match pose count")
        result["reprojection_consistency"] = reprojection_consistency(rgb, depth, gt, args.tau)
    print(json.dumps(result, sort_keys=True))
    if args.out:
        _write_json(_out(args) / "eval.json", result)
    return 0


def cmd_demo(args) -> int:
    cfg, editor_opts = load_settings(args)
    editor = build_editor(editor_opts)
    out = _out(args)
    scene, train, radius = demo_inputs(seed=cfg.seed)
    path = build_trajectory(train, 3, args.frames, radius)
    io.write_scene(out / "scene.txt", scene)
    io.write_cameras(out / "training_cameras.txt", train)
    io.write_trajectory(out / "trajectory.txt", path)
    oracle, factory = None, None
    try:
        oracle, oracle_frames = oracle_edit(scene, path.cameras, editor)
        # the demo knows the edited scene, so the prior is centred on its renders
        factory = lambda cond, src: edited_video_prior(oracle_frames, cond, cfg)  # noqa: E731
    except TypeError:
        pass
    src_dir = out / "source"
    src_dir.mkdir(exist_ok=True)
    for i, fr in enumerate(render_all(scene, path.cameras)):
        io.write_png(src_dir / f"frame_{i:03d}.png", fr.rgb)
    summary = _edit(scene, path.cameras, cfg, editor, None, out, oracle, factory)
    msg = f"demo: {len(path)} views, invert_count={summary['invert_count']}, sample_count={summary['sample_count']}"
    if oracle is not None:
        msg += f", oracle color error {summary['oracle_color_error']:.4f}"
    print(msg)
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="vip3de", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, config=True):
        sp.add_argument("--out", required=True, help="output directory")
        sp.add_argument("--seed", type=int, default=None)
        sp.add_argument("--threads", type=int, default=None)
        if config:
            sp.add_argument("--config", help="key = value config file")
            sp.add_argument("--set", action="append", metavar="KEY=VALUE", help="override a config key")

    sp = sub.add_parser("render", help="render frames and depth maps")
    sp.add_argument("--scene", required=True)
    sp.add_argument("--cameras", required=True, help="camera or trajectory file")
    common(sp, config=False)
    sp.set_defaults(func=cmd_render)

    sp = sub.add_parser("trajectory", help="build a continuous camera path from training views")
    sp.add_argument("--cameras", required=True)
    sp.add_argument("--keys", type=int, default=3)
    sp.add_argument("--frames", type=int, default=25)
    sp.add_argument("--scene-radius", type=float, default=1.0)
    sp.add_argument("--out", required=True, help="output trajectory file")
    sp.add_argument("--seed", type=int, default=None, help="draw key cameras at random")
    sp.add_argument("--threads", type=int, default=None)
    sp.set_defaults(func=cmd_trajectory)

    sp = sub.add_parser("edit", help="run the single-pass editing pipeline")
    sp.add_argument("--scene", required=True)
    sp.add_argument("--trajectory", required=True)
    sp.add_argument("--masks", help="directory with mask_XXX.png per view")
    common(sp)
    sp.set_defaults(func=cmd_edit)

    sp = sub.add_parser("sweep", help="eta sweep: pose proxy and appearance distance")
    sp.add_argument("--scene", required=True)
    sp.add_argument("--trajectory", required=True)
    sp.add_argument("--etas", default="0,0.25,0.5,0.75,1")
    sp.add_argument("--seeds", default="0,1,2")
    common(sp)
    sp.set_defaults(func=cmd_sweep)

    sp = sub.add_parser("eval", help="TransErr between pose files, optional reprojection consistency")
    sp.add_argument("--gt", required=True)
    sp.add_argument("--est", required=True)
    sp.add_argument("--frames", help="render output directory (manifest.json) scored under --gt cameras")
    sp.add_argument("--tau", type=float, default=0.5)
    sp.add_argument("--out")
    sp.add_argument("--seed", type=int, default=None)
    sp.add_argument("--threads", type=int, default=None)
    sp.set_defaults(func=cmd_eval)

    sp = sub.add_parser("demo", help="seeded cube scene, 25-view arc, recolor edit end to end")
    sp.add_argument("--frames", type=int, default=25)
    common(sp)
    sp.set_defaults(func=cmd_demo)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except UsageError as err:
        print(f"vip3de {args.command}: {err}", file=sys.stderr)
        return 2
    except Exception as err:  # noqa: BLE001 - top-level runtime failure
        log.debug("runtime failure", exc_info=True)
        print(f"vip3de {args.command}: {err}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
