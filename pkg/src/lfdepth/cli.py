"""Command-line entry point: synthesize scenes, augment them, train,
infer, evaluate, and run the gradient self-check.

Every command that produces artifacts also writes a JSON run manifest
recording the resolved configuration, seed, content hashes of its
inputs, and per-phase timings, so a run can be reproduced or audited
later.  Exit codes: 0 success, 1 runtime or data error, 2 usage.
"""

import argparse
import hashlib
import json
import sys
import time
from pathlib import Path

import numpy as np

from . import augment, io, metrics, sampler, synth
from .exceptions import ConfigError, DataError, LfError
from .lightfield import LightField, to_gray
from .model import (NetConfig, build, infer_ensemble, infer_full, load_model,
                    save_model, train_model)

_CONFIG_DEFAULTS = {
    "angular_extent": 3,
    "patch_size": 23,
    "stream_width": 70,
    "merge_width": 280,
    "lr": 1e-5,
    "batch": 16,
    "iters": 5000,
    "seed": 0,
    "disparity_range": 4.0,
}


# ---------------------------------------------------------------------------
# manifests

def _hash_file(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for block in iter(lambda: f.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


def content_hash(path) -> str:
    """sha256 of a file, or of the sorted (name, file-hash) listing of a
    directory tree."""
    path = Path(path)
    if path.is_file():
        return _hash_file(path)
    lines = []
    for p in sorted(path.rglob("*")):
        if p.is_file():
            lines.append(f"{p.relative_to(path)} {_hash_file(p)}")
    h = hashlib.sha256("\n".join(lines).encode())
    return h.hexdigest()


def write_manifest(path, command: str, config: dict, seed, inputs: dict,
                   outputs: list, timings: dict) -> None:
    manifest = {
        "command": command,
        "config": config,
        "seed": seed,
        "inputs": {str(k): content_hash(v) for k, v in inputs.items()},
        "outputs": [str(o) for o in outputs],
        "timings_s": {k: round(v, 3) for k, v in timings.items()},
    }
    with open(path, "w") as f:
        json.dump(manifest, f, indent=2, sort_keys=True)
        f.write("\n")


def _resolve_config(args) -> dict:
    """defaults < config file < explicit CLI flags."""
    cfg = dict(_CONFIG_DEFAULTS)
    if getattr(args, "config", None):
        cfg.update(io.read_config(args.config))
    for key in _CONFIG_DEFAULTS:
        val = getattr(args, key, None)
        if val is not None:
            cfg[key] = val
    return cfg


def _net_config(cfg: dict) -> NetConfig:
    if cfg["patch_size"] != 23:
        raise ConfigError(
            f"patch_size must be 23 for this architecture, got {cfg['patch_size']}")
    if cfg["merge_width"] % cfg["stream_width"]:
        raise ConfigError(
            f"merge_width {cfg['merge_width']} not a multiple of "
            f"stream_width {cfg['stream_width']}")
    return NetConfig(
        n_streams=cfg["merge_width"] // cfg["stream_width"],
        views_per_stack=2 * cfg["angular_extent"] + 1,
        stream_width=cfg["stream_width"],
        merge_width=cfg["merge_width"],
        disparity_range=cfg["disparity_range"],
    )


# ---------------------------------------------------------------------------
# subcommands

def cmd_synth(args) -> int:
    cfg = _resolve_config(args)
    t0 = time.perf_counter()
    scene = synth.preset_scene(args.preset, args.size, args.size,
                               seed=cfg["seed"])
    lf, gt, occ = synth.render(scene, cfg["angular_extent"], args.size, args.size)
    t_render = time.perf_counter() - t0
    out = Path(args.out)
    t0 = time.perf_counter()
    io.write_scene(out, lf, gt=gt, mask=occ, bit_depth=args.bit_depth)
    t_write = time.perf_counter() - t0
    write_manifest(out / "manifest.json", "synth",
                   {**cfg, "preset": args.preset, "size": args.size,
                    "bit_depth": args.bit_depth},
                   cfg["seed"], {}, [out],
                   {"render": t_render, "write": t_write})
    print(f"wrote {args.preset} scene to {out}: "
          f"{(2 * cfg['angular_extent'] + 1) ** 2} views, {args.size}x{args.size}, "
          f"occluded px {int(occ.sum())}")
    return 0


def _transform_mask(mask, spec):
    # same op order as apply_augmentation; a scaled block is excluded if
    # any source pixel in it was
    m = np.asarray(mask, dtype=bool)
    if spec.rotation:
        m = np.rot90(m, k=-spec.rotation // 90)
    if spec.flip:
        m = m[:, ::-1]
    if spec.transpose:
        m = m.T
    if spec.scale != 1:
        f = spec.scale
        h, w = (m.shape[0] // f) * f, (m.shape[1] // f) * f
        y0, x0 = (m.shape[0] - h) // 2, (m.shape[1] - w) // 2
        m = m[y0:y0 + h, x0:x0 + w]
        m = m.reshape(h // f, f, w // f, f).any(axis=(1, 3))
    return np.ascontiguousarray(m)


def cmd_augment(args) -> int:
    spec = augment.AugmentationSpec(
        view_shift=(args.shift_u, args.shift_v),
        n_dst=args.n_dst,
        rotation=args.rotation,
        flip=args.flip,
        transpose=args.transpose,
        scale=args.scale,
        color_gain=args.gain,
        gray_mix=args.gray_mix,
        gamma=args.gamma,
    )
    t0 = time.perf_counter()
    lf, gt, mask = io.load_scene(args.in_dir)
    if gt is None:
        raise DataError(f"{args.in_dir}: augmentation needs gt disparity")
    t_load = time.perf_counter() - t0

    gt_provider = None
    if args.gt_shifted:
        from .lightfield import DisparityMap
        shifted = DisparityMap(io.read_pfm(args.gt_shifted),
                               disparity_range=None)

        def gt_provider(du, dv):
            return shifted

    t0 = time.perf_counter()
    lf2, gt2 = augment.apply_augmentation(lf, gt, spec, gt_provider=gt_provider)
    mask2 = _transform_mask(mask, spec) if mask is not None else None
    t_apply = time.perf_counter() - t0

    out = Path(args.out)
    t0 = time.perf_counter()
    io.write_scene(out, lf2, gt=gt2, mask=mask2, bit_depth=args.bit_depth)
    t_write = time.perf_counter() - t0
    inputs = {"scene": args.in_dir}
    if args.gt_shifted:
        inputs["gt_shifted"] = args.gt_shifted
    write_manifest(out / "manifest.json", "augment",
                   {"spec": {k: getattr(spec, k) for k in (
                       "view_shift", "n_dst", "rotation", "flip", "transpose",
                       "scale", "color_gain", "gray_mix", "gamma")},
                    "bit_depth": args.bit_depth},
                   None, inputs, [out],
                   {"load": t_load, "apply": t_apply, "write": t_write})
    print(f"augmented {args.in_dir} -> {out}")

    if args.validate:
        check_lf, check_gt, check_mask = io.load_scene(out)
        res = augment.roundtrip_residual(check_lf, check_gt, exclude=check_mask)
        ok = res <= args.tol
        print(f"round-trip residual {res:.3e} "
              f"({'<=' if ok else '>'} tol {args.tol:.0e})")
        if not ok:
            return 1
    return 0


def cmd_train(args) -> int:
    cfg = _resolve_config(args)
    net_cfg = _net_config(cfg)
    t0 = time.perf_counter()
    entries = []
    for d in args.data:
        lf, gt, mask = io.load_scene(d)
        if gt is None:
            raise DataError(f"{d}: training needs gt disparity")
        entries.append((lf, gt, mask, Path(d).name))
    t_load = time.perf_counter() - t0

    t0 = time.perf_counter()
    samples = sampler.sample_dataset(entries, args.patches, seed=cfg["seed"],
                                     patch=cfg["patch_size"])
    stacks, targets = sampler.collate(samples)
    t_sample = time.perf_counter() - t0

    t0 = time.perf_counter()
    net = build(net_cfg, seed=cfg["seed"])
    curve = train_model(net, stacks, targets, iters=cfg["iters"],
                        batch_size=cfg["batch"], lr=cfg["lr"], seed=cfg["seed"])
    t_train = time.perf_counter() - t0

    out = Path(args.out)
    save_model(net, out)
    curve_path = out.with_suffix(out.suffix + ".curve.csv")
    with open(curve_path, "w") as f:
        f.write("iteration,loss\n")
        for it, loss in curve:
            f.write(f"{it},{loss!r}\n")
    write_manifest(out.with_suffix(out.suffix + ".manifest.json"), "train",
                   {**cfg, "patches": args.patches},
                   cfg["seed"], {d: d for d in args.data}, [out, curve_path],
                   {"load": t_load, "sample": t_sample, "train": t_train})
    print(f"trained {cfg['iters']} iterations on {len(stacks)} patches, "
          f"final loss {curve[-1][1]:.4f}, params -> {out}")
    return 0


def cmd_infer(args) -> int:
    t0 = time.perf_counter()
    net = load_model(args.model)
    lf, _, _ = io.load_scene(args.scene)
    t_load = time.perf_counter() - t0

    t0 = time.perf_counter()
    if args.ensemble:
        result = infer_ensemble(net, lf, pad=args.pad,
                                deterministic=args.deterministic)
        disp, extra = result.disparity, {"ensemble": True}
    else:
        result = infer_full(net, lf, pad=args.pad,
                            deterministic=args.deterministic)
        disp = result.disparity
        extra = {"ensemble": False, "border": result.border, "mode": result.mode}
    t_infer = time.perf_counter() - t0

    out = Path(args.out)
    io.write_pfm(disp.data, out)
    write_manifest(out.with_suffix(out.suffix + ".manifest.json"), "infer",
                   {"pad": args.pad, "deterministic": args.deterministic, **extra},
                   None, {"model": args.model, "scene": args.scene}, [out],
                   {"load": t_load, "infer": t_infer})
    print(f"disparity {disp.data.shape[1]}x{disp.data.shape[0]} -> {out}")
    return 0


def cmd_eval(args) -> int:
    pred = io.read_pfm(args.pred)
    gt = io.read_pfm(args.gt)
    mask = io.read_mask(args.mask) if args.mask else None
    # crop-mode predictions are smaller; align gt (and mask) by center crop
    if pred.shape != gt.shape:
        gt = metrics.center_crop(gt, pred.shape)
        if mask is not None:
            mask = metrics.center_crop(mask, pred.shape)
    eval_mask = None if mask is None else ~mask
    row = metrics.evaluate(pred, gt, eval_mask)
    header = ",".join(row)
    values = ",".join(f"{v:.6f}" for v in row.values())
    print(header)
    print(values)
    outputs = []
    if args.out:
        with open(args.out, "w") as f:
            f.write(header + "\n" + values + "\n")
        outputs.append(args.out)
    if args.report:
        emap = metrics.error_map(pred, gt)
        if mask is not None:
            emap = np.where(mask, 1.0, emap)
        io.write_image(args.report, emap, bit_depth=8)
        outputs.append(args.report)
    if outputs:
        inputs = {"pred": args.pred, "gt": args.gt}
        if args.mask:
            inputs["mask"] = args.mask
        ref = Path(outputs[0])
        write_manifest(ref.with_suffix(ref.suffix + ".manifest.json"), "eval",
                       {"thresholds": list(metrics.BADPIX_THRESHOLDS)},
                       None, inputs, outputs, {})
    return 0


def cmd_gradcheck(args) -> int:
    from .nn import run_suite
    report = run_suite(seed=args.seed if args.seed is not None else 0)
    for name, layer in sorted(report["layers"].items()):
        print(f"  {name}: max rel err {layer['max_rel_err']:.3e} "
              f"(tol {layer['tol']:g}, {layer['configs']} configs)")
    print(f"gradient check: {report['configs']} configs, "
          f"max rel err {report['max_rel_err']:.3e}, "
          f"{report['elapsed_s']:.2f}s")
    return 0 if report["ok"] else 1


# ---------------------------------------------------------------------------
# argument parsing

def _add_config_flags(p):
    p.add_argument("--config", help="key = value config file")
    p.add_argument("--angular-extent", dest="angular_extent", type=int)
    p.add_argument("--patch-size", dest="patch_size", type=int)
    p.add_argument("--stream-width", dest="stream_width", type=int)
    p.add_argument("--merge-width", dest="merge_width", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--batch", type=int)
    p.add_argument("--iters", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--disparity-range", dest="disparity_range", type=float)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="lfdepth",
        description="Light-field depth estimation: synthesis, augmentation, "
                    "training, inference, evaluation.")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="render a synthetic scene to a directory")
    p.add_argument("--preset", required=True,
                   choices=("flat0", "slant", "occluder", "noisy"))
    p.add_argument("--out", required=True)
    p.add_argument("--size", type=int, default=64)
    p.add_argument("--bit-depth", type=int, default=16, choices=(8, 16))
    _add_config_flags(p)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("augment", help="apply one augmentation to a scene")
    p.add_argument("--in", dest="in_dir", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--shift-u", type=int, default=0)
    p.add_argument("--shift-v", type=int, default=0)
    p.add_argument("--n-dst", type=int, default=None,
                   help="target angular extent after a view shift")
    p.add_argument("--gt-shifted",
                   help="PFM with gt for the shifted center (required for "
                        "nonzero shifts)")
    p.add_argument("--rotation", type=int, default=0,
                   choices=(0, 90, 180, 270))
    p.add_argument("--flip", action="store_true")
    p.add_argument("--transpose", action="store_true")
    p.add_argument("--scale", type=int, default=1, choices=(1, 2, 3, 4))
    p.add_argument("--gain", type=float, default=1.0)
    p.add_argument("--gray-mix", type=float, default=0.0)
    p.add_argument("--gamma", type=float, default=1.0)
    p.add_argument("--bit-depth", type=int, default=16, choices=(8, 16))
    p.add_argument("--validate", action="store_true",
                   help="check the written scene's round-trip residual")
    p.add_argument("--tol", type=float, default=1e-3)
    p.set_defaults(func=cmd_augment)

    p = sub.add_parser("train", help="train on scene directories with gt")
    p.add_argument("--data", nargs="+", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--patches", type=int, default=2000)
    _add_config_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("infer", help="predict disparity for a scene")
    p.add_argument("--model", required=True)
    p.add_argument("--scene", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--pad", choices=("crop", "reflect"), default="crop")
    p.add_argument("--ensemble", action="store_true",
                   help="average 8 orientation variants")
    p.add_argument("--deterministic", action="store_true",
                   help="fixed-order accumulation (bitwise reproducible)")
    p.set_defaults(func=cmd_infer)

    p = sub.add_parser("eval", help="compare a prediction against gt")
    p.add_argument("--pred", required=True)
    p.add_argument("--gt", required=True)
    p.add_argument("--mask", help="exclusion mask PNG (nonzero = excluded)")
    p.add_argument("--out", help="also write the CSV row here")
    p.add_argument("--report", help="write an error-map PNG (white = low)")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("gradcheck", help="finite-difference gradient suite")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_gradcheck)

    return ap


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    try:
        return args.func(args)
    except LfError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    except OSError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
