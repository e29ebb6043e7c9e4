"""Command-line entry points.

Exit codes: 0 success, 1 runtime failure, 2 usage error. All randomness is
governed by --seed, so identical invocations write identical outputs
(benchmark timings excepted).
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from pathlib import Path

import numpy as np
import torch

from . import __version__
from .bench import bench_runtime
from .config import desk_config, large_config
from .data import (MotionSpec, SyntheticDataset, gen_synthetic_sample, load_image,
                   sample_septuplet_timestep, save_image)
from .errors import ConfigurationError
from .metrics import interpolation_error, psnr, ssim
from .pipeline import (InterpOptions, interpolate, interpolate_multi,
                       interpolate_representation, load_model, panoramic_synthesize,
                       scale_2r, to_numpy, to_tensor)
from .train import TrainConfig, evaluate, train
from .viz import flow_to_color


def _add_common_model_flags(p):
    p.add_argument("--ckpt", required=True, help="checkpoint file (.rifc)")
    p.add_argument("--tta", action="store_true", help="flip-averaged test-time augmentation")
    p.add_argument("--2r", dest="scale_2r", action="store_true",
                   help="double internal processing resolution")
    p.add_argument("--no-refine", dest="refine", action="store_false",
                   help="skip the refinement residual")


def _options(args) -> InterpOptions:
    return InterpOptions(tta=getattr(args, "tta", False),
                         scale_2r=getattr(args, "scale_2r", False),
                         refine=getattr(args, "refine", True))


def _load_model(args):
    model = load_model(args.ckpt)
    if getattr(args, "scale_2r", False):
        model.config = scale_2r(model.config)
        model.ifnet.cfg = model.config.ifnet
        model.refine.cfg = model.config.refine
    return model


def _load_pair(args):
    return to_tensor(load_image(args.i0)), to_tensor(load_image(args.i1))


def _apply_config_overrides(cfg: TrainConfig, pairs: list[str]) -> TrainConfig:
    fields = {f.name: f.type for f in dataclasses.fields(TrainConfig)}
    for pair in pairs:
        if "=" not in pair:
            raise ConfigurationError(f"--config expects key=value, got {pair!r}")
        key, value = pair.split("=", 1)
        if key not in fields:
            raise ConfigurationError(f"unknown config key {key!r}")
        current = getattr(cfg, key)
        if isinstance(current, bool):
            parsed = value.lower() in ("1", "true", "yes", "on")
        elif isinstance(current, int):
            parsed = int(value)
        elif isinstance(current, float):
            parsed = float(value)
        else:
            parsed = value
        setattr(cfg, key, parsed)
    return cfg


# ---------------------------------------------------------------------------
# subcommands


def cmd_train(args) -> int:
    cfg = TrainConfig(seed=args.seed)
    cfg = _apply_config_overrides(cfg, args.config or [])
    result = train(cfg, args.out, quiet=args.quiet)
    print(f"baseline (frame average): {result.baseline_psnr:.3f} dB")
    print(f"final val PSNR: {result.final_psnr:.3f} dB  (best {result.best_psnr:.3f})")
    print(f"final val flow EPE: {result.final_epe:.3f} px")
    print(f"wall time: {result.duration_s:.1f} s")
    print(f"checkpoints: {result.checkpoint} {result.best_checkpoint} {result.train_checkpoint}")
    return 0


def cmd_interp(args) -> int:
    model = _load_model(args)
    i0, i1 = _load_pair(args)
    out = interpolate(model, i0, i1, args.t, _options(args))
    img = np.clip(to_numpy(out), 0.0, 1.0)
    save_image(args.out, img)
    print(f"wrote {args.out}")
    if args.gt:
        gt = load_image(args.gt)
        print(f"psnr={psnr(img, gt):.3f} dB  ssim={ssim(img, gt):.4f}  "
              f"ie={interpolation_error(img, gt):.3f}")
    return 0


def cmd_multi(args) -> int:
    model = _load_model(args)
    i0, i1 = _load_pair(args)
    frames = interpolate_multi(model, i0, i1, args.factor, args.mode, _options(args))
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    for i, frame in enumerate(frames):
        save_image(out_dir / f"frame_{i:06d}.png", np.clip(to_numpy(frame), 0, 1))
    print(f"wrote {len(frames)} frames to {out_dir}")
    return 0


def cmd_pano(args) -> int:
    model = _load_model(args)
    i0, i1 = _load_pair(args)
    h, w = i0.shape[2], i0.shape[3]
    if args.direction == "lr":
        ramp = torch.linspace(0, 1, w).view(1, 1, 1, w).expand(1, 1, h, w)
    else:
        ramp = torch.linspace(0, 1, h).view(1, 1, h, 1).expand(1, 1, h, w)
    out = panoramic_synthesize(model, i0, i1, ramp.contiguous(), _options(args))
    save_image(args.out, np.clip(to_numpy(out), 0, 1))
    print(f"wrote {args.out}")
    return 0


def cmd_repr(args) -> int:
    model = _load_model(args)
    i0, i1 = _load_pair(args)
    r0 = to_tensor(load_image(args.r0))
    r1 = to_tensor(load_image(args.r1))
    out = interpolate_representation(model, i0, i1, r0, r1, args.t, _options(args))
    save_image(args.out, to_numpy(out))
    print(f"wrote {args.out}")
    return 0


def cmd_eval(args) -> int:
    model = _load_model(args)
    ds = SyntheticDataset(args.count, MotionSpec(size=args.size), args.seed,
                          "val", args.mode)
    stats = evaluate(model, ds)
    print(f"val_psnr={stats['psnr']:.4f} dB  val_epe={stats['epe']:.4f} px  "
          f"({stats['samples']} samples)")
    if args.report:
        with open(args.report, "w") as f:
            f.write(json.dumps(stats) + "\n")
    return 0


def cmd_bench(args) -> int:
    model = _load_model(args)
    resolutions = []
    for token in args.resolutions.split(","):
        w, h = token.lower().split("x")
        resolutions.append((int(w), int(h)))
    report = bench_runtime(model, resolutions, runs=args.runs, opts=_options(args))
    for line in report.lines():
        print(line)
    return 0


def cmd_flowviz(args) -> int:
    model = _load_model(args)
    i0, i1 = _load_pair(args)
    with torch.no_grad():
        state = model.ifnet(i0, i1, args.t)
    sel = slice(0, 2) if args.direction == "to0" else slice(2, 4)
    flow = state.flow[0, sel].permute(1, 2, 0).numpy()
    save_image(args.out, flow_to_color(flow))
    print(f"wrote {args.out}")
    return 0


def cmd_gendata(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    spec = MotionSpec(size=args.size)
    index = []
    for i in range(args.count):
        rng = np.random.default_rng((args.seed, 1, i, 1))
        t = 0.5 if args.mode == "mid" else sample_septuplet_timestep(rng)[3]
        sample = gen_synthetic_sample((args.seed, 1, i, 0), spec, t)
        d = out / f"sample_{i:05d}"
        d.mkdir(exist_ok=True)
        for j, img in enumerate((sample.i0, sample.it, sample.i1)):
            save_image(d / f"frame_{j:06d}.{args.format}", img)
        index.append({"dir": d.name, "t": sample.t})
    with open(out / "index.json", "w") as f:
        json.dump(index, f, indent=1)
    print(f"wrote {args.count} triplets to {out}")
    return 0


# ---------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="interflow",
                                description="frame interpolation toolkit")
    p.add_argument("--version", action="version", version=f"interflow {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    t = sub.add_parser("train", help="train a model on synthetic data")
    t.add_argument("--out", required=True, help="output directory")
    t.add_argument("--seed", type=int, default=0)
    t.add_argument("--config", action="append", metavar="KEY=VALUE",
                   help="override a TrainConfig field (repeatable)")
    t.add_argument("--quiet", action="store_true")
    t.set_defaults(func=cmd_train)

    i = sub.add_parser("interp", help="interpolate one frame")
    _add_common_model_flags(i)
    i.add_argument("--i0", required=True)
    i.add_argument("--i1", required=True)
    i.add_argument("--gt", help="ground-truth frame; prints metrics when given")
    i.add_argument("--t", type=float, default=0.5)
    i.add_argument("--out", required=True)
    i.set_defaults(func=cmd_interp)

    m = sub.add_parser("multi", help="interpolate factor-1 intermediate frames")
    _add_common_model_flags(m)
    m.add_argument("--i0", required=True)
    m.add_argument("--i1", required=True)
    m.add_argument("--factor", type=int, default=4)
    m.add_argument("--mode", choices=("recursive", "direct"), default="recursive")
    m.add_argument("--out", required=True, help="output directory")
    m.set_defaults(func=cmd_multi)

    pa = sub.add_parser("pano", help="synthesize with a gradient timestep map")
    _add_common_model_flags(pa)
    pa.add_argument("--i0", required=True)
    pa.add_argument("--i1", required=True)
    pa.add_argument("--direction", choices=("lr", "tb"), default="lr")
    pa.add_argument("--out", required=True)
    pa.set_defaults(func=cmd_pano)

    r = sub.add_parser("repr", help="interpolate an aligned representation (e.g. depth)")
    _add_common_model_flags(r)
    r.add_argument("--i0", required=True)
    r.add_argument("--i1", required=True)
    r.add_argument("--r0", required=True)
    r.add_argument("--r1", required=True)
    r.add_argument("--t", type=float, default=0.5)
    r.add_argument("--out", required=True)
    r.set_defaults(func=cmd_repr)

    e = sub.add_parser("eval", help="score a checkpoint on the synthetic validation set")
    _add_common_model_flags(e)
    e.add_argument("--count", type=int, default=200)
    e.add_argument("--size", type=int, default=64)
    e.add_argument("--seed", type=int, default=0)
    e.add_argument("--mode", choices=("mid", "arbitrary"), default="mid")
    e.add_argument("--report", help="write aggregate stats to this JSON file")
    e.set_defaults(func=cmd_eval)

    b = sub.add_parser("bench", help="time the pipeline across resolutions")
    _add_common_model_flags(b)
    b.add_argument("--resolutions", default="640x480,1280x720,1920x1080")
    b.add_argument("--runs", type=int, default=10)
    b.set_defaults(func=cmd_bench)

    f = sub.add_parser("flowviz", help="color-wheel image of the estimated flow")
    _add_common_model_flags(f)
    f.add_argument("--i0", required=True)
    f.add_argument("--i1", required=True)
    f.add_argument("--t", type=float, default=0.5)
    f.add_argument("--direction", choices=("to0", "to1"), default="to0")
    f.add_argument("--out", required=True)
    f.set_defaults(func=cmd_flowviz)

    g = sub.add_parser("gendata", help="write synthetic triplets to disk")
    g.add_argument("--out", required=True)
    g.add_argument("--count", type=int, default=16)
    g.add_argument("--size", type=int, default=64)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--mode", choices=("mid", "arbitrary"), default="mid")
    g.add_argument("--format", choices=("png", "ppm", "rifl"), default="png")
    g.set_defaults(func=cmd_gendata)

    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code) if e.code is not None else 0
    try:
        return args.func(args)
    except Exception as e:  # noqa: BLE001 - single reporting point for the CLI
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
