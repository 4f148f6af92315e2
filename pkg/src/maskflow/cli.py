"""Command-line entry point: ``maskflow {track,synth,eval,overlay}``.

Exit codes: 0 success, 1 malformed input or configuration, 2 I/O failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import shutil
import sys
import tempfile
from dataclasses import replace
from pathlib import Path

from . import synth
from .core import AssocConfig
from .dataio import atomic_write, load_frames, read_config, read_tracks, write_tracks
from .errors import TrackingError
from .evalmetrics import evaluate
from .tracker import run_sequence


def _image_size(text):
    try:
        w, h = (int(v) for v in text.lower().split("x"))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected WxH, got {text!r}") from None
    if w <= 0 or h <= 0:
        raise argparse.ArgumentTypeError("image size must be positive")
    return (w, h)


def _require_file(path):
    if not Path(path).is_file():
        raise FileNotFoundError(f"{path}: no such file")


def cmd_track(args) -> int:
    config = read_config(args.config) if args.config else AssocConfig()
    _require_file(args.dets)
    for p in (args.masks, args.embeds):
        if p:
            _require_file(p)
    if args.flow_dir and not Path(args.flow_dir).is_dir():
        raise FileNotFoundError(f"{args.flow_dir}: no such directory")

    off = {}
    missing = []
    if not args.masks and not config.pdf_enabled:
        off.update(pmm_enabled=False, cdm_enabled=False, dbc_enabled=False)
        missing.append("masks")
    if not args.flow_dir:
        off.update(pmm_enabled=False, dbc_enabled=False)
        missing.append("flow")
    if not args.embeds:
        off.update(appearance_enabled=False, careid_enabled=False)
        missing.append("embeddings")
    disabled = sorted(k for k, v in off.items() if getattr(config, k) != v)
    if disabled:
        names = ", ".join(k.replace("_enabled", "") for k in disabled)
        print(f"warning: no {'/'.join(missing)} input; disabled cues: {names}", file=sys.stderr)
        config = replace(config, **off)

    frames = load_frames(args.dets, args.masks, args.flow_dir, args.embeds,
                         image_size=args.image_size)
    records = run_sequence(frames, config)
    write_tracks(records, args.out)
    return 0


def cmd_synth(args) -> int:
    scenes = synth.builtin_scenarios()
    if args.scenario not in scenes:
        print(f"unknown scenario {args.scenario!r}; valid: {', '.join(sorted(scenes))}",
              file=sys.stderr)
        return 1
    spec = replace(scenes[args.scenario], seed=args.seed)
    bundle = synth.generate(spec)
    out = Path(args.out_dir)
    out.parent.mkdir(parents=True, exist_ok=True)
    tmp = Path(tempfile.mkdtemp(dir=out.parent, prefix=f".{out.name}."))
    try:
        manifest = bundle.write(tmp)
        manifest["scenario"] = args.scenario
        (tmp / "scene.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
        out.mkdir(parents=True, exist_ok=True)
        for src in sorted(tmp.rglob("*")):
            if src.is_file():
                dst = out / src.relative_to(tmp)
                dst.parent.mkdir(parents=True, exist_ok=True)
                os.replace(src, dst)
    finally:
        shutil.rmtree(tmp, ignore_errors=True)
    print(json.dumps(manifest, indent=2, sort_keys=True))
    return 0


def cmd_eval(args) -> int:
    _require_file(args.gt)
    _require_file(args.pred)
    gt = read_tracks(args.gt)
    pred = read_tracks(args.pred)
    report = evaluate(gt, pred, args.iou)
    print(report.to_text())
    print(report.to_keyvalue(), end="")
    if args.report:
        atomic_write(args.report, report.to_keyvalue())
    if args.figure:
        from .report import plot_metrics

        plot_metrics({Path(args.pred).stem: report}, args.figure)
    return 0


def cmd_overlay(args) -> int:
    from .report import render_overlay

    _require_file(Path(args.bundle) / "scene.json")
    _require_file(args.tracks)
    paths = render_overlay(args.bundle, args.tracks, args.out_dir)
    print(f"wrote {len(paths)} frames to {args.out_dir}")
    return 0


def build_parser():
    parser = argparse.ArgumentParser(prog="maskflow", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("track", help="associate detections into tracks")
    p.add_argument("--dets", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--masks")
    p.add_argument("--flow-dir")
    p.add_argument("--embeds")
    p.add_argument("--config")
    p.add_argument("--image-size", type=_image_size)
    p.set_defaults(func=cmd_track)

    p = sub.add_parser("synth", help="generate a synthetic scene bundle")
    p.add_argument("--scenario", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("eval", help="score tracks against ground truth")
    p.add_argument("--gt", required=True)
    p.add_argument("--pred", required=True)
    p.add_argument("--iou", type=float, default=0.5)
    p.add_argument("--report", help="write key=value metrics here")
    p.add_argument("--figure", help="write a metrics figure here (png/svg/pdf)")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("overlay", help="render tracks over scene masks as PPM frames")
    p.add_argument("--bundle", required=True)
    p.add_argument("--tracks", required=True)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_overlay)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s: %(message)s", stream=sys.stderr)
    try:
        return args.func(args)
    except (TrackingError, ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
