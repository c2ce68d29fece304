"""Command-line entry point: ``synth``, ``run``, ``eval`` and ``version``.

Exit status is 0 on success, 1 for invalid input or usage, 2 when an
external backend fails.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import __version__, synthgen, videoio
from .config import load_config
from .errors import BackendFailure, PlateshotError, StageError, ValidationError
from .evalkit import evaluate
from .pipeline import load_plates, run, write_outputs

EXIT_OK, EXIT_INVALID, EXIT_BACKEND = 0, 1, 2


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_INVALID, f"{self.prog}: error: {message}\n")


def _dims(text):
    try:
        w, h = (int(v) for v in text.lower().split("x"))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected WxH, got {text!r}") from None
    if w <= 0 or h <= 0:
        raise argparse.ArgumentTypeError("dimensions must be positive")
    return w, h


def _motion(text):
    kind, _, args = text.partition(":")
    try:
        vals = [float(v) for v in args.split(",")] if args else []
        if kind == "linear":
            return synthgen.Linear(*vals)
        if kind == "sinusoidal":
            return synthgen.Sinusoidal(*vals)
    except (TypeError, ValueError):
        pass
    raise argparse.ArgumentTypeError(f"expected linear:VX,VY or sinusoidal:AMP,PERIOD, got {text!r}")


def _background(text):
    kind, _, arg = text.partition(":")
    if kind == "uniform" and not arg:
        return synthgen.Uniform()
    if kind == "clutter":
        try:
            return synthgen.Clutter(int(arg) if arg else 4)
        except ValueError:
            pass
    raise argparse.ArgumentTypeError(f"expected uniform or clutter[:N], got {text!r}")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="plateshot", description="One-shot plate tracking and recognition.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("synth", help="generate a synthetic plate video with ground truth")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--frames", type=int, default=30)
    p.add_argument("--dims", type=_dims, default=(384, 288), help="frame size WxH")
    p.add_argument("--plate-dims", type=_dims, default=(120, 40), help="plate size WxH")
    p.add_argument("--string", default="ABC1234", help="plate text")
    p.add_argument("--motion", type=_motion, default=synthgen.Linear(),
                   help="linear:VX,VY or sinusoidal:AMP,PERIOD (default linear:2,0)")
    p.add_argument("--noise", type=float, default=0.0, help="Gaussian noise sigma")
    p.add_argument("--background", type=_background, default=synthgen.Uniform(),
                   help="uniform or clutter[:N]")
    p.add_argument("--out", required=True, type=Path)

    p = sub.add_parser("run", help="track, segment and read the plate in a frame directory")
    p.add_argument("--frames", required=True, type=Path, help="directory of frame_NNNNN.ppm")
    p.add_argument("--annotations", required=True, type=Path, help="query-point JSON file")
    p.add_argument("--config", type=Path, help="key = value config file (default $ONESHOT_CONFIG)")
    p.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                   help="override one config key; repeatable")
    p.add_argument("--out", required=True, type=Path)
    p.add_argument("--dump-masks", type=Path, metavar="DIR")
    p.add_argument("--dump-patches", type=Path, metavar="DIR")

    p = sub.add_parser("eval", help="score detections and plates against ground truth")
    p.add_argument("--pred", required=True, type=Path,
                   help="detections.jsonl, or a run output directory")
    p.add_argument("--truth", required=True, type=Path, help="ground-truth JSON lines")
    p.add_argument("--iou", type=float, default=0.5)
    p.add_argument("--min-chars", type=int, default=7)
    p.add_argument("--ap-method", choices=("all", "11"), default="all")
    p.add_argument("--report", type=Path, help="write the JSON report here "
                   "(default: eval.json inside --pred when it is a directory)")

    sub.add_parser("version", help="print the package version")
    return parser


def cmd_synth(args):
    cfg = synthgen.SceneConfig(seed=args.seed, frames=args.frames, frame_dims=args.dims,
                               plate_string=args.string, plate_dims=args.plate_dims,
                               motion=args.motion, noise_sigma=args.noise,
                               background=args.background)
    paths = synthgen.write_scene(synthgen.generate_scene(cfg), args.out)
    for name, path in paths.items():
        print(f"{name}: {path}")


def cmd_run(args):
    cfg = load_config(args.config, args.overrides)
    video = videoio.load_sequence(args.frames)
    anns = videoio.load_annotations(args.annotations, video)
    out = run(video, anns, cfg, keep_patches=args.dump_patches is not None)
    write_outputs(out, args.out, args.dump_masks, args.dump_patches)
    for inst, plate in sorted(out.final_plates.items()):
        print(f"instance {inst}: {plate}")
    print(f"{len(out.detections)} detections written to {args.out}")


def cmd_eval(args):
    pred = args.pred
    plates = None
    if pred.is_dir():
        det_path = pred / "detections.jsonl"
        if (pred / "plates.json").exists():
            plates = load_plates(pred / "plates.json")
    else:
        det_path = pred
    dets = videoio.load_detections(det_path)
    gts = videoio.load_ground_truth(args.truth)
    report = evaluate(dets, gts, plates, args.iou, args.min_chars, args.ap_method)
    print(report.format_table())
    report_path = args.report or (pred / "eval.json" if pred.is_dir() else None)
    if report_path is not None:
        report_path.write_text(report.to_json() + "\n", encoding="utf-8")


def _exit_code(exc):
    if isinstance(exc, StageError):
        exc = exc.cause
    return EXIT_BACKEND if isinstance(exc, BackendFailure) else EXIT_INVALID


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.command == "version":
        print(f"plateshot {__version__}")
        return EXIT_OK
    handler = {"synth": cmd_synth, "run": cmd_run, "eval": cmd_eval}[args.command]
    try:
        handler(args)
    except PlateshotError as exc:
        print(f"plateshot {args.command}: {exc}", file=sys.stderr)
        return _exit_code(exc)
    except OSError as exc:
        print(f"plateshot {args.command}: {exc}", file=sys.stderr)
        return EXIT_INVALID
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
