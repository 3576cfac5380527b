"""``camoadapt`` command line: synth, train, eval, infer, gradcheck.

Exit codes: 0 success, 1 usage or config error, 2 data/checkpoint error
(including an aborted training run), 3 gradient check failure.
"""
from __future__ import annotations

import argparse
import os
import sys
import warnings

from . import gradcheck
from .checkpoint import CheckpointError
from .config import Config, ConfigError, parse_config
from .netpbm import NetpbmError
from .pipeline import STREAM_CHOICES, DataError, TrainingError, resolve_data, run_eval, run_infer, run_train, \
    synth_dataset
from .prompting import Box

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_GRADCHECK = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _common(p: argparse.ArgumentParser):
    p.add_argument("--config", help="config file of 'key = value' lines")
    p.add_argument("--seed", type=int, help="override the config seed")
    p.add_argument("--out", help="output directory (train/eval/synth) or mask path (infer)")
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                   help="override any config key, e.g. --set kd=off (repeatable)")
    p.add_argument("--lambda", dest="lam", type=float, help="supervision weight in the total loss")
    p.add_argument("--w-rgb", type=float, help="fusion weight of the rgb map")
    p.add_argument("--w-depth", type=float, help="fusion weight of the depth map")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="camoadapt", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("synth", help="write a synthetic RGB-D dataset")
    _common(p)
    p.add_argument("--synth", type=int, required=True, metavar="N", help="number of scenes")

    p = sub.add_parser("train", help="train and write loss.csv plus init/final checkpoints")
    _common(p)
    p.add_argument("--data", help="dataset directory (default: config data_dir)")
    p.add_argument("--synth", type=int, metavar="N", help="generate N scenes into <out>/data first")

    p = sub.add_parser("eval", help="score a checkpoint and write metrics.csv")
    _common(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", help="dataset directory (default: config data_dir)")
    p.add_argument("--synth", type=int, metavar="N", help="evaluate on N fresh scenes written to <out>/data")
    p.add_argument("--stream", choices=STREAM_CHOICES, default="fused")
    p.add_argument("--workers", type=int, default=1)

    p = sub.add_parser("infer", help="write the fused mask of one image pair as P5")
    _common(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--rgb", required=True, help="P6 input")
    p.add_argument("--depth", help="P5 depth input")
    p.add_argument("--box", help="prompt box x0,y0,x1,y1 (default: whole frame)")
    p.add_argument("--soft", action="store_true", help="also write both soft maps")

    p = sub.add_parser("gradcheck", help="finite-difference check of every composite")
    p.add_argument("--seed", type=int, default=0)
    return parser


def _config(args) -> Config:
    text = ""
    if args.config:
        with open(args.config) as fh:
            text = fh.read()
    text += "".join(f"{kv}\n" for kv in args.set)
    for kv in args.set:
        if "=" not in kv:
            raise ConfigError(f"--set expects KEY=VALUE, got {kv!r}")
    return parse_config(text, seed=args.seed, lam=args.lam, w_rgb=args.w_rgb, w_depth=args.w_depth)


def _parse_box(text: str) -> Box:
    try:
        x0, y0, x1, y1 = (int(v) for v in text.split(","))
    except ValueError:
        raise UsageError(f"--box expects x0,y0,x1,y1 integers, got {text!r}") from None
    return Box(x0, y0, x1, y1)


def _cmd_synth(args, cfg: Config):
    out = args.out or cfg.data_dir
    synth_dataset(cfg, args.synth, out)
    print(f"wrote {args.synth} scenes to {out}")


def _cmd_train(args, cfg: Config):
    out = args.out or cfg.out_dir
    if args.synth:
        samples = synth_dataset(cfg, args.synth, os.path.join(out, "data"))
    else:
        samples = resolve_data(args.data or cfg.data_dir)
    res = run_train(cfg, samples, out_dir=out, log=print)
    print(f"trained {len(res.losses)} steps; final L={res.losses[-1][0]:.4f}; checkpoints in {out}"
          if res.losses else f"no steps run; checkpoints in {out}")


def _cmd_eval(args, cfg: Config):
    out = args.out or cfg.out_dir
    if args.synth:
        samples = synth_dataset(cfg, args.synth, os.path.join(out, "data"))
    else:
        samples = resolve_data(args.data or cfg.data_dir)
    run_eval(cfg, args.checkpoint, samples, out_dir=out, stream=args.stream, workers=args.workers)


def _cmd_infer(args, cfg: Config):
    if not args.out:
        raise UsageError("infer needs --out <mask.pgm>")
    box = _parse_box(args.box) if args.box else None
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        run_infer(cfg, args.checkpoint, args.rgb, args.depth, args.out, box=box, soft=args.soft)
    for w in caught:
        print(f"warning: {w.message}", file=sys.stderr)
    print(f"wrote {args.out}")


def _cmd_gradcheck(args) -> int:
    results = gradcheck.run_all(args.seed)
    print(gradcheck.format_results(results))
    return EXIT_OK if all(r.passed for r in results) else EXIT_GRADCHECK


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command == "gradcheck":
            return _cmd_gradcheck(args)
        cfg = _config(args)
        {"synth": _cmd_synth, "train": _cmd_train, "eval": _cmd_eval, "infer": _cmd_infer}[args.command](args, cfg)
        return EXIT_OK
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        parser.print_usage(sys.stderr)
        return EXIT_USAGE
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, CheckpointError, NetpbmError, TrainingError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
