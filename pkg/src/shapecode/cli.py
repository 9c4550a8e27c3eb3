"""Command line entry point: one subcommand per pipeline stage."""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

from . import pipeline
from .synthetic import generate_dataset

STAGES = {
    "render": pipeline.cmd_render,
    "pretrain": pipeline.cmd_pretrain,
    "finetune": pipeline.cmd_finetune,
    "encode": pipeline.cmd_encode,
    "bof": pipeline.cmd_bof,
    "distances": pipeline.cmd_distances,
    "fuse": pipeline.cmd_fuse,
    "evaluate": pipeline.cmd_evaluate,
}


def _common(parser):
    parser.add_argument("--config", help="key = value configuration file")
    parser.add_argument("--seed", type=int)
    parser.add_argument("--force", action="store_true", help="recompute even if outputs exist")
    parser.add_argument("--out", help="output directory")
    parser.add_argument("--dataset", help="directory of .off/.obj meshes (or one with meshes/)")
    parser.add_argument("--labels", help="PSB .cla class file")
    parser.add_argument("--layers", help="layer sizes, e.g. 1024-200-50-10, or 'psb' / 'esb'")
    parser.add_argument("--resolution", type=int)
    parser.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        help="override any configuration key (repeatable)")
    parser.add_argument("-v", "--verbose", action="store_true")


def build_parser():
    parser = argparse.ArgumentParser(
        prog="shapecode", description="View-based 3D shape retrieval with deep autoencoders.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, func in STAGES.items():
        _common(sub.add_parser(name, help=(func.__doc__ or "").strip().split("\n")[0] or None))
    run = sub.add_parser("run", help="all stages in order")
    _common(run)
    run.add_argument("--no-bof", action="store_true", help="skip the local-feature channel")

    retrieve = sub.add_parser("retrieve", help="print the ranked list for one query")
    _common(retrieve)
    retrieve.add_argument("query", help="model id of the query")
    retrieve.add_argument("-k", "--top", type=int, default=10)
    retrieve.add_argument("--channel", choices=pipeline.CHANNELS)

    synth = sub.add_parser("synthetic", help="generate the procedural benchmark dataset")
    synth.add_argument("--out", required=True)
    synth.add_argument("--seed", type=int, default=0)
    synth.add_argument("--per-class", type=int, default=10)
    synth.add_argument("--force", action="store_true")
    synth.add_argument("-v", "--verbose", action="store_true")
    return parser


def config_from_args(args):
    overrides = {"seed": args.seed, "out": args.out, "dataset": args.dataset,
                 "labels": args.labels, "layers": args.layers, "resolution": args.resolution}
    for item in args.set:
        if "=" not in item:
            raise ValueError(f"--set expects KEY=VALUE, got {item!r}")
        key, value = item.split("=", 1)
        overrides[key.strip()] = value.strip()
    return pipeline.load_config(args.config, **overrides)


def _summary(command, result, cfg):
    if command == "render":
        return f"rendered view sets for {len(result)} models into {cfg.path('views')}"
    if command == "pretrain":
        return f"pretrained {'-'.join(map(str, result.sizes))} into {cfg.path('dbn')}"
    if command == "finetune":
        return f"fine-tuned autoencoder, final rmse {result.rmse_curve[-1]:.6f}"
    if command == "encode":
        n, v, c = result.shape
        return f"encoded {n} models x {v} views into {c}-D codes"
    if command == "bof":
        return f"built {result.shape[1]}-word histograms for {result.shape[0]} models"
    if command == "distances":
        return "computed " + ", ".join(f"{k} ({len(v)}x{len(v)})" for k, v in result.items())
    if command == "fuse":
        return f"fused distances ({len(result)}x{len(result)})"
    return None


def run_synthetic(args):
    cla = os.path.join(args.out, "classes.cla")
    if os.path.exists(cla) and not args.force:
        print(f"{args.out} already holds a dataset; use --force to regenerate")
        return 0
    labels = generate_dataset(args.out, args.per_class, args.seed)
    cfg = pipeline.synthetic_config(args.out, os.path.join(args.out, "run"), args.seed)
    with open(os.path.join(args.out, "pipeline.cfg"), "w", encoding="utf-8") as fh:
        fh.write(cfg.to_text())
    print(f"wrote {len(labels)} meshes, {cla} and {os.path.join(args.out, 'pipeline.cfg')}")
    return 0


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        if args.command == "synthetic":
            return run_synthetic(args)
        cfg = config_from_args(args)
        os.makedirs(cfg.out, exist_ok=True)
        if args.command == "retrieve":
            for rank, (model_id, dist) in enumerate(
                    pipeline.cmd_retrieve(cfg, args.query, args.top, args.channel), start=1):
                print(f"{rank:4d}  {model_id}  {dist:.6f}")
        elif args.command == "run":
            reports = pipeline.run_all(cfg, args.force, with_bof=not args.no_bof)
            if reports:
                print(Path(cfg.path("report.txt")).read_text(encoding="utf-8"), end="")
        elif args.command == "evaluate":
            pipeline.cmd_evaluate(cfg, args.force)
            print(Path(cfg.path("report.txt")).read_text(encoding="utf-8"), end="")
        else:
            result = STAGES[args.command](cfg, args.force)
            msg = _summary(args.command, result, cfg)
            if msg:
                print(msg)
    except Exception as exc:  # noqa: BLE001 - every failure becomes one error line
        print(json.dumps({"error": type(exc).__name__, "message": str(exc),
                          "command": args.command}), file=sys.stderr)
        if getattr(args, "verbose", False):
            logging.exception("command failed")
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
