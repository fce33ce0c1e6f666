"""Command-line interface.

Subcommands: render, segment, lift, refine, evaluate, pipeline, gradcheck,
synth. Flags beat config-file values beat defaults. TOOTHLIFT_LOG sets the
log level (debug/info/warning).
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys

from . import gradcheck as gradcheck_mod
from . import pipeline as pipe
from .config import PipelineConfig, load_config, merge_overrides
from .errors import ToothLiftError
from .mesh import save_labels_json, save_mesh
from .synth import synth_arch, synth_grid


def _setup_logging():
    level_name = os.environ.get("TOOTHLIFT_LOG", "warning").upper()
    level = getattr(logging, level_name, None)
    if not isinstance(level, int):
        level = logging.WARNING
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")


def _add_common(parser, *names):
    flags = {
        "config": lambda: parser.add_argument("--config", help="JSON config file"),
        "out": lambda: parser.add_argument("--out", required=True,
                                           help="output directory"),
        "views": lambda: parser.add_argument("--views", type=int),
        "size": lambda: parser.add_argument("--size", type=int,
                                            help="square image size in pixels"),
        "segmenter": lambda: parser.add_argument(
            "--segmenter", help="oracle | file:<dir> | noisy:<radius>,<rate>,<seed>"),
        "seed": lambda: parser.add_argument("--seed", type=int),
        "jobs": lambda: parser.add_argument("--jobs", type=int),
        "potts": lambda: parser.add_argument("--potts-scale", type=float,
                                             dest="potts_scale"),
        "sweeps": lambda: parser.add_argument("--max-sweeps", type=int,
                                              dest="max_sweeps"),
        "biou": lambda: parser.add_argument(
            "--biou-mode", dest="biou_mode",
            choices=["label-aware", "region-only"]),
        "k": lambda: parser.add_argument("--k", type=int, dest="k_boundary"),
    }
    for name in names:
        flags[name]()


def _config_from_args(args):
    cfg = load_config(args.config) if getattr(args, "config", None) else PipelineConfig()
    overrides = {}
    for key in ("views", "size", "segmenter", "seed", "jobs", "potts_scale",
                "max_sweeps", "biou_mode", "k_boundary"):
        if hasattr(args, key):
            overrides[key] = getattr(args, key)
    return merge_overrides(cfg, **overrides)


def build_parser():
    parser = argparse.ArgumentParser(
        prog="toothlift",
        description="Multi-view dental-mesh segmentation pipeline")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("render", help="rasterize views of a mesh")
    p.add_argument("--mesh", required=True)
    _add_common(p, "config", "out", "views", "size", "seed")

    p = sub.add_parser("segment", help="produce per-view label maps")
    p.add_argument("--mesh", required=True)
    p.add_argument("--labels", help="ground-truth label JSON (oracle/noisy)")
    p.add_argument("--views-dir", required=True,
                   help="directory with render buffers")
    _add_common(p, "config", "out", "views", "size", "segmenter", "seed")

    p = sub.add_parser("lift", help="vote 2D labels onto mesh vertices")
    p.add_argument("--mesh", required=True)
    p.add_argument("--views-dir", required=True)
    p.add_argument("--segs-dir", required=True)
    _add_common(p, "config", "out", "views", "seed")

    p = sub.add_parser("refine", help="graph-cut refinement of voted labels")
    p.add_argument("--mesh", required=True)
    p.add_argument("--votes", required=True)
    p.add_argument("--init", required=True, help="initial label JSON")
    _add_common(p, "config", "out", "potts", "sweeps", "seed")

    p = sub.add_parser("evaluate", help="metric report for predicted labels")
    p.add_argument("--mesh", required=True)
    p.add_argument("--pred", required=True)
    p.add_argument("--gt", required=True)
    p.add_argument("--report", required=True, help="output report JSON path")
    _add_common(p, "config", "biou", "k")

    p = sub.add_parser("pipeline", help="full render->segment->lift->refine->"
                                        "evaluate run")
    p.add_argument("--mesh")
    p.add_argument("--labels")
    p.add_argument("--batch", help="directory of mesh/label pairs")
    _add_common(p, "config", "out", "views", "size", "segmenter", "seed",
                "jobs", "potts", "sweeps", "biou", "k")

    p = sub.add_parser("gradcheck", help="verify analytic gradients against "
                                         "central differences")
    p.add_argument("--fault", action="store_true",
                   help="inject a gradient fault (must fail)")
    p.add_argument("--report", help="output report JSON path")
    _add_common(p, "config", "seed")

    p = sub.add_parser("synth", help="generate synthetic test fixtures")
    p.add_argument("--kind", choices=["arch", "grid"], required=True)
    p.add_argument("--teeth", type=int, default=14)
    p.add_argument("--grid-n", type=int, default=16, dest="grid_n")
    p.add_argument("--classes", type=int, default=5)
    _add_common(p, "out", "seed")
    return parser


def cmd_render(args):
    cfg = _config_from_args(args)
    pipe._run_stage("render", pipe.stage_render, args.mesh, cfg, args.out)
    return 0


def cmd_segment(args):
    cfg = _config_from_args(args)
    pipe._run_stage("segment", pipe.stage_segment, args.mesh, args.labels,
                    cfg, args.views_dir, args.out)
    return 0


def cmd_lift(args):
    cfg = _config_from_args(args)
    pipe._run_stage("lift", pipe.stage_lift, args.mesh, cfg, args.views_dir,
                    args.segs_dir, args.out)
    return 0


def cmd_refine(args):
    cfg = _config_from_args(args)
    pipe._run_stage("refine", pipe.stage_refine, args.mesh, cfg, args.votes,
                    args.init, args.out)
    return 0


def cmd_evaluate(args):
    cfg = _config_from_args(args)
    report = pipe._run_stage("evaluate", pipe.stage_evaluate, args.mesh, cfg,
                             args.pred, args.gt, args.report)
    print(report.to_json(), end="")
    return 0


def cmd_pipeline(args):
    cfg = _config_from_args(args)
    if args.batch:
        pipe.run_batch(args.batch, cfg, args.out)
        return 0
    if not args.mesh:
        raise ToothLiftError("pipeline needs --mesh (or --batch)")
    report = pipe.run_pipeline(args.mesh, args.labels, cfg, args.out)
    if report is not None:
        print(report.to_json(), end="")
    return 0


def cmd_gradcheck(args):
    seed = args.seed if args.seed is not None else 0
    results = gradcheck_mod.run_suite(seed=seed, fault=args.fault)
    ok = True
    for name, err in results.items():
        passed = err < gradcheck_mod.TOLERANCE
        ok = ok and passed
        print(f"{name}: max_rel_err={err:.3e} {'PASS' if passed else 'FAIL'}")
    if args.report:
        with open(args.report, "w") as fh:
            json.dump({"tolerance": gradcheck_mod.TOLERANCE, "results": results},
                      fh, sort_keys=True, indent=2)
            fh.write("\n")
    return 0 if ok else 1


def cmd_synth(args):
    seed = args.seed if args.seed is not None else 0
    if args.kind == "arch":
        mesh = synth_arch(teeth=args.teeth, seed=seed)
    else:
        mesh = synth_grid(n=args.grid_n, classes=args.classes, seed=seed)
    os.makedirs(args.out, exist_ok=True)
    mesh_path = os.path.join(args.out, "mesh.ply")
    labels_path = os.path.join(args.out, "labels.json")
    save_mesh(mesh, mesh_path)
    save_labels_json(mesh.labels, labels_path)
    print(mesh_path)
    print(labels_path)
    return 0


_COMMANDS = {
    "render": cmd_render,
    "segment": cmd_segment,
    "lift": cmd_lift,
    "refine": cmd_refine,
    "evaluate": cmd_evaluate,
    "pipeline": cmd_pipeline,
    "gradcheck": cmd_gradcheck,
    "synth": cmd_synth,
}


def main(argv=None):
    _setup_logging()
    args = build_parser().parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except (ToothLiftError, OSError, ValueError) as exc:
        print(f"toothlift {args.command}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
