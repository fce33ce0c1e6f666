"""Stage orchestration. Every stage reads and writes the documented file
formats, so the end-to-end pipeline is literally the composition of the
independently invokable stages.
"""

from __future__ import annotations

import csv
import logging
import os
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from .config import load_fdi_table, parse_segmenter
from .errors import ToothLiftError
from .lift import load_votes, resolve_votes, save_votes, votes_from_maps
from .mesh import (build_adjacency, load_labels_json, load_mesh, map_fdi,
                   normalize, save_labels_json)
from .metrics import evaluate
from .rawio import load_png_gray, load_raw, save_png_rgb, save_raw
from .refine import alpha_expansion, build_energy
from .render import make_view_set, render, vertex_map
from .segment import export_segmentations, file_segment, noisy_segment
from .segment import ViewSegmentation

log = logging.getLogger("toothlift")


class StageFailure(ToothLiftError):
    """A pipeline stage failed; message carries the stage tag."""

    def __init__(self, stage, cause):
        super().__init__(f"[{stage}] {cause}")
        self.stage = stage
        self.cause = cause


def _run_stage(stage, fn, *args, **kwargs):
    log.info("stage %s", stage)
    try:
        return fn(*args, **kwargs)
    except StageFailure:
        raise
    except Exception as exc:
        raise StageFailure(stage, exc) from exc


def _fdi_table(config):
    return load_fdi_table(config.fdi_map) if config.fdi_map else None


def _load_class_labels(path, config):
    table = _fdi_table(config)
    return np.array([map_fdi(c, table) for c in load_labels_json(path)],
                    dtype=np.int16)


def _view_paths(outdir, view_id):
    base = os.path.join(str(outdir), f"view_{view_id}")
    return {
        "rgb": base + ".png",
        "face_id": base + "_face_id.raw",
        "depth": base + "_depth.raw",
        "vertex_map": base + "_vertex_map.raw",
    }


def stage_render(mesh_path, config, outdir):
    """Render all views of the normalized mesh; write RGB PNGs plus face-id,
    depth and pixel-to-vertex raw buffers."""
    os.makedirs(str(outdir), exist_ok=True)
    mesh = load_mesh(mesh_path)
    norm, _ = normalize(mesh, config.up_axis)
    cams = make_view_set(config.views, (config.size, config.size))
    for cam in cams:
        out = render(norm, cam)
        paths = _view_paths(outdir, cam.view_id)
        save_png_rgb(out.rgb, paths["rgb"])
        save_raw(out.face_id, paths["face_id"], "int32")
        save_raw(out.depth.astype(np.float32), paths["depth"], "float32")
        save_raw(vertex_map(out, mesh).astype(np.int32),
                 paths["vertex_map"], "int32")
    return [_view_paths(outdir, c.view_id) for c in cams]


def _load_vertex_maps(views_dir, n_views):
    maps = []
    for view_id in range(n_views):
        path = _view_paths(views_dir, view_id)["vertex_map"]
        if not os.path.exists(path):
            raise FileNotFoundError(f"missing render buffer: {path}")
        maps.append(load_raw(path).astype(np.int64))
    return maps


def stage_segment(mesh_path, labels_path, config, views_dir, outdir):
    """Produce per-view label maps with the configured segmenter and write
    them as view_<id>_labels.png."""
    kind = parse_segmenter(config.segmenter)
    os.makedirs(str(outdir), exist_ok=True)
    if kind[0] == "file":
        cams = make_view_set(config.views, (config.size, config.size))
        segs = file_segment(kind[1], cams)
    else:
        if labels_path is None:
            raise ValueError(f"{kind[0]} segmenter requires ground-truth labels")
        labels = _load_class_labels(labels_path, config)
        segs = []
        for view_id, vm in enumerate(_load_vertex_maps(views_dir, config.views)):
            lm = np.zeros(vm.shape, dtype=np.int16)
            covered = vm >= 0
            lm[covered] = labels[vm[covered]]
            segs.append(ViewSegmentation(view_id=view_id, label_map=lm))
        if kind[0] == "noisy":
            _, radius, rate, seed = kind
            segs = noisy_segment(segs, radius, rate, seed)
    export_segmentations(segs, outdir)
    return segs


def stage_lift(mesh_path, config, views_dir, segs_dir, outdir):
    """Accumulate pixel votes into a vote table and resolve majority labels;
    writes votes.raw (u32) and labels_voted.json."""
    os.makedirs(str(outdir), exist_ok=True)
    mesh = load_mesh(mesh_path)
    vms = _load_vertex_maps(views_dir, config.views)
    lms = []
    for view_id in range(config.views):
        path = os.path.join(str(segs_dir), f"view_{view_id}_labels.png")
        if not os.path.exists(path):
            raise FileNotFoundError(f"missing segmentation file: {path}")
        lms.append(load_png_gray(path).astype(np.int64))
    table = votes_from_maps(mesh.n_vertices, vms, lms)
    save_votes(table, os.path.join(str(outdir), "votes.raw"))
    voted = resolve_votes(table)
    save_labels_json(voted, os.path.join(str(outdir), "labels_voted.json"))
    return table, voted


def stage_refine(mesh_path, config, votes_path, init_labels_path, outdir):
    """Graph-cut refinement of the voted labels; writes labels_refined.json
    and energy_trace.csv."""
    os.makedirs(str(outdir), exist_ok=True)
    mesh = load_mesh(mesh_path)
    norm, _ = normalize(mesh, config.up_axis)
    table = load_votes(votes_path)
    init = _load_class_labels(init_labels_path, config)
    energy = build_energy(norm, table, potts_scale=config.potts_scale)
    trace = []
    refined = alpha_expansion(norm, energy, init, max_sweeps=config.max_sweeps,
                              trace=trace)
    save_labels_json(refined, os.path.join(str(outdir), "labels_refined.json"))
    with open(os.path.join(str(outdir), "energy_trace.csv"), "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["sweep", "label", "energy"])
        for sweep, label, energy_val in trace:
            writer.writerow([sweep, label, repr(energy_val)])
    return refined


def stage_evaluate(mesh_path, config, pred_labels_path, gt_labels_path, out_path):
    """Metric report for predicted vs ground-truth labels."""
    mesh = load_mesh(mesh_path)
    pred = _load_class_labels(pred_labels_path, config)
    gt = _load_class_labels(gt_labels_path, config)
    index = build_adjacency(mesh)
    report = evaluate(pred, gt, index, k=config.k_boundary,
                      biou_mode=config.biou_mode)
    if out_path is not None:
        with open(out_path, "w") as fh:
            fh.write(report.to_json())
    return report


def run_pipeline(mesh_path, labels_path, config, outdir):
    """normalize -> render -> segment -> lift -> refine -> evaluate, all
    through the stage file formats. Returns the refined-metrics report
    (None when no ground truth was given)."""
    outdir = str(outdir)
    os.makedirs(outdir, exist_ok=True)
    _run_stage("render", stage_render, mesh_path, config, outdir)
    _run_stage("segment", stage_segment, mesh_path, labels_path, config,
               outdir, outdir)
    _run_stage("lift", stage_lift, mesh_path, config, outdir, outdir, outdir)
    _run_stage("refine", stage_refine, mesh_path, config,
               os.path.join(outdir, "votes.raw"),
               os.path.join(outdir, "labels_voted.json"), outdir)
    report = None
    if labels_path is not None:
        report = _run_stage(
            "evaluate", stage_evaluate, mesh_path, config,
            os.path.join(outdir, "labels_refined.json"), labels_path,
            os.path.join(outdir, "report.json"))
        _run_stage(
            "evaluate", stage_evaluate, mesh_path, config,
            os.path.join(outdir, "labels_voted.json"), labels_path,
            os.path.join(outdir, "report_unrefined.json"))
    return report


_MESH_SUFFIXES = (".ply", ".obj", ".stl")


def find_batch_pairs(input_dir):
    """(mesh, labels) pairs in a directory: labels are <stem>.json or
    <stem>_labels.json next to each mesh file."""
    pairs = []
    for name in sorted(os.listdir(input_dir)):
        stem, ext = os.path.splitext(name)
        if ext.lower() not in _MESH_SUFFIXES:
            continue
        mesh_path = os.path.join(input_dir, name)
        labels_path = None
        for cand in (stem + ".json", stem + "_labels.json"):
            p = os.path.join(input_dir, cand)
            if os.path.exists(p):
                labels_path = p
                break
        pairs.append((mesh_path, labels_path))
    return pairs


def _batch_one(job):
    mesh_path, labels_path, config, outdir = job
    report = run_pipeline(mesh_path, labels_path, config, outdir)
    return mesh_path, report


def run_batch(input_dir, config, outdir):
    """Pipeline over every mesh/label pair in a directory; one report per
    mesh plus a summary.csv roll-up."""
    pairs = find_batch_pairs(input_dir)
    if not pairs:
        raise FileNotFoundError(f"no meshes found in {input_dir}")
    jobs = []
    for mesh_path, labels_path in pairs:
        stem = os.path.splitext(os.path.basename(mesh_path))[0]
        jobs.append((mesh_path, labels_path, config,
                     os.path.join(str(outdir), stem)))
    if config.jobs > 1:
        with ProcessPoolExecutor(max_workers=config.jobs) as pool:
            results = list(pool.map(_batch_one, jobs))
    else:
        results = [_batch_one(job) for job in jobs]

    summary = os.path.join(str(outdir), "summary.csv")
    with open(summary, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["mesh", "oa", "t_miou", "b_iou", "dice"])
        for mesh_path, report in results:
            if report is None:
                writer.writerow([os.path.basename(mesh_path), "", "", "", ""])
            else:
                writer.writerow([os.path.basename(mesh_path),
                                 repr(report.oa), repr(report.t_miou),
                                 repr(report.b_iou), repr(report.dice)])
    return results
