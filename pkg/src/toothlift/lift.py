"""2D-to-3D label lifting: per-vertex vote accumulation and majority vote."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .mesh import N_CLASSES
from .rawio import load_raw, save_raw
from .render import vertex_map


@dataclass(frozen=True)
class VoteTable:
    """(N, 17) matrix of per-vertex class vote counts."""

    counts: np.ndarray

    def __post_init__(self):
        c = np.ascontiguousarray(np.asarray(self.counts, dtype=np.int64))
        if c.ndim != 2 or c.shape[1] != N_CLASSES:
            raise ValueError(f"counts must be (N, {N_CLASSES}), got {c.shape}")
        if c.size and c.min() < 0:
            raise ValueError("vote counts must be non-negative")
        object.__setattr__(self, "counts", c)

    def __add__(self, other):
        return VoteTable(self.counts + other.counts)


def votes_from_maps(n_vertices, pixel_vertices, label_maps):
    """Accumulate votes from precomputed pixel->vertex maps (one per view)."""
    counts = np.zeros((n_vertices, N_CLASSES), dtype=np.int64)
    for vm, lm in zip(pixel_vertices, label_maps):
        if vm.shape != lm.shape:
            raise ValueError("vertex map and label map sizes differ")
        covered = vm >= 0
        np.add.at(counts, (vm[covered], lm[covered].astype(np.int64)), 1)
    return VoteTable(counts)


def accumulate_votes(mesh, outputs, segs):
    """counts[pixel_vertex(p)][label(p)] += 1 over every covered pixel of
    every view. Outputs and segmentations must pair up by view_id.
    """
    by_id = {seg.view_id: seg for seg in segs}
    if len(by_id) != len(segs) or sorted(by_id) != sorted(o.view_id for o in outputs):
        raise ValueError("outputs and segmentations do not align by view_id")
    vms = []
    lms = []
    for out in outputs:
        seg = by_id[out.view_id]
        if seg.label_map.shape != out.face_id.shape:
            raise ValueError(f"view {out.view_id}: segmentation size mismatch")
        vms.append(vertex_map(out, mesh))
        lms.append(seg.label_map)
    return votes_from_maps(mesh.n_vertices, vms, lms)


def resolve_votes(table):
    """Majority label per vertex. Vertices with no votes become background;
    ties prefer any tooth class over background, then the lowest class index.
    """
    counts = table.counts
    order = np.concatenate([np.arange(1, N_CLASSES), [0]])
    labels = order[np.argmax(counts[:, order], axis=1)]
    labels[counts.sum(axis=1) == 0] = 0
    return labels.astype(np.int16)


def save_votes(table, path):
    save_raw(table.counts.astype(np.uint32), path, "uint32")


def load_votes(path):
    return VoteTable(load_raw(path).astype(np.int64))
