"""Per-view 2D segmentation sources.

Three interchangeable producers of ViewSegmentation lists: a geometric
oracle (exact labels from the render buffers), a file adapter reading
`view_<id>_labels.png` images written by an external model, and a noise
wrapper that corrupts labels near 2D class boundaries to stress the
downstream refinement.
"""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np

from .errors import LabelError, MissingLabelsError
from .mesh import N_CLASSES
from .rawio import load_png_gray, save_png_gray
from .render import vertex_map


@dataclass(frozen=True)
class InstanceSegment:
    """One tooth-instance hypothesis: mask channel, class distribution over
    the 17 classes and a presence confidence in [0, 1]."""

    mask: np.ndarray
    probs: np.ndarray
    confidence: float

    def __post_init__(self):
        p = np.asarray(self.probs, dtype=np.float64).reshape(N_CLASSES)
        if abs(p.sum() - 1.0) > 1e-5:
            raise ValueError("class probabilities must sum to 1")
        if not 0.0 <= self.confidence <= 1.0:
            raise ValueError("confidence must lie in [0, 1]")
        object.__setattr__(self, "probs", p)


@dataclass(frozen=True)
class ViewSegmentation:
    """Per-pixel class labels for one view, optionally with instance data."""

    view_id: int
    label_map: np.ndarray
    instances: tuple | None = None

    def __post_init__(self):
        lm = np.ascontiguousarray(np.asarray(self.label_map, dtype=np.int16))
        if lm.ndim != 2:
            raise ValueError("label_map must be 2-D")
        if lm.size and (lm.min() < 0 or lm.max() >= N_CLASSES):
            raise LabelError("label_map values must lie in 0..16")
        lm.flags.writeable = False
        object.__setattr__(self, "label_map", lm)
        if self.instances is not None:
            object.__setattr__(self, "instances", tuple(self.instances))


def oracle_segment(mesh, outputs, with_instances=False):
    """Ground-truth 2D labels: each covered pixel takes the class of its
    attributed vertex. Confidence is 1.0 for classes present in the view.
    """
    if mesh.labels is None:
        raise MissingLabelsError("oracle segmentation requires labels")
    segs = []
    for out in outputs:
        vm = vertex_map(out, mesh)
        lm = np.zeros(vm.shape, dtype=np.int16)
        covered = vm >= 0
        lm[covered] = mesh.labels[vm[covered]]
        instances = None
        if with_instances:
            instances = []
            for c in range(1, N_CLASSES):
                mask = (lm == c).astype(np.float64)
                probs = np.zeros(N_CLASSES)
                probs[c] = 1.0
                instances.append(InstanceSegment(
                    mask=mask, probs=probs,
                    confidence=1.0 if mask.any() else 0.0))
        segs.append(ViewSegmentation(view_id=out.view_id, label_map=lm,
                                     instances=instances))
    return segs


def segmentation_path(directory, view_id):
    return os.path.join(str(directory), f"view_{view_id}_labels.png")


def export_segmentations(segs, directory):
    """Write label maps as grayscale PNGs (pixel value = class index)."""
    os.makedirs(str(directory), exist_ok=True)
    for seg in segs:
        save_png_gray(seg.label_map.astype(np.uint8),
                      segmentation_path(directory, seg.view_id))


def file_segment(directory, views):
    """Read `view_<id>_labels.png` per camera from a directory written by an
    external segmenter (or by export_segmentations)."""
    segs = []
    for cam in views:
        path = segmentation_path(directory, cam.view_id)
        if not os.path.exists(path):
            raise FileNotFoundError(f"missing segmentation file: {path}")
        lm = load_png_gray(path)
        if lm.max(initial=0) >= N_CLASSES:
            raise LabelError(f"{path}: pixel value {lm.max()} is not a class index")
        w, h = cam.image_size
        if lm.shape != (h, w):
            raise ValueError(f"{path}: size {lm.shape[::-1]} != view size {(w, h)}")
        segs.append(ViewSegmentation(view_id=cam.view_id,
                                     label_map=lm.astype(np.int16)))
    return segs


def _window_stack(lm, radius):
    """(d*d, H, W) stack of the (2r+1)^2 neighborhood labels, edge-clamped."""
    h, w = lm.shape
    rows = np.arange(h)
    cols = np.arange(w)
    layers = []
    for dy in range(-radius, radius + 1):
        ri = np.clip(rows + dy, 0, h - 1)
        for dx in range(-radius, radius + 1):
            ci = np.clip(cols + dx, 0, w - 1)
            layers.append(lm[np.ix_(ri, ci)])
    return np.stack(layers)


def _draw_window_labels(stack, unit):
    """Pick one label per pixel, uniformly over the DISTINCT labels in its
    window, using the uniform draws in `unit`."""
    s = np.sort(stack, axis=0)
    first = np.ones(s.shape, dtype=bool)
    first[1:] = s[1:] != s[:-1]
    rank = np.cumsum(first, axis=0)
    n_distinct = rank[-1]
    pick = np.minimum((unit * n_distinct).astype(np.int64), n_distinct - 1) + 1
    hit = first & (rank == pick[None])
    slot = hit.argmax(axis=0)
    return np.take_along_axis(s, slot[None], axis=0)[0]


def _class_boundary(lm):
    b = np.zeros(lm.shape, dtype=bool)
    b[:-1] |= lm[:-1] != lm[1:]
    b[1:] |= lm[1:] != lm[:-1]
    b[:, :-1] |= lm[:, :-1] != lm[:, 1:]
    b[:, 1:] |= lm[:, 1:] != lm[:, :-1]
    return b


def noisy_segment(base, boundary_radius, flip_rate, seed):
    """Corrupt segmentations deterministically.

    Pixels within `boundary_radius` (Chebyshev) of an inter-class boundary
    are re-drawn uniformly from the distinct labels present in their
    (2r+1)^2 window; afterwards every pixel flips to such a window draw
    with probability `flip_rate`. All windows read the original labels.
    Instance data does not survive the corruption.
    """
    if boundary_radius < 0:
        raise ValueError("boundary_radius must be >= 0")
    if not 0.0 <= flip_rate <= 1.0:
        raise ValueError("flip_rate must lie in [0, 1]")
    out = []
    for seg in base:
        rng = np.random.default_rng([int(seed), int(seg.view_id)])
        lm = seg.label_map
        stack = _window_stack(lm, boundary_radius)
        near_boundary = _window_stack(_class_boundary(lm), boundary_radius).any(axis=0)

        redraw = _draw_window_labels(stack, rng.random(lm.shape))
        new = np.where(near_boundary, redraw, lm)
        flip_mask = rng.random(lm.shape) < flip_rate
        flip_draw = _draw_window_labels(stack, rng.random(lm.shape))
        new = np.where(flip_mask, flip_draw, new)
        out.append(ViewSegmentation(view_id=seg.view_id,
                                    label_map=new.astype(np.int16)))
    return out
