"""Procedural desk-scale test meshes.

`arch` builds a U-shaped gum strip (background) with hemispherical tooth
bumps, one class per bump; `grid` builds a flat labeled grid for metric
tests. Both are deterministic functions of their parameters and seed.
"""

from __future__ import annotations

import numpy as np

from .mesh import LabeledMesh

ARCH_THETA_START = np.deg2rad(-20.0)
ARCH_THETA_END = np.deg2rad(200.0)


def _strip(a, b, half_width, depth, n_seg, n_width):
    """Gum ribbon along an elliptic arc, gently domed across its width."""
    thetas = np.linspace(ARCH_THETA_START, ARCH_THETA_END, n_seg)
    us = np.linspace(-half_width, half_width, n_width)
    cx = a * np.cos(thetas)
    cy = b * np.sin(thetas)
    nx = np.cos(thetas) / a
    ny = np.sin(thetas) / b
    nn = np.hypot(nx, ny)
    nx, ny = nx / nn, ny / nn

    verts = np.empty((n_seg, n_width, 3))
    verts[:, :, 0] = cx[:, None] + us[None, :] * nx[:, None]
    verts[:, :, 1] = cy[:, None] + us[None, :] * ny[:, None]
    verts[:, :, 2] = depth * ((us[None, :] / half_width) ** 2 - 1.0)

    faces = []
    for i in range(n_seg - 1):
        for j in range(n_width - 1):
            v00 = i * n_width + j
            v01 = v00 + 1
            v10 = v00 + n_width
            v11 = v10 + 1
            faces.append([v00, v10, v11])
            faces.append([v00, v11, v01])
    return verts.reshape(-1, 3), np.asarray(faces, dtype=np.int64)


def _hemisphere(center, radius, n_rings, n_segs):
    """Upper half sphere from the equator to the pole, welded pole vertex."""
    lat = np.linspace(0.0, np.pi / 2.0, n_rings + 1)[:-1]
    seg = np.linspace(0.0, 2.0 * np.pi, n_segs, endpoint=False)
    ring_r = radius * np.cos(lat)
    ring_z = center[2] + radius * np.sin(lat)
    verts = np.empty((n_rings, n_segs, 3))
    verts[:, :, 0] = center[0] + ring_r[:, None] * np.cos(seg)[None, :]
    verts[:, :, 1] = center[1] + ring_r[:, None] * np.sin(seg)[None, :]
    verts[:, :, 2] = ring_z[:, None]
    verts = verts.reshape(-1, 3)
    pole = np.array([[center[0], center[1], center[2] + radius]])
    verts = np.concatenate([verts, pole])
    pole_id = len(verts) - 1

    faces = []
    for i in range(n_rings - 1):
        for s in range(n_segs):
            v00 = i * n_segs + s
            v01 = i * n_segs + (s + 1) % n_segs
            v10 = v00 + n_segs
            v11 = v01 + n_segs
            faces.append([v00, v01, v11])
            faces.append([v00, v11, v10])
    top = (n_rings - 1) * n_segs
    for s in range(n_segs):
        faces.append([top + s, top + (s + 1) % n_segs, pole_id])
    return verts, np.asarray(faces, dtype=np.int64)


def synth_arch(teeth=14, seed=0, strip_segments=250, strip_width_segments=16,
               tooth_rings=25, tooth_segments=45):
    """14-tooth (by default) dental arch stand-in, ~20k vertices.

    The gum strip is background (0); bump i carries class i+1. Tooth radii
    follow an incisor-to-molar size pattern with a small seeded jitter.
    """
    if not 1 <= teeth <= 16:
        raise ValueError("teeth must lie in 1..16")
    rng = np.random.default_rng(seed)
    a, b = 25.0, 30.0
    half_width, dome_depth = 6.0, 1.5

    verts, faces = _strip(a, b, half_width, dome_depth,
                          strip_segments, strip_width_segments)
    labels = [np.zeros(len(verts), dtype=np.int16)]
    all_verts = [verts]
    all_faces = [faces]
    offset = len(verts)

    margin = np.deg2rad(12.0)
    thetas = np.linspace(ARCH_THETA_START + margin, ARCH_THETA_END - margin, teeth)
    mid = (teeth - 1) / 2.0
    for i, theta in enumerate(thetas):
        molar_ness = abs(i - mid) / mid if mid > 0 else 0.0
        radius = 2.6 + 1.1 * molar_ness + rng.uniform(-0.15, 0.15)
        center = (a * np.cos(theta), b * np.sin(theta), -0.35 * radius)
        v, f = _hemisphere(center, radius, tooth_rings, tooth_segments)
        all_verts.append(v)
        all_faces.append(f + offset)
        labels.append(np.full(len(v), i + 1, dtype=np.int16))
        offset += len(v)

    return LabeledMesh(np.concatenate(all_verts),
                       np.concatenate(all_faces),
                       np.concatenate(labels))


def synth_grid(n=16, classes=5, seed=0, extent=10.0):
    """Flat (n+1)^2-vertex grid with nearest-seed (Voronoi) labels over
    `classes` classes, 0 included."""
    if n < 1:
        raise ValueError("n must be >= 1")
    if not 1 <= classes <= 17:
        raise ValueError("classes must lie in 1..17")
    rng = np.random.default_rng(seed)
    axis = np.linspace(-extent / 2.0, extent / 2.0, n + 1)
    gx, gy = np.meshgrid(axis, axis, indexing="xy")
    verts = np.stack([gx.ravel(), gy.ravel(), np.zeros(gx.size)], axis=1)

    faces = []
    for i in range(n):
        for j in range(n):
            v00 = i * (n + 1) + j
            v01 = v00 + 1
            v10 = v00 + n + 1
            v11 = v10 + 1
            faces.append([v00, v10, v11])
            faces.append([v00, v11, v01])

    seeds = rng.uniform(-extent / 2.0, extent / 2.0, size=(classes, 2))
    d = ((verts[:, None, :2] - seeds[None]) ** 2).sum(axis=2)
    labels = d.argmin(axis=1).astype(np.int16)
    return LabeledMesh(verts, np.asarray(faces, dtype=np.int64), labels)
