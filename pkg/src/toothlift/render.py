"""Software rasterization of labeled meshes into per-view buffers.

Cameras are orthographic and aimed at the origin; meshes are expected to be
normalized (bounding-box diagonal 1, centroid at the origin) so a fixed
frustum covers them from every direction. Pixel (row i, col j) has its
center at continuous image coordinates (j + 0.5, i + 0.5).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels
from .errors import MissingLabelsError
from .mesh import face_normals

FACE_EMPTY = _kernels.FACE_EMPTY

# Half-extent of the orthographic frustum. Any mesh with unit bbox diagonal
# centered on its centroid fits inside a unit ball, so 1.05 always covers it.
FRUSTUM_HALF_EXTENT = 1.05

_BASE_COLOR = np.array([0.85, 0.83, 0.80])
_AMBIENT = 0.25


@dataclass(frozen=True)
class Camera:
    """Orthographic camera: 4x4 affine projection matrix onto NDC.

    Rows 0/1 map world points to NDC x/y in [-1, 1]; row 2 is the depth
    (increasing away from the camera); row 3 is (0, 0, 0, 1).
    """

    view_id: int
    projection: np.ndarray
    image_size: tuple

    def __post_init__(self):
        p = np.asarray(self.projection, dtype=np.float64).reshape(4, 4)
        if abs(np.linalg.det(p[:3, :3])) < 1e-12:
            raise ValueError("projection is not invertible")
        w, h = self.image_size
        if w <= 0 or h <= 0:
            raise ValueError("image_size must be positive")
        p.flags.writeable = False
        object.__setattr__(self, "projection", p)
        object.__setattr__(self, "image_size", (int(w), int(h)))

    @property
    def forward(self):
        """Unit viewing direction (from camera toward the scene)."""
        row = self.projection[2, :3]
        return row / np.linalg.norm(row)


@dataclass(frozen=True)
class RenderOutput:
    """Buffers of one rasterized view.

    rgb: (H, W, 3) in [0, 1]. face_id: (H, W) int32, FACE_EMPTY where no
    surface. bary: (H, W, 3) barycentric coordinates of the covering face.
    depth: (H, W), +inf on empty pixels.
    """

    view_id: int
    rgb: np.ndarray
    face_id: np.ndarray
    bary: np.ndarray
    depth: np.ndarray

    @property
    def image_size(self):
        h, w = self.face_id.shape
        return (w, h)


@dataclass(frozen=True)
class MaskMap:
    """16-channel tooth mask tensor, channel c for class c+1, values in [0,1]."""

    channels: np.ndarray

    def __post_init__(self):
        ch = np.asarray(self.channels, dtype=np.float64)
        if ch.ndim != 3 or ch.shape[0] != 16:
            raise ValueError(f"mask map must be (16, H, W), got {ch.shape}")
        if ch.size and (ch.min() < 0.0 or ch.max() > 1.0):
            raise ValueError("mask values must lie in [0, 1]")
        object.__setattr__(self, "channels", ch)


def _look_at_ortho(view_id, direction, up_hint, image_size,
                   extent=FRUSTUM_HALF_EXTENT):
    d = np.asarray(direction, dtype=np.float64)
    d = d / np.linalg.norm(d)
    f = -d  # camera looks at the origin
    s = np.cross(f, np.asarray(up_hint, dtype=np.float64))
    s = s / np.linalg.norm(s)
    u = np.cross(s, f)
    proj = np.zeros((4, 4))
    proj[0, :3] = s / extent
    proj[1, :3] = u / extent
    proj[2, :3] = f / extent
    proj[3, 3] = 1.0
    return Camera(view_id=view_id, projection=proj, image_size=tuple(image_size))


def make_view_set(count, image_size=(512, 512)):
    """Deterministic camera set: one top-down occlusal view plus (count-1)
    views on an azimuth ring 30 degrees above the occlusal plane, all aimed
    at the origin.
    """
    if count < 1:
        raise ValueError("view count must be >= 1")
    cams = [_look_at_ortho(0, (0.0, 0.0, 1.0), (0.0, 1.0, 0.0), image_size)]
    ring = count - 1
    elev = np.deg2rad(30.0)
    for k in range(ring):
        az = 2.0 * np.pi * k / ring
        d = (np.cos(az) * np.cos(elev), np.sin(az) * np.cos(elev), np.sin(elev))
        cams.append(_look_at_ortho(k + 1, d, (0.0, 0.0, 1.0), image_size))
    return cams


def project(camera, points):
    """World points -> (ndc_x, ndc_y, depth) rows."""
    p = camera.projection
    return np.asarray(points, dtype=np.float64) @ p[:3, :3].T + p[:3, 3]


def render(mesh, camera):
    """Z-buffered rasterization with flat Lambertian headlight shading."""
    w, h = camera.image_size
    ndc = project(camera, mesh.vertices)
    pts = np.empty((mesh.n_vertices, 3))
    pts[:, 0] = (ndc[:, 0] + 1.0) * 0.5 * w
    pts[:, 1] = (1.0 - ndc[:, 1]) * 0.5 * h
    pts[:, 2] = ndc[:, 2]
    face_id, bary, depth = _kernels.rasterize(pts, mesh.faces, w, h)

    rgb = np.zeros((h, w, 3))
    covered = face_id != FACE_EMPTY
    if covered.any():
        # two-sided shading: light collocated with the camera
        lambert = np.abs(face_normals(mesh) @ camera.forward)
        shade = _AMBIENT + (1.0 - _AMBIENT) * lambert
        rgb[covered] = shade[face_id[covered], None] * _BASE_COLOR
    return RenderOutput(view_id=camera.view_id, rgb=rgb, face_id=face_id,
                        bary=bary, depth=depth)


def pixel_vertex(output, mesh, pixel):
    """Vertex id seen at pixel (u, v) = (col, row), or None if empty.

    The visible face's corner with the largest barycentric coordinate wins;
    exact ties go to the lowest vertex index.
    """
    u, v = pixel
    h, w = output.face_id.shape
    if not (0 <= u < w and 0 <= v < h):
        raise ValueError(f"pixel {pixel} outside {w}x{h} image")
    fid = int(output.face_id[v, u])
    if fid == FACE_EMPTY:
        return None
    b = output.bary[v, u]
    corners = mesh.faces[fid]
    best = b.max()
    return int(corners[b == best].min())


def vertex_map(output, mesh):
    """(H, W) int64 map of pixel_vertex for every pixel, -1 where empty."""
    fid = output.face_id
    vm = np.full(fid.shape, -1, dtype=np.int64)
    covered = fid != FACE_EMPTY
    if not covered.any():
        return vm
    corners = mesh.faces[fid[covered]]
    b = output.bary[covered]
    is_max = b == b.max(axis=1, keepdims=True)
    cand = np.where(is_max, corners, np.iinfo(np.int64).max)
    vm[covered] = cand.min(axis=1)
    return vm


def mask_map_from_output(mesh, output):
    if mesh.labels is None:
        raise MissingLabelsError("mask map rendering requires labels")
    vm = vertex_map(output, mesh)
    lm = np.zeros(vm.shape, dtype=np.int16)
    covered = vm >= 0
    lm[covered] = mesh.labels[vm[covered]]
    channels = np.zeros((16,) + vm.shape)
    for c in range(16):
        channels[c] = lm == c + 1
    return MaskMap(channels=channels)


def render_mask_map(mesh, camera):
    """Binary per-tooth mask map of the visible surface labels."""
    return mask_map_from_output(mesh, render(mesh, camera))
