"""Mesh representation, file I/O, normalization and neighborhood queries.

Per-vertex labels use class indices 0..16: 0 is gingival background, 1..16
are the teeth of one arch in quadrant-major FDI order (see FDI_TO_CLASS).
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from .errors import LabelAlignmentError, LabelError, MeshFormatError

N_CLASSES = 17  # 16 teeth + background

# Quadrant-major ordering: within an arch the 16 codes map to classes 1..16
# left-to-right across the arch (upper: 18..11 then 21..28; lower mirrors).
_UPPER_FDI = (18, 17, 16, 15, 14, 13, 12, 11, 21, 22, 23, 24, 25, 26, 27, 28)
_LOWER_FDI = (48, 47, 46, 45, 44, 43, 42, 41, 31, 32, 33, 34, 35, 36, 37, 38)

FDI_TO_CLASS = {0: 0}
FDI_TO_CLASS.update({code: i + 1 for i, code in enumerate(_UPPER_FDI)})
FDI_TO_CLASS.update({code: i + 1 for i, code in enumerate(_LOWER_FDI)})

CLASS_TO_FDI = {
    "upper": {i + 1: code for i, code in enumerate(_UPPER_FDI)},
    "lower": {i + 1: code for i, code in enumerate(_LOWER_FDI)},
}


def map_fdi(fdi_code, table=None):
    """Map an FDI tooth code (or 0 for gingiva) to a class index in 0..16."""
    table = FDI_TO_CLASS if table is None else table
    try:
        return table[int(fdi_code)]
    except (KeyError, TypeError, ValueError):
        raise LabelError(f"unknown FDI code: {fdi_code!r}") from None


def class_to_fdi(label, arch="upper"):
    """Inverse of map_fdi for one arch; 0 stays 0."""
    if label == 0:
        return 0
    try:
        return CLASS_TO_FDI[arch][int(label)]
    except KeyError:
        raise LabelError(f"invalid class index {label!r} for arch {arch!r}") from None


@dataclass(frozen=True)
class LabeledMesh:
    """Triangle mesh with optional per-vertex class labels.

    vertices: (N, 3) float64. faces: (M, 3) int64, each row three distinct
    vertex indices. labels: optional (N,) int16 with values in 0..16.
    Arrays are frozen (read-only) after construction.
    """

    vertices: np.ndarray
    faces: np.ndarray
    labels: np.ndarray | None = None

    def __post_init__(self):
        v = np.ascontiguousarray(np.asarray(self.vertices, dtype=np.float64))
        f = np.ascontiguousarray(np.asarray(self.faces, dtype=np.int64))
        if v.ndim != 2 or v.shape[1] != 3:
            raise ValueError(f"vertices must be (N, 3), got {v.shape}")
        if f.size == 0:
            f = f.reshape(0, 3)
        if f.ndim != 2 or f.shape[1] != 3:
            raise ValueError(f"faces must be (M, 3), got {f.shape}")
        if f.size and (f.min() < 0 or f.max() >= len(v)):
            raise ValueError("face index out of range")
        if f.size and (
            (f[:, 0] == f[:, 1]) | (f[:, 1] == f[:, 2]) | (f[:, 0] == f[:, 2])
        ).any():
            raise ValueError("degenerate face (repeated vertex index)")
        lab = self.labels
        if lab is not None:
            lab = np.ascontiguousarray(np.asarray(lab, dtype=np.int16))
            if lab.shape != (len(v),):
                raise LabelAlignmentError(
                    f"{lab.shape[0] if lab.ndim == 1 else lab.shape} labels "
                    f"for {len(v)} vertices")
            if lab.size and (lab.min() < 0 or lab.max() >= N_CLASSES):
                raise LabelError("class labels must lie in 0..16")
            lab.flags.writeable = False
        v.flags.writeable = False
        f.flags.writeable = False
        object.__setattr__(self, "vertices", v)
        object.__setattr__(self, "faces", f)
        object.__setattr__(self, "labels", lab)

    @property
    def n_vertices(self):
        return len(self.vertices)

    @property
    def n_faces(self):
        return len(self.faces)

    def with_labels(self, labels):
        return LabeledMesh(self.vertices, self.faces, labels)


def face_normals(mesh):
    """Unit normals per face (zero vector for zero-area faces)."""
    v = mesh.vertices
    f = mesh.faces
    n = np.cross(v[f[:, 1]] - v[f[:, 0]], v[f[:, 2]] - v[f[:, 0]])
    norm = np.linalg.norm(n, axis=1, keepdims=True)
    return np.divide(n, norm, out=np.zeros_like(n), where=norm > 0)


def mesh_edges(mesh):
    """Unique undirected edges as an (E, 2) int64 array, u < v, sorted."""
    f = mesh.faces
    e = np.concatenate([f[:, [0, 1]], f[:, [1, 2]], f[:, [2, 0]]])
    e = np.sort(e, axis=1)
    return np.unique(e, axis=0)


# ---------------------------------------------------------------------------
# normalization


@dataclass(frozen=True)
class NormalizeTransform:
    """Rigid rotation + translation + uniform scale: p -> scale * R (p + t)."""

    translation: np.ndarray
    rotation: np.ndarray
    scale: float

    def __post_init__(self):
        t = np.asarray(self.translation, dtype=np.float64).reshape(3)
        r = np.asarray(self.rotation, dtype=np.float64).reshape(3, 3)
        if np.abs(r.T @ r - np.eye(3)).max() > 1e-6:
            raise ValueError("rotation is not orthonormal")
        if not self.scale > 0:
            raise ValueError("scale must be positive")
        object.__setattr__(self, "translation", t)
        object.__setattr__(self, "rotation", r)
        object.__setattr__(self, "scale", float(self.scale))

    def apply(self, points):
        points = np.asarray(points, dtype=np.float64)
        return ((points + self.translation) @ self.rotation.T) * self.scale


def _rotation_to_z(u):
    """Minimal rotation taking unit vector u onto +Z (Rodrigues)."""
    ez_dot = u[2]
    axis = np.array([u[1], -u[0], 0.0])  # cross(u, ez)
    s = np.linalg.norm(axis)
    if s < 1e-12:
        if ez_dot > 0:
            return np.eye(3)
        return np.diag([1.0, -1.0, -1.0])  # u == -ez: flip about X
    a = axis / s
    k = np.array([
        [0.0, -a[2], a[1]],
        [a[2], 0.0, -a[0]],
        [-a[1], a[0], 0.0],
    ])
    return np.eye(3) + s * k + (1.0 - ez_dot) * (k @ k)


def normalize(mesh, up_axis=(0.0, 0.0, 1.0)):
    """Center the mesh at its centroid, rotate up_axis onto +Z and scale the
    bounding-box diagonal to 1. Returns (normalized mesh, transform); applying
    the transform to the original vertices reproduces the output exactly.
    """
    if mesh.n_vertices == 0:
        raise ValueError("cannot normalize an empty mesh")
    up = np.asarray(up_axis, dtype=np.float64).reshape(3)
    nrm = np.linalg.norm(up)
    if nrm == 0:
        raise ValueError("up_axis must be non-zero")
    rot = _rotation_to_z(up / nrm)

    centroid = mesh.vertices.mean(axis=0)
    rotated = (mesh.vertices - centroid) @ rot.T
    extent = rotated.max(axis=0) - rotated.min(axis=0)
    diag = float(np.linalg.norm(extent))
    if diag == 0:
        raise ValueError("mesh has zero extent")

    tf = NormalizeTransform(translation=-centroid, rotation=rot, scale=1.0 / diag)
    return LabeledMesh(tf.apply(mesh.vertices), mesh.faces, mesh.labels), tf


# ---------------------------------------------------------------------------
# adjacency / neighborhoods


@dataclass(frozen=True)
class AdjacencyIndex:
    """Edge adjacency plus a KD-tree over vertex positions."""

    positions: np.ndarray
    neighbor_offsets: np.ndarray  # (N+1,) into neighbor_ids
    neighbor_ids: np.ndarray
    tree: cKDTree

    def neighbors(self, v):
        """Edge-connected neighbor vertex ids of v (sorted)."""
        return self.neighbor_ids[self.neighbor_offsets[v]:self.neighbor_offsets[v + 1]]


def build_adjacency(mesh):
    edges = mesh_edges(mesh)
    n = mesh.n_vertices
    src = np.concatenate([edges[:, 0], edges[:, 1]])
    dst = np.concatenate([edges[:, 1], edges[:, 0]])
    order = np.lexsort((dst, src))
    src, dst = src[order], dst[order]
    offsets = np.searchsorted(src, np.arange(n + 1)).astype(np.int64)
    pos = np.ascontiguousarray(mesh.vertices)
    return AdjacencyIndex(pos, offsets, dst.astype(np.int64), cKDTree(pos))


def _exact_sq_dist(positions, center, ids):
    d = positions[ids] - center
    return (d * d).sum(axis=1)


def k_neighborhood(index, v, k):
    """The k nearest distinct vertices to v by Euclidean distance, excluding
    v itself; distance ties break toward the lower vertex index.
    """
    n = len(index.positions)
    if not 0 <= v < n:
        raise ValueError(f"vertex id {v} out of range")
    if k < 1:
        raise ValueError("k must be >= 1")
    if k >= n:
        raise ValueError(f"k={k} with only {n} vertices")

    center = index.positions[v]
    kq = min(n, k + 2)
    while True:
        _, idx = index.tree.query(center, k=kq)
        idx = np.atleast_1d(idx)
        cand = idx[idx != v]
        dd = _exact_sq_dist(index.positions, center, cand)
        order = np.lexsort((cand, dd))
        if len(cand) >= k:
            sel_max = dd[order[k - 1]]
            # safe once every unretrieved vertex is strictly farther
            if kq == n or sel_max < dd[order[-1]]:
                return set(cand[order[:k]].tolist())
        if kq == n:
            return set(cand[order[:k]].tolist())
        kq = min(n, 2 * kq)


def knn_matrix(index, k):
    """(N, k) matrix of k-nearest neighbor ids for every vertex, with the
    same exclusion and tie rules as k_neighborhood.
    """
    n = len(index.positions)
    if k < 1:
        raise ValueError("k must be >= 1")
    if k >= n:
        raise ValueError(f"k={k} with only {n} vertices")
    pts = index.positions
    kq = min(n, k + 3)
    _, idx = index.tree.query(pts, k=kq)
    idx = idx.reshape(n, kq)
    diff = pts[idx] - pts[:, None, :]
    dd = (diff * diff).sum(axis=2)
    dd = np.where(idx == np.arange(n)[:, None], np.inf, dd)
    order = np.lexsort((idx, dd), axis=-1)
    dd_sorted = np.take_along_axis(dd, order, axis=1)
    idx_sorted = np.take_along_axis(idx, order, axis=1)
    out = idx_sorted[:, :k].astype(np.int64)
    if kq < n:
        # rows where the k-th selected distance ties the retrieval horizon
        # are redone one by one with the escalating scalar query
        horizon = dd_sorted[:, kq - 1]
        unsafe = ~(dd_sorted[:, k - 1] < horizon)
        for v in np.nonzero(unsafe)[0]:
            nb = sorted(k_neighborhood(index, int(v), k),
                        key=lambda i: (_exact_sq_dist(pts, pts[v], np.array([i]))[0], i))
            out[v] = nb
    return out


def k_hop_neighborhood(index, v, k):
    """Vertices within k edge hops of v (excluding v); the ring alternative
    to the Euclidean k_neighborhood.
    """
    n = len(index.positions)
    if not 0 <= v < n:
        raise ValueError(f"vertex id {v} out of range")
    if k < 1:
        raise ValueError("k must be >= 1")
    seen = {v}
    frontier = [v]
    for _ in range(k):
        nxt = []
        for u in frontier:
            for w in index.neighbors(u).tolist():
                if w not in seen:
                    seen.add(w)
                    nxt.append(w)
        frontier = nxt
        if not frontier:
            break
    seen.remove(v)
    return seen


# ---------------------------------------------------------------------------
# file I/O


def load_labels_json(path):
    """Read a label sidecar: {"labels": [per-vertex FDI codes], ...}."""
    with open(path) as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise MeshFormatError(f"{path}: invalid JSON ({exc})") from None
    if not isinstance(doc, dict) or "labels" not in doc:
        raise MeshFormatError(f"{path}: expected an object with a 'labels' key")
    return doc["labels"]


def save_labels_json(labels, path, arch="upper"):
    """Write class-index labels as the FDI label JSON format."""
    fdi = [class_to_fdi(int(c), arch) for c in labels]
    with open(path, "w") as fh:
        json.dump({"labels": fdi, "arch": arch}, fh)
        fh.write("\n")


def load_mesh(path, labels_path=None):
    """Load OBJ, PLY (ascii or binary little-endian) or binary STL, with an
    optional vertex-aligned FDI label JSON.
    """
    path = str(path)
    lower = path.lower()
    if lower.endswith(".obj"):
        vertices, faces = _load_obj(path)
    elif lower.endswith(".ply"):
        vertices, faces = _load_ply(path)
    elif lower.endswith(".stl"):
        vertices, faces = _load_stl(path)
    else:
        raise MeshFormatError(f"{path}: unsupported mesh format")

    labels = None
    if labels_path is not None:
        raw = load_labels_json(labels_path)
        if len(raw) != len(vertices):
            raise LabelAlignmentError(
                f"{labels_path}: {len(raw)} labels for {len(vertices)} vertices")
        labels = np.array([map_fdi(c) for c in raw], dtype=np.int16)

    try:
        return LabeledMesh(vertices, faces, labels)
    except ValueError as exc:
        raise MeshFormatError(f"{path}: {exc}") from None


def _load_obj(path):
    vertices = []
    faces = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            parts = line.split()
            if not parts or parts[0].startswith("#"):
                continue
            if parts[0] == "v":
                if len(parts) < 4:
                    raise MeshFormatError(f"{path}:{lineno}: short vertex record")
                try:
                    vertices.append([float(parts[1]), float(parts[2]), float(parts[3])])
                except ValueError:
                    raise MeshFormatError(f"{path}:{lineno}: bad vertex") from None
            elif parts[0] == "f":
                if len(parts) < 4:
                    raise MeshFormatError(f"{path}:{lineno}: face with <3 vertices")
                try:
                    idx = [int(tok.split("/")[0]) - 1 for tok in parts[1:]]
                except ValueError:
                    raise MeshFormatError(f"{path}:{lineno}: bad face index") from None
                if any(i < 0 for i in idx):
                    raise MeshFormatError(f"{path}:{lineno}: non-positive face index")
                for a, b in zip(idx[1:], idx[2:]):  # fan-triangulate polygons
                    faces.append([idx[0], a, b])
    return (np.asarray(vertices, dtype=np.float64).reshape(-1, 3),
            np.asarray(faces, dtype=np.int64).reshape(-1, 3))


_PLY_DTYPES = {
    "char": "i1", "int8": "i1", "uchar": "u1", "uint8": "u1",
    "short": "i2", "int16": "i2", "ushort": "u2", "uint16": "u2",
    "int": "i4", "int32": "i4", "uint": "u4", "uint32": "u4",
    "float": "f4", "float32": "f4", "double": "f8", "float64": "f8",
}


def _load_ply(path):
    with open(path, "rb") as fh:
        data = fh.read()
    if not data.startswith(b"ply"):
        raise MeshFormatError(f"{path}: not a PLY file")
    end = data.find(b"end_header")
    if end < 0:
        raise MeshFormatError(f"{path}: missing end_header")
    body_start = data.find(b"\n", end) + 1
    header = data[:body_start].decode("ascii", errors="replace")

    fmt = None
    elements = []  # (name, count, [(prop_name, dtype) or ("list", count_dt, item_dt, name)])
    for line in header.splitlines():
        parts = line.split()
        if not parts:
            continue
        if parts[0] == "format":
            fmt = parts[1]
        elif parts[0] == "element":
            elements.append((parts[1], int(parts[2]), []))
        elif parts[0] == "property":
            if not elements:
                raise MeshFormatError(f"{path}: property before element")
            if parts[1] == "list":
                elements[-1][2].append(("list", parts[2], parts[3], parts[4]))
            else:
                elements[-1][2].append((parts[2], parts[1]))
    if fmt not in ("ascii", "binary_little_endian"):
        raise MeshFormatError(f"{path}: unsupported PLY format {fmt!r}")

    vertices = None
    faces = []
    if fmt == "ascii":
        tokens = data[body_start:].decode("ascii", errors="replace").split()
        pos = 0
        for name, count, props in elements:
            if name == "vertex":
                cols = {}
                vals = np.empty((count, len(props)), dtype=np.float64)
                for p_i, (p_name, _) in enumerate(props):
                    cols[p_name] = p_i
                for r in range(count):
                    for c in range(len(props)):
                        vals[r, c] = float(tokens[pos]); pos += 1
                try:
                    vertices = vals[:, [cols["x"], cols["y"], cols["z"]]]
                except KeyError:
                    raise MeshFormatError(f"{path}: vertex lacks x/y/z") from None
            elif name == "face":
                for _ in range(count):
                    ln = int(tokens[pos]); pos += 1
                    poly = [int(tokens[pos + i]) for i in range(ln)]
                    pos += ln
                    for a, b in zip(poly[1:], poly[2:]):
                        faces.append([poly[0], a, b])
            else:
                for _ in range(count):
                    for p in props:
                        pos += int(tokens[pos]) + 1 if p[0] == "list" else 1
    else:
        buf = memoryview(data)[body_start:]
        off = 0
        for name, count, props in elements:
            if name == "vertex":
                if any(p[0] == "list" for p in props):
                    raise MeshFormatError(f"{path}: list property on vertices")
                names = [p[0] for p in props]
                dt = np.dtype([(p[0], "<" + _PLY_DTYPES[p[1]]) for p in props])
                rows = np.frombuffer(buf, dtype=dt, count=count, offset=off)
                off += dt.itemsize * count
                if not {"x", "y", "z"} <= set(names):
                    raise MeshFormatError(f"{path}: vertex lacks x/y/z")
                vertices = np.stack(
                    [rows["x"], rows["y"], rows["z"]], axis=1).astype(np.float64)
            elif name == "face":
                if len(props) != 1 or props[0][0] != "list":
                    raise MeshFormatError(f"{path}: unsupported face properties")
                _, cnt_t, item_t, _ = props[0]
                cnt_dt = np.dtype("<" + _PLY_DTYPES[cnt_t])
                item_dt = np.dtype("<" + _PLY_DTYPES[item_t])
                for _ in range(count):
                    ln = int(np.frombuffer(buf, cnt_dt, 1, off)[0])
                    off += cnt_dt.itemsize
                    poly = np.frombuffer(buf, item_dt, ln, off).tolist()
                    off += item_dt.itemsize * ln
                    for a, b in zip(poly[1:], poly[2:]):
                        faces.append([poly[0], a, b])
            else:
                row = sum(np.dtype("<" + _PLY_DTYPES[p[1]]).itemsize
                          for p in props if p[0] != "list")
                if any(p[0] == "list" for p in props):
                    raise MeshFormatError(f"{path}: unsupported list element {name!r}")
                off += row * count
    if vertices is None:
        raise MeshFormatError(f"{path}: no vertex element")
    return (np.ascontiguousarray(vertices, dtype=np.float64),
            np.asarray(faces, dtype=np.int64).reshape(-1, 3))


def _load_stl(path):
    with open(path, "rb") as fh:
        data = fh.read()
    if len(data) < 84:
        raise MeshFormatError(f"{path}: truncated STL")
    if data[:5] == b"solid" and b"facet normal" in data[:1024]:
        raise MeshFormatError(f"{path}: ASCII STL not supported (binary only)")
    (count,) = struct.unpack_from("<I", data, 80)
    if len(data) < 84 + 50 * count:
        raise MeshFormatError(f"{path}: truncated STL body")
    rec = np.dtype([("normal", "<f4", 3), ("verts", "<f4", (3, 3)), ("attr", "<u2")])
    tris = np.frombuffer(data, dtype=rec, count=count, offset=84)["verts"]
    flat = tris.reshape(-1, 3).astype(np.float64)
    # weld exactly coincident corners so the mesh has shared connectivity
    uniq, inverse = np.unique(flat, axis=0, return_inverse=True)
    faces = inverse.reshape(-1, 3).astype(np.int64)
    return uniq, faces


def save_mesh(mesh, path):
    """Write OBJ or binary little-endian PLY (doubles; bit-exact round-trip)."""
    path = str(path)
    lower = path.lower()
    if lower.endswith(".obj"):
        with open(path, "w") as fh:
            for x, y, z in mesh.vertices:
                fh.write(f"v {x!r} {y!r} {z!r}\n")
            for a, b, c in mesh.faces:
                fh.write(f"f {a + 1} {b + 1} {c + 1}\n")
    elif lower.endswith(".ply"):
        with open(path, "wb") as fh:
            header = (
                "ply\nformat binary_little_endian 1.0\n"
                f"element vertex {mesh.n_vertices}\n"
                "property double x\nproperty double y\nproperty double z\n"
                f"element face {mesh.n_faces}\n"
                "property list uchar int vertex_indices\nend_header\n"
            )
            fh.write(header.encode("ascii"))
            fh.write(np.ascontiguousarray(mesh.vertices, dtype="<f8").tobytes())
            face_rec = np.empty(
                mesh.n_faces, dtype=[("n", "u1"), ("idx", "<i4", 3)])
            face_rec["n"] = 3
            face_rec["idx"] = mesh.faces
            fh.write(face_rec.tobytes())
    else:
        raise MeshFormatError(f"{path}: unsupported output format")
