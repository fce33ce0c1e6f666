# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled kernels: triangle rasterization and Dinic max-flow.

Must stay semantically in lockstep with pykernels.py (same arc order, same
edge functions, same tie rules); the parity tests assert bit-identical
output. Keep -ffp-contract=off in setup.py so float expressions round the
same way as numpy's.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport INFINITY, ceil, floor

cnp.import_array()

FACE_EMPTY = -1


def rasterize(const double[:, ::1] pts, const cnp.int64_t[:, ::1] faces,
              int width, int height):
    """See pykernels.rasterize."""
    cdef cnp.ndarray[cnp.int32_t, ndim=2] face_id_arr = np.full(
        (height, width), FACE_EMPTY, dtype=np.int32)
    cdef cnp.ndarray[cnp.float64_t, ndim=3] bary_arr = np.zeros(
        (height, width, 3), dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=2] depth_arr = np.full(
        (height, width), np.inf, dtype=np.float64)
    cdef cnp.int32_t[:, ::1] face_id = face_id_arr
    cdef double[:, :, ::1] bary = bary_arr
    cdef double[:, ::1] depth = depth_arr

    cdef Py_ssize_t f, ia, ib, ic, i, j
    cdef int i0, i1, j0, j1
    cdef double ax, ay, az, bx, by, bz, cx, cy, cz
    cdef double area, minx, maxx, miny, maxy
    cdef double d0x, d0y, d1x, d1y, d2x, d2y
    cdef double px, py, e0, e1, e2, s, b0, b1, b2, z
    cdef bint inside

    for f in range(faces.shape[0]):
        ia = faces[f, 0]
        ib = faces[f, 1]
        ic = faces[f, 2]
        ax = pts[ia, 0]; ay = pts[ia, 1]; az = pts[ia, 2]
        bx = pts[ib, 0]; by = pts[ib, 1]; bz = pts[ib, 2]
        cx = pts[ic, 0]; cy = pts[ic, 1]; cz = pts[ic, 2]

        area = (bx - ax) * (cy - ay) - (by - ay) * (cx - ax)
        if area == 0.0:
            continue

        minx = ax
        if bx < minx: minx = bx
        if cx < minx: minx = cx
        maxx = ax
        if bx > maxx: maxx = bx
        if cx > maxx: maxx = cx
        miny = ay
        if by < miny: miny = by
        if cy < miny: miny = cy
        maxy = ay
        if by > maxy: maxy = by
        if cy > maxy: maxy = cy

        j0 = <int>ceil(minx - 0.5)
        if j0 < 0: j0 = 0
        j1 = <int>floor(maxx - 0.5)
        if j1 > width - 1: j1 = width - 1
        i0 = <int>ceil(miny - 0.5)
        if i0 < 0: i0 = 0
        i1 = <int>floor(maxy - 0.5)
        if i1 > height - 1: i1 = height - 1
        if j0 > j1 or i0 > i1:
            continue

        d0x = cx - bx; d0y = cy - by
        d1x = ax - cx; d1y = ay - cy
        d2x = bx - ax; d2y = by - ay

        for i in range(i0, i1 + 1):
            py = i + 0.5
            for j in range(j0, j1 + 1):
                px = j + 0.5
                e0 = d0x * (py - by) - d0y * (px - bx)
                e1 = d1x * (py - cy) - d1y * (px - cx)
                e2 = d2x * (py - ay) - d2y * (px - ax)
                if area > 0.0:
                    inside = e0 >= 0.0 and e1 >= 0.0 and e2 >= 0.0
                else:
                    inside = e0 <= 0.0 and e1 <= 0.0 and e2 <= 0.0
                if not inside:
                    continue
                s = e0 + e1 + e2
                b0 = e0 / s
                b1 = e1 / s
                b2 = e2 / s
                z = b0 * az + b1 * bz + b2 * cz
                if z < depth[i, j]:
                    depth[i, j] = z
                    face_id[i, j] = <cnp.int32_t>f
                    bary[i, j, 0] = b0
                    bary[i, j, 1] = b1
                    bary[i, j, 2] = b2
    return face_id_arr, bary_arr, depth_arr


def max_flow(int n, int source, int sink,
             const cnp.int64_t[::1] to, cnp.int64_t[::1] cap,
             const cnp.int64_t[::1] csr, const cnp.int64_t[::1] start):
    """See pykernels.max_flow. Modifies cap in place."""
    cdef cnp.ndarray[cnp.int64_t, ndim=1] level_arr = np.empty(n, dtype=np.int64)
    cdef cnp.ndarray[cnp.int64_t, ndim=1] it_arr = np.empty(n, dtype=np.int64)
    cdef cnp.ndarray[cnp.int64_t, ndim=1] queue_arr = np.empty(n, dtype=np.int64)
    cdef cnp.ndarray[cnp.int64_t, ndim=1] path_arc_arr = np.empty(n, dtype=np.int64)
    cdef cnp.ndarray[cnp.int64_t, ndim=1] path_tail_arr = np.empty(n, dtype=np.int64)
    cdef cnp.int64_t[::1] level = level_arr
    cdef cnp.int64_t[::1] it = it_arr
    cdef cnp.int64_t[::1] queue = queue_arr
    cdef cnp.int64_t[::1] path_arc = path_arc_arr
    cdef cnp.int64_t[::1] path_tail = path_tail_arr

    cdef cnp.int64_t INF = <cnp.int64_t>1 << 62
    cdef cnp.int64_t flow = 0, aug, c
    cdef Py_ssize_t i, qh, qt, u, v, p, pos, end, e, found, plen, nlen

    while True:
        for i in range(n):
            level[i] = -1
        level[source] = 0
        queue[0] = source
        qh = 0; qt = 1
        while qh < qt:
            u = queue[qh]
            qh += 1
            for p in range(start[u], start[u + 1]):
                e = csr[p]
                v = to[e]
                if cap[e] > 0 and level[v] < 0:
                    level[v] = level[u] + 1
                    queue[qt] = v
                    qt += 1
        if level[sink] < 0:
            break

        for i in range(n):
            it[i] = start[i]
        u = source
        plen = 0
        while True:
            if u == sink:
                aug = INF
                for i in range(plen):
                    c = cap[path_arc[i]]
                    if c < aug:
                        aug = c
                flow += aug
                for i in range(plen):
                    e = path_arc[i]
                    cap[e] -= aug
                    cap[e ^ 1] += aug
                nlen = plen
                for i in range(plen):
                    if cap[path_arc[i]] == 0:
                        nlen = i
                        break
                plen = nlen
                u = path_tail[plen]
                continue
            pos = it[u]
            end = start[u + 1]
            found = -1
            while pos < end:
                e = csr[pos]
                v = to[e]
                if cap[e] > 0 and level[v] == level[u] + 1:
                    found = e
                    break
                pos += 1
            it[u] = pos
            if found >= 0:
                path_arc[plen] = found
                path_tail[plen] = u
                plen += 1
                u = to[found]
            else:
                if u == source:
                    break
                level[u] = -2
                plen -= 1
                u = path_tail[plen]
                it[u] += 1

    cdef cnp.ndarray[cnp.uint8_t, ndim=1, cast=True] side_arr = np.zeros(n, dtype=bool)
    cdef cnp.uint8_t[::1] side = side_arr
    side[source] = 1
    queue[0] = source
    qh = 0; qt = 1
    while qh < qt:
        u = queue[qh]
        qh += 1
        for p in range(start[u], start[u + 1]):
            e = csr[p]
            v = to[e]
            if cap[e] > 0 and not side[v]:
                side[v] = 1
                queue[qt] = v
                qt += 1
    return flow, side_arr
