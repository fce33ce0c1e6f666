"""Pure-Python kernel implementations.

These mirror the Cython kernels in ``_core.pyx`` operation for operation:
same arc ordering, same edge-function expressions, same tie rules, so both
backends produce bit-identical buffers and identical min cuts. The compiled
module is built with -ffp-contract=off for exactly this reason.
"""

import math

import numpy as np

FACE_EMPTY = -1


def rasterize(pts, faces, width, height):
    """Z-buffer rasterization of screen-space triangles.

    pts: (N, 3) float64, columns = pixel x, pixel y, depth. Pixel (row i,
    col j) has its center at (j + 0.5, i + 0.5); smaller depth wins, ties
    keep the earlier face.

    Returns (face_id int32 (H,W), bary float64 (H,W,3), depth float64 (H,W)).
    Empty pixels carry face_id -1, zero barycentrics and +inf depth.
    """
    face_id = np.full((height, width), FACE_EMPTY, dtype=np.int32)
    bary = np.zeros((height, width, 3), dtype=np.float64)
    depth = np.full((height, width), np.inf, dtype=np.float64)
    if len(faces) == 0:
        return face_id, bary, depth

    xs = pts[:, 0]
    ys = pts[:, 1]
    zs = pts[:, 2]
    for f in range(len(faces)):
        ia, ib, ic = faces[f]
        ax, ay, az = xs[ia], ys[ia], zs[ia]
        bx, by, bz = xs[ib], ys[ib], zs[ib]
        cx, cy, cz = xs[ic], ys[ic], zs[ic]

        area = (bx - ax) * (cy - ay) - (by - ay) * (cx - ax)
        if area == 0.0:
            continue

        j0 = max(0, int(math.ceil(min(ax, bx, cx) - 0.5)))
        j1 = min(width - 1, int(math.floor(max(ax, bx, cx) - 0.5)))
        i0 = max(0, int(math.ceil(min(ay, by, cy) - 0.5)))
        i1 = min(height - 1, int(math.floor(max(ay, by, cy) - 0.5)))
        if j0 > j1 or i0 > i1:
            continue

        px = np.arange(j0, j1 + 1, dtype=np.float64) + 0.5
        py = (np.arange(i0, i1 + 1, dtype=np.float64) + 0.5)[:, None]

        # edge deltas precomputed so the expressions match the C kernel
        d0x, d0y = cx - bx, cy - by
        d1x, d1y = ax - cx, ay - cy
        d2x, d2y = bx - ax, by - ay
        e0 = d0x * (py - by) - d0y * (px - bx)
        e1 = d1x * (py - cy) - d1y * (px - cx)
        e2 = d2x * (py - ay) - d2y * (px - ax)

        if area > 0.0:
            inside = (e0 >= 0.0) & (e1 >= 0.0) & (e2 >= 0.0)
        else:
            inside = (e0 <= 0.0) & (e1 <= 0.0) & (e2 <= 0.0)
        if not inside.any():
            continue

        with np.errstate(divide="ignore", invalid="ignore"):
            s = e0 + e1 + e2
            b0 = e0 / s
            b1 = e1 / s
            b2 = e2 / s
            z = b0 * az + b1 * bz + b2 * cz

        sub = (slice(i0, i1 + 1), slice(j0, j1 + 1))
        upd = inside & (z < depth[sub])
        if not upd.any():
            continue
        depth[sub] = np.where(upd, z, depth[sub])
        face_id[sub] = np.where(upd, np.int32(f), face_id[sub])
        bary[sub[0], sub[1], 0] = np.where(upd, b0, bary[sub[0], sub[1], 0])
        bary[sub[0], sub[1], 1] = np.where(upd, b1, bary[sub[0], sub[1], 1])
        bary[sub[0], sub[1], 2] = np.where(upd, b2, bary[sub[0], sub[1], 2])
    return face_id, bary, depth


def max_flow(n, source, sink, to, cap, csr, start):
    """Dinic max-flow on a prebuilt CSR residual graph.

    Arguments come from ``flowgraph.build_csr``: ``to``/``cap`` hold 2m
    interleaved arcs (reverse of arc e is e^1), ``csr`` lists arc ids sorted
    by tail node and ``start`` holds the per-node offsets. ``cap`` is
    modified in place to the final residual.

    Returns (flow value, source-side bool array of the min cut).
    """
    to_l = to.tolist()
    cap_l = cap.tolist()
    csr_l = csr.tolist()
    start_l = start.tolist()

    INF = 1 << 62
    level = [-1] * n
    it = [0] * n
    queue = [0] * n
    path_arc = [0] * n
    path_tail = [0] * n
    flow = 0

    while True:
        for i in range(n):
            level[i] = -1
        level[source] = 0
        queue[0] = source
        qh, qt = 0, 1
        while qh < qt:
            u = queue[qh]
            qh += 1
            for p in range(start_l[u], start_l[u + 1]):
                e = csr_l[p]
                v = to_l[e]
                if cap_l[e] > 0 and level[v] < 0:
                    level[v] = level[u] + 1
                    queue[qt] = v
                    qt += 1
        if level[sink] < 0:
            break

        for i in range(n):
            it[i] = start_l[i]
        u = source
        plen = 0
        while True:
            if u == sink:
                aug = INF
                for i in range(plen):
                    c = cap_l[path_arc[i]]
                    if c < aug:
                        aug = c
                flow += aug
                for i in range(plen):
                    e = path_arc[i]
                    cap_l[e] -= aug
                    cap_l[e ^ 1] += aug
                nlen = plen
                for i in range(plen):
                    if cap_l[path_arc[i]] == 0:
                        nlen = i
                        break
                plen = nlen
                u = path_tail[plen]
                continue
            pos = it[u]
            end = start_l[u + 1]
            found = -1
            while pos < end:
                e = csr_l[pos]
                v = to_l[e]
                if cap_l[e] > 0 and level[v] == level[u] + 1:
                    found = e
                    break
                pos += 1
            it[u] = pos
            if found >= 0:
                path_arc[plen] = found
                path_tail[plen] = u
                plen += 1
                u = to_l[found]
            else:
                if u == source:
                    break
                level[u] = -2
                plen -= 1
                u = path_tail[plen]
                it[u] += 1

    np.copyto(cap, np.asarray(cap_l, dtype=np.int64))

    side = np.zeros(n, dtype=bool)
    side[source] = True
    queue[0] = source
    qh, qt = 0, 1
    while qh < qt:
        u = queue[qh]
        qh += 1
        for p in range(start_l[u], start_l[u + 1]):
            e = csr_l[p]
            v = to_l[e]
            if cap_l[e] > 0 and not side[v]:
                side[v] = True
                queue[qt] = v
                qt += 1
    return flow, side
