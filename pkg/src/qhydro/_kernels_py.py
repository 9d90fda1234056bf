"""Pure-numpy implementations of the hot kernels.

These are the reference versions; ``_kernels.pyx`` mirrors them loop for loop
and must produce identical output.
"""
from __future__ import annotations

import numpy as np

TWO_PI = 2.0 * np.pi

# Segment table: case index -> tuple of (edge, edge) pairs.  Saddle cases 5 and
# 10 are listed separately because they depend on the cell-centre value.
_SEGMENTS = {
    1: ((3, 0),), 2: ((0, 1),), 3: ((3, 1),), 4: ((1, 2),), 6: ((0, 2),),
    7: ((3, 2),), 8: ((2, 3),), 9: ((0, 2),), 11: ((1, 2),), 12: ((1, 3),),
    13: ((0, 1),), 14: ((3, 0),),
}
_SADDLE = {
    (5, True): ((0, 1), (2, 3)), (5, False): ((3, 0), (1, 2)),
    (10, True): ((3, 0), (1, 2)), (10, False): ((0, 1), (2, 3)),
}


def integrate_lines(psi, grad, mask, h, ref, seed):
    """Integrate the phase of ``psi`` along the last axis of 2-D line bundles.

    ``psi``/``grad``/``mask`` have shape (n_lines, n); ``grad`` is the phase
    gradient along the line.  Each line starts at ``seed`` at index ``ref`` and
    advances by the wrapped phase increment between consecutive active points;
    across an unbroken pair of neighbours the 2 pi branch is fixed by the
    trapezoid estimate of the gradient.  Inactive points and lines with a NaN
    seed come out NaN.
    """
    psi = np.asarray(psi)
    n_lines, n = psi.shape
    out = np.full((n_lines, n), np.nan)
    seed = np.asarray(seed, dtype=float)
    live = np.isfinite(seed) & mask[:, ref]
    out[live, ref] = seed[live]
    for direction in (1, -1):
        last_val = np.where(live, seed, np.nan)
        last_psi = psi[:, ref].copy()
        last_grad = grad[:, ref].copy()
        last_idx = np.full(n_lines, ref)
        alive = live.copy()
        j = ref + direction
        while 0 <= j < n:
            on = alive & mask[:, j]
            if np.any(on):
                inc = np.angle(psi[on, j] * np.conj(last_psi[on]))
                adjacent = np.abs(j - last_idx[on]) == 1
                trap = direction * 0.5 * (grad[on, j] + last_grad[on]) * h
                inc = np.where(adjacent, inc + TWO_PI * np.round((trap - inc) / TWO_PI), inc)
                val = last_val[on] + inc
                out[on, j] = val
                last_val[on] = val
                last_psi[on] = psi[on, j]
                last_grad[on] = grad[on, j]
                last_idx[on] = j
            j += direction
    return out


def _edge_points(f, level):
    """Crossing parameter on every horizontal (axis-0) and vertical (axis-1) edge."""
    with np.errstate(divide="ignore", invalid="ignore"):
        th = (level - f[:-1, :]) / (f[1:, :] - f[:-1, :])
        tv = (level - f[:, :-1]) / (f[:, 1:] - f[:, :-1])
    return th, tv


def marching_squares(f, level):
    """Contour segments of ``f == level`` in index coordinates.

    Returns ``(segments, cells, edges)``: segments (n, 4) as x0, y0, x1, y1;
    the flat cell index of each segment; and the two global edge ids of its
    endpoints (horizontal edges first, then vertical), which adjacent cells
    share exactly.
    """
    f = np.ascontiguousarray(f, dtype=float)
    nx, ny = f.shape
    th, tv = _edge_points(f, level)
    n_h = (nx - 1) * ny
    inside = f >= level
    case = (inside[:-1, :-1].astype(np.int64)
            | (inside[1:, :-1].astype(np.int64) << 1)
            | (inside[1:, 1:].astype(np.int64) << 2)
            | (inside[:-1, 1:].astype(np.int64) << 3))
    centre = 0.25 * (f[:-1, :-1] + f[1:, :-1] + f[1:, 1:] + f[:-1, 1:]) >= level

    segs, cells, edges = [], [], []
    ci, cj = np.nonzero((case != 0) & (case != 15))
    for i, j in zip(ci.tolist(), cj.tolist()):
        c = int(case[i, j])
        pairs = _SADDLE[(c, bool(centre[i, j]))] if c in (5, 10) else _SEGMENTS[c]
        for ea, eb in pairs:
            pa, ida = _edge(ea, i, j, th, tv, ny, n_h)
            pb, idb = _edge(eb, i, j, th, tv, ny, n_h)
            segs.append((pa[0], pa[1], pb[0], pb[1]))
            cells.append(i * (ny - 1) + j)
            edges.append((ida, idb))
    if not segs:
        return np.zeros((0, 4)), np.zeros(0, dtype=np.int64), np.zeros((0, 2), dtype=np.int64)
    return np.array(segs, dtype=float), np.array(cells, dtype=np.int64), np.array(edges, dtype=np.int64)


def _edge(e, i, j, th, tv, ny, n_h):
    if e == 0:
        return (i + th[i, j], float(j)), i * ny + j
    if e == 1:
        return (float(i + 1), j + tv[i + 1, j]), n_h + (i + 1) * (ny - 1) + j
    if e == 2:
        return (i + th[i, j + 1], float(j + 1)), i * ny + j + 1
    return (float(i), j + tv[i, j]), n_h + i * (ny - 1) + j


def segment_crossings(seg_a, cell_a, seg_b, cell_b):
    """Intersections between segments of two families that share a grid cell.

    Returns (points (n, 2), index_a (n,), index_b (n,)).
    """
    order_b = np.argsort(cell_b, kind="stable")
    sorted_b = cell_b[order_b]
    pts, ia, ib = [], [], []
    for a in range(len(cell_a)):
        lo = np.searchsorted(sorted_b, cell_a[a], side="left")
        hi = np.searchsorted(sorted_b, cell_a[a], side="right")
        if lo == hi:
            continue
        x0, y0, x1, y1 = seg_a[a]
        for b in order_b[lo:hi]:
            u0, v0, u1, v1 = seg_b[b]
            dx, dy = x1 - x0, y1 - y0
            du, dv = u1 - u0, v1 - v0
            den = dx * dv - dy * du
            if den == 0.0:
                continue
            s = ((u0 - x0) * dv - (v0 - y0) * du) / den
            t = ((u0 - x0) * dy - (v0 - y0) * dx) / den
            if 0.0 <= s <= 1.0 and 0.0 <= t <= 1.0:
                pts.append((x0 + s * dx, y0 + s * dy))
                ia.append(a)
                ib.append(int(b))
    if not pts:
        return np.zeros((0, 2)), np.zeros(0, dtype=np.int64), np.zeros(0, dtype=np.int64)
    return np.array(pts), np.array(ia, dtype=np.int64), np.array(ib, dtype=np.int64)
