# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot kernels; see ``_kernels_py`` for the reference semantics."""
import numpy as np
cimport numpy as cnp
from libc.math cimport atan2, rint, NAN, isfinite

cnp.import_array()

cdef double TWO_PI = 6.283185307179586

# Per case: number of segments, then up to two (edge, edge) pairs.  Saddles use
# the row for "centre inside"; the alternative is in SADDLE_OUT.
cdef int SEG[16][5]
cdef int SADDLE_OUT[16][5]


cdef void _init_tables():
    cdef int c, k
    for c in range(16):
        for k in range(5):
            SEG[c][k] = -1
            SADDLE_OUT[c][k] = -1
    SEG[0][0] = 0
    SEG[15][0] = 0
    SEG[1][:] = [1, 3, 0, -1, -1]
    SEG[2][:] = [1, 0, 1, -1, -1]
    SEG[3][:] = [1, 3, 1, -1, -1]
    SEG[4][:] = [1, 1, 2, -1, -1]
    SEG[5][:] = [2, 0, 1, 2, 3]
    SADDLE_OUT[5][:] = [2, 3, 0, 1, 2]
    SEG[6][:] = [1, 0, 2, -1, -1]
    SEG[7][:] = [1, 3, 2, -1, -1]
    SEG[8][:] = [1, 2, 3, -1, -1]
    SEG[9][:] = [1, 0, 2, -1, -1]
    SEG[10][:] = [2, 3, 0, 1, 2]
    SADDLE_OUT[10][:] = [2, 0, 1, 2, 3]
    SEG[11][:] = [1, 1, 2, -1, -1]
    SEG[12][:] = [1, 1, 3, -1, -1]
    SEG[13][:] = [1, 0, 1, -1, -1]
    SEG[14][:] = [1, 3, 0, -1, -1]


_init_tables()


def integrate_lines(psi, grad, mask, double h, Py_ssize_t ref, seed):
    cdef double complex[:, :] P = np.ascontiguousarray(psi, dtype=np.complex128)
    cdef double[:, :] G = np.ascontiguousarray(grad, dtype=np.float64)
    cdef cnp.uint8_t[:, :] M = np.ascontiguousarray(mask, dtype=np.uint8)
    cdef double[:] S = np.ascontiguousarray(seed, dtype=np.float64)
    cdef Py_ssize_t n_lines = P.shape[0], n = P.shape[1]
    out_arr = np.full((n_lines, n), np.nan)
    cdef double[:, :] out = out_arr
    cdef Py_ssize_t line, j, last_idx
    cdef int direction
    cdef double last_val, last_grad, inc, trap, re, im
    cdef double complex last_psi, z
    for line in range(n_lines):
        if not isfinite(S[line]) or not M[line, ref]:
            continue
        out[line, ref] = S[line]
        for direction in (1, -1):
            last_val = S[line]
            last_psi = P[line, ref]
            last_grad = G[line, ref]
            last_idx = ref
            j = ref + direction
            while 0 <= j < n:
                if M[line, j]:
                    z = P[line, j] * last_psi.conjugate()
                    inc = atan2(z.imag, z.real)
                    if j - last_idx == 1 or last_idx - j == 1:
                        trap = direction * 0.5 * (G[line, j] + last_grad) * h
                        inc = inc + TWO_PI * rint((trap - inc) / TWO_PI)
                    last_val = last_val + inc
                    out[line, j] = last_val
                    last_psi = P[line, j]
                    last_grad = G[line, j]
                    last_idx = j
                j += direction
    return out_arr


cdef inline double _t(double fa, double fb, double level):
    return (level - fa) / (fb - fa)


def marching_squares(f, double level):
    cdef double[:, :] F = np.ascontiguousarray(f, dtype=np.float64)
    cdef Py_ssize_t nx = F.shape[0], ny = F.shape[1]
    cdef Py_ssize_t n_h = (nx - 1) * ny
    cdef Py_ssize_t cap = 2 * (nx - 1) * (ny - 1) + 1
    seg_arr = np.empty((cap, 4))
    cell_arr = np.empty(cap, dtype=np.int64)
    edge_arr = np.empty((cap, 2), dtype=np.int64)
    cdef double[:, :] seg = seg_arr
    cdef cnp.int64_t[:] cells = cell_arr
    cdef cnp.int64_t[:, :] edges = edge_arr
    cdef Py_ssize_t i, j, count = 0
    cdef int c, s, e, k, nseg
    cdef int *row
    cdef double px[4]
    cdef double py[4]
    cdef cnp.int64_t eid[4]
    cdef double f0, f1, f2, f3
    for i in range(nx - 1):
        for j in range(ny - 1):
            f0 = F[i, j]
            f1 = F[i + 1, j]
            f2 = F[i + 1, j + 1]
            f3 = F[i, j + 1]
            c = (f0 >= level) | ((f1 >= level) << 1) | ((f2 >= level) << 2) | ((f3 >= level) << 3)
            if c == 0 or c == 15:
                continue
            row = SEG[c]
            if (c == 5 or c == 10) and not (0.25 * (f0 + f1 + f2 + f3) >= level):
                row = SADDLE_OUT[c]
            # canonical lower-to-upper corner interpolation so shared edges agree
            px[0] = i + _t(f0, f1, level); py[0] = j; eid[0] = i * ny + j
            px[1] = i + 1; py[1] = j + _t(f1, f2, level); eid[1] = n_h + (i + 1) * (ny - 1) + j
            px[2] = i + _t(f3, f2, level); py[2] = j + 1; eid[2] = i * ny + j + 1
            px[3] = i; py[3] = j + _t(f0, f3, level); eid[3] = n_h + i * (ny - 1) + j
            nseg = row[0]
            for s in range(nseg):
                e = row[1 + 2 * s]
                k = row[2 + 2 * s]
                seg[count, 0] = px[e]
                seg[count, 1] = py[e]
                seg[count, 2] = px[k]
                seg[count, 3] = py[k]
                cells[count] = i * (ny - 1) + j
                edges[count, 0] = eid[e]
                edges[count, 1] = eid[k]
                count += 1
    return seg_arr[:count].copy(), cell_arr[:count].copy(), edge_arr[:count].copy()


def segment_crossings(seg_a, cell_a, seg_b, cell_b):
    cdef double[:, :] A = np.ascontiguousarray(seg_a, dtype=np.float64)
    cdef double[:, :] B = np.ascontiguousarray(seg_b, dtype=np.float64)
    ca_arr = np.ascontiguousarray(cell_a, dtype=np.int64)
    order_arr = np.argsort(np.asarray(cell_b, dtype=np.int64), kind="stable").astype(np.int64)
    sorted_arr = np.ascontiguousarray(np.asarray(cell_b, dtype=np.int64)[order_arr])
    cdef cnp.int64_t[:] ca = ca_arr
    cdef cnp.int64_t[:] order = order_arr
    cdef cnp.int64_t[:] sb = sorted_arr
    cdef Py_ssize_t na = A.shape[0], nb = sb.shape[0]
    pts, ia, ib = [], [], []
    cdef Py_ssize_t a, b, lo, hi, mid, q
    cdef double x0, y0, x1, y1, u0, v0, u1, v1, dx, dy, du, dv, den, s, t
    for a in range(na):
        lo = 0
        hi = nb
        while lo < hi:
            mid = (lo + hi) // 2
            if sb[mid] < ca[a]:
                lo = mid + 1
            else:
                hi = mid
        x0 = A[a, 0]; y0 = A[a, 1]; x1 = A[a, 2]; y1 = A[a, 3]
        q = lo
        while q < nb and sb[q] == ca[a]:
            b = order[q]
            u0 = B[b, 0]; v0 = B[b, 1]; u1 = B[b, 2]; v1 = B[b, 3]
            dx = x1 - x0; dy = y1 - y0
            du = u1 - u0; dv = v1 - v0
            den = dx * dv - dy * du
            if den != 0.0:
                s = ((u0 - x0) * dv - (v0 - y0) * du) / den
                t = ((u0 - x0) * dy - (v0 - y0) * dx) / den
                if 0.0 <= s <= 1.0 and 0.0 <= t <= 1.0:
                    pts.append((x0 + s * dx, y0 + s * dy))
                    ia.append(a)
                    ib.append(b)
            q += 1
    if not pts:
        return np.zeros((0, 2)), np.zeros(0, dtype=np.int64), np.zeros(0, dtype=np.int64)
    return np.array(pts), np.array(ia, dtype=np.int64), np.array(ib, dtype=np.int64)
