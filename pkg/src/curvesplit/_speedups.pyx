# cython: language_level=3
"""Compiled kernels: loop counting over smoothing masks and batched
segment-pair intersection.  Mirrors ``_purekern`` exactly."""

import numpy as np

cimport cython
from libc.stdlib cimport free, malloc

BACKEND = "compiled"


@cython.boundscheck(False)
@cython.wraparound(False)
cdef inline int _walk_count(const long long* mate, int n, unsigned long long mask,
                            char* seen) nogil:
    cdef int loops = 0
    cdef int start, p, q, k, s
    for p in range(n):
        seen[p] = 0
    for start in range(n):
        if seen[start]:
            continue
        loops += 1
        p = start
        while not seen[p]:
            seen[p] = 1
            q = <int> mate[p]
            seen[q] = 1
            k = q >> 2
            s = q & 3
            if (mask >> k) & 1:
                s = s ^ 3
            else:
                s = s ^ 1
            p = (k << 2) | s
    return loops


def count_loops(mate, mask):
    cdef long long[::1] m = np.ascontiguousarray(mate, dtype=np.int64)
    cdef int n = m.shape[0]
    cdef unsigned long long mk = <unsigned long long> mask
    cdef char* seen = <char*> malloc(n if n else 1)
    if seen == NULL:
        raise MemoryError()
    try:
        return _walk_count(&m[0] if n else NULL, n, mk, seen)
    finally:
        free(seen)


@cython.boundscheck(False)
@cython.wraparound(False)
def count_loops_batch(mate, masks):
    cdef long long[::1] m = np.ascontiguousarray(mate, dtype=np.int64)
    cdef long long[::1] mk = np.ascontiguousarray(masks, dtype=np.int64)
    cdef int n = m.shape[0]
    out_arr = np.empty(mk.shape[0], dtype=np.int64)
    cdef long long[::1] out = out_arr
    cdef char* seen = <char*> malloc(n if n else 1)
    if seen == NULL:
        raise MemoryError()
    cdef Py_ssize_t i
    try:
        with nogil:
            for i in range(mk.shape[0]):
                out[i] = _walk_count(&m[0] if n else NULL, n,
                                     <unsigned long long> mk[i], seen)
    finally:
        free(seen)
    return out_arr


def loop_labels(mate, mask):
    cdef long long[::1] m = np.ascontiguousarray(mate, dtype=np.int64)
    cdef int n = m.shape[0]
    cdef unsigned long long mk = <unsigned long long> mask
    labels = [-1] * n
    cdef int loop = 0, p, q, k, s
    for start in range(n):
        if labels[start] >= 0:
            continue
        p = start
        while labels[p] < 0:
            labels[p] = loop
            q = <int> m[p]
            labels[q] = loop
            k = q >> 2
            s = q & 3
            if (mk >> k) & 1:
                s = s ^ 3
            else:
                s = s ^ 1
            p = (k << 2) | s
        loop += 1
    return labels


@cython.boundscheck(False)
@cython.wraparound(False)
def seg_hits(segs, pairs, double margin, double sin_floor):
    cdef double[:, ::1] S = np.ascontiguousarray(segs, dtype=np.float64)
    cdef long long[:, ::1] P = np.ascontiguousarray(pairs, dtype=np.int64)
    cdef Py_ssize_t m = P.shape[0]
    hit_rows, ts, us, sins, flagged = [], [], [], [], []
    cdef Py_ssize_t r
    cdef long long i, j
    cdef double d1x, d1y, d2x, d2y, qx, qy, denom, n1, n2, scale, sa, t, u
    cdef double alox, aloy, ahix, ahiy, blox, bloy, bhix, bhiy
    for r in range(m):
        i = P[r, 0]
        j = P[r, 1]
        d1x = S[i, 2] - S[i, 0]
        d1y = S[i, 3] - S[i, 1]
        d2x = S[j, 2] - S[j, 0]
        d2y = S[j, 3] - S[j, 1]
        qx = S[j, 0] - S[i, 0]
        qy = S[j, 1] - S[i, 1]
        denom = d1x * d2y - d1y * d2x
        n1 = (d1x * d1x + d1y * d1y) ** 0.5
        n2 = (d2x * d2x + d2y * d2y) ** 0.5
        scale = n1 * n2
        if scale < 1e-300:
            scale = 1e-300
        sa = denom / scale
        if sa < sin_floor and sa > -sin_floor:
            # near-parallel: flag when the boxes overlap
            alox = min(S[i, 0], S[i, 2]); ahix = max(S[i, 0], S[i, 2])
            aloy = min(S[i, 1], S[i, 3]); ahiy = max(S[i, 1], S[i, 3])
            blox = min(S[j, 0], S[j, 2]); bhix = max(S[j, 0], S[j, 2])
            bloy = min(S[j, 1], S[j, 3]); bhiy = max(S[j, 1], S[j, 3])
            if alox <= bhix and blox <= ahix and aloy <= bhiy and bloy <= ahiy:
                flagged.append(r)
            continue
        t = (qx * d2y - qy * d2x) / denom
        u = (qx * d1y - qy * d1x) / denom
        if -margin <= t <= 1.0 + margin and -margin <= u <= 1.0 + margin:
            hit_rows.append(r)
            ts.append(t)
            us.append(u)
            sins.append(sa)
    return (
        np.array(hit_rows, dtype=np.int64),
        np.array(ts, dtype=np.float64),
        np.array(us, dtype=np.float64),
        np.array(sins, dtype=np.float64),
        np.array(flagged, dtype=np.int64),
    )
