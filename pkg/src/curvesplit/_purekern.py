"""Pure-Python reference kernels.

Same contract as the compiled module ``_speedups``; selected at import by
``curvesplit.kernels`` when the extension is unavailable or disabled.

Port encoding for loop counting: a diagram with j crossings (in a fixed
order) exposes 4j ports, port ``4*k + s`` being slot ``s`` of the k-th
crossing.  ``mate[p]`` is the port at the far end of the arc plugged into
port ``p``.  A smoothing mask assigns one reconnection per crossing: with
bit k clear, slots pair as (0,1)(2,3) (partner = s ^ 1); with bit k set,
as (0,3)(1,2) (partner = s ^ 3).
"""

from __future__ import annotations

import numpy as np

BACKEND = "pure"


def _partner(port: int, mask: int) -> int:
    k, s = port >> 2, port & 3
    return (k << 2) | (s ^ (3 if (mask >> k) & 1 else 1))


def count_loops(mate, mask: int) -> int:
    """Number of cycles of the alternating walk arc-hop / smoothing-hop."""
    n = len(mate)
    seen = bytearray(n)
    loops = 0
    for start in range(n):
        if seen[start]:
            continue
        loops += 1
        p = start
        while not seen[p]:
            seen[p] = 1
            q = mate[p]
            seen[q] = 1
            p = _partner(q, mask)
    return loops


def count_loops_batch(mate, masks) -> np.ndarray:
    mate = list(mate)
    return np.array([count_loops(mate, int(m)) for m in masks], dtype=np.int64)


def loop_labels(mate, mask: int) -> list[int]:
    """Label each port with a loop index; loops numbered by smallest port."""
    n = len(mate)
    labels = [-1] * n
    loop = 0
    for start in range(n):
        if labels[start] >= 0:
            continue
        p = start
        while labels[p] < 0:
            labels[p] = loop
            q = mate[p]
            labels[q] = loop
            p = _partner(q, mask)
        loop += 1
    return labels


def seg_hits(segs, pairs, margin: float, sin_floor: float):
    """Intersect candidate segment pairs.

    ``segs``: float64 (n, 4) rows (x0, y0, x1, y1); ``pairs``: int64 (m, 2)
    candidate index pairs.  Returns ``(hit_rows, t, u, sin_angle, flagged)``
    where ``hit_rows`` indexes into ``pairs`` for transversal hits with both
    parameters in [-margin, 1 + margin], and ``flagged`` indexes pairs that
    are near-parallel (|sin| < sin_floor) with overlapping boxes — the
    caller decides whether those violate genericity.
    """
    segs = np.asarray(segs, dtype=np.float64)
    pairs = np.asarray(pairs, dtype=np.int64)
    if len(pairs) == 0:
        empty = np.empty(0)
        return np.empty(0, dtype=np.int64), empty, empty, empty, np.empty(0, dtype=np.int64)
    a = segs[pairs[:, 0]]
    b = segs[pairs[:, 1]]
    d1 = a[:, 2:4] - a[:, 0:2]
    d2 = b[:, 2:4] - b[:, 0:2]
    qp = b[:, 0:2] - a[:, 0:2]
    denom = d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0]
    n1 = np.hypot(d1[:, 0], d1[:, 1])
    n2 = np.hypot(d2[:, 0], d2[:, 1])
    scale = np.maximum(n1 * n2, 1e-300)
    sin_angle = denom / scale
    cross_t = qp[:, 0] * d2[:, 1] - qp[:, 1] * d2[:, 0]
    cross_u = qp[:, 0] * d1[:, 1] - qp[:, 1] * d1[:, 0]
    with np.errstate(divide="ignore", invalid="ignore"):
        t = cross_t / denom
        u = cross_u / denom
    nonpar = np.abs(sin_angle) >= sin_floor
    inside = (
        nonpar
        & (t >= -margin)
        & (t <= 1.0 + margin)
        & (u >= -margin)
        & (u <= 1.0 + margin)
    )
    # near-parallel pairs whose boxes overlap get flagged for a closer look
    par = ~nonpar
    if par.any():
        alo = np.minimum(a[:, 0:2], a[:, 2:4])
        ahi = np.maximum(a[:, 0:2], a[:, 2:4])
        blo = np.minimum(b[:, 0:2], b[:, 2:4])
        bhi = np.maximum(b[:, 0:2], b[:, 2:4])
        boxes = np.all((alo <= bhi) & (blo <= ahi), axis=1)
        flagged = np.nonzero(par & boxes)[0].astype(np.int64)
    else:
        flagged = np.empty(0, dtype=np.int64)
    hit_rows = np.nonzero(inside)[0].astype(np.int64)
    return hit_rows, t[hit_rows], u[hit_rows], sin_angle[hit_rows], flagged
