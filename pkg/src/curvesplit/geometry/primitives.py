"""Planar polyline geometry: frames, transversal self-intersections,
length-safe local surgeries, and diagram extraction from a frame.

Curves are closed polylines stored as (n, 2) float arrays without a
repeated endpoint.  A single tolerance governs genericity: the minimum
|sin| of a crossing angle and the minimum distance between two distinct
intersection points (a proxy for the no-tangency and no-triple-point
conditions).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .. import kernels
from ..diagram import Arc, CurveDiagram
from ..errors import GenericityError, InvariantError, ValidationError

DEFAULT_TOL = 1e-6


@dataclass(frozen=True)
class PolylineFrame:
    """One time slice of a homotopy: closed polylines in a planar chart."""

    time: float
    curves: tuple[np.ndarray, ...]

    def total_length(self) -> float:
        return float(sum(polyline_length(c) for c in self.curves))

    def to_json(self) -> dict:
        return {"t": self.time, "curves": [c.tolist() for c in self.curves]}

    @classmethod
    def from_json(cls, data) -> "PolylineFrame":
        curves = tuple(np.asarray(c, dtype=float) for c in data["curves"])
        for c in curves:
            if c.ndim != 2 or c.shape[1] != 2 or len(c) < 3:
                raise ValidationError("each curve needs at least 3 planar points")
        return cls(float(data["t"]), curves)


def polyline_length(p: np.ndarray) -> float:
    """Length of a closed polyline (last point joins back to the first)."""
    p = np.asarray(p, dtype=float)
    return float(np.linalg.norm(np.roll(p, -1, axis=0) - p, axis=1).sum())


def _segments(curves: Sequence[np.ndarray]):
    """Flatten curves into one segment table.

    Returns (segs (n,4), seg_curve, seg_index, per-curve segment counts).
    """
    rows = []
    seg_curve = []
    seg_index = []
    counts = []
    for ci, c in enumerate(curves):
        n = len(c)
        counts.append(n)
        nxt = np.roll(c, -1, axis=0)
        rows.append(np.hstack([c, nxt]))
        seg_curve.extend([ci] * n)
        seg_index.extend(range(n))
    return (
        np.vstack(rows),
        np.array(seg_curve),
        np.array(seg_index),
        counts,
    )


def _candidate_pairs(segs: np.ndarray, seg_curve, seg_index, counts) -> np.ndarray:
    """Bounding-box grid prefilter; excludes identical and same-curve
    adjacent segments (they always share an endpoint)."""
    lo = np.minimum(segs[:, 0:2], segs[:, 2:4])
    hi = np.maximum(segs[:, 0:2], segs[:, 2:4])
    span = np.maximum(hi - lo, 1e-12)
    cell = max(float(np.median(span.max(axis=1))) * 2.0, 1e-9)
    grid: dict[tuple[int, int], list[int]] = {}
    for i in range(len(segs)):
        x0, y0 = np.floor(lo[i] / cell).astype(int)
        x1, y1 = np.floor(hi[i] / cell).astype(int)
        for gx in range(x0, x1 + 1):
            for gy in range(y0, y1 + 1):
                grid.setdefault((gx, gy), []).append(i)
    pairs: set[tuple[int, int]] = set()
    for bucket in grid.values():
        for a in range(len(bucket)):
            i = bucket[a]
            for b in range(a + 1, len(bucket)):
                j = bucket[b]
                u, v = (i, j) if i < j else (j, i)
                if seg_curve[u] == seg_curve[v]:
                    n = counts[seg_curve[u]]
                    gap = (seg_index[v] - seg_index[u]) % n
                    if gap in (0, 1, n - 1):
                        continue
                if np.any(lo[u] > hi[v]) or np.any(lo[v] > hi[u]):
                    continue
                pairs.add((u, v))
    if not pairs:
        return np.empty((0, 2), dtype=np.int64)
    return np.array(sorted(pairs), dtype=np.int64)


@dataclass(frozen=True)
class Intersection:
    """One transversal crossing between two polyline passes."""

    point: tuple[float, float]
    first: tuple[int, int, float]  # (curve, segment, parameter)
    second: tuple[int, int, float]


def frame_intersections(curves: Sequence[np.ndarray], tol: float = DEFAULT_TOL):
    """All transversal crossings in a frame, with genericity enforcement."""
    curves = [np.asarray(c, dtype=float) for c in curves]
    segs, seg_curve, seg_index, counts = _segments(curves)
    pairs = _candidate_pairs(segs, seg_curve, seg_index, counts)
    hit_rows, ts, us, sins, flagged = kernels.seg_hits(segs, pairs, 1e-9, tol)
    for row in flagged:
        i, j = pairs[row]
        if _segment_distance(segs[i], segs[j]) < tol:
            raise GenericityError(
                f"segments {int(i)} and {int(j)} are tangent within tolerance"
            )
    raw = []
    for r, t, u, s in zip(hit_rows, ts, us, sins):
        i, j = pairs[r]
        if abs(s) < tol:
            raise GenericityError(
                f"crossing angle between segments {int(i)} and {int(j)} is "
                f"below tolerance (|sin| = {abs(s):.3e})"
            )
        px = segs[i, 0] + t * (segs[i, 2] - segs[i, 0])
        py = segs[i, 1] + t * (segs[i, 3] - segs[i, 1])
        raw.append(((float(px), float(py)), int(i), float(t), int(j), float(u)))
    # cluster coincident reports (a crossing exactly at a shared vertex is
    # seen by both incident segment pairs); distinct crossings this close
    # violate the no-triple-point condition
    raw.sort()
    taken: list[tuple] = []
    out: list[Intersection] = []
    for (pt, i, t, j, u) in raw:
        dup = False
        for (qt, qi, qj) in taken:
            if np.hypot(pt[0] - qt[0], pt[1] - qt[1]) < tol:
                near_i = _segments_adjacent(i, qi, seg_curve, seg_index, counts)
                near_j = _segments_adjacent(j, qj, seg_curve, seg_index, counts)
                if near_i and near_j:
                    dup = True
                    break
                raise GenericityError(
                    f"two crossings within tolerance of each other near {pt}"
                )
        if dup:
            continue
        taken.append((pt, i, j))
        out.append(
            Intersection(
                pt,
                (int(seg_curve[i]), int(seg_index[i]), t),
                (int(seg_curve[j]), int(seg_index[j]), u),
            )
        )
    out.sort(key=lambda r: (r.first, r.second))
    return out


def _segments_adjacent(a: int, b: int, seg_curve, seg_index, counts) -> bool:
    if a == b:
        return True
    if seg_curve[a] != seg_curve[b]:
        return False
    n = counts[seg_curve[a]]
    return (seg_index[a] - seg_index[b]) % n in (1, n - 1)


def _segment_distance(s1, s2) -> float:
    best = np.inf
    for (p, q), (r, w) in (
        ((s1[0:2], s1[2:4]), (s2[0:2], s2[2:4])),
        ((s2[0:2], s2[2:4]), (s1[0:2], s1[2:4])),
    ):
        d = q - p
        den = float(d @ d)
        for point in (r, w):
            t = 0.0 if den == 0 else float(np.clip((point - p) @ d / den, 0.0, 1.0))
            best = min(best, float(np.linalg.norm(p + t * d - point)))
    return best


def self_intersections(p: np.ndarray, tol: float = DEFAULT_TOL) -> list[Intersection]:
    """Transversal self-crossings of one closed polyline."""
    if tol <= 0:
        raise ValidationError("tolerance must be positive")
    return frame_intersections([np.asarray(p, dtype=float)], tol)


# --------------------------------------------------------------------------
# frame -> diagram


def _pass_dirs(curves, rec: Intersection):
    out = []
    for ci, si, _t in (rec.first, rec.second):
        c = curves[ci]
        d = c[(si + 1) % len(c)] - c[si]
        out.append(d / np.linalg.norm(d))
    return out


@dataclass
class FrameCombinatorics:
    diagram: CurveDiagram
    crossing_pos: dict[int, tuple[float, float]]
    slot_dirs: dict[int, np.ndarray]  # (4, 2) unit vectors per slot
    arc_points: dict[int, np.ndarray] = field(default_factory=dict)


def build_frame_diagram(
    curves: Sequence[np.ndarray],
    tol: float = DEFAULT_TOL,
    ids: Sequence[int] | None = None,
    slot_dirs: dict[int, np.ndarray] | None = None,
) -> FrameCombinatorics:
    """Extract the combinatorial map of a frame.

    ``ids`` names the intersections (in ``frame_intersections`` order);
    ``slot_dirs`` fixes each crossing's slot labelling (otherwise slot 0 is
    the incident direction of smallest angle, counterclockwise from there).
    """
    curves = [np.asarray(c, dtype=float) for c in curves]
    recs = frame_intersections(curves, tol)
    if ids is None:
        ids = list(range(len(recs)))
    if len(ids) != len(recs):
        raise ValidationError(
            f"{len(ids)} crossing ids supplied for {len(recs)} intersections"
        )
    pos: dict[int, tuple[float, float]] = {}
    dirs: dict[int, np.ndarray] = {}
    for cid, rec in zip(ids, recs):
        dA, dB = _pass_dirs(curves, rec)
        cand = np.array([dA, -dA, dB, -dB])
        angles = np.arctan2(cand[:, 1], cand[:, 0])
        ccw = cand[np.argsort(angles)]
        if slot_dirs is not None and cid in slot_dirs:
            # slot labels persist: the new counterclockwise order must match
            # the previous one up to rotation (directions drift slowly)
            prev = slot_dirs[cid]
            scores = [
                sum(float(ccw[(k + rot) % 4] @ prev[k]) for k in range(4))
                for rot in range(4)
            ]
            rot = int(np.argmax(scores))
            if scores[rot] < 2.0:
                raise ValidationError(
                    f"crossing {cid}: slot directions rotated too far between "
                    "frames"
                )
            arranged = np.array([ccw[(k + rot) % 4] for k in range(4)])
        else:
            arranged = ccw
        pos[cid] = rec.point
        dirs[cid] = arranged
    # per-curve passes in traversal order
    passes: dict[int, list[tuple[int, float, int, np.ndarray]]] = {
        ci: [] for ci in range(len(curves))
    }
    for cid, rec in zip(ids, recs):
        for which, (ci, si, t) in enumerate((rec.first, rec.second)):
            d = _pass_dirs(curves, rec)[which]
            passes[ci].append((si, t, cid, d))
    arcs: list[Arc] = []
    arc_points: dict[int, np.ndarray] = {}
    next_arc = 0
    for ci, plist in passes.items():
        c = curves[ci]
        n = len(c)
        seglen = np.linalg.norm(np.roll(c, -1, axis=0) - c, axis=1)
        cum = np.concatenate([[0.0], np.cumsum(seglen)])
        total = cum[-1]
        if not plist:
            arcs.append(Arc(next_arc, float(total), None))
            arc_points[next_arc] = c
            next_arc += 1
            continue
        plist.sort(key=lambda e: (e[0], e[1]))
        slot_of = []
        for si, t, cid, d in plist:
            scores = dirs[cid] @ d
            s_out = int(np.argmax(scores))
            if scores[s_out] < 0.9:
                raise ValidationError(
                    f"crossing {cid}: pass direction does not match any slot"
                )
            slot_of.append((cid, s_out))
        for k, (si, t, cid, _d) in enumerate(plist):
            si2, t2, cid2, _d2 = plist[(k + 1) % len(plist)]
            a0 = cum[si] + t * seglen[si]
            a1 = cum[si2] + t2 * seglen[si2]
            length = (a1 - a0) % total
            if length == 0.0 and len(plist) > 1:
                raise GenericityError("two passes coincide along the curve")
            start = (slot_of[k][0], slot_of[k][1])
            s_in = (slot_of[(k + 1) % len(plist)][1] + 2) % 4
            end = (slot_of[(k + 1) % len(plist)][0], s_in)
            arcs.append(Arc(next_arc, float(length), (start, end)))
            next_arc += 1
    diagram = CurveDiagram(arcs)
    return FrameCombinatorics(diagram, pos, dirs, arc_points)


# --------------------------------------------------------------------------
# local surgery


class _ArcWalker:
    """Arc-length addressing on a closed polyline."""

    def __init__(self, p: np.ndarray):
        self.p = np.asarray(p, dtype=float)
        self.n = len(p)
        self.seglen = np.linalg.norm(np.roll(self.p, -1, axis=0) - self.p, axis=1)
        self.cum = np.concatenate([[0.0], np.cumsum(self.seglen)])
        self.total = float(self.cum[-1])

    def seg_of(self, s: float) -> int:
        s %= self.total
        si = int(np.searchsorted(self.cum, s, side="right") - 1)
        return min(max(si, 0), self.n - 1)

    def point_at(self, s: float) -> np.ndarray:
        s %= self.total
        si = self.seg_of(s)
        t = (s - self.cum[si]) / self.seglen[si] if self.seglen[si] else 0.0
        return self.p[si] + t * (self.p[(si + 1) % self.n] - self.p[si])

    def pos_of(self, seg: int, t: float) -> float:
        return float((self.cum[seg] + t * self.seglen[seg]) % self.total)

    def ball_exit(self, s0: float, sign: int, center: np.ndarray, radius: float):
        """March from s0 in the given direction to the first ball exit.

        Returns (cut point, absolute arc position of the cut).
        """
        cur = s0
        cur_pt = self.point_at(cur)
        for _ in range(2 * self.n + 4):
            smod = cur % self.total
            si = self.seg_of(smod)
            if sign > 0:
                step = self.cum[si + 1] - smod
                if step <= 1e-15:
                    si = (si + 1) % self.n
                    step = self.seglen[si]
            else:
                step = smod - self.cum[si]
                if step <= 1e-15:
                    si = (si - 1) % self.n
                    step = self.seglen[si]
            nxt = cur + sign * step
            nxt_pt = self.point_at(nxt)
            if np.linalg.norm(nxt_pt - center) >= radius:
                lo, hi = 0.0, 1.0
                for _ in range(64):
                    mid = 0.5 * (lo + hi)
                    q = cur_pt + mid * (nxt_pt - cur_pt)
                    if np.linalg.norm(q - center) < radius:
                        lo = mid
                    else:
                        hi = mid
                return cur_pt + hi * (nxt_pt - cur_pt), cur + sign * step * hi
            cur, cur_pt = nxt, nxt_pt
        raise ValidationError("crossing ball swallows the whole curve")

    def chain_between(self, s_from: float, s_to: float) -> list[np.ndarray]:
        """Vertices strictly between two arc positions, walking forward."""
        dist = (s_to - s_from) % self.total
        out = []
        walked = self.cum[self.seg_of(s_from)] + self.seglen[self.seg_of(s_from)] - (s_from % self.total)
        si = self.seg_of(s_from)
        guard = 0
        while walked < dist - 1e-12 and guard < 2 * self.n + 2:
            si = (si + 1) % self.n
            out.append(self.p[si])
            walked += self.seglen[si]
            guard += 1
        return out


def geometric_smooth(
    p: np.ndarray,
    intersection: Intersection,
    radius: float,
    choice: int = 0,
) -> list[np.ndarray]:
    """Replace one self-crossing by a non-crossing chord reconnection inside
    the ball of the given radius.

    Chords are straight, so they never exceed the arcs through the crossing
    that they replace; total length cannot grow.  ``choice`` follows the
    resolution convention: with the four ball cuts sorted counterclockwise,
    0 joins cuts (0,1)(2,3) and 1 joins (0,3)(1,2).  Raises when the ball
    meets any strand besides the two crossing passes.
    """
    if choice not in (0, 1):
        raise ValidationError(f"choice must be 0 or 1, got {choice}")
    if radius <= 0:
        raise ValidationError("radius must be positive")
    w = _ArcWalker(p)
    center = np.asarray(intersection.point, dtype=float)
    sA = w.pos_of(intersection.first[1], intersection.first[2])
    sB = w.pos_of(intersection.second[1], intersection.second[2])

    cuts = {}
    for name, s0, sign in (
        ("a_in", sA, -1),
        ("a_out", sA, +1),
        ("b_in", sB, -1),
        ("b_out", sB, +1),
    ):
        pt, s_abs = w.ball_exit(s0, sign, center, radius)
        cuts[name] = (pt, s_abs % w.total)

    inside_spans = [
        (cuts["a_in"][1], cuts["a_out"][1]),
        (cuts["b_in"][1], cuts["b_out"][1]),
    ]

    def in_spans(s: float) -> bool:
        for lo, hi in inside_spans:
            if lo <= hi:
                if lo - 1e-12 <= s <= hi + 1e-12:
                    return True
            elif s >= lo - 1e-12 or s <= hi + 1e-12:
                return True
        return False

    for si in range(w.n):
        seg = np.array([*w.p[si], *w.p[(si + 1) % w.n]])
        d = _segment_distance(seg, np.array([*center, *center]))
        if d < radius:
            s_mid = (w.cum[si] + 0.5 * w.seglen[si]) % w.total
            if not (in_spans(w.cum[si]) or in_spans(s_mid) or in_spans((w.cum[si] + w.seglen[si]) % w.total)):
                raise ValidationError(
                    f"ball of radius {radius} meets a third strand (segment {si})"
                )

    order = sorted(
        cuts, key=lambda k: np.arctan2(*(cuts[k][0] - center)[::-1])
    )
    if choice == 0:
        chords = [frozenset((order[0], order[1])), frozenset((order[2], order[3]))]
    else:
        chords = [frozenset((order[0], order[3])), frozenset((order[1], order[2]))]
    for ch in chords:
        if ch in (frozenset(("a_in", "a_out")), frozenset(("b_in", "b_out"))):
            raise InvariantError("reconnection degenerated to the strand-through pairing")

    # outside pieces, forward along the curve: exits run to the next entry
    pieces = {}
    for out_label, in_label in (("a_out", "b_in"), ("b_out", "a_in")):
        pts = [cuts[out_label][0]]
        pts += w.chain_between(cuts[out_label][1], cuts[in_label][1])
        pts.append(cuts[in_label][0])
        pieces[frozenset((out_label, in_label))] = (out_label, pts)

    link: dict[str, list[tuple[str, str]]] = {k: [] for k in cuts}
    for key, (start, _pts) in pieces.items():
        a, b = tuple(key)
        link[a].append(("piece", b))
        link[b].append(("piece", a))
    for ch in chords:
        a, b = tuple(ch)
        link[a].append(("chord", b))
        link[b].append(("chord", a))

    curves_out = []
    used_pieces: set[frozenset] = set()
    for start in cuts:
        start_piece = next(
            (k for k in pieces if start in k and k not in used_pieces), None
        )
        if start_piece is None:
            continue
        pts: list[np.ndarray] = []
        label = start
        while True:
            piece_key = next(k for k in pieces if label in k)
            if piece_key in used_pieces:
                break
            used_pieces.add(piece_key)
            head, stored = pieces[piece_key]
            run = stored if head == label else stored[::-1]
            pts.extend(run)
            other = next(x for x in piece_key if x != label)
            label = next(b for kind, b in link[other] if kind == "chord")
            if label == start:
                break
        curves_out.append(_dedupe(np.array(pts)))
    total_out = sum(polyline_length(c) for c in curves_out)
    if total_out > polyline_length(p) * (1 + 1e-9):
        raise InvariantError("surgery increased total length")
    return curves_out


def _dedupe(arr: np.ndarray, eps: float = 1e-12) -> np.ndarray:
    keep = [0]
    for i in range(1, len(arr)):
        if np.linalg.norm(arr[i] - arr[keep[-1]]) > eps:
            keep.append(i)
    if len(keep) > 1 and np.linalg.norm(arr[keep[0]] - arr[keep[-1]]) <= eps:
        keep.pop()
    return arr[keep]
