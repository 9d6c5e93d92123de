"""Recover a homotopy script from time-ordered polyline frames.

Crossings are tracked across frames by position (they move continuously and
stay far apart relative to the frame spacing), and their slot labels are
carried along by direction continuity, so every frame's combinatorial map
uses one consistent id space.  Each frame gap is then classified by its
crossing-set delta: +-1 is a kink birth/death, +-2 a strand-pair birth/
death, 0 with rewired arcs a slide.  The move event is constructed
combinatorially on the folded diagram and verified by applying it: the
rewrite must reproduce the next frame's wiring exactly.
"""

from __future__ import annotations

import itertools

import numpy as np

from ..diagram import CurveDiagram
from ..errors import SamplingError, ValidationError
from ..moves import (
    MoveEvent,
    apply_move_ex,
    bigon_death_event,
    find_bigons,
    find_kinks,
    find_triangles,
    kink_death_event,
    reverse_event,
    triangle_flip_event,
)
from ..resgraph import HomotopyScript
from .generate import FrameSet
from .primitives import (
    DEFAULT_TOL,
    FrameCombinatorics,
    PolylineFrame,
    build_frame_diagram,
    frame_intersections,
)


class _Tracker:
    """Persistent crossing identities and slot labellings across frames."""

    def __init__(self):
        self.pos: dict[int, np.ndarray] = {}
        self.vel: dict[int, np.ndarray] = {}
        self.dirs: dict[int, np.ndarray] = {}
        self.next_id = 0

    def advance(
        self, points: list[np.ndarray], scale: float
    ) -> tuple[list[int], set[int], list[int]]:
        """Match new intersection points against the tracked state.

        Crossings move smoothly, so matching runs against positions
        extrapolated at the previous velocity; a match must beat its
        runner-up decisively and stay within a fraction of the frame scale.
        Returns (ids aligned with ``points``, dead ids, born ids).
        """
        prev_ids = sorted(self.pos)
        predicted = {p: self.pos[p] + self.vel.get(p, 0.0) for p in prev_ids}
        cand = []
        for pid in prev_ids:
            for k, pt in enumerate(points):
                d = min(
                    float(np.linalg.norm(predicted[pid] - pt)),
                    float(np.linalg.norm(self.pos[pid] - pt)),
                )
                cand.append((d, pid, k))
        cand.sort()
        dist_of = {(pid, k): d for d, pid, k in cand}
        used_prev: set[int] = set()
        used_new: set[int] = set()
        match: dict[int, int] = {}
        for dist, pid, k in cand:
            if dist > 0.2 * scale:
                break
            if pid in used_prev or k in used_new:
                continue
            used_prev.add(pid)
            used_new.add(k)
            match[k] = pid
        # the assignment must be swap-stable, otherwise identities are
        # genuinely ambiguous at this frame spacing
        pairs = [(pid, k) for k, pid in match.items()]
        for (p1, n1), (p2, n2) in itertools.combinations(pairs, 2):
            direct = dist_of[(p1, n1)] + dist_of[(p2, n2)]
            swapped = dist_of.get((p1, n2), np.inf) + dist_of.get((p2, n1), np.inf)
            if swapped <= direct * 1.2:
                raise SamplingError(
                    "crossing identities are ambiguous between frames; sample "
                    "the homotopy more finely"
                )
        ids: list[int] = []
        born: list[int] = []
        for k in range(len(points)):
            if k in match:
                ids.append(match[k])
            else:
                ids.append(self.next_id)
                born.append(self.next_id)
                self.next_id += 1
        dead = {pid for pid in prev_ids if pid not in used_prev}
        return ids, dead, born

    def commit(self, fc: FrameCombinatorics) -> None:
        new_pos = {cid: np.asarray(p) for cid, p in fc.crossing_pos.items()}
        self.vel = {
            cid: new_pos[cid] - self.pos[cid] for cid in new_pos if cid in self.pos
        }
        self.pos = new_pos
        self.dirs = dict(fc.slot_dirs)


def _wiring(d: CurveDiagram) -> dict:
    """Slot-to-slot connectivity plus the free-loop count; two diagrams with
    equal wiring are the same map under the shared crossing ids."""
    nxt = {}
    free = 0
    for arc in d.arcs.values():
        if arc.ends is None:
            free += 1
            continue
        a, b = arc.ends
        nxt[a] = b
        nxt[b] = a
    return {"next": nxt, "free": free}


def _arc_correspondence(
    src: CurveDiagram, dst: CurveDiagram
) -> dict[int, tuple[int, bool]]:
    """Map arc ids of ``src`` to ``dst`` via shared (crossing, slot) keys.

    The flag records whether the arc's end orientation flips (src end 0
    matches dst end 1), in which case positions along the arc mirror.
    Free loops pair up by count; only the unambiguous single-loop case is
    supported (positions on a free loop are origin-free anyway).
    """
    out: dict[int, tuple[int, bool]] = {}
    for arc in src.arcs.values():
        if arc.ends is None:
            continue
        dst_aid, dst_end = dst.arc_at(arc.ends[0])
        out[arc.id] = (dst_aid, dst_end == 1)
    src_free = [a.id for a in src.arcs.values() if a.ends is None]
    dst_free = [a.id for a in dst.arcs.values() if a.ends is None]
    if len(src_free) != len(dst_free):
        raise ValidationError("free loop counts differ between tracked diagrams")
    if len(src_free) > 1:
        raise ValidationError("cannot disambiguate multiple free loops")
    for s, t in zip(src_free, dst_free):
        out[s] = (t, False)
    return out


def _remap_event_arcs(event: MoveEvent, arc_map: dict[int, tuple[int, bool]]) -> MoveEvent:
    boundary = tuple(
        (arc_map[aid][0], 1.0 - frac if arc_map[aid][1] else frac)
        for aid, frac in event.boundary
    )
    return MoveEvent(event.kind, boundary, event.before, event.after)


def _candidate_deaths(d: CurveDiagram, dead: set[int]):
    """Candidate death events for the given dying crossings, best first.

    Shorter vanishing material first: just before a death the doomed
    monogon or bigon has shrunk to a speck, so its arcs are the shortest
    valid candidates.
    """
    if len(dead) == 1:
        (c,) = dead
        cands = []
        for cc, aid in find_kinks(d):
            if cc == c:
                cands.append((d.arcs[aid].length, aid))
        cands.sort()
        for _len, aid in cands:
            try:
                yield kink_death_event(d, c, aid)
            except ValidationError:
                continue
    elif len(dead) == 2:
        c1, c2 = sorted(dead)
        cands = []
        for b1, b2, a1, a2 in find_bigons(d):
            if (b1, b2) == (c1, c2):
                cands.append((d.arcs[a1].length + d.arcs[a2].length, a1, a2))
        cands.sort()
        for _len, a1, a2 in cands:
            try:
                yield bigon_death_event(d, c1, c2, a1, a2)
            except ValidationError:
                continue


def _candidate_slides(d: CurveDiagram, touched: set[int]):
    for tri, arcs in find_triangles(d):
        if set(tri) <= touched or set(tri) == touched or touched <= set(tri):
            try:
                yield triangle_flip_event(d, tri, arcs)
            except ValidationError:
                continue


def detect_events(
    frames: list[PolylineFrame] | FrameSet,
    tol: float = DEFAULT_TOL,
    bound: float | None = None,
    expected_initial: CurveDiagram | None = None,
) -> HomotopyScript:
    """Build the homotopy script realized by the frames.

    Raises ``SamplingError`` when a frame gap holds more than one move and
    ``ValidationError`` when no single move explains a gap.
    """
    if isinstance(frames, FrameSet):
        if bound is None:
            bound = frames.bound
        frames = frames.frames
    if len(frames) < 2:
        raise ValidationError("need at least two frames")
    times = [f.time for f in frames]
    if sorted(times) != times:
        raise ValidationError("frames must be time-ordered")
    if bound is not None:
        for f in frames:
            if not f.total_length() < bound:
                raise ValidationError(
                    f"frame at t={f.time} has length {f.total_length()}, "
                    f"not below the bound {bound}"
                )

    tracker = _Tracker()
    tracked: list[CurveDiagram] = []
    deltas: list[tuple[set[int], list[int]]] = []
    for f in frames:
        recs = frame_intersections(f.curves, tol)
        pts = [np.asarray(r.point) for r in recs]
        allpts = np.vstack(f.curves)
        scale = float(np.linalg.norm(allpts.max(axis=0) - allpts.min(axis=0)))
        ids, dead, born = tracker.advance(pts, scale)
        fc = build_frame_diagram(f.curves, tol, ids=ids, slot_dirs=tracker.dirs)
        tracker.commit(fc)
        tracked.append(fc.diagram)
        deltas.append((dead, born))

    if expected_initial is not None:
        if not isomorphic(tracked[0], expected_initial):
            raise ValidationError(
                "first frame's combinatorics does not match the expected "
                "initial diagram"
            )

    folded = tracked[0]
    events: list[MoveEvent] = []
    for k in range(1, len(frames)):
        dead, born = deltas[k]
        target = tracked[k]
        if len(dead) + len(born) > 2 or (len(dead) == 1 and len(born) == 1):
            raise SamplingError(
                f"frames {k - 1}->{k}: {len(dead)} deaths and {len(born)} births "
                "in one gap; sample the homotopy more finely"
            )
        if not dead and not born:
            if _wiring(folded)["next"] == _wiring(target)["next"]:
                continue  # plain isotopy
            touched = {
                slot[0]
                for slot, other in _wiring(folded)["next"].items()
                if _wiring(target)["next"].get(slot) != other
            }
            if len(touched) != 3:
                raise ValidationError(
                    f"frames {k - 1}->{k}: wiring changed at crossings "
                    f"{sorted(touched)}, which no single move explains"
                )
            event = _first_matching(
                _candidate_slides(folded, touched), folded, target
            )
            if event is None:
                raise ValidationError(
                    f"frames {k - 1}->{k}: no slide reproduces the rewiring"
                )
        elif dead and not born:
            event = _first_matching(_candidate_deaths(folded, dead), folded, target)
            if event is None:
                raise SamplingError(
                    f"frames {k - 1}->{k}: crossings {sorted(dead)} vanished but "
                    "form no single monogon or bigon; sample more finely"
                )
        else:  # births: construct the reverse death on the later frame
            event = _birth_event(folded, target, set(born), k)
        folded, _app = apply_move_ex(folded, event)
        if _wiring(folded)["next"] != _wiring(target)["next"] or _wiring(folded)[
            "free"
        ] != _wiring(target)["free"]:
            raise ValidationError(
                f"frames {k - 1}->{k}: applying the inferred {event.kind.value} "
                "does not reproduce the later frame"
            )
        events.append(event)
    if not events:
        raise ValidationError("no move events detected; a script needs at least one")
    terminal_disc = tracked[-1].crossing_count() == 0
    return HomotopyScript(
        initial=tracked[0],
        events=tuple(events),
        bound=bound,
        terminal_disc=terminal_disc,
    )


def _first_matching(candidates, folded: CurveDiagram, target: CurveDiagram):
    want = _wiring(target)
    for event in candidates:
        try:
            result, _app = apply_move_ex(folded, event)
        except ValidationError:
            continue
        got = _wiring(result)
        if got["next"] == want["next"] and got["free"] == want["free"]:
            return event
    return None


def _birth_event(
    folded: CurveDiagram, target: CurveDiagram, born: set[int], k: int
) -> MoveEvent:
    rev = _first_matching(_candidate_deaths(target, born), target, folded)
    if rev is None:
        raise ValidationError(
            f"frames {k - 1}->{k}: new crossings {sorted(born)} form no single "
            "monogon or bigon"
        )
    _undone, app = apply_move_ex(target, rev)
    birth = reverse_event(rev, app)
    arc_map = _arc_correspondence(app.result, folded)
    return _remap_event_arcs(birth, arc_map)


def isomorphic(d1: CurveDiagram, d2: CurveDiagram) -> bool:
    """Combinatorial-map isomorphism (crossing relabelling plus per-crossing
    slot rotation), ignoring lengths.  Backtracking; fine at desk scale."""
    if d1.crossing_count() != d2.crossing_count():
        return False
    n_free1 = sum(1 for a in d1.arcs.values() if a.ends is None)
    n_free2 = sum(1 for a in d2.arcs.values() if a.ends is None)
    if n_free1 != n_free2 or len(d1.arcs) != len(d2.arcs):
        return False
    ids1 = list(d1.crossing_ids)
    ids2 = list(d2.crossing_ids)
    w1 = _wiring(d1)["next"]
    w2 = _wiring(d2)["next"]

    def ok(assign: dict[int, tuple[int, int]]) -> bool:
        for (c, s), (c2, s2) in w1.items():
            if c not in assign or c2 not in assign:
                continue
            i1, r1 = assign[c]
            i2, r2 = assign[c2]
            a = (i1, (s + r1) % 4)
            b = (i2, (s2 + r2) % 4)
            if w2.get(a) != b:
                return False
        return True

    def rec(pos: int, assign: dict, used: set) -> bool:
        if pos == len(ids1):
            return True
        c = ids1[pos]
        for target in ids2:
            if target in used:
                continue
            for rot in range(4):
                assign[c] = (target, rot)
                if ok(assign) and rec(pos + 1, assign, used | {target}):
                    return True
            del assign[c]
        return False

    return rec(0, {}, set())
