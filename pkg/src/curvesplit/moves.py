"""Reidemeister moves as local disc rewrites, and the linkage rule.

A move event names a disc: 2k boundary stubs in cyclic order (k strands
cross the boundary), the crossings inside on each side, and the arcs inside
on each side.  Each stub is a cut point on an ambient arc, recorded as
``(arc id, frac)`` with ``frac`` the cut position along the arc from end 0
(free loops are cut cyclically; the span between the two lowest cuts is the
inside portion).  Everything outside the disc is untouched by the rewrite.

Resolved disc contents are compared by isotopy rel boundary: two local
tangles are isotopic exactly when their boundary pairings agree and their
circle counts agree.  ``edge_table`` enumerates every resolved instance of
both sides of an event and returns the isotopic pairs; these generate the
edges of the resolution graph.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from enum import Enum
from functools import lru_cache
from typing import Iterable, Mapping, Sequence

from .diagram import (
    CHOICE_A,
    CHOICE_B,
    Arc,
    CurveDiagram,
    Resolution,
    require_valid,
)
from .errors import (
    EmbedError,
    IncompleteResolutionError,
    InvariantError,
    ValidationError,
)

Port = tuple  # ("stub", k) or ("slot", crossing, slot)


class MoveKind(str, Enum):
    R1_BIRTH = "R1_BIRTH"
    R1_DEATH = "R1_DEATH"
    R2_BIRTH = "R2_BIRTH"
    R2_DEATH = "R2_DEATH"
    R3 = "R3"


_REVERSED = {
    MoveKind.R1_BIRTH: MoveKind.R1_DEATH,
    MoveKind.R1_DEATH: MoveKind.R1_BIRTH,
    MoveKind.R2_BIRTH: MoveKind.R2_DEATH,
    MoveKind.R2_DEATH: MoveKind.R2_BIRTH,
    MoveKind.R3: MoveKind.R3,
}

# (boundary stubs, crossings before, crossings after) per kind
_SHAPE = {
    MoveKind.R1_BIRTH: (2, 0, 1),
    MoveKind.R1_DEATH: (2, 1, 0),
    MoveKind.R2_BIRTH: (4, 0, 2),
    MoveKind.R2_DEATH: (4, 2, 0),
    MoveKind.R3: (6, 3, 3),
}

BEFORE = "before"
AFTER = "after"


@dataclass(frozen=True)
class TangleArc:
    """One arc inside the disc, between two ports."""

    ports: tuple[Port, Port]
    length: float | None = None


@dataclass(frozen=True)
class DiscSide:
    crossings: tuple[int, ...]
    arcs: tuple[TangleArc, ...]


@dataclass(frozen=True)
class MoveEvent:
    kind: MoveKind
    boundary: tuple[tuple[int, float], ...]  # cyclic order; (arc id, frac)
    before: DiscSide
    after: DiscSide

    def side(self, which: str) -> DiscSide:
        if which == BEFORE:
            return self.before
        if which == AFTER:
            return self.after
        raise ValidationError(f"side must be 'before' or 'after', got {which!r}")

    def to_json(self) -> dict:
        def arcjson(side: str, arcs: tuple[TangleArc, ...]):
            return [
                {"side": side, "ports": [list(p) for p in a.ports], "length": a.length}
                for a in arcs
            ]

        return {
            "kind": self.kind.value,
            "disc": {
                "boundary": [[aid, frac] for aid, frac in self.boundary],
                "crossings_before": list(self.before.crossings),
                "crossings_after": list(self.after.crossings),
                "arcs": arcjson(BEFORE, self.before.arcs) + arcjson(AFTER, self.after.arcs),
            },
        }

    @classmethod
    def from_json(cls, data: Mapping) -> "MoveEvent":
        disc = data["disc"]
        sides: dict[str, list[TangleArc]] = {BEFORE: [], AFTER: []}
        for rec in disc["arcs"]:
            ports = tuple(tuple(p) for p in rec["ports"])
            if rec["side"] not in sides:
                raise ValidationError(f"bad arc side {rec['side']!r}")
            sides[rec["side"]].append(TangleArc(ports, rec.get("length")))
        return cls(
            kind=MoveKind(data["kind"]),
            boundary=tuple((int(a), float(f)) for a, f in disc["boundary"]),
            before=DiscSide(tuple(disc["crossings_before"]), tuple(sides[BEFORE])),
            after=DiscSide(tuple(disc["crossings_after"]), tuple(sides[AFTER])),
        )


@dataclass(frozen=True)
class LocalTangle:
    """A resolved disc: non-crossing boundary pairing plus circle count."""

    arity: int
    pairing: frozenset[frozenset[int]]
    circles: int


# --------------------------------------------------------------------------
# tangle computation


def _side_ports(side: DiscSide, n_stubs: int) -> dict[Port, TangleArc]:
    """Map each port of the side to its arc, validating single occupancy."""
    seen: dict[Port, TangleArc] = {}
    for arc in side.arcs:
        if len(arc.ports) != 2 or arc.ports[0] == arc.ports[1]:
            raise ValidationError(f"tangle arc needs two distinct ports, got {arc.ports}")
        for p in arc.ports:
            if p in seen:
                raise ValidationError(f"port {p} used by more than one tangle arc")
            seen[p] = arc
    want: set[Port] = {("stub", k) for k in range(n_stubs)}
    for c in side.crossings:
        for s in range(4):
            want.add(("slot", c, s))
    if set(seen) != want:
        missing = sorted(map(str, want - set(seen)))
        extra = sorted(map(str, set(seen) - want))
        raise ValidationError(
            f"disc side ports mismatch: missing {missing}, unexpected {extra}"
        )
    return seen


def _tangle_raw(side: DiscSide, n_stubs: int, choice: Mapping[int, str]):
    """(pairing set over stub indices, circle count) for one smoothing."""
    port_arc = _side_ports(side, n_stubs)
    visited: set[Port] = set()
    pairs: list[tuple[int, int]] = []

    def hop(p: Port) -> Port:
        arc = port_arc[p]
        return arc.ports[1] if arc.ports[0] == p else arc.ports[0]

    for k in range(n_stubs):
        start: Port = ("stub", k)
        if start in visited:
            continue
        visited.add(start)
        p = hop(start)
        while p[0] == "slot":
            visited.add(p)
            _tag, c, s = p
            s2 = s ^ (3 if choice[c] == CHOICE_B else 1)
            p2: Port = ("slot", c, s2)
            visited.add(p2)
            p = hop(p2)
        visited.add(p)
        pairs.append((k, p[1]))
    circles = 0
    for c in side.crossings:
        for s in range(4):
            p: Port = ("slot", c, s)
            if p in visited:
                continue
            circles += 1
            while p not in visited:
                visited.add(p)
                q = hop(p)
                visited.add(q)
                _tag, cc, ss = q
                s2 = ss ^ (3 if choice[cc] == CHOICE_B else 1)
                p = ("slot", cc, s2)
    return frozenset(frozenset(p) for p in pairs), circles


def _noncrossing(pairing: Iterable[frozenset[int]], order: Sequence[int]) -> bool:
    pos = {stub: i for i, stub in enumerate(order)}
    n = len(order)
    pairs = [tuple(sorted(pos[s] for s in p)) for p in pairing]
    for (a, b), (c, d) in itertools.combinations(pairs, 2):
        inside_c = a < c < b
        inside_d = a < d < b
        if inside_c != inside_d:
            return False
    del n
    return True


def _choice_from_mask(crossings: Sequence[int], mask: int) -> dict[int, str]:
    return {
        c: (CHOICE_B if (mask >> k) & 1 else CHOICE_A)
        for k, c in enumerate(sorted(crossings))
    }


def local_tangle(event: MoveEvent, side: str, local_choice: Resolution) -> LocalTangle:
    """Resolve the disc crossings of one side and read off the tangle."""
    ds = event.side(side)
    choice = local_choice.as_dict()
    if set(choice) != set(ds.crossings):
        raise IncompleteResolutionError(
            f"local choice covers {sorted(choice)}, disc {side} side has "
            f"{sorted(ds.crossings)}"
        )
    n = len(event.boundary)
    pairing, circles = _tangle_raw(ds, n, choice)
    if not _noncrossing(pairing, range(n)):
        raise InvariantError(
            f"{event.kind.value} {side} tangle pairing crosses the boundary order"
        )
    if circles > 1:
        raise InvariantError(
            f"{event.kind.value} {side} tangle has {circles} circles; a single "
            "move disc admits at most one"
        )
    return LocalTangle(n, pairing, circles)


def tangles_isotopic(t1: LocalTangle, t2: LocalTangle) -> bool:
    """Isotopy rel boundary: equal pairings and equal circle counts."""
    if t1.arity != t2.arity:
        raise ValidationError(
            f"tangles on different boundaries ({t1.arity} vs {t2.arity} points)"
        )
    return t1.pairing == t2.pairing and t1.circles == t2.circles


Instance = tuple[str, int]  # (side, smoothing mask over sorted disc crossings)


@lru_cache(maxsize=4096)
def _instance_tangles(event: MoveEvent) -> dict[Instance, LocalTangle]:
    out: dict[Instance, LocalTangle] = {}
    for side in (BEFORE, AFTER):
        ds = event.side(side)
        ids = sorted(ds.crossings)
        for mask in range(1 << len(ids)):
            res = Resolution.from_mapping(_choice_from_mask(ids, mask))
            out[(side, mask)] = local_tangle(event, side, res)
    return out


@lru_cache(maxsize=4096)
def edge_table(event: MoveEvent) -> tuple[tuple[Instance, Instance], ...]:
    """Every unordered pair of distinct resolved instances (either side)
    whose tangles are isotopic.  Each pair generates graph edges."""
    tangles = _instance_tangles(event)
    groups: dict[tuple, list[Instance]] = {}
    for inst in sorted(tangles):
        t = tangles[inst]
        key = (tuple(sorted(tuple(sorted(p)) for p in t.pairing)), t.circles)
        groups.setdefault(key, []).append(inst)
    pairs: list[tuple[Instance, Instance]] = []
    for members in groups.values():
        pairs.extend(itertools.combinations(members, 2))
    pairs.sort()
    return tuple(pairs)


def partner_counts(event: MoveEvent) -> dict[Instance, int]:
    """How many other instances each instance is isotopic to."""
    counts: dict[Instance, int] = {inst: 0 for inst in _instance_tangles(event)}
    for a, b in edge_table(event):
        counts[a] += 1
        counts[b] += 1
    return counts


def instance_tangle(event: MoveEvent, inst: Instance) -> LocalTangle:
    return _instance_tangles(event)[inst]


# --------------------------------------------------------------------------
# event validation


def _strand_census(side: DiscSide, n_stubs: int):
    """Strand decomposition of a disc side under straight-through traversal.

    Returns (strands, closed) where each strand is
    (stub in, stub out, crossing pass list) and ``closed`` counts closed
    components inside the disc (there must be none in a move disc).
    """
    port_arc = _side_ports(side, n_stubs)

    def hop(p: Port) -> Port:
        a = port_arc[p]
        return a.ports[1] if a.ports[0] == p else a.ports[0]

    visited: set[Port] = set()
    strands = []
    for k in range(n_stubs):
        start: Port = ("stub", k)
        if start in visited:
            continue
        visited.add(start)
        passes: list[int] = []
        p = hop(start)
        while p[0] == "slot":
            _t, c, s = p
            visited.add(p)
            passes.append(c)
            p2: Port = ("slot", c, (s + 2) % 4)
            visited.add(p2)
            p = hop(p2)
        visited.add(p)
        strands.append((k, p[1], passes))
    closed = 0
    for c in side.crossings:
        for s in range(4):
            p: Port = ("slot", c, s)
            if p in visited:
                continue
            closed += 1
            while p not in visited:
                visited.add(p)
                q = hop(p)
                visited.add(q)
                _t, cc, ss = q
                p = ("slot", cc, (ss + 2) % 4)
    return strands, closed


def _strand_slot_pairs(side: DiscSide, n_stubs: int) -> dict[int, dict[int, frozenset[int]]]:
    """crossing -> slot-pair parity (0 for slots {0,2}, 1 for {1,3}) ->
    the stub pair of the strand passing through it."""
    port_arc = _side_ports(side, n_stubs)

    def hop(p: Port) -> Port:
        a = port_arc[p]
        return a.ports[1] if a.ports[0] == p else a.ports[0]

    out: dict[int, dict[int, frozenset[int]]] = {c: {} for c in side.crossings}
    for k in range(n_stubs):
        p = hop(("stub", k))
        passes: list[tuple[int, int]] = []
        while p[0] == "slot":
            _t, c, s = p
            passes.append((c, s & 1))
            p = hop(("slot", c, (s + 2) % 4))
        stubs = frozenset((k, p[1]))
        for c, par in passes:
            out[c][par] = stubs
    return out


def validate_event(event: MoveEvent) -> list[str]:
    """Structural findings for a move event (empty list when well-formed)."""
    findings: list[str] = []
    shape = _SHAPE.get(event.kind)
    if shape is None:
        return [f"unknown move kind {event.kind!r}"]
    n_stubs, nb, na = shape
    if len(event.boundary) != n_stubs:
        findings.append(
            f"{event.kind.value} needs {n_stubs} boundary stubs, got {len(event.boundary)}"
        )
    if len(set(event.before.crossings)) != len(event.before.crossings):
        findings.append("duplicate crossing ids on before side")
    if len(event.before.crossings) != nb:
        findings.append(
            f"{event.kind.value} has {len(event.before.crossings)} crossings before, needs {nb}"
        )
    if len(event.after.crossings) != na:
        findings.append(
            f"{event.kind.value} has {len(event.after.crossings)} crossings after, needs {na}"
        )
    if event.kind is MoveKind.R3:
        if set(event.before.crossings) != set(event.after.crossings):
            findings.append("R3 must keep the same three crossing ids on both sides")
    elif set(event.before.crossings) & set(event.after.crossings):
        findings.append("birth/death moves cannot share crossing ids across sides")
    for aid, frac in event.boundary:
        if not 0.0 < frac < 1.0:
            findings.append(f"stub on arc {aid} has frac {frac} outside (0, 1)")
    if findings:
        return findings
    for side_name in (BEFORE, AFTER):
        ds = event.side(side_name)
        try:
            strands, closed = _strand_census(ds, n_stubs)
        except ValidationError as exc:
            findings.append(f"{side_name} side: {exc}")
            continue
        if closed:
            findings.append(f"{side_name} side contains {closed} closed strand(s)")
        expected = {
            MoveKind.R1_BIRTH: {BEFORE: [0], AFTER: [2]},
            MoveKind.R1_DEATH: {BEFORE: [2], AFTER: [0]},
            MoveKind.R2_BIRTH: {BEFORE: [0, 0], AFTER: [2, 2]},
            MoveKind.R2_DEATH: {BEFORE: [2, 2], AFTER: [0, 0]},
            MoveKind.R3: {BEFORE: [2, 2, 2], AFTER: [2, 2, 2]},
        }[event.kind][side_name]
        got = sorted(len(p) for _i, _o, p in strands)
        if got != sorted(expected):
            findings.append(
                f"{side_name} side strand passes {got}, expected {sorted(expected)}"
            )
            continue
        for _i, _o, passes in strands:
            if len(set(passes)) != len(passes) and event.kind is not MoveKind.R1_BIRTH \
                    and event.kind is not MoveKind.R1_DEATH:
                findings.append(f"{side_name} side strand passes a crossing twice")
        if event.kind is MoveKind.R3:
            for _i, _o, passes in strands:
                if len(set(passes)) != 2:
                    findings.append(f"{side_name} side R3 strand passes {passes}")
    if event.kind is MoveKind.R3 and not findings:
        if _strand_slot_pairs(event.before, n_stubs) != _strand_slot_pairs(
            event.after, n_stubs
        ):
            findings.append("R3 strand pairs do not match across the move")
    return findings


def require_valid_event(event: MoveEvent) -> None:
    findings = validate_event(event)
    if findings:
        raise ValidationError("invalid move event: " + "; ".join(findings))


# --------------------------------------------------------------------------
# disc embedding and the rewrite


@dataclass(frozen=True)
class _Piece:
    """A fragment awaiting reassembly: an outside remnant of a cut arc, or
    a new inside arc from the event's after side."""

    ports: tuple[Port, Port]
    length: float
    src: int | None  # ambient arc id for remnants, None for new pieces


@dataclass(frozen=True)
class DiscEmbedding:
    """How an event's disc sits inside a concrete diagram."""

    portions: tuple[TangleArc, ...]  # inside portions, with derived lengths
    remnants: tuple[_Piece, ...]
    consumed: frozenset[int]  # fully-inside ambient arc ids
    cut_stubs: tuple[tuple[int, tuple[int, ...]], ...]  # arc id -> stubs on it


def derive_embedding(d: CurveDiagram, event: MoveEvent) -> DiscEmbedding:
    """Cut ``d`` along the event's boundary stubs and split it into inside
    portions and outside remnants; raises ``EmbedError`` when the declared
    before side does not match what the cuts produce."""
    inside_cr = set(event.before.crossings)
    missing = inside_cr - set(d.crossing_ids)
    if missing:
        raise EmbedError(f"crossings {sorted(missing)} not present in the diagram")
    cuts: dict[int, list[tuple[float, int]]] = {}
    for stub, (aid, frac) in enumerate(event.boundary):
        if aid not in d.arcs:
            raise EmbedError(f"stub {stub} cuts unknown arc {aid}")
        cuts.setdefault(aid, []).append((frac, stub))
    for aid, cc in cuts.items():
        cc.sort()
        fracs = [f for f, _ in cc]
        if len(set(fracs)) != len(fracs):
            raise EmbedError(f"arc {aid} is cut twice at the same position")

    portions: list[TangleArc] = []
    remnants: list[_Piece] = []
    consumed: set[int] = set()

    for aid in sorted(d.arcs):
        arc = d.arcs[aid]
        cc = cuts.get(aid, [])
        if arc.ends is None:
            if not cc:
                continue  # untouched free loop
            if len(cc) % 2:
                raise EmbedError(f"free loop {aid} is cut an odd number of times")
            # cyclic portions; spans starting at odd cut indices are inside
            k = len(cc)
            for i in range(k):
                f0, s0 = cc[i]
                f1, s1 = cc[(i + 1) % k]
                span = (f1 - f0) if i + 1 < k else (1.0 - f0 + cc[0][0])
                ports = (("stub", s0), ("stub", s1))
                if i % 2 == 0:
                    portions.append(TangleArc(ports, span * arc.length))
                else:
                    remnants.append(_Piece(ports, span * arc.length, aid))
            continue
        end_in = [c in inside_cr for (c, _s) in arc.ends]
        if (end_in[0] != end_in[1]) != (len(cc) % 2 == 1):
            raise EmbedError(
                f"arc {aid}: {len(cc)} cut(s) inconsistent with ends "
                f"inside={end_in}"
            )
        if not cc:
            if end_in[0]:
                consumed.add(aid)
                portions.append(
                    TangleArc(
                        (("slot", *arc.ends[0]), ("slot", *arc.ends[1])), arc.length
                    )
                )
            continue
        stops: list[tuple[float, Port]] = [(0.0, ("slot", *arc.ends[0]))]
        stops += [(f, ("stub", s)) for f, s in cc]
        stops.append((1.0, ("slot", *arc.ends[1])))
        inside = end_in[0]
        for (f0, p0), (f1, p1) in zip(stops, stops[1:]):
            piece_len = (f1 - f0) * arc.length
            if inside:
                portions.append(TangleArc((p0, p1), piece_len))
            else:
                remnants.append(_Piece((p0, p1), piece_len, aid))
            inside = not inside

    declared = sorted(tuple(sorted(a.ports)) for a in event.before.arcs)
    derived = sorted(tuple(sorted(a.ports)) for a in portions)
    if declared != derived:
        extra = [p for p in derived if p not in declared]
        miss = [p for p in declared if p not in derived]
        raise EmbedError(
            f"disc does not embed: derived inside arcs differ from the event's "
            f"(unexpected {extra}, missing {miss})"
        )
    cut_stubs = tuple(
        (aid, tuple(s for _f, s in sorted(cc))) for aid, cc in sorted(cuts.items())
    )
    return DiscEmbedding(tuple(portions), tuple(remnants), frozenset(consumed), cut_stubs)


@dataclass(frozen=True)
class MoveApplication:
    """Everything the rest of the pipeline needs to reason across one
    applied move: the rewritten diagram plus arc provenance on both sides."""

    event: MoveEvent
    before_portions: tuple[TangleArc, ...]
    consumed: frozenset[int]
    cut_stubs_before: tuple[tuple[int, tuple[int, ...]], ...]
    result: "CurveDiagram"
    stub_anchor: tuple[tuple[int, float], ...]  # per stub: (result arc, frac)
    chain_stubs: tuple[tuple[int, tuple[int, ...]], ...]  # result arc -> stubs
    inside_new: frozenset[int]  # result arc ids lying inside the disc

    def cut_stubs_before_map(self) -> dict[int, tuple[int, ...]]:
        return dict(self.cut_stubs_before)

    def chain_stubs_map(self) -> dict[int, tuple[int, ...]]:
        return dict(self.chain_stubs)


_DELTA = {
    MoveKind.R1_BIRTH: 1,
    MoveKind.R1_DEATH: -1,
    MoveKind.R2_BIRTH: 2,
    MoveKind.R2_DEATH: -2,
    MoveKind.R3: 0,
}


def apply_move_ex(d: CurveDiagram, event: MoveEvent) -> tuple[CurveDiagram, MoveApplication]:
    require_valid_event(event)
    require_valid(d)
    emb = derive_embedding(d, event)
    removed = set(event.before.crossings)
    survivors = set(d.crossing_ids) - removed
    clash = survivors & set(event.after.crossings)
    if clash:
        raise EmbedError(f"after-side crossing ids {sorted(clash)} already in use")

    pieces: list[_Piece] = list(emb.remnants)
    for a in event.after.arcs:
        if a.length is None:
            raise ValidationError("after-side tangle arcs need explicit lengths")
        pieces.append(_Piece(a.ports, a.length, None))

    by_port: dict[Port, list[int]] = {}
    for i, piece in enumerate(pieces):
        for p in piece.ports:
            by_port.setdefault(p, []).append(i)
    for p, inc in by_port.items():
        want = 2 if p[0] == "stub" else 1
        if len(inc) != want:
            raise EmbedError(f"port {p} has {len(inc)} attachments, expected {want}")

    untouched = {
        aid: arc
        for aid, arc in d.arcs.items()
        if aid not in emb.consumed and aid not in dict(emb.cut_stubs)
    }

    used_pieces: set[int] = set()
    chains: list[tuple[list[int], list[Port], bool]] = []  # pieces, port walk, is_cycle

    def walk(start_piece: int, start_port: Port):
        seq = [start_piece]
        ports = [start_port]
        cur = start_piece
        p = start_port
        while True:
            piece = pieces[cur]
            q = piece.ports[1] if piece.ports[0] == p else piece.ports[0]
            ports.append(q)
            if q[0] != "stub":
                return seq, ports, False
            nxts = [i for i in by_port[q] if i != cur]
            if not nxts:
                return seq, ports, False
            nxt = nxts[0]
            if nxt == seq[0] and q == start_port:
                return seq, ports, True
            if nxt in seq:
                return seq, ports, True
            seq.append(nxt)
            cur = nxt
            p = q

    # open chains start at slot ports
    for i, piece in enumerate(pieces):
        for p in piece.ports:
            if p[0] == "slot" and i not in used_pieces:
                seq, ports, _cyc = walk(i, p)
                if ports[0] > ports[-1]:  # canonical: end0 is the smaller port
                    seq = seq[::-1]
                    ports = ports[::-1]
                chains.append((seq, ports, False))
                used_pieces.update(seq)
                break
    # remaining pieces form cycles
    for i in range(len(pieces)):
        if i in used_pieces:
            continue
        stub_ports = [p for p in pieces[i].ports if p[0] == "stub"]
        seq, ports, cyc = walk(i, stub_ports[0])
        if not cyc:
            raise InvariantError("dangling piece while reassembling arcs")
        chains.append((seq, ports, True))
        used_pieces.update(seq)

    def chain_key(chain):
        seq, ports, _cyc = chain
        stubs = sorted(p[1] for p in ports if p[0] == "stub")
        return (0 if stubs else 1, stubs[0] if stubs else min(seq), ports[0])

    chains.sort(key=chain_key)

    next_id = max(list(d.arcs) or [0]) + 1
    taken = set(untouched)
    new_arcs: dict[int, Arc] = dict(untouched)
    anchors: dict[int, tuple[int, float]] = {}
    chain_stubs: dict[int, tuple[int, ...]] = {}
    inside_new: set[int] = set()

    for seq, ports, cyc in chains:
        total = sum(pieces[i].length for i in seq)
        srcs = sorted({pieces[i].src for i in seq if pieces[i].src is not None})
        aid = None
        for cand in srcs:
            if cand not in taken:
                aid = cand
                break
        if aid is None:
            while next_id in taken:
                next_id += 1
            aid = next_id
        taken.add(aid)
        stubs_here = tuple(sorted(p[1] for p in ports if p[0] == "stub"))
        chain_stubs[aid] = stubs_here
        if not stubs_here and all(pieces[i].src is None for i in seq):
            inside_new.add(aid)
        if cyc:
            # free loop: parametrize from the midpoint of the remnant piece
            # at the lowest stub, walking out through that stub, so the spans
            # between consecutive anchors alternate new/outside material
            lo = stubs_here[0]
            rem_idx = next(
                i for i in by_port[("stub", lo)] if pieces[i].src is not None
            )
            run = [rem_idx]
            p: Port = ("stub", lo)
            while True:
                nxt = [i for i in by_port[p] if i != run[-1]][0]
                if nxt == rem_idx:
                    break
                run.append(nxt)
                piece = pieces[nxt]
                p = piece.ports[1] if piece.ports[0] == p else piece.ports[0]
            pos = pieces[rem_idx].length / 2.0
            p = ("stub", lo)
            for nxt in run[1:] + [rem_idx]:
                anchors[p[1]] = (aid, pos / total if total else 0.5)
                if nxt == rem_idx:
                    break
                piece = pieces[nxt]
                pos += piece.length
                p = piece.ports[1] if piece.ports[0] == p else piece.ports[0]
            new_arcs[aid] = Arc(aid, total, None)
        else:
            pos = 0.0
            for i, piece in enumerate(pieces[j] for j in seq):
                port_out = ports[i + 1]
                pos += piece.length
                if port_out[0] == "stub":
                    anchors[port_out[1]] = (aid, pos / total if total else 0.5)
            e0 = (ports[0][1], ports[0][2])
            e1 = (ports[-1][1], ports[-1][2])
            new_arcs[aid] = Arc(aid, total, (e0, e1))

    result = CurveDiagram(new_arcs.values(), genus=d.genus)
    delta = result.crossing_count() - d.crossing_count()
    if delta != _DELTA[event.kind]:
        raise InvariantError(
            f"{event.kind.value} changed crossing count by {delta}, "
            f"expected {_DELTA[event.kind]}"
        )
    findings = []
    from .diagram import validate as _validate

    findings = _validate(result)
    if findings:
        raise InvariantError("rewrite produced an invalid diagram: " + "; ".join(findings))
    app = MoveApplication(
        event=event,
        before_portions=emb.portions,
        consumed=emb.consumed,
        cut_stubs_before=emb.cut_stubs,
        result=result,
        stub_anchor=tuple(sorted(anchors.items())),
        chain_stubs=tuple(sorted(chain_stubs.items())),
        inside_new=frozenset(inside_new),
    )
    return result, app


def apply_move(d: CurveDiagram, event: MoveEvent) -> CurveDiagram:
    """Rewrite ``d`` across one move; crossings outside the disc persist
    under the identity, and all length change is confined to the disc."""
    return apply_move_ex(d, event)[0]


def reverse_event(event: MoveEvent, app: MoveApplication) -> MoveEvent:
    """The inverse move, expressed against the rewritten diagram."""
    anchors = dict(app.stub_anchor)
    boundary = tuple(anchors[k] for k in range(len(event.boundary)))
    return MoveEvent(
        kind=_REVERSED[event.kind],
        boundary=boundary,
        before=event.after,
        after=DiscSide(event.before.crossings, app.before_portions),
    )


# --------------------------------------------------------------------------
# event constructors

def _strand_detail(side: DiscSide, n_stubs: int):
    """Per strand: (stub in, stub out, [(crossing, slot in, slot out)…],
    accumulated length of the arcs walked)."""
    port_arc = _side_ports(side, n_stubs)

    def hop(p: Port):
        a = port_arc[p]
        q = a.ports[1] if a.ports[0] == p else a.ports[0]
        return q, (a.length or 0.0)

    out = []
    seen: set[int] = set()
    for k in range(n_stubs):
        if k in seen:
            continue
        seen.add(k)
        passes = []
        length = 0.0
        p, ln = hop(("stub", k))
        length += ln
        while p[0] == "slot":
            _t, c, s = p
            s_out = (s + 2) % 4
            passes.append((c, s, s_out))
            p, ln = hop(("slot", c, s_out))
            length += ln
        seen.add(p[1])
        out.append((k, p[1], passes, length))
    return out


def _order_stubs(n: int, sides: list[DiscSide]) -> tuple[int, ...]:
    """A cyclic stub order making every resolved tangle of every side
    non-crossing; such an order exists exactly when the disc content is
    planar.  Deterministic: first qualifying order lexicographically."""
    pairings = []
    for side in sides:
        ids = sorted(side.crossings)
        for mask in range(1 << len(ids)):
            pairing, _c = _tangle_raw(side, n, _choice_from_mask(ids, mask))
            pairings.append(pairing)
    for rest in itertools.permutations(range(1, n)):
        if n > 2 and rest[0] > rest[-1]:
            continue  # reflections give the same crossing relation
        order = (0,) + rest
        if all(_noncrossing(p, order) for p in pairings):
            return order
    raise ValidationError("disc content admits no planar boundary order")


def _remap_stubs(arcs: Iterable[TangleArc], newindex: dict[int, int]) -> tuple[TangleArc, ...]:
    out = []
    for a in arcs:
        ports = tuple(
            ("stub", newindex[p[1]]) if p[0] == "stub" else p for p in a.ports
        )
        out.append(TangleArc(ports, a.length))
    return tuple(out)


def _finish_event(
    kind: MoveKind,
    stubs: list[tuple[int, float]],
    before: DiscSide,
    after: DiscSide,
) -> MoveEvent:
    order = _order_stubs(len(stubs), [before, after])
    newindex = {stub: pos for pos, stub in enumerate(order)}
    event = MoveEvent(
        kind=kind,
        boundary=tuple(stubs[stub] for stub in order),
        before=DiscSide(before.crossings, _remap_stubs(before.arcs, newindex)),
        after=DiscSide(after.crossings, _remap_stubs(after.arcs, newindex)),
    )
    require_valid_event(event)
    return event


def _cut_portions(d: CurveDiagram, inside_crossings: set[int], slots: list[Slot]):
    """Cut the arcs hanging off the given inside slots.

    Returns (stubs, portions): ``stubs[k] = (arc id, frac)`` and the inside
    portions as TangleArcs referencing stub indices 0..len-1.  Arcs with
    both ends inside are cut twice at 1/3 and 2/3; single-ended ones at 1/2.
    """
    by_arc: dict[int, list[Slot]] = {}
    for slot in slots:
        aid, _end = d.arc_at(slot)
        by_arc.setdefault(aid, []).append(slot)
    stubs: list[tuple[int, float]] = []
    portions: list[TangleArc] = []
    for aid in sorted(by_arc):
        arc = d.arcs[aid]
        ends_here = by_arc[aid]
        if len(ends_here) == 2:
            s0 = len(stubs)
            stubs.append((aid, 1.0 / 3.0))
            stubs.append((aid, 2.0 / 3.0))
            portions.append(
                TangleArc((("slot", *arc.ends[0]), ("stub", s0)), arc.length / 3.0)
            )
            portions.append(
                TangleArc((("stub", s0 + 1), ("slot", *arc.ends[1])), arc.length / 3.0)
            )
        else:
            (slot,) = ends_here
            _aid, end = d.arc_at(slot)
            s0 = len(stubs)
            stubs.append((aid, 0.5))
            if end == 0:
                portions.append(
                    TangleArc((("slot", *arc.ends[0]), ("stub", s0)), arc.length / 2.0)
                )
            else:
                portions.append(
                    TangleArc((("stub", s0), ("slot", *arc.ends[1])), arc.length / 2.0)
                )
    return stubs, portions


Slot = tuple[int, int]


def find_kinks(d: CurveDiagram) -> list[tuple[int, int]]:
    """(crossing, arc) pairs where the arc closes a monogon: both ends on
    the same crossing at cyclically adjacent slots."""
    out = []
    for aid in sorted(d.arcs):
        arc = d.arcs[aid]
        if arc.ends is None:
            continue
        (c0, s0), (c1, s1) = arc.ends
        if c0 == c1 and (s0 - s1) % 4 in (1, 3):
            out.append((c0, aid))
    return out


def kink_death_event(d: CurveDiagram, crossing: int, kink_arc: int) -> MoveEvent:
    """Remove one monogon: the kink arc and its crossing vanish and the two
    outer strand ends fuse.  The kink arc's length is dropped, so total
    length strictly decreases."""
    arc = d.arcs.get(kink_arc)
    if arc is None or arc.ends is None:
        raise ValidationError(f"no such candidate kink arc {kink_arc}")
    (c0, s0), (c1, s1) = arc.ends
    if not (c0 == crossing and c1 == crossing and (s0 - s1) % 4 in (1, 3)):
        raise ValidationError(
            f"arc {kink_arc} is not a monogon at crossing {crossing}"
        )
    outer = [s for s in range(4) if s not in (s0, s1)]
    stubs, portions = _cut_portions(d, {crossing}, [(crossing, s) for s in outer])
    before = DiscSide(
        (crossing,),
        tuple(portions)
        + (TangleArc((("slot", crossing, s0), ("slot", crossing, s1)), arc.length),),
    )
    after_len = sum(p.length or 0.0 for p in portions)
    after = DiscSide((), (TangleArc((("stub", 0), ("stub", 1)), after_len),))
    return _finish_event(MoveKind.R1_DEATH, stubs, before, after)


def kink_birth_event(
    d: CurveDiagram,
    host_arc: int,
    chirality: int = 0,
    new_crossing: int | None = None,
    span: tuple[float, float] = (1.0 / 3.0, 2.0 / 3.0),
) -> MoveEvent:
    """Grow a monogon on the interior of an arc; ``chirality`` picks which
    adjacent slot pair the new kink occupies."""
    arc = d.arcs.get(host_arc)
    if arc is None:
        raise ValidationError(f"no such arc {host_arc}")
    c = new_crossing
    if c is None:
        c = max(d.crossing_ids, default=0) + 1
    if c in d.crossing_ids:
        raise ValidationError(f"crossing id {c} already in use")
    f0, f1 = span
    consumed = (f1 - f0) * arc.length
    stubs = [(host_arc, f0), (host_arc, f1)]
    before = DiscSide((), (TangleArc((("stub", 0), ("stub", 1)), consumed),))
    kink = (
        TangleArc((("slot", c, 0), ("slot", c, 1)), consumed * 0.2)
        if chirality == 0
        else TangleArc((("slot", c, 0), ("slot", c, 3)), consumed * 0.2)
    )
    exit_slot = 3 if chirality == 0 else 1
    after = DiscSide(
        (c,),
        (
            TangleArc((("stub", 0), ("slot", c, 2)), consumed * 0.35),
            kink,
            TangleArc((("slot", c, exit_slot), ("stub", 1)), consumed * 0.35),
        ),
    )
    return _finish_event(MoveKind.R1_BIRTH, stubs, before, after)


def find_bigons(d: CurveDiagram) -> list[tuple[int, int, int, int]]:
    """(c1, c2, arc, arc) quadruples supporting a strand-pair death."""
    by_pair: dict[tuple[int, int], list[int]] = {}
    for aid in sorted(d.arcs):
        arc = d.arcs[aid]
        if arc.ends is None:
            continue
        (c0, _), (c1, _) = arc.ends
        if c0 == c1:
            continue
        by_pair.setdefault(tuple(sorted((c0, c1))), []).append(aid)
    out = []
    for (c1, c2), arcs in sorted(by_pair.items()):
        for a, b in itertools.combinations(arcs, 2):
            try:
                bigon_death_event(d, c1, c2, a, b)
            except ValidationError:
                continue
            out.append((c1, c2, a, b))
    return out


def bigon_death_event(
    d: CurveDiagram, c1: int, c2: int, arc_top: int, arc_bot: int
) -> MoveEvent:
    """Pull two strands apart, destroying the two crossings where they meet
    and the two arcs between them."""
    inside = {c1, c2}
    for aid in (arc_top, arc_bot):
        arc = d.arcs.get(aid)
        if arc is None or arc.ends is None or {e[0] for e in arc.ends} != inside:
            raise ValidationError(f"arc {aid} does not join crossings {c1} and {c2}")
    inner_slots = {d.arcs[arc_top].ends[0], d.arcs[arc_top].ends[1],
                   d.arcs[arc_bot].ends[0], d.arcs[arc_bot].ends[1]}
    outer = [
        (c, s) for c in sorted(inside) for s in range(4) if (c, s) not in inner_slots
    ]
    if len(outer) != 4:
        raise ValidationError("bigon arcs must occupy four distinct slots")
    stubs, portions = _cut_portions(d, inside, outer)
    before = DiscSide(
        tuple(sorted(inside)),
        tuple(portions)
        + tuple(
            TangleArc(
                (("slot", *d.arcs[aid].ends[0]), ("slot", *d.arcs[aid].ends[1])),
                d.arcs[aid].length,
            )
            for aid in (arc_top, arc_bot)
        ),
    )
    strands = _strand_detail(before, len(stubs))
    after_arcs = tuple(
        TangleArc((("stub", sin), ("stub", sout)), length * 0.5)
        for sin, sout, _passes, length in strands
    )
    after = DiscSide((), after_arcs)
    return _finish_event(MoveKind.R2_DEATH, stubs, before, after)


def bigon_birth_event(
    d: CurveDiagram,
    arc_a: int,
    arc_b: int,
    new_ids: tuple[int, int] | None = None,
) -> MoveEvent:
    """Push a finger of one strand across another, creating two crossings."""
    if arc_a == arc_b:
        raise ValidationError("strand-pair birth needs two distinct arcs")
    for aid in (arc_a, arc_b):
        if aid not in d.arcs:
            raise ValidationError(f"no such arc {aid}")
    if new_ids is None:
        base = max(d.crossing_ids, default=0) + 1
        new_ids = (base, base + 1)
    ca, cb = new_ids
    if len({ca, cb}) != 2 or ca in d.crossing_ids or cb in d.crossing_ids:
        raise ValidationError(f"crossing ids {new_ids} unusable")
    la = d.arcs[arc_a].length / 3.0
    lb = d.arcs[arc_b].length / 3.0
    stubs = [(arc_a, 1.0 / 3.0), (arc_a, 2.0 / 3.0), (arc_b, 1.0 / 3.0), (arc_b, 2.0 / 3.0)]
    before = DiscSide(
        (),
        (
            TangleArc((("stub", 0), ("stub", 1)), la),
            TangleArc((("stub", 2), ("stub", 3)), lb),
        ),
    )
    after = DiscSide(
        (ca, cb),
        (
            TangleArc((("stub", 0), ("slot", ca, 2)), la * 0.3),
            TangleArc((("slot", ca, 0), ("slot", cb, 2)), la * 0.2),
            TangleArc((("slot", cb, 0), ("stub", 1)), la * 0.3),
            TangleArc((("stub", 2), ("slot", ca, 1)), lb * 0.3),
            TangleArc((("slot", ca, 3), ("slot", cb, 1)), lb * 0.2),
            TangleArc((("slot", cb, 3), ("stub", 3)), lb * 0.3),
        ),
    )
    return _finish_event(MoveKind.R2_BIRTH, stubs, before, after)


def find_triangles(d: CurveDiagram) -> list[tuple[tuple[int, int, int], tuple[int, int, int]]]:
    """((cx, cy, cz), (arc_xy, arc_yz, arc_zx)) triples supporting a slide."""
    by_pair: dict[tuple[int, int], list[int]] = {}
    for aid in sorted(d.arcs):
        arc = d.arcs[aid]
        if arc.ends is None:
            continue
        (c0, _), (c1, _) = arc.ends
        if c0 == c1:
            continue
        by_pair.setdefault(tuple(sorted((c0, c1))), []).append(aid)
    out = []
    crossings = sorted({c for pair in by_pair for c in pair})
    for cx, cy, cz in itertools.combinations(crossings, 3):
        for a_xy in by_pair.get((cx, cy), []):
            for a_yz in by_pair.get((cy, cz), []):
                for a_zx in by_pair.get((cx, cz), []):
                    try:
                        triangle_flip_event(d, (cx, cy, cz), (a_xy, a_yz, a_zx))
                    except ValidationError:
                        continue
                    out.append(((cx, cy, cz), (a_xy, a_yz, a_zx)))
    return out


def triangle_flip_event(
    d: CurveDiagram,
    crossings: tuple[int, int, int],
    triangle_arcs: tuple[int, int, int],
) -> MoveEvent:
    """Slide a strand across the crossing of the other two: the three
    pairwise crossings persist (matched by strand pair) while each strand
    visits its two crossings in the opposite order."""
    inside = set(crossings)
    if len(inside) != 3:
        raise ValidationError("triangle needs three distinct crossings")
    tri_slots: set[Slot] = set()
    for aid in triangle_arcs:
        arc = d.arcs.get(aid)
        if arc is None or arc.ends is None:
            raise ValidationError(f"no such arc {aid}")
        if not {e[0] for e in arc.ends} <= inside or arc.ends[0][0] == arc.ends[1][0]:
            raise ValidationError(f"arc {aid} is not a triangle edge")
        tri_slots.update(arc.ends)
    if len(tri_slots) != 6:
        raise ValidationError("triangle arcs must occupy six distinct slots")
    outer = [
        (c, s) for c in sorted(inside) for s in range(4) if (c, s) not in tri_slots
    ]
    stubs, portions = _cut_portions(d, inside, outer)
    before = DiscSide(
        tuple(sorted(inside)),
        tuple(portions)
        + tuple(
            TangleArc(
                (("slot", *d.arcs[aid].ends[0]), ("slot", *d.arcs[aid].ends[1])),
                d.arcs[aid].length,
            )
            for aid in triangle_arcs
        ),
    )
    strands = _strand_detail(before, len(stubs))
    if sorted(len(p) for _i, _o, p, _l in strands) != [2, 2, 2]:
        raise ValidationError("triangle strands malformed")
    total = sum(a.length or 0.0 for a in before.arcs)
    piece = total / 9.0
    after_arcs = []
    for sin, sout, passes, _length in strands:
        (pc, p_in, p_out), (qc, q_in, q_out) = passes
        after_arcs.append(TangleArc((("stub", sin), ("slot", qc, q_in)), piece))
        after_arcs.append(TangleArc((("slot", qc, q_out), ("slot", pc, p_in)), piece))
        after_arcs.append(TangleArc((("slot", pc, p_out), ("stub", sout)), piece))
    after = DiscSide(tuple(sorted(inside)), tuple(after_arcs))
    return _finish_event(MoveKind.R3, stubs, before, after)
