"""Immersed closed curves as 4-valent combinatorial maps.

A diagram is a set of crossings, each with four half-edge slots in
counterclockwise cyclic order 0..3, and a set of arcs joining slot pairs.
The curve passes straight through every crossing: entering at slot s it
leaves at slot s+2 (mod 4).  Arcs carry lengths (same units as any length
bound attached); an arc with no ends is a free loop (an embedded circle
component with no crossings).

Resolutions replace every crossing by one of its two non-crossing local
reconnections: choice ``A`` pairs slots (0,1)(2,3), choice ``B`` pairs
(0,3)(1,2).  The strand-through pairings (0,2)(1,3) are never smoothings.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Mapping

from .errors import (
    CapExceededError,
    IncompleteResolutionError,
    ValidationError,
)
from . import kernels

Slot = tuple[int, int]  # (crossing id, slot index 0..3)

CHOICE_A = "A"
CHOICE_B = "B"

DEFAULT_CROSSING_CAP = 20


@dataclass(frozen=True)
class Arc:
    """One arc: either both ends at crossing slots, or a free loop."""

    id: int
    length: float
    ends: tuple[Slot, Slot] | None = None

    def other_end(self, end: int) -> Slot:
        assert self.ends is not None
        return self.ends[1 - end]


class CurveDiagram:
    """Immutable 4-valent combinatorial map with arc lengths."""

    def __init__(
        self,
        arcs: Iterable[Arc],
        components: tuple[tuple[int, ...], ...] | None = None,
        genus: int | None = None,
        bound: float | None = None,
    ):
        arcs = tuple(arcs)
        self.arcs: dict[int, Arc] = {a.id: a for a in arcs}
        if len(self.arcs) != len(arcs):
            raise ValidationError("duplicate arc ids")
        self.genus = genus
        self.bound = bound
        self._slot_map, self._slot_clashes = self._build_slot_map()
        self.crossing_ids: tuple[int, ...] = tuple(
            sorted({c for (c, _s) in self._slot_map})
        )
        self._components = components if components is not None else self.traverse()

    # -- structure ---------------------------------------------------------

    def _build_slot_map(self):
        slot_map: dict[Slot, tuple[int, int]] = {}
        clashes: list[Slot] = []
        for a in self.arcs.values():
            if a.ends is None:
                continue
            for end, slot in enumerate(a.ends):
                if slot in slot_map:
                    clashes.append(slot)
                else:
                    slot_map[slot] = (a.id, end)
        return slot_map, clashes

    @property
    def components(self) -> tuple[tuple[int, ...], ...]:
        return self._components

    def arc_at(self, slot: Slot) -> tuple[int, int]:
        """(arc id, end index) plugged into a crossing slot."""
        try:
            return self._slot_map[slot]
        except KeyError:
            raise ValidationError(f"no arc at slot {slot}") from None

    def total_length(self) -> float:
        return sum(a.length for a in self.arcs.values())

    def crossing_count(self) -> int:
        return len(self.crossing_ids)

    def traverse(self) -> tuple[tuple[int, ...], ...]:
        """Component decomposition from straight-through traversal.

        Each component is a cyclic arc-id sequence, started at its smallest
        arc id travelling from end 0.
        """
        comps: list[tuple[int, ...]] = []
        visited: set[int] = set()
        for start in sorted(self.arcs):
            if start in visited:
                continue
            arc = self.arcs[start]
            if arc.ends is None:
                visited.add(start)
                comps.append((start,))
                continue
            seq: list[int] = []
            aid, enter = start, 0
            while True:
                seq.append(aid)
                visited.add(aid)
                a = self.arcs[aid]
                if a.ends is None or len(seq) > 2 * len(self.arcs):
                    break  # malformed; validate() reports it
                c, s = a.ends[1 - enter]
                out = (c, (s + 2) % 4)
                if out not in self._slot_map:
                    break
                aid, enter = self._slot_map[out]
                if aid == start and enter == 0:
                    break
                if aid in visited and aid != start:
                    break
            comps.append(tuple(seq))
        return tuple(comps)

    # -- kernels interface ---------------------------------------------------

    def port_mates(self) -> tuple[list[int], int]:
        """(mate array over 4j ports, free-loop count) for the kernels.

        Crossings are indexed in sorted-id order; port ``4k + s`` is slot s
        of the k-th crossing.
        """
        index = {c: k for k, c in enumerate(self.crossing_ids)}
        mate = [-1] * (4 * len(index))
        free = 0
        for a in self.arcs.values():
            if a.ends is None:
                free += 1
                continue
            (c0, s0), (c1, s1) = a.ends
            p0 = (index[c0] << 2) | s0
            p1 = (index[c1] << 2) | s1
            mate[p0] = p1
            mate[p1] = p0
        if any(m < 0 for m in mate):
            raise ValidationError("diagram has unplugged crossing slots")
        return mate, free

    # -- serialization -------------------------------------------------------

    def to_json(self) -> dict:
        crossings = []
        for c in self.crossing_ids:
            slots = []
            for s in range(4):
                aid, end = self._slot_map.get((c, s), (None, None))
                slots.append([aid, end])
            crossings.append({"id": c, "slots": slots})
        return {
            "crossings": crossings,
            "arcs": [
                {"id": a.id, "length": a.length}
                for a in sorted(self.arcs.values(), key=lambda a: a.id)
            ],
            "components": [list(c) for c in self._components],
            **({"genus": self.genus} if self.genus is not None else {}),
            **({"bound": self.bound} if self.bound is not None else {}),
        }

    @classmethod
    def from_json(cls, data: Mapping) -> "CurveDiagram":
        lengths = {a["id"]: float(a["length"]) for a in data["arcs"]}
        ends: dict[int, dict[int, Slot]] = {aid: {} for aid in lengths}
        for cr in data.get("crossings", []):
            cid = int(cr["id"])
            slots = cr["slots"]
            if len(slots) != 4:
                raise ValidationError(f"crossing {cid} must list 4 slots")
            for s, ref in enumerate(slots):
                aid, end = ref
                if aid is None:
                    continue
                if aid not in ends:
                    raise ValidationError(f"crossing {cid} references unknown arc {aid}")
                ends[int(aid)][int(end)] = (cid, s)
        arcs = []
        for aid, length in lengths.items():
            got = ends[aid]
            if not got:
                arcs.append(Arc(aid, length, None))
            elif set(got) == {0, 1}:
                arcs.append(Arc(aid, length, (got[0], got[1])))
            else:
                raise ValidationError(f"arc {aid} has ends {sorted(got)} (need 0 and 1)")
        comps = data.get("components")
        comps = tuple(tuple(c) for c in comps) if comps is not None else None
        return cls(arcs, components=comps, genus=data.get("genus"), bound=data.get("bound"))

    def __repr__(self) -> str:  # pragma: no cover - debug aid
        return f"CurveDiagram(crossings={len(self.crossing_ids)}, arcs={len(self.arcs)})"


@dataclass(frozen=True)
class Resolution:
    """A smoothing choice (A or B) for every crossing of one diagram."""

    choices: tuple[tuple[int, str], ...]  # sorted (crossing id, choice)

    @classmethod
    def from_mapping(cls, mapping: Mapping[int, str]) -> "Resolution":
        for v in mapping.values():
            if v not in (CHOICE_A, CHOICE_B):
                raise ValidationError(f"resolution choice must be A or B, got {v!r}")
        return cls(tuple(sorted(mapping.items())))

    @classmethod
    def from_bits(cls, crossing_ids: Iterable[int], mask: int) -> "Resolution":
        """Bit k of ``mask`` is the choice at the k-th id in the given order
        (set = B); pair with :meth:`mask` using the same order."""
        return cls(
            tuple(
                sorted(
                    (c, CHOICE_B if (mask >> k) & 1 else CHOICE_A)
                    for k, c in enumerate(crossing_ids)
                )
            )
        )

    def as_dict(self) -> dict[int, str]:
        return dict(self.choices)

    def mask(self, crossing_ids: Iterable[int]) -> int:
        """Bitmask in the given crossing order (bit set = choice B)."""
        d = self.as_dict()
        m = 0
        for k, c in enumerate(crossing_ids):
            if d[c] == CHOICE_B:
                m |= 1 << k
        return m

    def bits(self, crossing_ids: Iterable[int]) -> str:
        d = self.as_dict()
        return "".join("1" if d[c] == CHOICE_B else "0" for c in crossing_ids)

    def restrict(self, crossing_ids: Iterable[int]) -> "Resolution":
        want = set(crossing_ids)
        return Resolution(tuple((c, ch) for c, ch in self.choices if c in want))

    def merged_with(self, other: "Resolution") -> "Resolution":
        d = self.as_dict()
        d.update(other.as_dict())
        return Resolution.from_mapping(d)

    def flip(self, crossing: int) -> "Resolution":
        d = self.as_dict()
        d[crossing] = CHOICE_B if d[crossing] == CHOICE_A else CHOICE_A
        return Resolution.from_mapping(d)


@dataclass(frozen=True)
class LoopCollection:
    """Simple loops produced by smoothing every crossing of a diagram."""

    loops: tuple[tuple[int, ...], ...]  # canonical cyclic arc-id tuples
    lengths: tuple[float, ...]

    def __len__(self) -> int:
        return len(self.loops)

    @property
    def total_length(self) -> float:
        return sum(self.lengths)


def validate(d: CurveDiagram) -> list[str]:
    """Every violated structural invariant, as human-readable findings.

    Total function: valid diagrams return an empty list.
    """
    findings: list[str] = []
    for slot in d._slot_clashes:
        findings.append(f"slot {slot} is claimed by more than one arc end")
    for a in d.arcs.values():
        if a.length < 0:
            findings.append(f"arc {a.id} has negative length {a.length}")
        if a.ends is not None:
            (c0, s0), (c1, s1) = a.ends
            if (c0, s0) == (c1, s1):
                findings.append(f"arc {a.id} has coincident ends {a.ends[0]}")
            for c, s in a.ends:
                if not 0 <= s <= 3:
                    findings.append(f"arc {a.id} uses slot index {s} outside 0..3")
    for c in d.crossing_ids:
        missing = [s for s in range(4) if (c, s) not in d._slot_map]
        if missing:
            findings.append(f"crossing {c} has unplugged slots {missing}")
    if findings:
        return findings
    # traversal checks need an intact slot map
    derived = d.traverse()
    visits: dict[int, int] = {c: 0 for c in d.crossing_ids}
    seen_arcs: set[int] = set()
    for comp in derived:
        for aid in comp:
            if aid in seen_arcs:
                findings.append(f"arc {aid} appears in more than one traversal")
            seen_arcs.add(aid)
            ends = d.arcs[aid].ends
            if ends is not None:
                for c, _s in ends:
                    visits[c] += 1
    for c, n in sorted(visits.items()):
        if n != 4:  # two passes touch four slots
            findings.append(
                f"crossing {c} is visited {n // 2} time(s) by traversal, expected 2"
            )
    if set(seen_arcs) != set(d.arcs):
        findings.append("traversal does not cover every arc")
    stored = sorted(canonical_loop(c) for c in d._components)
    fresh = sorted(canonical_loop(c) for c in derived)
    if stored != fresh:
        findings.append("stored components disagree with straight-through traversal")
    if d.bound is not None and not d.total_length() < d.bound:
        findings.append(
            f"total length {d.total_length()} is not strictly below bound {d.bound}"
        )
    return findings


def require_valid(d: CurveDiagram) -> None:
    findings = validate(d)
    if findings:
        raise ValidationError("invalid diagram: " + "; ".join(findings))


def check_resolution(d: CurveDiagram, r: Resolution) -> None:
    have = {c for c, _ in r.choices}
    want = set(d.crossing_ids)
    if have != want:
        missing = sorted(want - have)
        extra = sorted(have - want)
        parts = []
        if missing:
            parts.append(f"missing crossings {missing}")
        if extra:
            parts.append(f"extraneous crossings {extra}")
        raise IncompleteResolutionError("incomplete resolution: " + "; ".join(parts))


def canonical_loop(seq: tuple[int, ...]) -> tuple[int, ...]:
    """Canonical form of a cyclic arc sequence: best rotation of either
    direction, so loop identity is stable across operations."""
    n = len(seq)
    best = None
    for direction in (seq, seq[::-1]):
        for r in range(n):
            cand = direction[r:] + direction[:r]
            if best is None or cand < best:
                best = cand
    return best


def smooth(d: CurveDiagram, r: Resolution) -> LoopCollection:
    """Loops obtained by replacing every crossing with its chosen
    reconnection and reading off arc cycles.  Deterministic ordering:
    loops sorted by their canonical arc tuples."""
    require_valid(d)
    check_resolution(d, r)
    index = {c: k for k, c in enumerate(d.crossing_ids)}
    choice = r.as_dict()
    loops: list[tuple[int, ...]] = []
    for a in sorted(d.arcs):
        if d.arcs[a].ends is None:
            loops.append((a,))
    visited: set[Slot] = set()
    for start_arc in sorted(d.arcs):
        arc = d.arcs[start_arc]
        if arc.ends is None or arc.ends[0] in visited:
            continue
        seq: list[int] = []
        aid, end = start_arc, 0
        while True:
            a = d.arcs[aid]
            visited.add(a.ends[end])
            visited.add(a.ends[1 - end])
            seq.append(aid)
            c, s = a.ends[1 - end]
            s2 = s ^ (3 if choice[c] == CHOICE_B else 1)
            nxt = d.arc_at((c, s2))
            if nxt == (start_arc, 0):
                break
            aid, end = nxt
        loops.append(canonical_loop(tuple(seq)))
    loops.sort()
    lengths = tuple(sum(d.arcs[a].length for a in loop) for loop in loops)
    return LoopCollection(tuple(loops), lengths)


def count_loops(d: CurveDiagram, r: Resolution) -> int:
    """Loop count of ``smooth(d, r)`` via the fast kernel."""
    require_valid(d)
    check_resolution(d, r)
    mate, free = d.port_mates()
    return int(kernels.count_loops(mate, r.mask(d.crossing_ids))) + free


def count_loops_all(d: CurveDiagram, cap: int = DEFAULT_CROSSING_CAP):
    """Loop count for every resolution mask (kernel batch); masks are in
    bit order over sorted crossing ids."""
    import numpy as np

    j = d.crossing_count()
    if j > cap:
        raise CapExceededError("crossing count", j, cap)
    mate, free = d.port_mates()
    masks = np.arange(1 << j, dtype=np.int64)
    return kernels.count_loops_batch(mate, masks) + free


def enumerate_resolutions(
    d: CurveDiagram, cap: int = DEFAULT_CROSSING_CAP
) -> Iterator[Resolution]:
    """All 2^j resolutions of ``d``, in mask order."""
    j = d.crossing_count()
    if j > cap:
        raise CapExceededError("crossing count", j, cap)
    for mask in range(1 << j):
        yield Resolution.from_bits(d.crossing_ids, mask)


def canonical_perturbed_m_gamma(m: int) -> tuple[CurveDiagram, Resolution]:
    """The standard m-layer perturbation of an m-times traversed simple
    closed curve, plus the distinguished resolution splitting it into m
    loops.

    Layers are concentric copies joined through a seam: the curve climbs
    one layer per pass and a single return strand descends across the
    m-1 transitions, crossing each exactly once.  Crossing i sits where
    the climb from layer i to i+1 meets the return strand; slots are
    numbered so the climb passes 2 -> 0 and the return strand 1 -> 3.
    Choice A at every crossing reconnects along the layers, yielding one
    loop per layer.
    """
    if m < 2:
        raise ValidationError(f"m must be at least 2, got {m}")
    long_len = 1.0
    short_len = 1.0 / (8 * m)
    arcs: list[Arc] = []
    # climb arcs a_i; a_i runs from crossing i out to crossing i+1 (through
    # layer i+1); the last climb arc wraps the outermost layer into the
    # return strand.
    for i in range(1, m - 1):
        arcs.append(Arc(i, long_len, ((i, 0), (i + 1, 2))))
    arcs.append(Arc(m - 1, long_len, ((m - 1, 0), (m - 1, 1))))
    # return-strand arcs d_i between consecutive crossings; d_0 closes
    # through the innermost layer.
    arcs.append(Arc(m, long_len, ((1, 3), (1, 2))))
    for i in range(1, m - 1):
        arcs.append(Arc(m + i, short_len, ((i + 1, 3), (i, 1))))
    diagram = CurveDiagram(arcs)
    resolution = Resolution.from_mapping({c: CHOICE_A for c in diagram.crossing_ids})
    return diagram, resolution


_GAUSS_SIGNS = {"+": True, "-": False}


def from_gauss_code(code: str, arc_length: float = 1.0) -> CurveDiagram:
    """Build a diagram from a signed double-occurrence word.

    Tokens are ``O<k><sign>`` / ``U<k><sign>`` (over/under marks only
    distinguish the two visits; curves here live on a surface).  The first
    visit to a crossing passes slots 2 -> 0; the second passes 3 -> 1 for
    sign ``+`` and 1 -> 3 for sign ``-``.
    """
    tokens: list[tuple[str, int, str]] = []
    i = 0
    code = code.strip()
    while i < len(code):
        kind = code[i]
        if kind not in "OU":
            raise ValidationError(f"bad Gauss code at {code[i:]!r}: expected O or U")
        i += 1
        j = i
        while j < len(code) and code[j].isdigit():
            j += 1
        if j == i:
            raise ValidationError(f"bad Gauss code at {code[i:]!r}: expected a number")
        label = int(code[i:j])
        if j >= len(code) or code[j] not in _GAUSS_SIGNS:
            raise ValidationError(f"bad Gauss code near {code[i:]!r}: expected + or -")
        tokens.append((kind, label, code[j]))
        i = j + 1
    if not tokens:
        return CurveDiagram([Arc(0, arc_length, None)])
    seen: dict[int, list[tuple[str, str]]] = {}
    for kind, label, sign in tokens:
        seen.setdefault(label, []).append((kind, sign))
    for label, visits in seen.items():
        if len(visits) != 2:
            raise ValidationError(f"crossing {label} occurs {len(visits)} times, need 2")
        if {k for k, _ in visits} != {"O", "U"}:
            raise ValidationError(f"crossing {label} needs one O and one U visit")
        if visits[0][1] != visits[1][1]:
            raise ValidationError(f"crossing {label} has inconsistent signs")
    # walk the word: each token is a crossing pass with explicit in/out slots
    passes: list[tuple[int, int, int]] = []  # (crossing, slot in, slot out)
    first_seen: set[int] = set()
    for kind, label, sign in tokens:
        if label not in first_seen:
            first_seen.add(label)
            passes.append((label, 2, 0))
        elif _GAUSS_SIGNS[sign]:
            passes.append((label, 3, 1))
        else:
            passes.append((label, 1, 3))
    arcs = []
    for k, (label, _sin, sout) in enumerate(passes):
        nlabel, nsin, _nsout = passes[(k + 1) % len(passes)]
        arcs.append(Arc(k, arc_length, ((label, sout), (nlabel, nsin))))
    return CurveDiagram(arcs)


def diagram_dumps(d: CurveDiagram) -> str:
    return json.dumps(d.to_json(), sort_keys=True)
