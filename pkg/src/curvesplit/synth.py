"""Combinatorial homotopy-script synthesis.

Builds scripts directly on diagrams (no geometry): the canonical
contraction of the m-layer perturbed curve kills the innermost monogon
m-1 times; randomized variants interleave balanced padding blocks —
monogon births, strand-pair pokes, and slide pairs — nested LIFO so every
block restores the structure it found.  Lengths only ever shrink across
events, so a bound slightly above the initial length holds throughout.
"""

from __future__ import annotations

import random

from .diagram import CurveDiagram, canonical_perturbed_m_gamma
from .errors import ValidationError
from .moves import (
    MoveEvent,
    apply_move,
    bigon_birth_event,
    bigon_death_event,
    find_bigons,
    find_kinks,
    find_triangles,
    kink_birth_event,
    kink_death_event,
    triangle_flip_event,
)
from .resgraph import HomotopyScript


def _inner_kink(d: CurveDiagram) -> tuple[int, int]:
    """The monogon the canonical contraction kills next: smallest crossing,
    preferring the arc on slots {2, 3} (the inner layer of the spiral)."""
    kinks = find_kinks(d)
    if not kinks:
        raise ValidationError("diagram has no monogon to kill")
    c = min(k[0] for k in kinks)
    at_c = [aid for cc, aid in kinks if cc == c]
    for aid in at_c:
        slots = {s for _c, s in d.arcs[aid].ends}
        if slots == {2, 3}:
            return c, aid
    return c, at_c[0]


def contraction_script(m: int) -> HomotopyScript:
    """The plain spiral contraction: m-1 monogon deaths down to a circle."""
    d, _res = canonical_perturbed_m_gamma(m)
    initial = d
    events: list[MoveEvent] = []
    for _ in range(m - 1):
        c, kink = _inner_kink(d)
        ev = kink_death_event(d, c, kink)
        events.append(ev)
        d = apply_move(d, ev)
    bound = initial.total_length() * 1.01
    return HomotopyScript(initial, tuple(events), bound=bound, terminal_disc=True)


class _Synth:
    def __init__(self, d: CurveDiagram, rng: random.Random):
        self.d = d
        self.rng = rng
        self.events: list[MoveEvent] = []

    def emit(self, ev: MoveEvent) -> None:
        self.d = apply_move(self.d, ev)
        self.events.append(ev)

    def random_arc(self, exclude: set[int] = frozenset()) -> int:
        pool = [a for a in sorted(self.d.arcs) if a not in exclude]
        return self.rng.choice(pool)

    def pad_r1(self) -> None:
        host = self.random_arc()
        birth = kink_birth_event(self.d, host, chirality=self.rng.randrange(2))
        c_new = birth.after.crossings[0]
        self.emit(birth)
        kink = next(aid for cc, aid in find_kinks(self.d) if cc == c_new)
        self.emit(kink_death_event(self.d, c_new, kink))

    def pad_r2(self) -> None:
        a = self.random_arc()
        b = self.random_arc(exclude={a})
        birth = bigon_birth_event(self.d, a, b)
        ca, cb = birth.after.crossings
        self.emit(birth)
        pair = tuple(sorted((ca, cb)))
        cands = [bg for bg in find_bigons(self.d) if (bg[0], bg[1]) == pair]
        self.emit(bigon_death_event(self.d, *cands[0]))

    def pad_r3(self) -> bool:
        """Corner double-poke, slide across and back, unwind.  Returns
        False when no coherent corner arises (nothing is emitted then)."""
        base = self.d
        base_events = len(self.events)
        crossings = list(base.crossing_ids)
        if not crossings:
            return False
        self.rng.shuffle(crossings)
        for c in crossings:
            for s_u, s_w in ((0, 1), (1, 2), (2, 3), (3, 0)):
                u, _eu = base.arc_at((c, s_u))
                w, _ew = base.arc_at((c, s_w))
                if u == w:
                    continue
                try:
                    poke1 = bigon_birth_event(self.d, u, w)
                    self.emit(poke1)
                    tris = find_triangles(self.d)
                    if not tris:
                        raise ValidationError("no coherent triangle")
                    tri = tris[0]
                    flip = triangle_flip_event(self.d, *tri)
                    self.emit(flip)
                    flip_back = triangle_flip_event(self.d, *find_triangles(self.d)[0])
                    self.emit(flip_back)
                    ca, cb = poke1.after.crossings
                    pair = tuple(sorted((ca, cb)))
                    cands = [
                        bg for bg in find_bigons(self.d) if (bg[0], bg[1]) == pair
                    ]
                    self.emit(bigon_death_event(self.d, *cands[0]))
                    return True
                except (ValidationError, IndexError):
                    self.d = base
                    del self.events[base_events:]
                    # replay nothing; try the next corner
                    continue
        return False


def random_script(
    m: int,
    seed: int = 0,
    pads: int = 1,
    allow_r3: bool = True,
) -> HomotopyScript:
    """A randomized contraction of the canonical m-layer curve: padding
    blocks between monogon deaths, every slice shorter than the bound."""
    if m < 2:
        raise ValidationError(f"m must be at least 2, got {m}")
    rng = random.Random(seed)
    d0, _res = canonical_perturbed_m_gamma(m)
    syn = _Synth(d0, rng)
    for stage in range(m - 1):
        for _ in range(pads if stage == 0 else rng.randrange(pads + 1)):
            kind = rng.random()
            if allow_r3 and kind < 0.25:
                if not syn.pad_r3():
                    syn.pad_r2()
            elif kind < 0.6:
                syn.pad_r2()
            else:
                syn.pad_r1()
        c, kink = _inner_kink(syn.d)
        syn.emit(kink_death_event(syn.d, c, kink))
    bound = d0.total_length() * 1.01
    return HomotopyScript(d0, tuple(syn.events), bound=bound, terminal_disc=True)
