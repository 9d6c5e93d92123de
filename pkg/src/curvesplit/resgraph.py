"""The resolution multigraph over a homotopy timeline.

A homotopy script is an initial diagram plus one move event per time
interval; folding the events yields the slice diagrams.  The graph's
vertices at level i are the 2^j resolutions of slice i; its edges join
resolved states whose move-disc tangles are isotopic, lifted to global
vertices by matching the smoothing choices outside the disc (crossing ids
persist across a move, so the outside correspondence is the identity).

Every edge joins level (i, i+1) or (i, i), and carries a loop bijection:
loops are matched across the edge by the boundary stubs they cross, by
identity outside the disc, and circle-to-circle inside it.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Iterable, Mapping

import numpy as np

from . import kernels
from .diagram import (
    CurveDiagram,
    LoopCollection,
    Resolution,
    smooth,
    validate as validate_diagram,
)
from .errors import (
    CapExceededError,
    InvariantError,
    ScriptError,
    ValidationError,
)
from .moves import (
    AFTER,
    BEFORE,
    Instance,
    MoveApplication,
    MoveEvent,
    apply_move_ex,
    edge_table,
    instance_tangle,
    partner_counts,
    require_valid_event,
)

DEFAULT_CAP = 20
DEFAULT_VERTEX_BUDGET = 1 << 22

Vertex = tuple[int, int]  # (level, resolution mask over sorted slice crossings)


@dataclass(frozen=True)
class HomotopyScript:
    initial: CurveDiagram
    events: tuple[MoveEvent, ...]
    bound: float | None = None
    terminal_disc: bool = False

    def to_json(self) -> dict:
        return {
            "version": 1,
            "initial": self.initial.to_json(),
            "events": [e.to_json() for e in self.events],
            "bound": self.bound,
            "terminal_disc": self.terminal_disc,
        }

    @classmethod
    def from_json(cls, data: Mapping) -> "HomotopyScript":
        return cls(
            initial=CurveDiagram.from_json(data["initial"]),
            events=tuple(MoveEvent.from_json(e) for e in data["events"]),
            bound=data.get("bound"),
            terminal_disc=bool(data.get("terminal_disc", False)),
        )


def validate_script(script: HomotopyScript) -> list[str]:
    """Findings for the script itself; folding problems become findings."""
    findings = [f"initial diagram: {f}" for f in validate_diagram(script.initial)]
    if not script.events:
        findings.append("a homotopy script needs at least one move event")
    if len(script.initial.components) != 1:
        findings.append("initial diagram must be a single closed curve")
    if script.bound is not None and script.bound <= 0:
        findings.append("length bound must be positive")
    if findings:
        return findings
    try:
        slice_diagrams(script)
    except (ValidationError, InvariantError) as exc:
        findings.append(str(exc))
    return findings


def slice_diagrams(script: HomotopyScript) -> list[CurveDiagram]:
    """H(t_0..t_n) by folding the events, with the length audit."""
    return [s for s, _a in _fold(script)]


def _fold(script: HomotopyScript):
    out: list[tuple[CurveDiagram, MoveApplication | None]] = [(script.initial, None)]
    if script.bound is not None and not script.initial.total_length() < script.bound:
        raise ScriptError(
            0,
            f"slice length {script.initial.total_length()} is not below the "
            f"bound {script.bound}",
        )
    d = script.initial
    for i, event in enumerate(script.events):
        try:
            d, app = apply_move_ex(d, event)
        except ValidationError as exc:
            raise ScriptError(i, str(exc)) from exc
        if script.bound is not None and not d.total_length() < script.bound:
            raise ScriptError(
                i + 1,
                f"slice length {d.total_length()} is not below the bound "
                f"{script.bound}",
            )
        out.append((d, app))
    return out


class ScriptContext:
    """Cached slices, applications, and kernel tables for one script."""

    def __init__(self, script: HomotopyScript, cap: int = DEFAULT_CAP):
        self.script = script
        for event in script.events:
            require_valid_event(event)
        folded = _fold(script)
        self.slices: list[CurveDiagram] = [d for d, _ in folded]
        self.apps: list[MoveApplication] = [a for _d, a in folded[1:]]
        self.orders: list[tuple[int, ...]] = [
            tuple(d.crossing_ids) for d in self.slices
        ]
        self.cap = cap
        self._mates = [d.port_mates() for d in self.slices]
        self._smooth_cache: dict[tuple[int, int], LoopCollection] = {}
        j0 = len(self.orders[0])
        if j0 > cap:
            raise CapExceededError("level-0 crossing count", j0, cap)
        counts0 = self.counts_all(0)
        self.m = int(counts0.max())
        top = np.nonzero(counts0 == self.m)[0]
        self.v_star: Vertex = (0, int(top[0]))
        self.v_star_unique = len(top) == 1

    @property
    def levels(self) -> int:
        return len(self.slices)

    def count(self, level: int, mask: int) -> int:
        mate, free = self._mates[level]
        return int(kernels.count_loops(mate, mask)) + free

    def counts_batch(self, level: int, masks) -> np.ndarray:
        mate, free = self._mates[level]
        return kernels.count_loops_batch(mate, np.asarray(masks, dtype=np.int64)) + free

    def counts_all(self, level: int) -> np.ndarray:
        j = len(self.orders[level])
        if j > self.cap:
            raise CapExceededError(f"slice {level} crossing count", j, self.cap)
        return self.counts_batch(level, np.arange(1 << j, dtype=np.int64))

    def resolution(self, v: Vertex) -> Resolution:
        level, mask = v
        return Resolution.from_bits(self.orders[level], mask)

    def loops(self, v: Vertex) -> LoopCollection:
        if v not in self._smooth_cache:
            level, mask = v
            self._smooth_cache[v] = smooth(self.slices[level], self.resolution(v))
        return self._smooth_cache[v]

    def bits(self, v: Vertex) -> str:
        level, mask = v
        j = len(self.orders[level])
        return format(mask, f"0{j}b")[::-1] if j else ""

    # -- instance embedding ------------------------------------------------

    def event_frame(self, k: int):
        """(disc ids per side, outside ids, index maps) for event k."""
        event = self.script.events[k]
        before_ids = tuple(sorted(event.before.crossings))
        after_ids = tuple(sorted(event.after.crossings))
        out_before = tuple(c for c in self.orders[k] if c not in set(before_ids))
        out_after = tuple(c for c in self.orders[k + 1] if c not in set(after_ids))
        if out_before != out_after:
            raise InvariantError(
                f"event {k}: outside crossings differ across the move "
                f"({out_before} vs {out_after})"
            )
        return before_ids, after_ids, out_before

    @staticmethod
    def _merge_mask(
        all_ids: tuple[int, ...],
        disc_ids: tuple[int, ...],
        disc_mask: int,
        out_ids: tuple[int, ...],
        out_mask: int,
    ) -> int:
        bit = {}
        for i, c in enumerate(disc_ids):
            bit[c] = (disc_mask >> i) & 1
        for i, c in enumerate(out_ids):
            bit[c] = (out_mask >> i) & 1
        m = 0
        for i, c in enumerate(all_ids):
            m |= bit[c] << i
        return m

    def lift(self, k: int, inst: Instance, out_mask: int) -> Vertex:
        """Embed a disc instance of event k with an outside assignment."""
        before_ids, after_ids, out_ids = self.event_frame(k)
        side, disc_mask = inst
        level = k if side == BEFORE else k + 1
        disc_ids = before_ids if side == BEFORE else after_ids
        mask = self._merge_mask(self.orders[level], disc_ids, disc_mask, out_ids, out_mask)
        return (level, mask)

    def project(self, k: int, v: Vertex) -> tuple[Instance, int]:
        """Split a vertex adjacent to event k into (instance, outside mask)."""
        before_ids, after_ids, out_ids = self.event_frame(k)
        level, mask = v
        if level == k:
            side, disc_ids = BEFORE, before_ids
        elif level == k + 1:
            side, disc_ids = AFTER, after_ids
        else:
            raise ValidationError(f"vertex level {level} not adjacent to event {k}")
        order = self.orders[level]
        pos = {c: i for i, c in enumerate(order)}
        disc_mask = 0
        for i, c in enumerate(disc_ids):
            disc_mask |= ((mask >> pos[c]) & 1) << i
        out_mask = 0
        for i, c in enumerate(out_ids):
            out_mask |= ((mask >> pos[c]) & 1) << i
        return (side, disc_mask), out_mask

    def adjacent_events(self, level: int) -> list[int]:
        out = []
        if level > 0:
            out.append(level - 1)
        if level < len(self.script.events):
            out.append(level)
        return out

    def degree(self, v: Vertex) -> int:
        """Edge multiplicity at ``v`` from local partner counting."""
        deg = 0
        for k in self.adjacent_events(v[0]):
            inst, _out = self.project(k, v)
            deg += partner_counts(self.script.events[k])[inst]
        return deg

    def neighbors(self, v: Vertex) -> list[tuple[Vertex, int, tuple[Instance, Instance]]]:
        """(neighbor, event index, instance pair) with multiplicity."""
        out = []
        for k in self.adjacent_events(v[0]):
            inst, out_mask = self.project(k, v)
            for a, b in edge_table(self.script.events[k]):
                if a == inst:
                    out.append((self.lift(k, b, out_mask), k, (a, b)))
                elif b == inst:
                    out.append((self.lift(k, a, out_mask), k, (a, b)))
        return out


@dataclass(frozen=True)
class GraphEdge:
    u: Vertex
    v: Vertex
    event: int
    pair: tuple[Instance, Instance]


class ResolutionGraph:
    """Materialized resolution multigraph (full or from-v* lazy closure)."""

    def __init__(self, ctx: ScriptContext, mode: str = "full",
                 vertex_budget: int = DEFAULT_VERTEX_BUDGET):
        if mode not in ("full", "lazy"):
            raise ValidationError(f"mode must be 'full' or 'lazy', got {mode!r}")
        self.ctx = ctx
        self.mode = mode
        self.vertices: set[Vertex] = set()
        self.edges: list[GraphEdge] = []
        self.adj: dict[Vertex, list[int]] = {}
        if mode == "full":
            self._build_full()
        else:
            self._build_lazy(vertex_budget)

    @property
    def v_star(self) -> Vertex:
        return self.ctx.v_star

    def _add_edge(self, u: Vertex, v: Vertex, k: int, pair) -> None:
        if v < u:
            u, v = v, u
        idx = len(self.edges)
        self.edges.append(GraphEdge(u, v, k, pair))
        self.adj.setdefault(u, []).append(idx)
        if v != u:
            self.adj.setdefault(v, []).append(idx)

    def _build_full(self) -> None:
        ctx = self.ctx
        total = 0
        for level, order in enumerate(ctx.orders):
            j = len(order)
            if j > ctx.cap:
                raise CapExceededError(
                    f"slice {level} crossing count (use lazy mode)", j, ctx.cap
                )
            total += 1 << j
            for mask in range(1 << j):
                self.vertices.add((level, mask))
        for k in range(len(ctx.script.events)):
            _b, _a, out_ids = ctx.event_frame(k)
            for pair in edge_table(ctx.script.events[k]):
                a, b = pair
                for out_mask in range(1 << len(out_ids)):
                    u = ctx.lift(k, a, out_mask)
                    v = ctx.lift(k, b, out_mask)
                    self._add_edge(u, v, k, pair)

    def _build_lazy(self, budget: int) -> None:
        ctx = self.ctx
        start = ctx.v_star
        self.vertices.add(start)
        frontier = [start]
        seen_edges: set[tuple[Vertex, Vertex, int, tuple]] = set()
        while frontier:
            frontier.sort()
            nxt: list[Vertex] = []
            for v in frontier:
                for w, k, pair in ctx.neighbors(v):
                    key = (min(v, w), max(v, w), k, pair)
                    if key not in seen_edges:
                        seen_edges.add(key)
                        self._add_edge(v, w, k, pair)
                    if w not in self.vertices:
                        self.vertices.add(w)
                        nxt.append(w)
                        if len(self.vertices) > budget:
                            raise CapExceededError(
                                "lazy graph vertex budget", len(self.vertices), budget
                            )
            frontier = nxt

    # -- queries -------------------------------------------------------------

    def degree(self, v: Vertex) -> int:
        if v not in self.vertices:
            raise ValidationError(f"unknown vertex {v}")
        if self.mode == "lazy":
            return self.ctx.degree(v)
        return len(self.adj.get(v, []))

    def component_of(self, v: Vertex) -> set[Vertex]:
        if v not in self.vertices:
            raise ValidationError(f"unknown vertex {v}")
        seen = {v}
        stack = [v]
        while stack:
            u = stack.pop()
            for idx in self.adj.get(u, []):
                e = self.edges[idx]
                w = e.v if e.u == u else e.u
                if w not in seen:
                    seen.add(w)
                    stack.append(w)
        return seen

    def odd_vertices(self, sub: Iterable[Vertex] | None = None) -> list[Vertex]:
        pool = self.vertices if sub is None else sub
        return sorted(v for v in pool if self.degree(v) % 2 == 1)

    def components(self) -> list[set[Vertex]]:
        out = []
        left = set(self.vertices)
        while left:
            comp = self.component_of(next(iter(left)))
            out.append(comp)
            left -= comp
        return out

    def export_text(self) -> str:
        lines = []
        for e in sorted(self.edges, key=lambda e: (e.u, e.v, e.event)):
            lines.append(
                f"{e.u[0]}:{self.ctx.bits(e.u)} -- {e.v[0]}:{self.ctx.bits(e.v)}"
                f" # event={e.event}"
            )
        return "\n".join(lines) + ("\n" if lines else "")


def build_graph(
    script: HomotopyScript,
    mode: str = "full",
    cap: int = DEFAULT_CAP,
    vertex_budget: int = DEFAULT_VERTEX_BUDGET,
) -> ResolutionGraph:
    return ResolutionGraph(ScriptContext(script, cap=cap), mode=mode,
                           vertex_budget=vertex_budget)


# --------------------------------------------------------------------------
# loop bijections along edges


def _loop_tags(ctx: ScriptContext, k: int, v: Vertex):
    """Classify each loop of the smoothing at ``v`` relative to event k's
    disc: (stub set crossed, lies-inside flag)."""
    app = ctx.apps[k]
    level = v[0]
    if level == k:
        cut = app.cut_stubs_before_map()
        inside = app.consumed
    elif level == k + 1:
        cut = app.chain_stubs_map()
        inside = app.inside_new
    else:
        raise ValidationError(f"vertex level {level} not adjacent to event {k}")
    tags = []
    for loop in ctx.loops(v).loops:
        stubs: set[int] = set()
        for aid in loop:
            stubs.update(cut.get(aid, ()))
        tags.append((frozenset(stubs), all(aid in inside for aid in loop)))
    return tags


def loop_bijection(ctx: ScriptContext, edge: GraphEdge) -> tuple[tuple[int, int], ...]:
    """Match loops across an edge: by boundary stubs crossed for loops that
    enter the disc, by identity outside it, circle-to-circle inside it.
    Raises ``InvariantError`` when no perfect matching exists (which would
    contradict the tangle-isotopy edge rule)."""
    u, v = edge.u, edge.v
    tags_u = _loop_tags(ctx, edge.event, u)
    tags_v = _loop_tags(ctx, edge.event, v)
    loops_u = ctx.loops(u).loops
    loops_v = ctx.loops(v).loops
    used_v: set[int] = set()
    pairs: list[tuple[int, int]] = []
    by_stubs_v: dict[frozenset, int] = {}
    circles_v: list[int] = []
    outside_v: dict[tuple, int] = {}
    for j, (stubs, ins) in enumerate(tags_v):
        if stubs:
            if stubs in by_stubs_v:
                raise InvariantError("two loops cross the same stub set")
            by_stubs_v[stubs] = j
        elif ins:
            circles_v.append(j)
        else:
            outside_v[loops_v[j]] = j
    for i, (stubs, ins) in enumerate(tags_u):
        if stubs:
            j = by_stubs_v.get(stubs)
            if j is None:
                raise InvariantError(
                    f"no partner loop crossing stubs {sorted(stubs)}"
                )
        elif ins:
            if not circles_v:
                raise InvariantError("no partner for the inside circle")
            j = circles_v.pop(0)
        else:
            j = outside_v.get(loops_u[i])
            if j is None:
                raise InvariantError(
                    f"outside loop {loops_u[i]} missing from the far side"
                )
        if j in used_v:
            raise InvariantError("loop bijection is not injective")
        used_v.add(j)
        pairs.append((i, j))
    if len(used_v) != len(loops_v):
        raise InvariantError("loop bijection is not surjective")
    return tuple(sorted(pairs))


def script_dumps(script: HomotopyScript) -> str:
    return json.dumps(script.to_json(), sort_keys=True)
