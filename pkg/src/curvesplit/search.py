"""Parity search over the resolution graph and certificate verification.

From the distinguished vertex v* (the unique maximal-loop resolution of the
initial slice, whose m loops are the m parallel copies of the base curve),
either v* already has degree zero — then its move disc contains a circle
that contracts inside that disc — or the handshake argument guarantees
another odd-degree vertex in v*'s component.  Walking the tree path to it
and tracking one loop through the edge bijections yields the certificate:
the tracked loop is isotopic to the base curve through short curves and is
contractible at the terminal vertex.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Mapping

from .diagram import Resolution
from .errors import InvariantError, ScriptError, ValidationError
from .moves import AFTER, BEFORE, Instance, edge_table, instance_tangle, partner_counts
from .resgraph import (
    GraphEdge,
    HomotopyScript,
    ScriptContext,
    Vertex,
    _loop_tags,
    loop_bijection,
)

CASE1 = "CASE1"
CASE2 = "CASE2"
CASE3 = "CASE3"
EVEN = "EVEN"

DISC_CONTRACTION = "DISC_CONTRACTION"
LOCAL_CIRCLE = "LOCAL_CIRCLE"


@dataclass(frozen=True)
class Terminal:
    kind: str  # DISC_CONTRACTION or LOCAL_CIRCLE
    event: int | None = None  # circle evidence: which event's disc
    side: str | None = None  # and which side of it

    def to_json(self) -> dict:
        return {"kind": self.kind, "event": self.event, "side": self.side}

    @classmethod
    def from_json(cls, data: Mapping) -> "Terminal":
        return cls(data["kind"], data.get("event"), data.get("side"))


@dataclass(frozen=True)
class CertStep:
    event: int
    pair: tuple[Instance, Instance]

    def to_json(self) -> dict:
        return {"event": self.event, "pair": [list(self.pair[0]), list(self.pair[1])]}

    @classmethod
    def from_json(cls, data: Mapping) -> "CertStep":
        a, b = data["pair"]
        return cls(int(data["event"]), ((a[0], int(a[1])), (b[0], int(b[1]))))


@dataclass(frozen=True)
class Certificate:
    path: tuple[Vertex, ...]
    steps: tuple[CertStep, ...]
    tracked: tuple[int, ...]  # loop index at each path vertex
    terminal: Terminal
    length_audit: float

    def to_json(self, ctx: ScriptContext | None = None) -> dict:
        entries = []
        for v, curve in zip(self.path, self.tracked):
            level, mask = v
            entry = {"level": level, "curve": curve}
            if ctx is not None:
                entry["resolution"] = ctx.bits(v)
            else:
                entry["mask"] = mask
            entries.append(entry)
        return {
            "version": 1,
            "path": entries,
            "edges": [s.to_json() for s in self.steps],
            "terminal": self.terminal.to_json(),
            "length_audit": self.length_audit,
        }

    @classmethod
    def from_json(cls, data: Mapping, ctx: ScriptContext) -> "Certificate":
        path = []
        tracked = []
        for entry in data["path"]:
            level = int(entry["level"])
            if "resolution" in entry:
                bits = entry["resolution"]
                if len(bits) != len(ctx.orders[level]):
                    raise ValidationError(
                        f"resolution {bits!r} has {len(bits)} bits, level {level} "
                        f"has {len(ctx.orders[level])} crossings"
                    )
                mask = sum(1 << i for i, ch in enumerate(bits) if ch == "1")
            else:
                mask = int(entry["mask"])
            path.append((level, mask))
            tracked.append(int(entry["curve"]))
        return cls(
            path=tuple(path),
            steps=tuple(CertStep.from_json(s) for s in data["edges"]),
            tracked=tuple(tracked),
            terminal=Terminal.from_json(data["terminal"]),
            length_audit=float(data["length_audit"]),
        )


def certificate_dumps(cert: Certificate, ctx: ScriptContext) -> str:
    return json.dumps(cert.to_json(ctx), sort_keys=True)


def classify_vertex(ctx: ScriptContext, w: Vertex) -> str:
    """Proof-case classification of a vertex by level and parity."""
    level, _mask = w
    n = len(ctx.script.events)
    if ctx.degree(w) % 2 == 0:
        return EVEN
    if level == 0:
        return CASE1 if w != ctx.v_star else EVEN
    if level == n:
        return CASE2
    return CASE3


def circle_evidence(ctx: ScriptContext, w: Vertex) -> tuple[int, str]:
    """The adjacent event side that contributes zero edges to ``w``; its
    resolved tangle must contain the contractible circle."""
    for k in ctx.adjacent_events(w[0]):
        inst, _out = ctx.project(k, w)
        if partner_counts(ctx.script.events[k])[inst] == 0:
            tangle = instance_tangle(ctx.script.events[k], inst)
            if tangle.circles != 1:
                raise InvariantError(
                    f"zero-edge side of event {k} at {w} has {tangle.circles} "
                    "circles, expected exactly one"
                )
            return k, inst[0]
    raise InvariantError(f"odd interior vertex {w} has no zero-edge side")


def _circle_loop_index(ctx: ScriptContext, k: int, w: Vertex) -> int:
    """Index of the loop lying inside event k's disc at vertex w."""
    tags = _loop_tags(ctx, k, w)
    hits = [i for i, (stubs, inside) in enumerate(tags) if not stubs and inside]
    if len(hits) != 1:
        raise InvariantError(
            f"expected exactly one inside-disc loop at {w}, found {len(hits)}"
        )
    return hits[0]


def _audit_length(ctx: ScriptContext, path: tuple[Vertex, ...]) -> float:
    return max(ctx.slices[level].total_length() for level, _ in path)


def find_certificate(
    script: HomotopyScript, cap: int | None = None, vertex_budget: int | None = None
) -> Certificate:
    """Run the proof search: either the degenerate v* evidence or a path to
    an odd-degree vertex with terminal contraction evidence."""
    kwargs = {}
    if cap is not None:
        kwargs["cap"] = cap
    ctx = ScriptContext(script, **kwargs)
    return find_certificate_ctx(ctx, vertex_budget=vertex_budget)


def find_certificate_ctx(
    ctx: ScriptContext, vertex_budget: int | None = None
) -> Certificate:
    if not ctx.v_star_unique:
        raise ValidationError(
            f"level-0 diagram admits more than one {ctx.m}-loop resolution; "
            "the distinguished vertex is not well-defined"
        )
    m = ctx.m
    v_star = ctx.v_star
    n = len(ctx.script.events)
    budget = vertex_budget if vertex_budget is not None else (1 << 22)

    if ctx.degree(v_star) % 2 == 0:
        if ctx.degree(v_star) != 0:
            raise InvariantError(
                f"v* degree {ctx.degree(v_star)} is even but nonzero; the first "
                "move can contribute at most one or three edges"
            )
        inst, _out = ctx.project(0, v_star)
        tangle = instance_tangle(ctx.script.events[0], inst)
        if tangle.circles != 1:
            raise InvariantError(
                "v* has no edges yet its first-move tangle has no circle"
            )
        tracked = _circle_loop_index(ctx, 0, v_star)
        return Certificate(
            path=(v_star,),
            steps=(),
            tracked=(tracked,),
            terminal=Terminal(LOCAL_CIRCLE, 0, BEFORE),
            length_audit=_audit_length(ctx, (v_star,)),
        )

    parents: dict[Vertex, tuple[Vertex, int, tuple[Instance, Instance]]] = {}
    seen = {v_star}
    frontier = [v_star]
    found: tuple[Vertex, str] | None = None
    blocked_case2: Vertex | None = None
    while frontier and found is None:
        frontier.sort()
        nxt = []
        for v in frontier:
            for w, k, pair in ctx.neighbors(v):
                if w in seen:
                    continue
                seen.add(w)
                parents[w] = (v, k, pair)
                if len(seen) > budget:
                    raise ValidationError(
                        f"search exceeded the vertex budget {budget}"
                    )
                if w[0] == 0:
                    raise InvariantError(
                        f"level-0 vertex {w} other than v* is reachable; this "
                        "contradicts uniqueness of the m-loop resolution"
                    )
                if ctx.degree(w) % 2 == 1:
                    if w[0] == n:
                        if ctx.script.terminal_disc:
                            found = (w, CASE2)
                            break
                        blocked_case2 = w
                        continue
                    found = (w, CASE3)
                    break
                nxt.append(w)
            if found:
                break
        frontier = nxt
    if found is None:
        if blocked_case2 is not None:
            raise InvariantError(
                f"only terminal-slice vertex {blocked_case2} has odd degree, but "
                "the script does not assert the terminal disc property"
            )
        raise InvariantError(
            "no odd-degree vertex besides v* in its component; this contradicts "
            "the handshake parity"
        )

    w, case = found
    rev_path = [w]
    steps_rev: list[CertStep] = []
    cur = w
    while cur != v_star:
        parent, k, pair = parents[cur]
        steps_rev.append(CertStep(k, pair))
        rev_path.append(parent)
        cur = parent
    path = tuple(reversed(rev_path))
    steps = tuple(reversed(steps_rev))

    for v in path:
        got = ctx.count(v[0], v[1])
        if got != m:
            raise InvariantError(
                f"path vertex {v} has {got} loops, expected {m}; edges must "
                "preserve loop counts"
            )

    if case == CASE3:
        k_ev, side = circle_evidence(ctx, w)
        terminal = Terminal(LOCAL_CIRCLE, k_ev, side)
        tracked_w = _circle_loop_index(ctx, k_ev, w)
    else:
        terminal = Terminal(DISC_CONTRACTION)
        tracked_w = 0

    tracked = [0] * len(path)
    tracked[-1] = tracked_w
    for i in range(len(path) - 1, 0, -1):
        u, v = path[i - 1], path[i]
        edge = GraphEdge(min(u, v), max(u, v), steps[i - 1].event, steps[i - 1].pair)
        bij = dict(loop_bijection(ctx, edge))
        if edge.u == u:
            inv = {b: a for a, b in bij.items()}
            tracked[i - 1] = inv[tracked[i]]
        else:
            tracked[i - 1] = bij[tracked[i]]
    return Certificate(
        path=path,
        steps=steps,
        tracked=tuple(tracked),
        terminal=terminal,
        length_audit=_audit_length(ctx, path),
    )


def verify_certificate(script: HomotopyScript, cert: Certificate) -> list[str]:
    """Independently replay a certificate; returns the list of failures
    (empty means accepted).  Total: malformed input becomes findings."""
    report: list[str] = []
    try:
        ctx = ScriptContext(script)
    except (ValidationError, InvariantError, ScriptError) as exc:
        return [f"script does not validate: {exc}"]
    n = len(script.events)
    if not cert.path:
        return ["certificate path is empty"]
    if len(cert.tracked) != len(cert.path):
        report.append("tracked curve list does not match path length")
    if len(cert.steps) != len(cert.path) - 1:
        report.append("edge list does not match path length")
        return report
    if not ctx.v_star_unique:
        report.append("level-0 diagram has no unique maximal-loop resolution")
    if cert.path[0] != ctx.v_star:
        report.append(
            f"path starts at {cert.path[0]}, distinguished vertex is {ctx.v_star}"
        )
    for v in cert.path:
        level, mask = v
        if not 0 <= level <= n:
            report.append(f"vertex {v} has level outside the timeline")
            return report
        if not 0 <= mask < (1 << len(ctx.orders[level])):
            report.append(f"vertex {v} has a resolution outside its slice")
            return report
    for i, v in enumerate(cert.path):
        loops = ctx.loops(v)
        if len(loops) != ctx.m:
            report.append(f"path vertex {v} has {len(loops)} loops, expected {ctx.m}")
        if not 0 <= cert.tracked[i] < len(loops):
            report.append(f"tracked curve {cert.tracked[i]} out of range at {v}")
            return report
    for i, step in enumerate(cert.steps):
        u, v = cert.path[i], cert.path[i + 1]
        if not 0 <= step.event < n:
            report.append(f"step {i} cites unknown event {step.event}")
            return report
        event = script.events[step.event]
        if step.pair not in edge_table(event):
            report.append(
                f"step {i}: instances {step.pair} are not isotopic tangles of "
                f"event {step.event}"
            )
            continue
        try:
            inst_u, out_u = ctx.project(step.event, u)
            inst_v, out_v = ctx.project(step.event, v)
        except ValidationError as exc:
            report.append(f"step {i}: {exc}")
            continue
        if {inst_u, inst_v} != set(step.pair):
            report.append(
                f"step {i}: path vertices realize {sorted((inst_u, inst_v))}, "
                f"edge claims {sorted(step.pair)}"
            )
            continue
        if out_u != out_v:
            report.append(
                f"step {i}: smoothing choices outside the disc differ "
                f"({out_u:#x} vs {out_v:#x})"
            )
            continue
        cu = ctx.count(u[0], u[1])
        cv = ctx.count(v[0], v[1])
        if cu != cv:
            report.append(f"step {i}: loop counts differ along the edge ({cu} vs {cv})")
            continue
        edge = GraphEdge(min(u, v), max(u, v), step.event, step.pair)
        try:
            bij = dict(loop_bijection(ctx, edge))
        except InvariantError as exc:
            report.append(f"step {i}: no loop bijection: {exc}")
            continue
        if edge.u == u:
            ok = bij.get(cert.tracked[i]) == cert.tracked[i + 1]
        else:
            ok = bij.get(cert.tracked[i + 1]) == cert.tracked[i]
        if not ok:
            report.append(
                f"step {i}: tracked curve {cert.tracked[i]} does not map to "
                f"{cert.tracked[i + 1]} under the edge bijection"
            )
    w = cert.path[-1]
    term = cert.terminal
    if term.kind == DISC_CONTRACTION:
        if w[0] != n:
            report.append("disc-contraction terminal requires a final-slice vertex")
        if not script.terminal_disc:
            report.append("script does not assert the terminal disc property")
        if ctx.degree(w) % 2 != 1:
            report.append("disc-contraction terminal vertex must have odd degree")
    elif term.kind == LOCAL_CIRCLE:
        if term.event is None or not 0 <= term.event < n or term.side not in (BEFORE, AFTER):
            report.append("local-circle terminal needs an event index and side")
        else:
            try:
                inst, _out = ctx.project(term.event, w)
            except ValidationError as exc:
                report.append(f"terminal: {exc}")
                return report
            if inst[0] != term.side:
                report.append(
                    f"terminal cites the {term.side} side but {w} sits on the "
                    f"{inst[0]} side of event {term.event}"
                )
            else:
                if partner_counts(script.events[term.event])[inst] != 0:
                    report.append(
                        "terminal tangle has isotopic partners; it must have none"
                    )
                if instance_tangle(script.events[term.event], inst).circles != 1:
                    report.append("terminal tangle does not contain a circle")
                try:
                    idx = _circle_loop_index(ctx, term.event, w)
                except InvariantError as exc:
                    report.append(f"terminal: {exc}")
                else:
                    if cert.tracked[-1] != idx:
                        report.append(
                            f"tracked curve {cert.tracked[-1]} is not the "
                            f"inside-disc circle (loop {idx})"
                        )
        if len(cert.path) == 1:
            if ctx.degree(ctx.v_star) != 0:
                report.append("degenerate certificate requires v* to have no edges")
        else:
            if ctx.degree(w) % 2 != 1 or not 0 < w[0] < n:
                report.append(
                    "local-circle terminal must sit at an odd interior vertex"
                )
    else:
        report.append(f"unknown terminal kind {term.kind!r}")
    audit = _audit_length(ctx, cert.path)
    if abs(audit - cert.length_audit) > 1e-9 * max(1.0, abs(audit)):
        report.append(
            f"length audit mismatch: certificate says {cert.length_audit}, "
            f"recomputed {audit}"
        )
    if script.bound is not None and not audit < script.bound:
        report.append(f"audited length {audit} is not below the bound {script.bound}")
    return report
