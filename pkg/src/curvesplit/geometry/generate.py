"""Synthetic contractions of the perturbed m-fold curve, as polyline frames.

The initial frame draws m concentric layers joined through a seam window:
climbs between consecutive layers and one return strand crossing them, the
m-1 self-intersections of the perturbed curve.  The contraction then kills
the innermost loop m-1 times: the loop (drawn as a circle cut by two
tangent stubs from the crossing point) shrinks to a speck and pops through
its crossing, the dent relaxes, and the next layer takes its place.  After
the last pop the remaining circle shrinks into the terminal disc.  Optional
padding inserts kink twists (birth then death on the outer layer) and
strand pokes (the outer layer dips across its neighbour and retracts), so
generated timelines exercise all the birth/death move kinds.

Every event sits alone in its own time segment; the generator re-detects
its own frames and refuses to emit output whose event sequence does not
match the plan.
"""

from __future__ import annotations

import json
import math
import random
from dataclasses import dataclass, field

import numpy as np

from ..errors import SamplingError, ValidationError
from .primitives import PolylineFrame, frame_intersections, polyline_length

Chain = np.ndarray  # (k, 2) open point chain
Drawing = list[tuple[str, Chain]]  # named parts in traversal order


@dataclass
class FrameSet:
    frames: list[PolylineFrame]
    bound: float
    meta: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        return {
            "version": 1,
            "frames": [f.to_json() for f in self.frames],
            "bound": self.bound,
            "meta": self.meta,
        }

    @classmethod
    def from_json(cls, data) -> "FrameSet":
        return cls(
            frames=[PolylineFrame.from_json(f) for f in data["frames"]],
            bound=float(data["bound"]),
            meta=data.get("meta", {}),
        )


def frameset_dumps(fs: FrameSet) -> str:
    return json.dumps(fs.to_json(), sort_keys=True)


def _polar(theta, r):
    theta = np.asarray(theta, dtype=float)
    r = np.asarray(r, dtype=float)
    return np.column_stack([r * np.cos(theta), r * np.sin(theta)])


def _resample(chain: Chain, n: int) -> Chain:
    """Arc-length resampling of an open chain to n points (endpoints kept)."""
    seg = np.linalg.norm(np.diff(chain, axis=0), axis=1)
    cum = np.concatenate([[0.0], np.cumsum(seg)])
    if cum[-1] == 0:
        return np.repeat(chain[:1], n, axis=0)
    want = np.linspace(0.0, cum[-1], n)
    out = np.empty((n, 2))
    for k in range(2):
        out[:, k] = np.interp(want, cum, chain[:, k])
    return out


def _assemble(drawing: Drawing) -> np.ndarray:
    pts: list[np.ndarray] = []
    for _name, chain in drawing:
        for q in chain:
            if pts and np.hypot(*(q - pts[-1])) < 1e-12:
                continue
            pts.append(q)
    if len(pts) > 2 and np.hypot(*(pts[0] - pts[-1])) < 1e-12:
        pts.pop()
    return np.array(pts)


def _lerp_groups(d0: Drawing, d1: Drawing, groups: list[tuple[list[str], list[str]]], u: float) -> Drawing:
    """Interpolate two drawings whose parts correspond group-by-group."""
    m0 = {name: chain for name, chain in d0}
    m1 = {name: chain for name, chain in d1}
    out: Drawing = []
    for names0, names1 in groups:
        c0 = np.vstack([m0[n] for n in names0])
        c1 = np.vstack([m1[n] for n in names1])
        n = max(len(c0), len(c1))
        c0r, c1r = _resample(c0, n), _resample(c1, n)
        out.append(("+".join(names0), (1 - u) * c0r + u * c1r))
    return out


class _Layout:
    """Fixed geometry of one generated contraction."""

    def __init__(self, m: int, bound: float):
        self.m = m
        base_len = 2 * math.pi * m
        slack = bound - base_len
        if slack <= 0.5:
            raise ValidationError(
                f"bound {bound} leaves no room above the initial length "
                f"~{base_len:.3f}; need at least {base_len + 0.5:.3f}"
            )
        self.h = min(0.06, slack / (10.0 * m)) / max(1, m - 1) * (m - 1 if m > 1 else 1)
        self.h = min(0.06, slack / (10.0 * m))
        self.delta = 0.5
        self.theta_star = 0.12
        self.r = {i: 1.0 + (i - (m + 1) / 2.0) * self.h for i in range(1, m + 1)}
        self.rho_min = 0.45 * self.h
        self.n_arc = 72
        self.n_ramp = 14
        self.n_down = 22
        self.n_loop = 56
        self.n_stub = 6

    def p_star(self, p: int) -> np.ndarray:
        rr = 0.5 * (self.r[p] + self.r[min(p + 1, self.m)])
        if p == self.m:  # unused guard
            rr = self.r[self.m]
        return np.array([rr * math.cos(self.theta_star), rr * math.sin(self.theta_star)])

    def loop_circle(self, p: int, s: float) -> tuple[np.ndarray, float]:
        pstar = self.p_star(p)
        d = np.linalg.norm(pstar)
        q = pstar * (1.0 - 2.0 * self.rho_min / d)
        center = s * q
        rho = (1 - s) * self.r[p] + s * self.rho_min
        return center, rho

    # -- parts ---------------------------------------------------------------

    def layer_arc(self, i: int) -> Chain:
        th = np.linspace(self.delta, 2 * math.pi - self.delta, self.n_arc)
        return _polar(th, self.r[i])

    def up_ramp(self, i: int) -> Chain:
        th = np.linspace(-self.delta, self.delta, self.n_ramp)
        rr = np.linspace(self.r[i], self.r[i + 1], self.n_ramp)
        return _polar(th, rr)

    def down_ramp(self, p: int) -> Chain:
        pstar = self.p_star(p)
        th_star = math.atan2(pstar[1], pstar[0])
        th = np.linspace(-self.delta, th_star, self.n_down)
        rr = np.linspace(self.r[self.m], float(np.linalg.norm(pstar)), self.n_down)
        return _polar(th, rr)

    def teardrop(self, p: int, s: float) -> list[tuple[str, Chain]]:
        """Stub in, loop (counterclockwise the far way), stub out to A0."""
        pstar = self.p_star(p)
        center, rho = self.loop_circle(p, s)
        v = pstar - center
        d = float(np.linalg.norm(v))
        beta = math.acos(min(1.0, rho / d))
        ang_u = math.atan2(v[1], v[0])
        t_in = center + rho * np.array(
            [math.cos(ang_u + beta), math.sin(ang_u + beta)]
        )
        t_out = center + rho * np.array(
            [math.cos(ang_u - beta), math.sin(ang_u - beta)]
        )
        sweep = np.linspace(ang_u + beta, ang_u - beta + 2 * math.pi, self.n_loop)
        loop = center + rho * np.column_stack([np.cos(sweep), np.sin(sweep)])
        a0 = np.array(
            [
                self.r[p + 1] * math.cos(self.delta),
                self.r[p + 1] * math.sin(self.delta),
            ]
        )
        stub_in = np.vstack(
            [np.linspace(pstar, t_in, self.n_stub)]
        )
        stub_out = np.vstack([np.linspace(t_out, a0, self.n_stub)])
        return [("stub_in", stub_in), ("loop", loop), ("stub_out", stub_out)]

    def dent(self, p: int) -> Chain:
        """Post-pop connector: crossing point straight up to the resume point."""
        pstar = self.p_star(p)
        a0 = np.array(
            [
                self.r[p + 1] * math.cos(self.delta),
                self.r[p + 1] * math.sin(self.delta),
            ]
        )
        return np.vstack([np.linspace(pstar, a0, 2 * self.n_stub)])

    def window_arc(self, i: int) -> Chain:
        th = np.linspace(-self.delta, self.delta, 2 * self.n_stub)
        return _polar(th, self.r[i])

    def scene_shrink(self, p: int, s: float) -> Drawing:
        """The phase-p drawing: teardrop around the innermost live layer."""
        parts: Drawing = []
        parts.extend(self.teardrop(p, s))
        for i in range(p + 1, self.m + 1):
            parts.append((f"layer{i}", self.layer_arc(i)))
            if i < self.m:
                parts.append((f"ramp{i}", self.up_ramp(i)))
        parts.append(("down", self.down_ramp(p)))
        return parts

    def scene_dent(self, p: int) -> Drawing:
        parts: Drawing = [("dent", self.dent(p))]
        for i in range(p + 1, self.m + 1):
            parts.append((f"layer{i}", self.layer_arc(i)))
            if i < self.m:
                parts.append((f"ramp{i}", self.up_ramp(i)))
        parts.append(("down", self.down_ramp(p)))
        return parts

    def scene_circle(self, radius: float) -> Drawing:
        th_w = np.linspace(-self.delta, self.delta, 2 * self.n_stub + self.n_down)
        th_m = np.linspace(self.delta, 2 * math.pi - self.delta, self.n_arc)
        return [
            ("circle_window", _polar(th_w, radius)),
            ("circle_main", _polar(th_m, radius)),
        ]


# --------------------------------------------------------------------------
# pad decorations


def _pad_twist(layout: _Layout, phase_p: int, phi: float, u: float, grow: bool) -> Drawing:
    """Outer-layer kink: plain arc morphing to a small outward teardrop.

    Mirror of the main inner teardrop: the loop hangs radially outward, the
    tangent sweep runs clockwise, and the exit lands slightly ahead along
    the layer so the two tangent stubs cross transversally.
    """
    base = layout.scene_shrink(phase_p, 0.0)
    out: Drawing = []
    rho = 2.2 * layout.rho_min
    rm = layout.r[layout.m]
    span = 4.0 * rho / rm
    for name, chain in base:
        if name != f"layer{layout.m}":
            out.append((name, chain))
            continue
        th = np.arctan2(chain[:, 1], chain[:, 0]) % (2 * math.pi)
        keep_lo = chain[th < phi - span]
        keep_hi = chain[th > phi + span]
        e1 = rm * np.array([math.cos(phi - span), math.sin(phi - span)])
        e2 = rm * np.array([math.cos(phi + span), math.sin(phi + span)])
        base_pt = rm * np.array([math.cos(phi), math.sin(phi)])
        exit_pt = rm * np.array(
            [math.cos(phi + 0.45 * span), math.sin(phi + 0.45 * span)]
        )
        center = base_pt * (1 + 2 * rho / rm)
        v = base_pt - center
        d = float(np.linalg.norm(v))
        beta = math.acos(min(1.0, rho / d))
        ang_u = math.atan2(v[1], v[0])
        t_in = center + rho * np.array([math.cos(ang_u - beta), math.sin(ang_u - beta)])
        t_out = center + rho * np.array([math.cos(ang_u + beta), math.sin(ang_u + beta)])
        sweep = np.linspace(ang_u - beta, ang_u + beta - 2 * math.pi, 24)
        looped = np.vstack(
            [
                np.linspace(e1, base_pt, 5)[:-1],
                np.linspace(base_pt, t_in, 4)[:-1],
                center + rho * np.column_stack([np.cos(sweep), np.sin(sweep)]),
                np.linspace(t_out, exit_pt, 5)[1:],
                np.linspace(exit_pt, e2, 4)[1:],
            ]
        )
        th_mid = np.linspace(phi - span, phi + span, len(looped))
        plain = _polar(th_mid, rm)
        s = u if grow else 1.0 - u
        mid = (1 - s) * plain + s * looped
        out.append((name, np.vstack([keep_lo, mid, keep_hi])))
    return out


def _pad_poke(layout: _Layout, phase_p: int, phi: float, u: float, grow: bool) -> Drawing:
    """Outer layer dips across its inward neighbour and back."""
    base = layout.scene_shrink(phase_p, 0.0)
    out: Drawing = []
    rm = layout.r[layout.m]
    depth_max = 1.6 * layout.h
    w = 0.55
    s = u if grow else 1.0 - u
    depth = depth_max * s
    for name, chain in base:
        if name != f"layer{layout.m}":
            out.append((name, chain))
            continue
        th = np.arctan2(chain[:, 1], chain[:, 0]) % (2 * math.pi)
        sel = np.abs(th - phi) < w
        if sel.sum() < 9:
            raise ValidationError("poke window too narrow for the sampling")
        rr = np.where(
            sel,
            rm - depth * np.cos((th - phi) / w * math.pi / 2.0) ** 2,
            rm,
        )
        out.append((name, _polar(th, rr)))
    return out


# --------------------------------------------------------------------------
# segment plan


@dataclass
class _Segment:
    draw: object  # callable u -> Drawing
    event: str | None
    weight: float = 1.0


def _plan(layout: _Layout, pads: int, seed: int) -> tuple[list[_Segment], list[str]]:
    m = layout.m
    rng = random.Random(seed)
    segments: list[_Segment] = []
    planted: list[str] = []
    pad_kinds: list[str] = []
    if pads:
        pad_kinds = [rng.choice(["twist", "poke"]) for _ in range(pads)]
    pad_slots: dict[int, list[str]] = {p: [] for p in range(1, m)}
    for kind in pad_kinds:
        pad_slots[rng.randrange(1, m)].append(kind)
    phi_pool = list(np.linspace(math.pi * 0.75, math.pi * 1.6, 6))
    rng.shuffle(phi_pool)

    def add_pads(p: int) -> None:
        for kind in pad_slots.get(p, ()):
            phi = phi_pool.pop() if phi_pool else math.pi
            if kind == "twist":
                segments.append(
                    _Segment(
                        lambda u, p=p, phi=phi: _pad_twist(layout, p, phi, u, True),
                        "R1_BIRTH",
                        2.0,
                    )
                )
                segments.append(
                    _Segment(
                        lambda u, p=p, phi=phi: _pad_twist(layout, p, phi, u, False),
                        "R1_DEATH",
                        2.0,
                    )
                )
                planted.extend(["R1_BIRTH", "R1_DEATH"])
            else:
                segments.append(
                    _Segment(
                        lambda u, p=p, phi=phi: _pad_poke(layout, p, phi, u, True),
                        "R2_BIRTH",
                        2.0,
                    )
                )
                segments.append(
                    _Segment(
                        lambda u, p=p, phi=phi: _pad_poke(layout, p, phi, u, False),
                        "R2_DEATH",
                        2.0,
                    )
                )
                planted.extend(["R2_BIRTH", "R2_DEATH"])

    for p in range(1, m):
        add_pads(p)
        segments.append(
            _Segment(lambda u, p=p: layout.scene_shrink(p, u), None, 1.0)
        )

        def pop_draw(u, p=p):
            d0 = layout.scene_shrink(p, 1.0)
            d1 = layout.scene_dent(p)
            rest = [n for n, _c in d0 if n not in ("stub_in", "loop", "stub_out")]
            groups = [(["stub_in", "loop", "stub_out"], ["dent"])]
            groups += [([n], [n]) for n in rest]
            return _lerp_groups(d0, d1, groups, u)

        segments.append(_Segment(pop_draw, "R1_DEATH", 2.0))
        planted.append("R1_DEATH")

        def relax_draw(u, p=p):
            d0 = layout.scene_dent(p)
            if p < m - 1:
                d1 = layout.scene_shrink(p + 1, 0.0)
                groups = [
                    (["dent"], ["stub_in"]),
                    ([f"layer{p + 1}"], ["loop"]),
                    ([f"ramp{p + 1}"], ["stub_out"]),
                ]
                for i in range(p + 2, m + 1):
                    groups.append(([f"layer{i}"], [f"layer{i}"]))
                    if i < m:
                        groups.append(([f"ramp{i}"], [f"ramp{i}"]))
                groups.append((["down"], ["down"]))
            else:
                rm = layout.r[m]
                th_dent = np.linspace(layout.theta_star, layout.delta, 2 * layout.n_stub)
                th_down = np.linspace(-layout.delta, layout.theta_star, layout.n_down)
                d1 = [
                    ("dent", _polar(th_dent, rm)),
                    (f"layer{m}", layout.layer_arc(m)),
                    ("down", _polar(th_down, rm)),
                ]
                groups = [
                    (["dent"], ["dent"]),
                    ([f"layer{m}"], [f"layer{m}"]),
                    (["down"], ["down"]),
                ]
            return _lerp_groups(d0, d1, groups, u)

        segments.append(_Segment(relax_draw, None, 1.0))

    def final_draw(u):
        rad = (1 - u) * layout.r[m] + u * 0.15 * layout.r[1]
        return layout.scene_circle(rad)

    segments.append(_Segment(final_draw, None, 1.0))
    return segments, planted


def generate_contraction(
    m: int,
    bound: float,
    steps: int,
    seed: int = 0,
    pads: int = 0,
    tol: float = 1e-6,
    verify: bool = True,
) -> FrameSet:
    """Frames realizing the standard contraction, every frame shorter than
    the bound, with the planted move sequence recorded in the metadata."""
    if m < 2:
        raise ValidationError(f"m must be at least 2, got {m}")
    if steps < 8:
        raise ValidationError("need at least 8 frames")
    layout = _Layout(m, bound)
    segments, planted = _plan(layout, pads, seed)
    if steps < 2 * len(segments) + 2:
        raise SamplingError(
            f"{steps} frames cannot separate {len(segments)} segments; "
            f"use at least {2 * len(segments) + 2}"
        )
    weights = np.array([s.weight for s in segments])
    edges = np.concatenate([[0.0], np.cumsum(weights) / weights.sum()])
    frames: list[PolylineFrame] = []
    for k in range(steps):
        t = k / (steps - 1)
        si = min(int(np.searchsorted(edges, t, side="right")) - 1, len(segments) - 1)
        si = max(si, 0)
        u = (t - edges[si]) / (edges[si + 1] - edges[si])
        drawing = segments[si].draw(min(max(u, 0.0), 1.0))
        curve = _assemble(drawing)
        frames.append(PolylineFrame(t, (curve,)))
    for f in frames:
        if not f.total_length() < bound:
            raise ValidationError(
                f"frame at t={f.time} has length {f.total_length()}, bound {bound}"
            )
    fs = FrameSet(
        frames,
        bound,
        meta={
            "m": m,
            "seed": seed,
            "pads": pads,
            "planted": planted,
            "terminal_disc": True,
        },
    )
    if verify:
        _verify_plan(fs, planted, tol)
    return fs


def _verify_plan(fs: FrameSet, planted: list[str], tol: float) -> None:
    """The generator eats its own output: frame-by-frame crossing deltas
    must reproduce the plan, one event per gap."""
    counts = [len(frame_intersections(f.curves, tol)) for f in fs.frames]
    deltas = {
        "R1_BIRTH": 1,
        "R1_DEATH": -1,
        "R2_BIRTH": 2,
        "R2_DEATH": -2,
    }
    expect = iter(planted)
    pending = next(expect, None)
    for k in range(1, len(counts)):
        d = counts[k] - counts[k - 1]
        if d == 0:
            continue
        if pending is None or d != deltas[pending]:
            raise SamplingError(
                f"frame gap {k - 1}->{k} shows crossing delta {d}, expected "
                f"{pending and deltas[pending]}; increase steps"
            )
        pending = next(expect, None)
    if pending is not None:
        raise SamplingError(
            f"planted event {pending} never materialized in the frames"
        )
