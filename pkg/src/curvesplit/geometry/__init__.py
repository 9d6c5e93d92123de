"""Geometric layer: polyline frames, event detection, synthetic contractions."""

from .detect import detect_events, isomorphic  # noqa: F401
from .generate import FrameSet, frameset_dumps, generate_contraction  # noqa: F401
from .primitives import (  # noqa: F401
    DEFAULT_TOL,
    Intersection,
    PolylineFrame,
    build_frame_diagram,
    frame_intersections,
    geometric_smooth,
    polyline_length,
    self_intersections,
)
