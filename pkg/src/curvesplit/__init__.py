"""curvesplit: split a length-bounded contraction of an m-fold traversed
simple closed curve into a certified contraction of the base curve.

Pipeline: ingest polyline homotopy frames (or synthesize them), detect the
move timeline, build the resolution multigraph over the timeline, run the
parity search from the distinguished m-loop vertex, and emit a certificate
that an independent verifier replays.
"""

__version__ = "0.1.0"

from .diagram import (  # noqa: F401
    Arc,
    CurveDiagram,
    LoopCollection,
    Resolution,
    canonical_perturbed_m_gamma,
    count_loops,
    enumerate_resolutions,
    from_gauss_code,
    smooth,
    validate,
)
