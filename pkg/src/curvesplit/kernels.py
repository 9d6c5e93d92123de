"""Kernel backend selection.

Imports the compiled extension when present, otherwise the pure-Python
twin.  ``CURVESPLIT_PURE=1`` forces the fallback (useful for the parity
tests and the benchmark).
"""

from __future__ import annotations

import os

if os.environ.get("CURVESPLIT_PURE") == "1":
    from . import _purekern as _impl
else:
    try:
        from . import _speedups as _impl  # type: ignore[attr-defined]
    except ImportError:
        from . import _purekern as _impl

BACKEND: str = _impl.BACKEND
count_loops = _impl.count_loops
count_loops_batch = _impl.count_loops_batch
loop_labels = _impl.loop_labels
seg_hits = _impl.seg_hits


def backends() -> dict:
    """Both backends by name, for parity tests and benchmarks."""
    from . import _purekern

    out = {"pure": _purekern}
    try:
        from . import _speedups  # type: ignore[attr-defined]

        out["compiled"] = _speedups
    except ImportError:
        pass
    return out
