"""Exception hierarchy.

Two top-level families matter for the CLI exit codes: ``ValidationError``
(bad or out-of-contract input, exit 2) and ``InvariantError`` (an internal
invariant that should be unbreakable was broken, or a verifier rejected an
artifact, exit 3).
"""

from __future__ import annotations


class CurvesplitError(Exception):
    """Base class for all package errors."""

    exit_code = 1

    def payload(self) -> dict:
        return {"error": type(self).__name__, "message": str(self)}


class ValidationError(CurvesplitError):
    """Input fails a precondition, schema, or genericity requirement."""

    exit_code = 2


class IncompleteResolutionError(ValidationError):
    """A resolution does not cover exactly the crossings it must."""


class CapExceededError(ValidationError):
    """An enumeration would exceed the configured resource cap."""

    def __init__(self, what: str, size: int, cap: int):
        super().__init__(f"{what}: {size} exceeds cap {cap}")
        self.size = size
        self.cap = cap


class EmbedError(ValidationError):
    """A move disc does not embed in the ambient diagram."""


class GenericityError(ValidationError):
    """Geometric input violates transversality within tolerance."""


class SamplingError(ValidationError):
    """Frames are too sparse to separate consecutive move events."""


class ScriptError(ValidationError):
    """A homotopy script fails to apply or violates its length bound."""

    def __init__(self, step: int, message: str):
        super().__init__(f"step {step}: {message}")
        self.step = step


class InvariantError(CurvesplitError):
    """A structural invariant failed; indicates a bug or forged artifact."""

    exit_code = 3
