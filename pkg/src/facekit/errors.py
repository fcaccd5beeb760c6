"""Exception hierarchy shared across the toolkit.

Everything raised on bad input derives from :class:`ValidationError`;
everything raised when the math itself breaks down derives from
:class:`NumericalError`. The CLI maps the two branches to distinct exit
codes.
"""

from __future__ import annotations


class FacekitError(Exception):
    """Base class for all toolkit errors."""


class ValidationError(FacekitError):
    """Input violates a documented precondition or format contract."""


class NumericalError(FacekitError):
    """A numerically well-posed solution does not exist for this input."""


class ParseError(ValidationError):
    """Malformed text or binary input; carries the offending line number."""

    def __init__(self, message: str, *, line: int | None = None, path: str | None = None):
        self.line = line
        self.path = path
        where = ""
        if path is not None:
            where += str(path)
        if line is not None:
            where += f":{line}"
        super().__init__(f"{where}: {message}" if where else message)


class NonTriangleFace(ValidationError):
    pass


class IsolatedVertex(ValidationError):
    def __init__(self, index: int):
        self.index = index
        super().__init__(f"vertex {index} has no neighbors")


class DimensionMismatch(ValidationError):
    pass


class TopologyMismatch(ValidationError):
    pass


class LengthMismatch(ValidationError):
    pass


class MissingTexCoords(ValidationError):
    pass


class EmptyFaceMask(ValidationError):
    pass


class EmptyRegion(ValidationError):
    pass


class NonUnitNormal(ValidationError):
    pass


class TooFewPoints(ValidationError):
    pass


class DegenerateConfiguration(NumericalError):
    pass


class SingularSystem(NumericalError):
    pass


class DegenerateTriangle(NumericalError):
    def __init__(self, face_index: int | None = None, message: str = ""):
        self.face_index = face_index
        if not message:
            message = (
                f"face {face_index} is degenerate" if face_index is not None else "degenerate triangle"
            )
        super().__init__(message)


class DegenerateRegion(NumericalError):
    pass
