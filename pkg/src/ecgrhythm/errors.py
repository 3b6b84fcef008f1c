"""Exception types raised across the package.

Every error carries enough context in its message to be actionable from a
CLI one-liner; the class name doubles as the machine-readable error code.
"""


class EcgRhythmError(Exception):
    """Base class for all package errors."""

    @property
    def code(self) -> str:
        return _snake(type(self).__name__)


def _snake(name: str) -> str:
    out = []
    for i, ch in enumerate(name):
        if ch.isupper() and i > 0 and not name[i - 1].isupper():
            out.append("_")
        out.append(ch.lower())
    return "".join(out)


# --- record / annotation parsing ---

class MalformedHeader(EcgRhythmError):
    pass


class UnsupportedFormat(EcgRhythmError):
    pass


class TruncatedData(EcgRhythmError):
    pass


class ChecksumMismatch(EcgRhythmError):
    pass


class UnknownRhythmToken(EcgRhythmError):
    def __init__(self, token: str, line_no: int | None = None):
        self.token = token
        where = f" (line {line_no})" if line_no is not None else ""
        super().__init__(f"unknown rhythm token {token!r}{where}")


class ClassTooSmall(EcgRhythmError):
    pass


# --- dsp ---

class EmptyInput(EcgRhythmError):
    pass


class InfeasibleSpec(EcgRhythmError):
    pass


class TooShort(EcgRhythmError):
    pass


# --- tensor engine ---

class ShapeMismatch(EcgRhythmError):
    def __init__(self, op: str, *shapes):
        self.shapes = shapes
        super().__init__(f"{op}: incompatible shapes {' vs '.join(str(tuple(s)) for s in shapes)}")


class NotScalar(EcgRhythmError):
    pass


class DomainError(EcgRhythmError):
    pass


class NonFiniteValue(EcgRhythmError):
    pass


# --- training ---

class NegativeLoss(EcgRhythmError):
    pass


class NaNLoss(EcgRhythmError):
    pass


class EmptyMatrix(EcgRhythmError):
    pass


class TooFewFrames(EcgRhythmError):
    pass


# --- model artifact / serving ---

class FormatVersionMismatch(EcgRhythmError):
    def __init__(self, found: int, expected: int):
        self.found, self.expected = found, expected
        super().__init__(f"artifact format version {found}, expected {expected}")


class ManifestShapeMismatch(EcgRhythmError):
    pass


class ArtifactHashMismatch(EcgRhythmError):
    pass


class BadSampleRate(EcgRhythmError):
    pass


class NotFitted(EcgRhythmError):
    pass
