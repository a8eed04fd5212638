"""Exception types shared across the scenelift package."""


class SceneliftError(Exception):
    """Base class for all scenelift errors."""


class DegenerateInput(SceneliftError):
    """Geometric input without enough rank/extent to proceed."""


class NonConvexInput(SceneliftError):
    """A polygon that must be convex has a reflex vertex."""


class BadMagic(SceneliftError):
    """Tensor file does not start with the expected magic bytes."""


class TruncatedPayload(SceneliftError):
    """Tensor payload length disagrees with the header."""


class UnsupportedDtype(SceneliftError):
    """Tensor header carries an unknown dtype code."""


class MissingFile(SceneliftError):
    """A path referenced by a manifest or catalog does not exist."""


class ShapeMismatch(SceneliftError):
    """Array shapes disagree where they must match."""


class DanglingTrackRef(SceneliftError):
    """A track references a frame or mask that is not present."""


class NoValidPixels(SceneliftError):
    """No pixel passed the validity gates for scale estimation."""


class NonPositiveScale(SceneliftError):
    """Scale factors must be strictly positive."""


class EmptyAfterErosion(SceneliftError):
    """Every eroded mask of a track came out empty."""


class NoCategoryMatch(SceneliftError):
    """The asset catalog has no entry for the requested category."""


class NoCandidates(SceneliftError):
    """Asset selection was called with an empty candidate list."""


class ParseFailure(SceneliftError):
    """A ranking reply line could not be parsed."""


class MissingMarker(SceneliftError):
    """The ranking reply contains no final-answer marker."""


class LengthMismatch(SceneliftError):
    """Paired rank lists have different lengths."""


class UnknownKind(SceneliftError):
    """Fixture generator called with an unknown fixture kind."""
