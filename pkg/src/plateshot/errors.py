"""Exception hierarchy shared by all plateshot modules."""


class PlateshotError(Exception):
    """Base class for every error raised by this package."""


class ValidationError(PlateshotError, ValueError):
    """Input failed a structural or bounds check (CLI exit code 1)."""


class BackendFailure(PlateshotError):
    """An external backend was unreachable or replied with garbage (CLI exit code 2)."""


# videoio
class MissingFrame(ValidationError):
    def __init__(self, index):
        super().__init__(f"missing frame {index}")
        self.index = index


class DimensionMismatch(ValidationError):
    pass


class MalformedPPM(ValidationError):
    pass


class ParseError(ValidationError):
    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class OutOfBounds(ValidationError):
    pass


# point selection
class InvalidOffset(ValidationError):
    pass


class MaskTooSmall(ValidationError):
    pass


# segmentation
class SegmentationError(PlateshotError):
    pass


class EmptyMask(SegmentationError):
    pass


class AreaCapExceeded(EmptyMask):
    """Grown region is larger than the area cap, i.e. it bled into background."""


# tracking
class DegeneratePatch(PlateshotError):
    pass


class LengthMismatch(ValidationError):
    pass


# recognition
class DegenerateBBox(ValidationError):
    pass


class UnknownPrompt(ValidationError):
    pass


class NoGlyphs(PlateshotError):
    pass


class NoPlateFound(PlateshotError):
    pass


class NoPlateInSequence(PlateshotError):
    pass


class BackendTimeout(BackendFailure):
    pass


class BackendError(BackendFailure):
    def __init__(self, message, status=None):
        super().__init__(message)
        self.status = status


# evaluation
class DegenerateBox(ValidationError):
    pass


class NoGroundTruth(ValidationError):
    pass


# synthetic generation
class StringTooLong(ValidationError):
    pass


class UnknownGlyph(ValidationError):
    pass


class EmptyString(ValidationError):
    pass


class PlateOutOfBounds(ValidationError):
    pass


# pipeline
class AnnotationsEmpty(ValidationError):
    pass


class ConfigError(ValidationError):
    pass


class StageError(PlateshotError):
    """A fatal error inside one pipeline stage; ``stage`` names it."""

    def __init__(self, stage, cause):
        super().__init__(f"stage '{stage}' failed: {cause}")
        self.stage = stage
        self.cause = cause
