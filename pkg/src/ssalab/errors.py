"""Exception types shared across the package."""


class SsaLabError(Exception):
    """Base class for all package errors."""


class InadmissibleAction(SsaLabError):
    pass


class ResourceLimit(SsaLabError):
    pass


class InvalidParams(SsaLabError):
    pass


class UnknownToken(SsaLabError):
    pass


class MalformedTrace(SsaLabError):
    pass


class IndexOutOfRange(SsaLabError):
    pass


class InvalidLayout(SsaLabError):
    pass


class ShapeMismatch(SsaLabError):
    pass


class PositionOverflow(SsaLabError):
    pass


class NonFiniteLoss(SsaLabError):
    pass


class InsufficientData(SsaLabError):
    pass


class NoPairsFound(SsaLabError):
    pass


class VocabularyMismatch(SsaLabError):
    pass


class DegenerateLabels(SsaLabError):
    pass


class FitDiverged(SsaLabError):
    pass


class DegenerateFeatures(SsaLabError):
    pass


class ConfigError(SsaLabError):
    """Bad or missing configuration (CLI exit code 2)."""


class MissingArtifact(SsaLabError):
    """An upstream artifact a command depends on is absent (CLI exit code 3)."""
