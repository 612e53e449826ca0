"""Exception hierarchy. Everything a caller can trip over derives from AdvisorError."""


class AdvisorError(Exception):
    pass


class IrFormatError(AdvisorError, ValueError):
    pass


class DuplicateScanError(AdvisorError):
    pass


class PathExplosionError(AdvisorError):
    pass


class AbsentScanError(AdvisorError, LookupError):
    pass


class UnknownIrError(AdvisorError, KeyError):
    pass


class DegenerateVarianceError(AdvisorError, ValueError):
    pass


class DimensionMismatchError(AdvisorError, ValueError):
    pass


class EmptyWindowError(AdvisorError, ValueError):
    pass


class NonFiniteGradientError(AdvisorError, FloatingPointError):
    pass


class CheckpointFormatError(AdvisorError):
    pass


class CheckpointVersionError(CheckpointFormatError):
    pass


class RangeKeyError(AdvisorError, TypeError):
    pass


class MissingTableEntryError(AdvisorError, KeyError):
    pass
