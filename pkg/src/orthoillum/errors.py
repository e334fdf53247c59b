"""Exception types raised by input-contract violations and runtime failures."""


class ValidationError(ValueError):
    """Base class for contract violations on user-supplied inputs."""


class DimensionMismatchError(ValidationError):
    pass


class NonFiniteDataError(ValidationError):
    pass


class NonPositiveSpacingError(ValidationError):
    pass


class IndexOutOfBoundsError(ValidationError):
    pass


class NonPositiveEpsilonError(ValidationError):
    pass


class EvenKernelError(ValidationError):
    pass


class InsufficientBackgroundSamplesError(ValidationError):
    pass


class DegenerateScanError(ValidationError):
    pass


class OutOfDomainError(ValidationError):
    pass


class NoOrthogonalTargetError(ValidationError):
    pass


class LayoutMismatchError(ValidationError):
    pass


class EmptyInputError(ValidationError):
    pass


class EmptyOverlapError(ValidationError):
    pass


class MissingTruthError(ValidationError):
    pass


class MissingFileError(ValidationError):
    pass


class HeaderMismatchError(ValidationError):
    pass


class SizeMismatchError(ValidationError):
    pass


class IoFailureError(OSError):
    pass


class DivergedNonFiniteError(RuntimeError):
    """Optimization produced a non-finite objective value."""
