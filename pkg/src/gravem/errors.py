"""Exception hierarchy.

Every error carries the name of the operation that raised it so the CLI can
render ``module.operation: message`` without guessing.
"""


class GravemError(Exception):
    """Base class for all library errors."""

    operation = None

    def __init__(self, message, operation=None):
        super().__init__(message)
        if operation is not None:
            self.operation = operation


# spacetime
class OutsideChartDomain(GravemError):
    pass


class NumericalDerivativeFailure(GravemError):
    pass


class NonPositiveWavelength(GravemError, ValueError):
    pass


class GridFileError(GravemError, ValueError):
    pass


# flat-wave algebra
class ZeroMomentum(GravemError, ValueError):
    pass


class InvalidHelicity(GravemError, ValueError):
    pass


class InvalidGravHelicity(GravemError, ValueError):
    pass


class KappaOutOfRange(GravemError, ValueError):
    """kappa must lie strictly inside (0, 1); otherwise one factor would run
    backwards along the ray."""


class NotHelicityEigenstate(GravemError):
    pass


class NotMomentumEigenstateAlongRay(GravemError):
    pass


class NotFactorizable(GravemError):
    pass


class DegenerateInput(GravemError, ValueError):
    pass


class NonUnitAxis(GravemError, ValueError):
    pass


# transport
class StepSizeUnderflow(GravemError):
    pass


class NonNullInitialMomentum(GravemError, ValueError):
    pass


class EmptyPath(GravemError, ValueError):
    pass


class NonSymmetricInput(GravemError, ValueError):
    pass


# equivalence
class NonNullMomentum(GravemError, ValueError):
    pass


class NonTransverseInput(GravemError, ValueError):
    pass


class GridMismatch(GravemError, ValueError):
    pass


# emulation
class NonPositiveScale(GravemError, ValueError):
    pass


class ErgoregionOrHorizon(GravemError):
    pass


class NonPositiveParameter(GravemError, ValueError):
    pass


# scenario
class ConfigSyntaxError(GravemError):
    line = None
    column = None


class UnknownKey(GravemError):
    pass


class ConstraintViolation(GravemError, ValueError):
    pass
