"""Exception hierarchy used across the package."""


class DCCalcError(Exception):
    """Base class for every error raised by :mod:`dccalc`."""


class DegenerateCell(DCCalcError):
    pass


class NonConformingFacet(DCCalcError):
    pass


class QuadratureOrderTooLow(DCCalcError):
    pass


class BoundaryFacetSideMissing(DCCalcError):
    pass


class UndefinedOnLowerSkeleton(DCCalcError):
    pass


class IncompatibleComplexes(DCCalcError):
    pass


class IllegalPairing(DCCalcError):
    pass


class BothFactorsJump(IllegalPairing):
    pass


class NotHomeomorphic(DCCalcError):
    pass


class InversionDiverged(DCCalcError):
    pass


class EllipticityViolated(DCCalcError):
    pass


class SupportViolation(DCCalcError):
    pass


class NotDC0(DCCalcError):
    pass


class SamplePointOnSkeleton(DCCalcError):
    pass


class IncompatibleSystem(DCCalcError):
    pass


class CoverageGap(DCCalcError):
    pass


class ApexQuery(DCCalcError):
    pass


class AnnulusTouchesApex(DCCalcError):
    pass


class SchemaError(DCCalcError):
    """Scene file does not match the schema.

    Parameters
    ----------
    path : str
        Dotted/bracketed location of the offending entry, e.g.
        ``metric.components[0][1]``.
    message : str
        Human readable reason.
    """

    def __init__(self, path, message):
        self.path = path
        super().__init__(f"{path}: {message}")


class DiscontinuousMetric(DCCalcError):
    pass
