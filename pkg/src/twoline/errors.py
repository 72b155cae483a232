"""Exception hierarchy.

Estimator failures derive from :class:`EstimationFailure`; the Monte Carlo
harness and the CLI treat those as data (counted, reported) rather than bugs.
"""


class TwoLineError(Exception):
    """Base class for every error raised by this package."""


class InvalidInput(TwoLineError, ValueError):
    pass


class EmptySample(InvalidInput):
    pass


class TooFewPoints(InvalidInput):
    pass


class ParseError(InvalidInput):
    def __init__(self, message, line=None, column=None):
        super().__init__(message)
        self.line = line
        self.column = column


class InvalidConfig(InvalidInput):
    pass


# geometry; an estimate that is geometrically unusable (parallel or
# vertical lines) is also an estimation failure


class EstimationFailure(TwoLineError):
    """An estimator could not produce an estimate for this sample."""


class GeometryError(EstimationFailure):
    pass


class VerticalLine(GeometryError):
    pass


class ParallelLines(GeometryError):
    pass


class CoincidentLines(GeometryError):
    pass


# estimation


class EmptyBracket(EstimationFailure):
    pass


class NonNegativeQuadraticForm(EstimationFailure):
    pass


class DegenerateNullSpace(EstimationFailure):
    pass


class SingularNormalization(EstimationFailure):
    pass


class EllipticConic(EstimationFailure):
    pass


class VerticalAsymptote(EstimationFailure):
    pass


class DegenerateDirection(EstimationFailure):
    pass


class DegenerateCluster(EstimationFailure):
    pass


class AllRestartsDegenerate(EstimationFailure):
    pass


class SingularComponent(EstimationFailure):
    pass


class CollapsedComponent(EstimationFailure):
    pass


class PointComponent(EstimationFailure):
    pass


class IllConditionedMoments(EstimationFailure):
    pass


class InitFailed(EstimationFailure):
    pass


class NoDescent(EstimationFailure):
    pass


class RankDeficientJacobian(EstimationFailure):
    pass
