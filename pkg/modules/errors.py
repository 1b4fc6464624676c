"""
Exception hierarchy for the genericity lab.
"""


class LabError(Exception):
    """Base exception for every failure raised by the lab modules"""
    pass


class InputDomainError(LabError):
    """Raised when a point or vector is non-finite or has the wrong shape"""
    pass


class InvalidMetricError(LabError):
    """Raised when a metric fails positivity, convexity or the Randers bound"""
    pass


class NotAConformalFactorError(LabError):
    """Raised when a factor meant for E+ is not positive everywhere"""
    pass


class MalformedLoopError(LabError):
    """Raised when a loop violates closure or has too few vertices"""
    pass


class DegenerateLoopError(LabError):
    """Raised when a loop has zero length"""
    pass


class SpeedCapError(LabError):
    """Raised when a loop moves faster than the cap b of its measure"""
    pass


class TrivialClassError(LabError):
    """Raised when the trivial class (0, 0) is used where a class in Gamma(M) is required"""
    pass


class WindingMismatchError(LabError):
    """Raised when two loops from different homotopy classes are compared"""
    pass


class SolverFailureError(LabError):
    """Raised when no descent run converges"""
    pass


class ConstructionFailureError(LabError):
    """Raised when no exposing direction is found within the redraw budget"""
    pass


class PerturbationFailureError(LabError):
    """Raised when the f + t g schedule is exhausted without shrinking the argmin set"""
    pass


class InvariantViolationError(LabError):
    """Raised when an inequality guaranteed by the theory fails numerically"""
    pass


class ResolutionMismatchError(LabError):
    """Raised when grid measures of different resolutions are compared"""
    pass


class ConfigError(LabError):
    """Raised when an experiment config cannot be parsed or validated"""
    pass


class ReportFormatError(LabError):
    """Raised when a report file is not valid JSON-lines"""
    pass
