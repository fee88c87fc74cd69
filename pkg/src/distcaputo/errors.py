"""Exception hierarchy shared by all modules."""


class DistCaputoError(Exception):
    """Base class for every error raised by this package."""


class MassBelowTolerance(DistCaputoError):
    pass


class RootNotBracketed(DistCaputoError):
    pass


class OrderIndexOverflow(DistCaputoError):
    pass


class OrderMismatch(DistCaputoError):
    pass


class DimensionTooLarge(DistCaputoError):
    pass


class NonPositiveTime(DistCaputoError):
    pass


class OnBranchCut(DistCaputoError):
    pass


class QuadratureNonConvergence(DistCaputoError):
    pass


class ProvenanceMismatch(DistCaputoError):
    pass


class GridMismatch(DistCaputoError):
    pass


class AlphaOutOfRange(DistCaputoError):
    pass


class ArgumentOutOfSupportedRange(DistCaputoError):
    pass


class HypothesisViolation(DistCaputoError):
    pass


class UnsupportedDomain(DistCaputoError):
    pass


class EpsilonTooLarge(DistCaputoError):
    pass


class QuadratureFailure(DistCaputoError):
    pass


class PicardStall(DistCaputoError):
    """The segment Picard iteration failed to contract.

    ``factor`` holds the last measured contraction ratio.
    """

    def __init__(self, message, factor=float("nan")):
        super().__init__(message)
        self.factor = factor


class ParseError(DistCaputoError):
    def __init__(self, message, line=None, column=None):
        loc = "" if line is None else f" (line {line}, column {column})"
        super().__init__(message + loc)
        self.line = line
        self.column = column


class ValidationError(DistCaputoError):
    def __init__(self, field, message):
        super().__init__(f"{field}: {message}")
        self.field = field


class EstimateViolation(DistCaputoError):
    """A computed quantity breaks an analytic bound it must satisfy."""
