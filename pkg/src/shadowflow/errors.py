"""Exception hierarchy. Numerical failures derive from ``NumericalError``."""


class ShadowflowError(Exception):
    pass


class NumericalError(ShadowflowError):
    pass


class MetricSingular(NumericalError):
    """h(x) fell to or below the configured floor; the conformal metric blows up."""

    def __init__(self, message, t=None, point=None):
        super().__init__(message)
        self.t = t
        self.point = point


class StepSizeUnderflow(NumericalError):
    pass


class UnsupportedDimension(ShadowflowError):
    pass


class DegenerateFastMotion(NumericalError):
    pass


class EmptyOverlap(ShadowflowError):
    pass


class InsufficientData(ShadowflowError):
    pass


class OriginSingular(NumericalError):
    pass


class BranchMismatch(ShadowflowError):
    pass


class DomainError(ShadowflowError):
    pass


class GridTooCoarse(NumericalError):
    pass


class SolverNoConvergence(NumericalError):
    pass


class BandIdentificationAmbiguous(NumericalError):
    pass


class ParseError(ShadowflowError):
    def __init__(self, line, message):
        super().__init__(f"line {line}: {message}")
        self.line = line
        self.message = message


class ValidationError(ShadowflowError):
    def __init__(self, field, message):
        super().__init__(f"{field}: {message}")
        self.field = field
        self.message = message
