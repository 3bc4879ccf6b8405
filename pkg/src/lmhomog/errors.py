"""Exception hierarchy shared by every module of the package."""


class HomogeneityError(ValueError):
    """Base class for all errors raised by lmhomog."""


class InsufficientSample(HomogeneityError):
    pass


class NonFinite(HomogeneityError):
    pass


class TiePolicyRequired(HomogeneityError):
    pass


class DimensionMismatch(HomogeneityError):
    pass


class DegenerateScale(HomogeneityError):
    """A ratio denominator (lambda_1 or lambda_2) is zero."""

    def __init__(self, message, site_id=None):
        super().__init__(message)
        self.site_id = site_id


class InvalidRegion(HomogeneityError):
    pass


class InfeasibleParams(HomogeneityError):
    pass


class NonConvergence(HomogeneityError):
    """Kappa fitting failed; carries the fitter's diagnostics."""

    def __init__(self, message, iterations=0, residual=float("nan"), margin=None):
        super().__init__(message)
        self.iterations = iterations
        self.residual = residual
        self.margin = margin


class InvalidDependence(HomogeneityError):
    pass


class UnsupportedDimension(HomogeneityError):
    pass


class LengthMismatch(HomogeneityError):
    pass


class EmptyPool(HomogeneityError):
    pass


class Unattainable(HomogeneityError):
    pass


class EmptyResult(HomogeneityError):
    pass


class ParseError(HomogeneityError):
    def __init__(self, message, line=None):
        super().__init__(f"line {line}: {message}" if line is not None else message)
        self.line = line


class InsufficientSites(HomogeneityError):
    pass


class SpecError(HomogeneityError):
    def __init__(self, message, path=""):
        super().__init__(f"{path}: {message}" if path else message)
        self.path = path
