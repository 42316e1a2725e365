"""Exception hierarchy shared by all fractalids modules."""


class FractalIDSError(Exception):
    """Base class for every error raised by the package."""


class ConfigError(FractalIDSError):
    pass


class TooFewEssentialFixedPoints(FractalIDSError):
    pass


class NotConnected(FractalIDSError):
    pass


class AxiomViolation(FractalIDSError):
    def __init__(self, axiom, message=""):
        self.axiom = axiom
        super().__init__(f"axiom {axiom} violated: {message}")


class ScaleOrderViolation(FractalIDSError):
    pass


class ResourceLimit(FractalIDSError):
    pass


class VertexOutsideWindow(FractalIDSError):
    pass


class NoGLP(FractalIDSError):
    """No good labeling exists; ``certificate`` describes the conflict."""

    def __init__(self, certificate):
        self.certificate = certificate
        super().__init__(f"no good labeling: {certificate}")


class UnresolvableLocation(FractalIDSError):
    pass


class InsufficientPadding(FractalIDSError):
    pass


class SolverFailure(FractalIDSError):
    pass


class NonConvergentRatio(FractalIDSError):
    pass


class DimensionMismatch(FractalIDSError):
    pass


class InvalidParameters(FractalIDSError):
    pass


class FitUnstable(FractalIDSError):
    pass


class ResolutionMismatch(FractalIDSError):
    pass


class SupportExceedsWindow(FractalIDSError):
    pass


class AmplitudeTooLarge(FractalIDSError):
    pass


class PreconditionViolated(FractalIDSError):
    pass


class ParameterOrderViolation(FractalIDSError):
    pass


class EmptyWindow(FractalIDSError):
    pass


class NonpositiveIDS(FractalIDSError):
    pass


class VerificationFailed(FractalIDSError):
    """A hard assertion of a verification stage did not hold."""
