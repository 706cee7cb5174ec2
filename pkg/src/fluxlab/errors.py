"""Exception types shared across the package."""


class FluxlabError(Exception):
    """Base class for all package-specific errors."""


class ResolutionTooSmall(FluxlabError):
    """Lattice too coarse: no interior cell (or N below the supported minimum)."""


class ExponentOutOfRange(FluxlabError):
    """Energy exponent outside the admissible open interval ]1, 3/2[."""


class NonIntegralDivergence(FluxlabError):
    """A cell's net outflow is farther than the tolerance from every integer."""

    def __init__(self, cell, deviation):
        self.cell = cell
        self.deviation = deviation
        super().__init__(
            f"cell {cell}: divergence deviates from nearest integer by {deviation:.3e}"
        )


class NonIntegralDegree(FluxlabError):
    """Total boundary flux is farther than the tolerance from every integer."""


class InconsistentCharges(FluxlabError):
    """Supplied charge set does not match the field divergence."""


class DecompositionError(FluxlabError):
    """Peeling left a residual above the accepted drift bound."""


class FactorOutOfRange(FluxlabError):
    """Elementary-operation factor outside [-1, 1]."""


class AnchorMismatch(FluxlabError):
    """Path anchors inconsistent with the boundary data / charge set."""


class UnknownEdge(FluxlabError):
    """Graph operation references an edge that does not exist."""


class EmptyTerminalSet(FluxlabError):
    """Max-flow called with an empty source or sink set."""


class HypothesisViolated(FluxlabError):
    """Input violates the hypotheses of the procedure (boundary mass/degree/shape)."""


class ShapeMismatch(FluxlabError):
    """Graph does not have the required block shape."""


class InfeasibleCharges(FluxlabError):
    """Charge total does not match the boundary degree."""


class IncompatibleData(FluxlabError):
    """Neumann data with nonzero total flux."""


class ScaleOutOfDomain(FluxlabError):
    """Requested rescaling window does not fit inside the domain."""


class BallOutsideDomain(FluxlabError):
    """Requested ball is not contained in the domain."""


class SupportViolation(FluxlabError):
    """Test vector field is not compactly supported in the interior."""


class FieldFormatError(FluxlabError):
    """Malformed field/boundary file."""

    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
