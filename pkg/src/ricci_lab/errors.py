"""Exception hierarchy shared by all modules.

Every error carries a short machine-readable ``code`` so the CLI can report
it by name.
"""


class GeometryError(Exception):
    code = "geometry-error"


class PointOutsideChart(GeometryError):
    code = "point-outside-chart"


class CoordinateSingularity(GeometryError):
    code = "coordinate-singularity"


class UnsupportedManifold(GeometryError):
    code = "unsupported-manifold"


class StepSizeUnderflow(GeometryError):
    code = "step-size-underflow"


class NoSolutionFound(GeometryError):
    code = "no-solution-found"


class DegenerateTriangle(GeometryError):
    code = "degenerate-vertex"


class TriangleInequalityViolation(GeometryError, ValueError):
    code = "triangle-inequality-violation"


class PerimeterTooLarge(GeometryError, ValueError):
    code = "perimeter-too-large"


class SamplingBudgetExceeded(GeometryError):
    code = "sampling-budget-exceeded"


class InvalidInput(GeometryError, ValueError):
    code = "invalid-inputs"


class PreconditionViolated(GeometryError):
    code = "precondition-violated"


class EnumerationBudgetExceeded(GeometryError):
    code = "enumeration-budget-exceeded"


class PairingFailure(GeometryError):
    code = "pairing-failure"


class QuadratureFailure(GeometryError):
    code = "quadrature-failure"


class OutsideReach(GeometryError):
    code = "outside-reach"


class OptimizerDivergence(GeometryError):
    code = "optimizer-divergence"


class HypothesisViolated(GeometryError):
    code = "hypothesis-violated"


class ConfigError(Exception):
    code = "config-invalid"


class NuBelowThreshold(InvalidInput):
    code = "nu-below-threshold"


class InvalidTheta(InvalidInput):
    code = "invalid-theta"


class ArgumentOutOfRange(InvalidInput):
    code = "argument-out-of-range"
