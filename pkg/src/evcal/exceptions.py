"""Exception hierarchy for the calibration pipeline."""


class CalibrationError(Exception):
    """Base class for all evcal errors."""


class EventParseError(CalibrationError):
    """Event file is structurally malformed (bad field count, non-numeric token)."""

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class EventValidationError(CalibrationError):
    """Event record parsed but violates a domain constraint (polarity, bounds)."""

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class InsufficientDataError(CalibrationError):
    """Not enough point correspondences for the requested estimate."""


class InsufficientViewsError(InsufficientDataError):
    """Fewer views than the estimator's minimum."""


class DegenerateConfigurationError(CalibrationError):
    """Input geometry is rank-deficient (collinear points, repeated motion)."""


class InvalidConicError(CalibrationError):
    """Recovered conic is not positive definite; no real intrinsics exist."""


class InvalidGeometryError(CalibrationError):
    """Offset recovery produced a non-physical solution (r^2 <= 0)."""


class OrientationError(CalibrationError):
    """Neither homography sign places all model points in front of the camera."""


class BehindCameraError(CalibrationError):
    """A point projects with non-positive depth."""


class PointAtInfinityError(CalibrationError):
    """Homogeneous scale vanished while mapping a point."""


class CorrespondenceError(CalibrationError):
    """Detected markers cannot be matched one-to-one to the target grid."""


class AmbiguousGridError(CorrespondenceError):
    """Row clustering of detected markers is ambiguous (e.g. rotation >= 45 deg)."""


class DivergenceError(CalibrationError):
    """Optimization state lost positive depth for an entire view."""


class NonConvergenceError(CalibrationError):
    """Levenberg-Marquardt exhausted its damping range.

    Carries the best parameters and report found so far in ``parameters``
    and ``report``.
    """

    def __init__(self, message, parameters=None, report=None):
        super().__init__(message)
        self.parameters = parameters
        self.report = report


class GenerationError(CalibrationError):
    """Synthetic scenario violates its own validity constraints."""


class SamplingError(CalibrationError):
    """Random pose sampling could not satisfy the distinctness constraint."""


class EvaluationError(CalibrationError):
    """Reports under comparison do not share a parameter set or fail to parse."""
