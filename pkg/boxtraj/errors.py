"""
Exception hierarchy for boxtraj.

Two families map onto the CLI exit codes:
- ValidationError: bad input, rejected data, malformed files (exit 1)
- NumericalError: degenerate fields or non-finite gradients (exit 2)
"""

from __future__ import annotations

from typing import TYPE_CHECKING

if TYPE_CHECKING:
    from boxtraj.optimization.loop import OptReport


class BoxTrajError(Exception):
    """Base class for all boxtraj errors."""


class ValidationError(BoxTrajError):
    """Input failed validation."""


class NumericalError(BoxTrajError):
    """A computation produced an unusable numerical state."""


# ===== Geometry =====

class InvalidBox(ValidationError):
    """Box coordinates violate ordering, range or size invariants."""


class EmptyTrajectory(ValidationError):
    """A trajectory with zero frames was supplied."""


class FrameCountMismatch(ValidationError):
    """Two trajectories that must align have different frame counts."""


class InvalidDetectionStream(ValidationError):
    """Detection records are out of order or carry invalid scores."""


class CurationRejection(ValidationError):
    """A trajectory was rejected by the curation pipeline."""

    reason = "rejected"


class TooFewDetections(CurationRejection):
    reason = "too_few_detections"


class DiscontinuousTrajectory(CurationRejection):
    reason = "discontinuous"


class BoxTooSmall(CurationRejection):
    reason = "box_too_small"


class TrajectoryTooShort(CurationRejection):
    reason = "too_short"


# ===== Tensors and files =====

class ShapeMismatch(ValidationError):
    """Tensor shapes do not match the layer ladder."""


class LengthMismatch(ValidationError):
    """Optimizer state and gradient lengths differ."""


class ConfigError(ValidationError):
    """A run configuration file is invalid."""


class FieldFormatError(ValidationError):
    """A field file is truncated or has a bad header."""


# ===== Numerics =====

class ZeroAttentionMass(NumericalError):
    """An attention slice sums to zero, so mass ratios are undefined."""


class NonFiniteGradient(NumericalError):
    """The box gradient contains NaN or Inf."""


class OptimizationAborted(NumericalError):
    """The optimization loop stopped early on a numerical error."""

    def __init__(self, message: str, report: OptReport) -> None:
        super().__init__(message)
        self.report = report
