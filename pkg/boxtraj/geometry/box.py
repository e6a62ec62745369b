"""
Box and trajectory value types.

Coordinates are normalized to [0, 1] as fractions of the canvas width
(l, r) and height (t, b). Grid coordinates are the normalized values
scaled by the grid size; grid sample points are pixel centers.
"""

from __future__ import annotations

from collections.abc import Iterator, Sequence
from dataclasses import dataclass, field

import numpy as np

from boxtraj.errors import EmptyTrajectory, InvalidBox

MIN_BOX_SIZE = 0.01
DEFAULT_CANVAS = (320, 320)

# Widths within this distance of min_size count as repaired. Keeps
# projection idempotent under float rounding of center +/- min_size/2.
_SIZE_TOLERANCE = 1e-12


@dataclass(frozen=True)
class BoxParams:
    """A single box (left, top, right, bottom) in normalized coordinates."""

    l: float
    t: float
    r: float
    b: float

    @classmethod
    def from_sequence(cls, values: Sequence[float]) -> BoxParams:
        if len(values) != 4:
            raise InvalidBox(f"Expected 4 coordinates, got {len(values)}")
        l, t, r, b = (float(v) for v in values)
        return cls(l, t, r, b)

    @property
    def width(self) -> float:
        return self.r - self.l

    @property
    def height(self) -> float:
        return self.b - self.t

    @property
    def center(self) -> tuple[float, float]:
        return ((self.l + self.r) / 2.0, (self.t + self.b) / 2.0)

    @property
    def area(self) -> float:
        return self.width * self.height

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.l, self.t, self.r, self.b)

    def is_valid(self, min_size: float = 0.0) -> bool:
        coords = self.as_tuple()
        if not all(np.isfinite(coords)):
            return False
        if not (0.0 <= self.l < self.r <= 1.0 and 0.0 <= self.t < self.b <= 1.0):
            return False
        return (
            self.width >= min_size - _SIZE_TOLERANCE
            and self.height >= min_size - _SIZE_TOLERANCE
        )

    def validate(self, min_size: float = 0.0) -> BoxParams:
        """
        Check the box invariants.

        Returns:
            self, for chaining

        Raises:
            InvalidBox: if coordinates are out of range, unordered or
                smaller than min_size
        """
        if not self.is_valid(min_size):
            raise InvalidBox(
                f"Invalid box {self.as_tuple()} (min_size={min_size})"
            )
        return self

    def translated(self, dx: float, dy: float) -> BoxParams:
        return BoxParams(self.l + dx, self.t + dy, self.r + dx, self.b + dy)


@dataclass(frozen=True)
class GridBox:
    """A box in grid units of an H x W layer (x along W, y along H)."""

    x0: float
    y0: float
    x1: float
    y1: float

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.x0, self.y0, self.x1, self.y1)


@dataclass(frozen=True)
class Trajectory:
    """
    An ordered sequence of per-frame boxes.

    Usage:
        traj = Trajectory.from_array(np.array([[0.1, 0.1, 0.4, 0.4]] * 24))
        boxes = traj.to_array()  # (F, 4) float64
    """

    frames: tuple[BoxParams, ...]
    canvas: tuple[int, int] = DEFAULT_CANVAS

    def __post_init__(self) -> None:
        if len(self.frames) == 0:
            raise EmptyTrajectory("Trajectory must contain at least one frame")
        for index, box in enumerate(self.frames):
            if not box.is_valid():
                raise InvalidBox(f"Frame {index}: invalid box {box.as_tuple()}")

    @classmethod
    def from_array(
        cls, boxes: np.ndarray | Sequence[Sequence[float]],
        canvas: tuple[int, int] = DEFAULT_CANVAS,
    ) -> Trajectory:
        array = np.asarray(boxes, dtype=np.float64)
        if array.ndim != 2 or array.shape[1] != 4:
            raise InvalidBox(f"Expected an (F, 4) array, got shape {array.shape}")
        return cls(
            tuple(BoxParams.from_sequence(row) for row in array),
            (int(canvas[0]), int(canvas[1])),
        )

    @property
    def frame_count(self) -> int:
        return len(self.frames)

    def __len__(self) -> int:
        return len(self.frames)

    def __iter__(self) -> Iterator[BoxParams]:
        return iter(self.frames)

    def __getitem__(self, index: int) -> BoxParams:
        return self.frames[index]

    def to_array(self) -> np.ndarray:
        return np.array([box.as_tuple() for box in self.frames], dtype=np.float64)

    def window(self, start: int, length: int) -> Trajectory:
        return Trajectory(self.frames[start:start + length], self.canvas)

    def translated(self, dx: float, dy: float) -> Trajectory:
        return Trajectory(
            tuple(box.translated(dx, dy) for box in self.frames), self.canvas
        )


@dataclass(frozen=True)
class DetectionRecord:
    """Detector output for one frame: candidate boxes with confidence scores."""

    frame_index: int
    boxes: tuple[tuple[BoxParams, float], ...] = field(default_factory=tuple)
    canvas: tuple[int, int] | None = None

    def best_box(self) -> BoxParams | None:
        """Highest-score box; the first one wins ties."""
        if not self.boxes:
            return None
        best_box, best_score = self.boxes[0]
        for box, score in self.boxes[1:]:
            if score > best_score:
                best_box, best_score = box, score
        return best_box


def iou(a: BoxParams, b: BoxParams) -> float:
    """Intersection over union of two valid boxes."""
    inter_w = min(a.r, b.r) - max(a.l, b.l)
    inter_h = min(a.b, b.b) - max(a.t, b.t)
    if inter_w <= 0.0 or inter_h <= 0.0:
        return 0.0
    intersection = inter_w * inter_h
    union = a.area + b.area - intersection
    if union <= 0.0:
        return 0.0
    return min(1.0, intersection / union)


def _repair_axis(
    lo: np.ndarray, hi: np.ndarray, min_size: float
) -> tuple[np.ndarray, np.ndarray]:
    lo, hi = np.minimum(lo, hi), np.maximum(lo, hi)
    short = (hi - lo) < (min_size - _SIZE_TOLERANCE)
    center = (lo + hi) / 2.0
    new_lo = center - min_size / 2.0
    new_hi = center + min_size / 2.0
    below = new_lo < 0.0
    new_lo = np.where(below, 0.0, new_lo)
    new_hi = np.where(below, min_size, new_hi)
    above = new_hi > 1.0
    new_lo = np.where(above, 1.0 - min_size, new_lo)
    new_hi = np.where(above, 1.0, new_hi)
    return np.where(short, new_lo, lo), np.where(short, new_hi, hi)


def project_boxes(raw: np.ndarray, min_size: float = MIN_BOX_SIZE) -> np.ndarray:
    """
    Project an (F, 4) array of raw box coordinates onto valid boxes.

    Coordinates are clamped to [0, 1]; each axis is then reordered and,
    when shorter than min_size, expanded symmetrically about its center
    (shifted back inside the canvas if the expansion crosses an edge).
    The projection is idempotent.
    """
    if not 0.0 < min_size <= 1.0:
        raise ValueError(f"min_size must be in (0, 1], got {min_size}")
    boxes = np.clip(np.asarray(raw, dtype=np.float64).reshape(-1, 4), 0.0, 1.0)
    left, right = _repair_axis(boxes[:, 0], boxes[:, 2], min_size)
    top, bottom = _repair_axis(boxes[:, 1], boxes[:, 3], min_size)
    return np.stack([left, top, right, bottom], axis=1)


def project_box(
    raw: BoxParams | Sequence[float], min_size: float = MIN_BOX_SIZE
) -> BoxParams:
    """Project one raw box onto a valid box (see project_boxes)."""
    values = raw.as_tuple() if isinstance(raw, BoxParams) else tuple(raw)
    return BoxParams.from_sequence(project_boxes(np.array([values]), min_size)[0])


def box_to_grid(box: BoxParams, height: int, width: int) -> GridBox:
    """Scale a normalized box onto an H x W grid."""
    if height < 1 or width < 1:
        raise ValueError(f"Grid size must be positive, got {height}x{width}")
    return GridBox(box.l * width, box.t * height, box.r * width, box.b * height)


def grid_to_box(grid_box: GridBox, height: int, width: int) -> BoxParams:
    """Inverse of box_to_grid."""
    if height < 1 or width < 1:
        raise ValueError(f"Grid size must be positive, got {height}x{width}")
    return BoxParams(
        grid_box.x0 / width,
        grid_box.y0 / height,
        grid_box.x1 / width,
        grid_box.y1 / height,
    )
