"""
Trajectory curation: detection streams to clean, fixed-length trajectories.

Pipeline per stream:
1. interpolate_trajectory - one box per frame, gaps filled linearly
2. filter_trajectory - continuity and size checks, then a seeded window
"""

from __future__ import annotations

import logging
from collections import Counter
from collections.abc import Sequence
from dataclasses import dataclass, field

import numpy as np

from boxtraj.errors import (
    BoxTooSmall,
    CurationRejection,
    DiscontinuousTrajectory,
    InvalidDetectionStream,
    TooFewDetections,
    TrajectoryTooShort,
)
from boxtraj.geometry.box import DEFAULT_CANVAS, DetectionRecord, Trajectory, iou

logger = logging.getLogger(__name__)

SeedLike = int | np.random.Generator | None


@dataclass(frozen=True)
class CurationParams:
    """Thresholds for the curation filters."""

    min_iou: float = 0.5
    min_extent: float = 0.10
    window: int = 24


@dataclass
class CurationResult:
    """Accepted trajectories plus a tally of rejection reasons."""

    accepted: list[Trajectory] = field(default_factory=list)
    accepted_indices: list[int] = field(default_factory=list)
    rejections: Counter[str] = field(default_factory=Counter)

    @property
    def total(self) -> int:
        return len(self.accepted) + sum(self.rejections.values())


def validate_stream(records: Sequence[DetectionRecord]) -> None:
    """
    Check that frame indices strictly increase and scores lie in [0, 1].

    Raises:
        InvalidDetectionStream: on the first violation
    """
    previous = -1
    for record in records:
        if record.frame_index <= previous:
            raise InvalidDetectionStream(
                f"Frame index {record.frame_index} does not increase "
                f"(previous {previous})"
            )
        previous = record.frame_index
        for _, score in record.boxes:
            if not 0.0 <= score <= 1.0:
                raise InvalidDetectionStream(
                    f"Score {score} out of [0, 1] at frame {record.frame_index}"
                )


def interpolate_trajectory(
    records: Sequence[DetectionRecord],
    total_frames: int,
    canvas: tuple[int, int] = DEFAULT_CANVAS,
) -> Trajectory:
    """
    Build a full-length trajectory from sparse detections.

    The highest-score box is taken on each detected frame. Missing frames
    between detections are filled by per-coordinate linear interpolation;
    frames before the first or after the last detection repeat the
    nearest detected box.

    Args:
        records: detection stream with strictly increasing frame indices
        total_frames: output length
        canvas: canvas recorded on the output trajectory

    Raises:
        InvalidDetectionStream: bad ordering, scores or frame range
        TooFewDetections: fewer than two frames carry a detection
    """
    if total_frames < 1:
        raise ValueError(f"total_frames must be positive, got {total_frames}")
    validate_stream(records)

    detected: list[tuple[int, tuple[float, float, float, float]]] = []
    for record in records:
        if record.frame_index >= total_frames:
            raise InvalidDetectionStream(
                f"Frame index {record.frame_index} beyond {total_frames} frames"
            )
        best = record.best_box()
        if best is not None:
            detected.append((record.frame_index, best.as_tuple()))

    if len(detected) < 2:
        raise TooFewDetections(
            f"Need at least 2 detected frames, got {len(detected)}"
        )

    known_frames = np.array([frame for frame, _ in detected], dtype=np.float64)
    known_boxes = np.array([box for _, box in detected], dtype=np.float64)
    all_frames = np.arange(total_frames, dtype=np.float64)
    # np.interp holds the end values constant outside the known range.
    columns = [
        np.interp(all_frames, known_frames, known_boxes[:, k]) for k in range(4)
    ]
    boxes = np.stack(columns, axis=1)
    # Exact reproduction at detected frames.
    boxes[known_frames.astype(int)] = known_boxes
    return Trajectory.from_array(boxes, canvas)


def check_trajectory(traj: Trajectory, params: CurationParams) -> None:
    """
    Apply the continuity and size filters.

    Raises:
        DiscontinuousTrajectory: consecutive-frame IoU below params.min_iou
        BoxTooSmall: max width or max height below params.min_extent
    """
    for index in range(1, len(traj)):
        overlap = iou(traj[index - 1], traj[index])
        if overlap < params.min_iou:
            raise DiscontinuousTrajectory(
                f"IoU {overlap:.3f} between frames {index - 1} and {index}"
            )
    max_width = max(box.width for box in traj)
    max_height = max(box.height for box in traj)
    if max_width < params.min_extent or max_height < params.min_extent:
        raise BoxTooSmall(
            f"Max extent ({max_width:.3f}, {max_height:.3f}) below "
            f"{params.min_extent}"
        )


def filter_trajectory(
    traj: Trajectory,
    window: int = 24,
    seed: SeedLike = 0,
    params: CurationParams | None = None,
) -> Trajectory:
    """
    Reject unusable trajectories and sample a fixed-length window.

    Args:
        traj: interpolated full-length trajectory
        window: number of consecutive frames to keep
        seed: seed or generator for the window start offset
        params: filter thresholds (window is taken from the argument)

    Returns:
        `window` consecutive frames starting at a uniformly sampled offset

    Raises:
        DiscontinuousTrajectory, BoxTooSmall, TrajectoryTooShort
    """
    params = params or CurationParams(window=window)
    if window < 1:
        raise ValueError(f"window must be positive, got {window}")
    check_trajectory(traj, params)
    if len(traj) < window:
        raise TrajectoryTooShort(f"Length {len(traj)} shorter than window {window}")
    rng = np.random.default_rng(seed)
    start = int(rng.integers(0, len(traj) - window + 1))
    return traj.window(start, window)


def curate_stream(
    records: Sequence[DetectionRecord],
    total_frames: int,
    params: CurationParams | None = None,
    seed: SeedLike = 0,
    canvas: tuple[int, int] = DEFAULT_CANVAS,
) -> Trajectory:
    """Interpolate then filter one detection stream."""
    params = params or CurationParams()
    traj = interpolate_trajectory(records, total_frames, canvas)
    return filter_trajectory(traj, params.window, seed, params)


def curate_corpus(
    streams: Sequence[tuple[Sequence[DetectionRecord], int]],
    params: CurationParams | None = None,
    seed: int = 0,
) -> CurationResult:
    """
    Curate many (records, total_frames) streams with one seeded generator.

    Rejected streams are tallied by reason instead of raising.
    """
    params = params or CurationParams()
    rng = np.random.default_rng(seed)
    result = CurationResult()
    for index, (records, total_frames) in enumerate(streams):
        try:
            traj = curate_stream(records, total_frames, params, rng)
        except CurationRejection as e:
            logger.info("Stream %d rejected: %s (%s)", index, e.reason, e)
            result.rejections[e.reason] += 1
            continue
        result.accepted.append(traj)
        result.accepted_indices.append(index)
    logger.info(
        "Curated %d streams: %d accepted, %d rejected",
        result.total, len(result.accepted), sum(result.rejections.values()),
    )
    return result
