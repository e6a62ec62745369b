"""
Control-adherence metric.

Each frame scores the IoU between the control box and whichever detected
box matches it best; scores of the detections play no part. Frames with no
detection score 0.
"""

from __future__ import annotations

from collections.abc import Iterable, Sequence

import numpy as np

from boxtraj.errors import EmptyTrajectory
from boxtraj.geometry.box import DetectionRecord, Trajectory, iou


def per_frame_iou(
    controls: Trajectory, detections: Iterable[DetectionRecord]
) -> np.ndarray:
    """Best-match IoU for every control frame, shape (F,)."""
    if len(controls) == 0:
        raise EmptyTrajectory("No control frames to score")
    candidates: dict[int, list] = {}
    for record in detections:
        candidates.setdefault(record.frame_index, []).extend(
            box for box, _ in record.boxes
        )
    scores = np.zeros(len(controls))
    for index, control in enumerate(controls):
        boxes = candidates.get(index, [])
        if boxes:
            scores[index] = max(iou(control, box) for box in boxes)
    return scores


def miou(controls: Trajectory, detections: Iterable[DetectionRecord]) -> float:
    """
    Mean over frames of the closest-match IoU, in [0, 1].

    Raises:
        EmptyTrajectory: controls has no frames
    """
    return float(per_frame_iou(controls, detections).mean())


def corpus_miou(
    pairs: Sequence[tuple[Trajectory, Iterable[DetectionRecord]]]
) -> float:
    """Average of per-trajectory mIoU values (frames first, then trajectories)."""
    if not pairs:
        raise EmptyTrajectory("No trajectories to score")
    return float(np.mean([miou(controls, detections) for controls, detections in pairs]))
