"""
Synthetic user trajectories: linear moves and the complex motion patterns
(zig-zag, U-turn, stationary-then-move) used for fixtures and experiments.
"""

from __future__ import annotations

from collections.abc import Callable
from typing import Any

import numpy as np

from boxtraj.geometry.box import (
    DEFAULT_CANVAS,
    MIN_BOX_SIZE,
    BoxParams,
    Trajectory,
    project_boxes,
)

PatternBuilder = Callable[..., Trajectory]


def _from_centers(
    centers: np.ndarray, size: tuple[float, float], canvas: tuple[int, int]
) -> Trajectory:
    half_w, half_h = size[0] / 2.0, size[1] / 2.0
    boxes = np.stack(
        [
            centers[:, 0] - half_w,
            centers[:, 1] - half_h,
            centers[:, 0] + half_w,
            centers[:, 1] + half_h,
        ],
        axis=1,
    )
    return Trajectory.from_array(project_boxes(boxes, MIN_BOX_SIZE), canvas)


def _ramp(frames: int) -> np.ndarray:
    if frames < 1:
        raise ValueError(f"frames must be positive, got {frames}")
    if frames == 1:
        return np.zeros(1)
    return np.linspace(0.0, 1.0, frames)


def linear_trajectory(
    start: BoxParams,
    end: BoxParams,
    frames: int,
    canvas: tuple[int, int] = DEFAULT_CANVAS,
) -> Trajectory:
    """Interpolate every coordinate linearly from start to end."""
    alpha = _ramp(frames)[:, None]
    boxes = (1.0 - alpha) * np.array(start.as_tuple()) + alpha * np.array(end.as_tuple())
    return Trajectory.from_array(project_boxes(boxes, MIN_BOX_SIZE), canvas)


def stationary_trajectory(
    box: BoxParams, frames: int, canvas: tuple[int, int] = DEFAULT_CANVAS
) -> Trajectory:
    return linear_trajectory(box, box, frames, canvas)


def zigzag_trajectory(
    start: BoxParams,
    end: BoxParams,
    frames: int,
    amplitude: float = 0.1,
    periods: int = 2,
    canvas: tuple[int, int] = DEFAULT_CANVAS,
) -> Trajectory:
    """
    Move the center from start to end with a triangular vertical wave.

    The box keeps the start box's size.
    """
    alpha = _ramp(frames)
    begin, finish = np.array(start.center), np.array(end.center)
    centers = (1.0 - alpha)[:, None] * begin + alpha[:, None] * finish
    phase = (alpha * periods) % 1.0
    triangle = 1.0 - 4.0 * np.abs(phase - 0.5)
    centers[:, 1] += amplitude * triangle
    return _from_centers(centers, (start.width, start.height), canvas)


def u_turn_trajectory(
    start: BoxParams,
    turn: BoxParams,
    frames: int,
    canvas: tuple[int, int] = DEFAULT_CANVAS,
) -> Trajectory:
    """Go from start to turn during the first half, then come back."""
    alpha = _ramp(frames)
    there_and_back = 1.0 - np.abs(2.0 * alpha - 1.0)
    boxes = (
        (1.0 - there_and_back)[:, None] * np.array(start.as_tuple())
        + there_and_back[:, None] * np.array(turn.as_tuple())
    )
    return Trajectory.from_array(project_boxes(boxes, MIN_BOX_SIZE), canvas)


def stationary_to_move_trajectory(
    start: BoxParams,
    end: BoxParams,
    frames: int,
    hold_fraction: float = 0.5,
    canvas: tuple[int, int] = DEFAULT_CANVAS,
) -> Trajectory:
    """Hold the start box for hold_fraction of the clip, then move to end."""
    if not 0.0 <= hold_fraction < 1.0:
        raise ValueError(f"hold_fraction must be in [0, 1), got {hold_fraction}")
    alpha = _ramp(frames)
    moving = np.clip((alpha - hold_fraction) / (1.0 - hold_fraction), 0.0, 1.0)
    boxes = (
        (1.0 - moving)[:, None] * np.array(start.as_tuple())
        + moving[:, None] * np.array(end.as_tuple())
    )
    return Trajectory.from_array(project_boxes(boxes, MIN_BOX_SIZE), canvas)


PATTERNS: dict[str, PatternBuilder] = {
    "linear": linear_trajectory,
    "stationary": stationary_trajectory,
    "zigzag": zigzag_trajectory,
    "u_turn": u_turn_trajectory,
    "stationary_to_move": stationary_to_move_trajectory,
}


def build_pattern(name: str, **kwargs: Any) -> Trajectory:
    """
    Build a trajectory by pattern name.

    Raises:
        KeyError: unknown pattern name
    """
    try:
        builder = PATTERNS[name]
    except KeyError:
        raise KeyError(
            f"Unknown trajectory pattern {name!r}; expected one of {sorted(PATTERNS)}"
        ) from None
    return builder(**kwargs)
