"""
Offset-blob fixture scenes.

Each fixture pairs a user trajectory with a scene whose attention blob sits
a fixed offset away from the user box center, so the optimizer has a known
direction to move in.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from boxtraj.attention.backbone import SceneSpec
from boxtraj.geometry.box import BoxParams, Trajectory
from boxtraj.geometry.patterns import build_pattern

FIXTURE_CANVAS: tuple[int, int] = (40, 40)
SUITE_PATTERNS = ("stationary", "linear", "zigzag", "u_turn", "stationary_to_move")


@dataclass(frozen=True)
class Fixture:
    name: str
    trajectory: Trajectory
    scene: SceneSpec

    @property
    def frame_count(self) -> int:
        return self.trajectory.frame_count


def offset_blob_fixture(
    name: str,
    trajectory: Trajectory,
    offset: tuple[float, float] = (0.1, 0.0),
    extent: tuple[float, float] = (0.08, 0.08),
    background_seed: int = 0,
) -> Fixture:
    scene = SceneSpec.following(
        trajectory, offset=offset, extent=extent, background_seed=background_seed
    )
    return Fixture(name=name, trajectory=trajectory, scene=scene)


def _pattern_kwargs(pattern: str, start: BoxParams, end: BoxParams, frames: int) -> dict:
    canvas = FIXTURE_CANVAS
    if pattern == "stationary":
        return {"box": start, "frames": frames, "canvas": canvas}
    if pattern == "u_turn":
        return {"start": start, "turn": end, "frames": frames, "canvas": canvas}
    if pattern == "zigzag":
        return {"start": start, "end": end, "frames": frames, "amplitude": 0.05, "canvas": canvas}
    return {"start": start, "end": end, "frames": frames, "canvas": canvas}


def offset_blob_suite(
    n_scenes: int = 5,
    frames: int = 24,
    offset: tuple[float, float] = (0.1, 0.0),
    seed: int = 0,
) -> list[Fixture]:
    """
    The shipped fixture suite: one scene per motion pattern, cycling.

    Box starts are jittered by a seeded generator; the blob always sits
    `offset` from the box center.
    """
    if n_scenes < 1:
        raise ValueError(f"n_scenes must be positive, got {n_scenes}")
    rng = np.random.default_rng(seed)
    suite = []
    for index in range(n_scenes):
        pattern = SUITE_PATTERNS[index % len(SUITE_PATTERNS)]
        jx, jy = rng.uniform(-0.03, 0.03, size=2)
        start = BoxParams(0.2 + jx, 0.3 + jy, 0.5 + jx, 0.6 + jy)
        end = start.translated(0.15, 0.05)
        trajectory = build_pattern(pattern, **_pattern_kwargs(pattern, start, end, frames))
        suite.append(
            offset_blob_fixture(
                f"{index:02d}-{pattern}", trajectory, offset, background_seed=seed + index
            )
        )
    return suite
