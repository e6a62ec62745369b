"""
Tests for boxtraj/geometry/box.py

Covers:
- BoxParams invariants and helpers
- Trajectory construction and errors
- IoU, projection onto valid boxes, grid scaling
"""
from __future__ import annotations

import numpy as np
import pytest

from boxtraj.errors import EmptyTrajectory, InvalidBox
from boxtraj.geometry.box import (
    BoxParams,
    DetectionRecord,
    GridBox,
    Trajectory,
    box_to_grid,
    grid_to_box,
    iou,
    project_box,
    project_boxes,
)


# ============================================================================
# BoxParams
# ============================================================================

class TestBoxParams:
    """Tests for the BoxParams value type."""

    def test_geometry_helpers(self):
        """Width, height, center and area follow the coordinates."""
        box = BoxParams(0.1, 0.2, 0.5, 0.8)
        assert box.width == pytest.approx(0.4)
        assert box.height == pytest.approx(0.6)
        assert box.center == pytest.approx((0.3, 0.5))
        assert box.area == pytest.approx(0.24)

    def test_validate_returns_self(self):
        """A valid box passes validation unchanged."""
        box = BoxParams(0.1, 0.1, 0.5, 0.5)
        assert box.validate() is box

    @pytest.mark.parametrize(
        "coords",
        [
            (0.5, 0.1, 0.4, 0.5),
            (0.1, 0.1, 1.2, 0.5),
            (-0.1, 0.1, 0.5, 0.5),
            (0.1, 0.1, float("nan"), 0.5),
        ],
    )
    def test_invalid_boxes_rejected(self, coords):
        """Unordered, out-of-range and non-finite boxes raise InvalidBox."""
        with pytest.raises(InvalidBox):
            BoxParams(*coords).validate()

    def test_min_size_enforced(self):
        """A box thinner than min_size is invalid for that min_size."""
        box = BoxParams(0.1, 0.1, 0.105, 0.5)
        assert box.is_valid()
        assert not box.is_valid(min_size=0.01)

    def test_from_sequence_needs_four_values(self):
        """from_sequence rejects the wrong number of coordinates."""
        with pytest.raises(InvalidBox):
            BoxParams.from_sequence([0.1, 0.2, 0.3])


# ============================================================================
# Trajectory
# ============================================================================

class TestTrajectory:
    """Tests for the Trajectory value type."""

    def test_empty_trajectory_rejected(self):
        """Zero frames raise EmptyTrajectory."""
        with pytest.raises(EmptyTrajectory):
            Trajectory(())

    def test_invalid_frame_rejected(self):
        """Any invalid frame raises InvalidBox."""
        with pytest.raises(InvalidBox):
            Trajectory((BoxParams(0.1, 0.1, 0.5, 0.5), BoxParams(0.6, 0.1, 0.5, 0.5)))

    def test_array_round_trip(self):
        """to_array returns the coordinates from_array was given."""
        boxes = np.array([[0.1, 0.1, 0.4, 0.4], [0.2, 0.1, 0.5, 0.4]])
        traj = Trajectory.from_array(boxes, canvas=(40, 40))
        assert traj.frame_count == 2
        assert traj.canvas == (40, 40)
        np.testing.assert_array_equal(traj.to_array(), boxes)

    def test_from_array_shape_checked(self):
        """from_array wants an (F, 4) array."""
        with pytest.raises(InvalidBox):
            Trajectory.from_array(np.zeros((3, 3)))

    def test_window(self):
        """window keeps consecutive frames and the canvas."""
        boxes = np.array([[0.1 + 0.01 * i, 0.1, 0.4 + 0.01 * i, 0.4] for i in range(10)])
        traj = Trajectory.from_array(boxes, canvas=(40, 40))
        window = traj.window(3, 4)
        assert len(window) == 4
        assert window[0] == traj[3]
        assert window.canvas == (40, 40)


# ============================================================================
# IoU
# ============================================================================

class TestIou:
    """Tests for iou()."""

    def test_identical_boxes(self):
        """Identical boxes have IoU 1."""
        box = BoxParams(0.1, 0.1, 0.5, 0.5)
        assert iou(box, box) == pytest.approx(1.0)

    def test_nested_half(self):
        """A half-canvas box inside the full canvas has IoU 0.5."""
        assert iou(BoxParams(0, 0, 1, 1), BoxParams(0, 0, 0.5, 1)) == pytest.approx(0.5)

    def test_disjoint(self):
        """Disjoint boxes have IoU 0."""
        assert iou(BoxParams(0, 0, 0.4, 0.4), BoxParams(0.6, 0.6, 1, 1)) == 0.0

    def test_touching_edges(self):
        """Boxes sharing only an edge do not overlap."""
        assert iou(BoxParams(0, 0, 0.5, 0.5), BoxParams(0.5, 0, 1, 0.5)) == 0.0

    def test_symmetric(self):
        """iou(a, b) == iou(b, a)."""
        a, b = BoxParams(0.1, 0.1, 0.5, 0.6), BoxParams(0.3, 0.2, 0.9, 0.7)
        assert iou(a, b) == pytest.approx(iou(b, a))


# ============================================================================
# Projection
# ============================================================================

class TestProjectBox:
    """Tests for project_box() and project_boxes()."""

    def test_clamps_to_canvas(self):
        """Coordinates outside [0, 1] are clamped."""
        projected = project_box((-0.1, 0.2, 1.2, 0.9))
        assert projected.as_tuple() == pytest.approx((0.0, 0.2, 1.0, 0.9))

    def test_valid_box_unchanged(self):
        """A valid box is a fixed point."""
        box = BoxParams(0.1, 0.2, 0.6, 0.7)
        assert project_box(box) == box

    def test_degenerate_box_expanded_symmetrically(self):
        """A zero-size box grows to min_size about its center."""
        projected = project_box((0.5, 0.5, 0.5, 0.5), min_size=0.01)
        assert projected.as_tuple() == pytest.approx((0.495, 0.495, 0.505, 0.505))

    def test_expansion_stays_inside_canvas(self):
        """Expansion at the canvas edge shifts back inside."""
        projected = project_box((1.0, 0.0, 1.0, 0.0), min_size=0.02)
        assert projected.as_tuple() == pytest.approx((0.98, 0.0, 1.0, 0.02))
        assert projected.is_valid(0.02)

    def test_swapped_coordinates_reordered(self):
        """l > r is repaired by reordering."""
        projected = project_box((0.6, 0.2, 0.3, 0.5))
        assert projected.as_tuple() == pytest.approx((0.3, 0.2, 0.6, 0.5))

    def test_idempotent(self):
        """Projecting twice equals projecting once."""
        rng = np.random.default_rng(3)
        raw = rng.uniform(-0.3, 1.3, size=(200, 4))
        once = project_boxes(raw)
        np.testing.assert_array_equal(project_boxes(once), once)

    def test_outputs_always_valid(self):
        """Every projected box satisfies the box invariants."""
        rng = np.random.default_rng(4)
        raw = rng.uniform(-0.5, 1.5, size=(200, 4))
        for row in project_boxes(raw, min_size=0.01):
            assert BoxParams.from_sequence(row).is_valid(0.01)

    def test_bad_min_size(self):
        """min_size outside (0, 1] is a ValueError."""
        with pytest.raises(ValueError):
            project_boxes(np.zeros((1, 4)), min_size=0.0)


# ============================================================================
# Grid scaling
# ============================================================================

class TestBoxToGrid:
    """Tests for box_to_grid() and grid_to_box()."""

    @pytest.mark.parametrize(
        "box, size, expected",
        [
            ((0.25, 0.25, 0.75, 0.75), 40, (10, 10, 30, 30)),
            ((0.0, 0.0, 1.0, 1.0), 5, (0, 0, 5, 5)),
            ((0.1, 0.2, 0.3, 0.4), 20, (2, 4, 6, 8)),
        ],
    )
    def test_scaling(self, box, size, expected):
        """Normalized coordinates scale by the grid size."""
        grid = box_to_grid(BoxParams(*box), size, size)
        assert grid.as_tuple() == pytest.approx(expected)

    def test_inverse(self):
        """grid_to_box undoes box_to_grid."""
        box = BoxParams(0.1, 0.2, 0.3, 0.4)
        back = grid_to_box(box_to_grid(box, 20, 40), 20, 40)
        assert back.as_tuple() == pytest.approx(box.as_tuple())

    def test_non_square_axes(self):
        """x scales by width and y by height."""
        grid = box_to_grid(BoxParams(0.5, 0.5, 1.0, 1.0), height=10, width=20)
        assert grid == GridBox(10.0, 5.0, 20.0, 10.0)


# ============================================================================
# DetectionRecord
# ============================================================================

class TestDetectionRecord:
    """Tests for DetectionRecord.best_box()."""

    def test_highest_score_wins(self):
        """best_box picks the top-scoring candidate."""
        low, high = BoxParams(0.1, 0.1, 0.3, 0.3), BoxParams(0.5, 0.5, 0.7, 0.7)
        record = DetectionRecord(0, ((low, 0.2), (high, 0.9)))
        assert record.best_box() == high

    def test_first_wins_ties(self):
        """On equal scores the first candidate is kept."""
        first, second = BoxParams(0.1, 0.1, 0.3, 0.3), BoxParams(0.5, 0.5, 0.7, 0.7)
        record = DetectionRecord(0, ((first, 0.5), (second, 0.5)))
        assert record.best_box() == first

    def test_empty_record(self):
        """A frame without candidates has no best box."""
        assert DetectionRecord(3).best_box() is None
