"""Box geometry, trajectory patterns and curation."""
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
from boxtraj.geometry.curation import (
    CurationParams,
    filter_trajectory,
    interpolate_trajectory,
)

__all__ = [
    "BoxParams",
    "DetectionRecord",
    "GridBox",
    "Trajectory",
    "box_to_grid",
    "grid_to_box",
    "iou",
    "project_box",
    "project_boxes",
    "CurationParams",
    "filter_trajectory",
    "interpolate_trajectory",
]
