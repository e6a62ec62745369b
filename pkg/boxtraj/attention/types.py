from enum import Enum


class EditMode(Enum):
    """How attention is edited inside and outside the control box."""

    IDENTITY = "identity"               # no edit
    BASELINE = "baseline"               # hard mask + Gaussian boost
    DIFFERENTIABLE = "differentiable"   # smooth box mask, differentiable in the box


class LossMaskSource(Enum):
    """Which boxes define the target mask of the attention losses."""

    USER_BOX = "user_box"           # binary mask of the user's boxes
    CURRENT_BOX = "current_box"     # smooth mask of the boxes being optimized
