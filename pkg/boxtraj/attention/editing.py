"""
Attention edits.

Attention grids have layout (C, F, H, W, N): channels, frames, grid rows,
grid columns, tokens. Boxes are (F, 4) normalized, or a single box shared
by all frames. Only the leading ceil(channel_fraction * C) channels and
the selected tokens are edited; everything else passes through untouched.

Baseline (hard) edit:
    A' = A * (w * (1 - M_bin) + M_bin) + s * M_G * M_bin
Differentiable edit:
    A' = A * (w * (1 - M) + M) + s * M,   M = box_mask
"""

from __future__ import annotations

import math
from abc import ABC, abstractmethod
from collections.abc import Sequence
from dataclasses import dataclass

import torch

from boxtraj.attention.masks import (
    BoxesLike,
    MaskParams,
    as_box_tensor,
    binary_mask,
    box_mask,
    gaussian_map,
    rasterized_boxes,
)
from boxtraj.attention.types import EditMode
from boxtraj.errors import ShapeMismatch

DEFAULT_TOKENS: tuple[int, ...] = (0,)

_PRESETS: dict[str, float] = {
    "zeroscope": 0.15,
    "t2v-turbo": 0.3,
}


@dataclass(frozen=True)
class EditParams:
    """Edit strengths and channel selection."""

    w: float = 0.001
    s: float = 0.15
    channel_fraction: float = 0.5

    def __post_init__(self) -> None:
        if not 0.0 < self.w <= 1.0:
            raise ValueError(f"w must be in (0, 1], got {self.w}")
        if self.s < 0.0:
            raise ValueError(f"s must be >= 0, got {self.s}")
        if not 0.0 < self.channel_fraction <= 1.0:
            raise ValueError(
                f"channel_fraction must be in (0, 1], got {self.channel_fraction}"
            )

    @classmethod
    def preset(cls, name: str) -> EditParams:
        """Edit parameters tuned per generator ("zeroscope", "t2v-turbo")."""
        if name not in _PRESETS:
            raise KeyError(f"Unknown edit preset {name!r}; expected {sorted(_PRESETS)}")
        return cls(s=_PRESETS[name])

    def edited_channels(self, channels: int) -> int:
        # round() guards against 0.5 * 8 landing on 4.000000000000001
        return min(channels, math.ceil(round(self.channel_fraction * channels, 9)))


def _check_attention(attention: torch.Tensor, boxes: torch.Tensor) -> None:
    if attention.ndim != 5:
        raise ShapeMismatch(
            f"Attention must be (C, F, H, W, N), got shape {tuple(attention.shape)}"
        )
    if boxes.ndim == 2 and boxes.shape[0] != attention.shape[1]:
        raise ShapeMismatch(
            f"{boxes.shape[0]} boxes for {attention.shape[1]} frames"
        )
    if boxes.shape[-1] != 4 or boxes.ndim > 2:
        raise ShapeMismatch(f"Boxes must be (F, 4) or (4,), got {tuple(boxes.shape)}")


def _apply(
    attention: torch.Tensor,
    keep: torch.Tensor,
    boost: torch.Tensor,
    params: EditParams,
    tokens: Sequence[int],
) -> torch.Tensor:
    """
    A' = A * (w * (1 - keep) + keep) + boost on edited channels and tokens.

    keep and boost are (F, H, W) or (H, W).
    """
    frames = attention.shape[1]
    if keep.ndim == 2:
        keep = keep.expand(frames, *keep.shape)
        boost = boost.expand(frames, *boost.shape)
    factor = (params.w * (1.0 - keep) + keep)[None, ..., None]
    head_count = params.edited_channels(attention.shape[0])
    head = attention[:head_count]
    edited = head * factor + boost[None, ..., None]

    token_mask = torch.zeros(attention.shape[-1], dtype=torch.bool)
    token_mask[list(tokens)] = True
    edited = torch.where(token_mask, edited, head)
    return torch.cat([edited, attention[head_count:]], dim=0)


def edit_baseline(
    attention: torch.Tensor,
    boxes: BoxesLike,
    edit_params: EditParams | None = None,
    mask_params: MaskParams | None = None,
    tokens: Sequence[int] = DEFAULT_TOKENS,
) -> torch.Tensor:
    """
    Hard-mask edit.

    The Gaussian boost is placed on the rasterized box (the span of cells
    whose centers are inside), so the output is piecewise constant in the
    box coordinates and its derivative is zero almost everywhere.
    """
    edit_params = edit_params or EditParams()
    mask_params = mask_params or MaskParams()
    boxes = as_box_tensor(boxes).detach()
    _check_attention(attention, boxes)
    height, width = attention.shape[2], attention.shape[3]

    inside = binary_mask(boxes, height, width)
    snapped, has_pixels = rasterized_boxes(boxes, height, width)
    gaussian = gaussian_map(snapped, height, width, mask_params)
    gaussian = gaussian * has_pixels.to(gaussian.dtype)[..., None, None]
    return _apply(attention, inside, edit_params.s * gaussian * inside, edit_params, tokens)


def edit_differentiable(
    attention: torch.Tensor,
    boxes: BoxesLike,
    edit_params: EditParams | None = None,
    mask_params: MaskParams | None = None,
    tokens: Sequence[int] = DEFAULT_TOKENS,
) -> torch.Tensor:
    """Smooth-mask edit, differentiable in the box coordinates everywhere."""
    edit_params = edit_params or EditParams()
    mask_params = mask_params or MaskParams()
    boxes = as_box_tensor(boxes)
    _check_attention(attention, boxes)
    mask = box_mask(boxes, attention.shape[2], attention.shape[3], mask_params)
    return _apply(attention, mask, edit_params.s * mask, edit_params, tokens)


# ============================================================================
# Strategies
# ============================================================================

class EditStrategy(ABC):
    """Base class for attention edit strategies used by the attention stack."""

    def __init__(
        self,
        edit_params: EditParams | None = None,
        mask_params: MaskParams | None = None,
    ) -> None:
        self.edit_params = edit_params or EditParams()
        self.mask_params = mask_params or MaskParams()

    @property
    @abstractmethod
    def mode(self) -> EditMode:
        pass

    @property
    @abstractmethod
    def differentiable(self) -> bool:
        """Whether the edit carries gradients to the box coordinates."""
        pass

    @property
    def name(self) -> str:
        return self.mode.value

    @abstractmethod
    def apply(
        self,
        attention: torch.Tensor,
        boxes: torch.Tensor,
        tokens: Sequence[int] = DEFAULT_TOKENS,
    ) -> torch.Tensor:
        pass


class IdentityEdit(EditStrategy):
    @property
    def mode(self) -> EditMode:
        return EditMode.IDENTITY

    @property
    def differentiable(self) -> bool:
        return False

    def apply(self, attention, boxes, tokens=DEFAULT_TOKENS):
        return attention


class BaselineEdit(EditStrategy):
    @property
    def mode(self) -> EditMode:
        return EditMode.BASELINE

    @property
    def differentiable(self) -> bool:
        return False

    def apply(self, attention, boxes, tokens=DEFAULT_TOKENS):
        return edit_baseline(attention, boxes, self.edit_params, self.mask_params, tokens)


class DifferentiableEdit(EditStrategy):
    @property
    def mode(self) -> EditMode:
        return EditMode.DIFFERENTIABLE

    @property
    def differentiable(self) -> bool:
        return True

    def apply(self, attention, boxes, tokens=DEFAULT_TOKENS):
        return edit_differentiable(
            attention, boxes, self.edit_params, self.mask_params, tokens
        )
