"""
Attention-maximization objective.

For each (layer, frame) slice of the next-layer attention, with the mask M
at that layer's resolution and sums over channels, positions and tracked
tokens:

    r          = sum(A * M) / sum(A)
    attn slice = (1 - r)^2
    neg slice  = (1 - sum(A * (1 - M)) / sum(A))^2

loss_attn and loss_neg_attn average the slices uniformly. loss_reg is the
frame mean of squared distances to the user boxes. The total is

    l_total = l_attn + lambda_neg * l_neg + lambda_reg * l_reg
"""

from __future__ import annotations

import math
from collections.abc import Sequence
from dataclasses import dataclass, field

import numpy as np
import torch

from boxtraj.attention.editing import DEFAULT_TOKENS
from boxtraj.attention.masks import BoxesLike, as_box_tensor
from boxtraj.attention.types import LossMaskSource
from boxtraj.errors import FrameCountMismatch, ShapeMismatch, ZeroAttentionMass
from boxtraj.geometry.box import DEFAULT_CANVAS

Scalar = float | torch.Tensor


@dataclass(frozen=True)
class LossWeights:
    """
    Loss weights and target selection.

    lambda_reg defaults to lambda_reg_scale * sqrt(canvas pixel count);
    set lambda_reg to pin it explicitly.
    """

    lambda_neg: float = 10.0
    lambda_reg_scale: float = 0.1
    canvas: tuple[int, int] = DEFAULT_CANVAS
    lambda_reg: float | None = None
    loss_mask_source: LossMaskSource = LossMaskSource.USER_BOX
    token_set: tuple[int, ...] = DEFAULT_TOKENS

    def __post_init__(self) -> None:
        if self.lambda_neg < 0.0:
            raise ValueError(f"lambda_neg must be >= 0, got {self.lambda_neg}")
        if self.lambda_reg_scale < 0.0:
            raise ValueError(f"lambda_reg_scale must be >= 0, got {self.lambda_reg_scale}")
        if self.lambda_reg is not None and self.lambda_reg < 0.0:
            raise ValueError(f"lambda_reg must be >= 0, got {self.lambda_reg}")
        if not self.token_set:
            raise ValueError("token_set must not be empty")

    @property
    def reg_weight(self) -> float:
        if self.lambda_reg is not None:
            return self.lambda_reg
        width, height = self.canvas
        return self.lambda_reg_scale * math.sqrt(width * height)


@dataclass
class LossBreakdown:
    """Loss components of one evaluation; slices are indexed [layer, frame]."""

    l_attn: float
    l_neg: float
    l_reg: float
    l_total: float
    attn_slices: np.ndarray = field(default_factory=lambda: np.zeros((0, 0)))
    neg_slices: np.ndarray = field(default_factory=lambda: np.zeros((0, 0)))


def _slice_ratios(
    fields: Sequence[torch.Tensor],
    masks: Sequence[torch.Tensor],
    tokens: Sequence[int],
) -> torch.Tensor:
    """Inside-mass ratios, shape (L, F)."""
    if len(fields) != len(masks):
        raise ShapeMismatch(f"{len(fields)} fields but {len(masks)} masks")
    tokens = list(tokens)
    ratios = []
    for layer, (attention, mask) in enumerate(zip(fields, masks)):
        if attention.ndim != 5 or tuple(mask.shape[-2:]) != tuple(attention.shape[2:4]):
            raise ShapeMismatch(
                f"Layer {layer}: mask {tuple(mask.shape)} does not match "
                f"attention {tuple(attention.shape)}"
            )
        selected = attention[..., tokens]
        total = selected.sum(dim=(0, 2, 3, 4))
        if bool((total <= 0.0).any()):
            raise ZeroAttentionMass(f"Layer {layer} has a slice with zero attention mass")
        inside = (selected * mask[None, ..., None]).sum(dim=(0, 2, 3, 4))
        ratios.append(inside / total)
    return torch.stack(ratios)


def attn_slices(
    fields: Sequence[torch.Tensor],
    masks: Sequence[torch.Tensor],
    tokens: Sequence[int] = DEFAULT_TOKENS,
) -> torch.Tensor:
    return (1.0 - _slice_ratios(fields, masks, tokens)) ** 2


def neg_slices(
    fields: Sequence[torch.Tensor],
    masks: Sequence[torch.Tensor],
    tokens: Sequence[int] = DEFAULT_TOKENS,
) -> torch.Tensor:
    outside = [1.0 - mask for mask in masks]
    return (1.0 - _slice_ratios(fields, outside, tokens)) ** 2


def loss_attn(
    fields: Sequence[torch.Tensor],
    masks: Sequence[torch.Tensor],
    tokens: Sequence[int] = DEFAULT_TOKENS,
) -> torch.Tensor:
    """
    Attention-maximization loss, in [0, 1].

    Args:
        fields: next-layer attention grids (C, F, H, W, N), one per layer
        masks: target masks (F, H, W) or (H, W) at the matching resolutions
        tokens: tracked token indices

    Raises:
        ZeroAttentionMass: a slice sums to zero
    """
    return attn_slices(fields, masks, tokens).mean()


def loss_neg_attn(
    fields: Sequence[torch.Tensor],
    masks: Sequence[torch.Tensor],
    tokens: Sequence[int] = DEFAULT_TOKENS,
) -> torch.Tensor:
    """Background-balancing loss: loss_attn with the complement mask."""
    return neg_slices(fields, masks, tokens).mean()


def inside_mass_fraction(
    attention: torch.Tensor,
    mask: torch.Tensor,
    tokens: Sequence[int] = DEFAULT_TOKENS,
) -> float:
    """Frame-averaged share of tracked-token attention under `mask`."""
    with torch.no_grad():
        return float(_slice_ratios([attention], [mask], tokens).mean())


def loss_reg(boxes: BoxesLike, user_boxes: BoxesLike) -> torch.Tensor:
    """
    Frame mean of squared distances between box 4-vectors.

    Raises:
        FrameCountMismatch: different frame counts
    """
    boxes = as_box_tensor(boxes).reshape(-1, 4)
    user_boxes = as_box_tensor(user_boxes).reshape(-1, 4)
    if boxes.shape[0] != user_boxes.shape[0]:
        raise FrameCountMismatch(
            f"{boxes.shape[0]} frames vs {user_boxes.shape[0]} user frames"
        )
    return ((boxes - user_boxes) ** 2).sum(dim=1).mean()


def _to_float(value: Scalar) -> float:
    if isinstance(value, torch.Tensor):
        return float(value.detach())
    return float(value)


def weighted_total(
    l_attn: Scalar, l_neg: Scalar, l_reg: Scalar, weights: LossWeights
) -> Scalar:
    return l_attn + weights.lambda_neg * l_neg + weights.reg_weight * l_reg


def loss_total(
    l_attn: Scalar,
    l_neg: Scalar,
    l_reg: Scalar,
    weights: LossWeights,
    attn_slice_values: torch.Tensor | np.ndarray | None = None,
    neg_slice_values: torch.Tensor | np.ndarray | None = None,
) -> LossBreakdown:
    """Combine component losses into a LossBreakdown."""
    attn_value, neg_value, reg_value = _to_float(l_attn), _to_float(l_neg), _to_float(l_reg)

    def to_array(values) -> np.ndarray:
        if values is None:
            return np.zeros((0, 0))
        if isinstance(values, torch.Tensor):
            values = values.detach().cpu().numpy()
        return np.asarray(values, dtype=np.float64)

    return LossBreakdown(
        l_attn=attn_value,
        l_neg=neg_value,
        l_reg=reg_value,
        l_total=float(weighted_total(attn_value, neg_value, reg_value, weights)),
        attn_slices=to_array(attn_slice_values),
        neg_slices=to_array(neg_slice_values),
    )
