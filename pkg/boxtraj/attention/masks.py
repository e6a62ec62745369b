"""
Box mask rasterization.

All masks are float64 tensors of shape (..., H, W) sampled at pixel
centers ((i + 0.5) / H, (j + 0.5) / W) in normalized coordinates, for a
batch of boxes of shape (..., 4) ordered (l, t, r, b).

- gaussian_map: separable Gaussian centered on the box, sigma a fixed
  fraction of the box extent per axis
- smooth_step_mask: products of opposing sigmoids along each axis
- box_mask: Gaussian times both smooth steps, optionally peak-normalized
- binary_mask: pixel-center inside test

Everything except binary_mask is differentiable in the box coordinates,
including the edge width kappa, which depends on the box diagonal.
"""

from __future__ import annotations

from collections.abc import Sequence
from dataclasses import dataclass

import numpy as np
import torch

from boxtraj.geometry.box import BoxParams, Trajectory

BoxesLike = torch.Tensor | np.ndarray | BoxParams | Trajectory | Sequence[float] | Sequence[Sequence[float]]

DTYPE = torch.float64


@dataclass(frozen=True)
class MaskParams:
    """Shape parameters of the smooth box mask."""

    sigma_scale: float = 1.0 / 3.0
    lambda_edge: float = 0.03
    normalize_kernel: bool = True
    kappa_floor: float = 1e-6

    def __post_init__(self) -> None:
        if self.sigma_scale <= 0.0:
            raise ValueError(f"sigma_scale must be positive, got {self.sigma_scale}")
        if self.lambda_edge < 0.0:
            raise ValueError(f"lambda_edge must be >= 0, got {self.lambda_edge}")
        if self.kappa_floor <= 0.0:
            raise ValueError(f"kappa_floor must be positive, got {self.kappa_floor}")


@dataclass
class MaskSet:
    """All masks of one set of boxes at one resolution."""

    gaussian: torch.Tensor
    smooth_x: torch.Tensor
    smooth_y: torch.Tensor
    combined: torch.Tensor
    binary: torch.Tensor
    hardened: torch.Tensor

    @property
    def resolution(self) -> tuple[int, int]:
        return (self.combined.shape[-2], self.combined.shape[-1])

    def items(self) -> list[tuple[str, torch.Tensor]]:
        return [
            ("gaussian", self.gaussian),
            ("smooth_x", self.smooth_x),
            ("smooth_y", self.smooth_y),
            ("combined", self.combined),
            ("binary", self.binary),
            ("hardened", self.hardened),
        ]


def as_box_tensor(boxes: BoxesLike) -> torch.Tensor:
    """Convert boxes to a float64 tensor of shape (..., 4)."""
    if isinstance(boxes, torch.Tensor):
        return boxes if boxes.dtype == DTYPE else boxes.to(DTYPE)
    if isinstance(boxes, BoxParams):
        return torch.tensor(boxes.as_tuple(), dtype=DTYPE)
    if isinstance(boxes, Trajectory):
        return torch.from_numpy(boxes.to_array())
    return torch.as_tensor(np.asarray(boxes, dtype=np.float64))


def pixel_centers(size: int) -> torch.Tensor:
    if size < 1:
        raise ValueError(f"Grid size must be positive, got {size}")
    return (torch.arange(size, dtype=DTYPE) + 0.5) / size


def _edges(boxes: torch.Tensor) -> tuple[torch.Tensor, ...]:
    # Each edge shaped (..., 1, 1) to broadcast against (H, W) grids.
    return tuple(boxes[..., k, None, None] for k in range(4))


def edge_strength(boxes: BoxesLike, params: MaskParams) -> torch.Tensor:
    """kappa = max(lambda_edge * box diagonal, kappa_floor), shape (...)."""
    boxes = as_box_tensor(boxes)
    width = boxes[..., 2] - boxes[..., 0]
    height = boxes[..., 3] - boxes[..., 1]
    diagonal = torch.sqrt(width * width + height * height)
    return torch.clamp(params.lambda_edge * diagonal, min=params.kappa_floor)


def gaussian_at(
    boxes: BoxesLike, u: torch.Tensor, v: torch.Tensor, params: MaskParams
) -> torch.Tensor:
    """Gaussian map at x coordinates u (W,) and y coordinates v (H,)."""
    l, t, r, b = _edges(as_box_tensor(boxes))
    u = u.to(DTYPE)[None, :]
    v = v.to(DTYPE)[:, None]
    sigma_x = torch.clamp(params.sigma_scale * (r - l), min=1e-12)
    sigma_y = torch.clamp(params.sigma_scale * (b - t), min=1e-12)
    gx = torch.exp(-((u - (l + r) / 2.0) ** 2) / (2.0 * sigma_x**2))
    gy = torch.exp(-((v - (t + b) / 2.0) ** 2) / (2.0 * sigma_y**2))
    return gx * gy


def smooth_step_at(
    boxes: BoxesLike, u: torch.Tensor, v: torch.Tensor, params: MaskParams
) -> tuple[torch.Tensor, torch.Tensor]:
    """Smooth steps (M_x, M_y) at coordinates u (W,) and v (H,), each (..., H, W)."""
    boxes = as_box_tensor(boxes)
    kappa = edge_strength(boxes, params)[..., None, None]
    l, t, r, b = _edges(boxes)
    u = u.to(DTYPE)[None, :]
    v = v.to(DTYPE)[:, None]
    step_x = torch.sigmoid((u - l) / kappa) * torch.sigmoid((r - u) / kappa)
    step_y = torch.sigmoid((v - t) / kappa) * torch.sigmoid((b - v) / kappa)
    shape = torch.broadcast_shapes(step_x.shape, step_y.shape)
    return step_x.expand(shape), step_y.expand(shape)


def gaussian_map(
    boxes: BoxesLike, height: int, width: int, params: MaskParams | None = None
) -> torch.Tensor:
    params = params or MaskParams()
    return gaussian_at(boxes, pixel_centers(width), pixel_centers(height), params)


def smooth_step_mask(
    boxes: BoxesLike, height: int, width: int, params: MaskParams | None = None
) -> tuple[torch.Tensor, torch.Tensor]:
    params = params or MaskParams()
    return smooth_step_at(boxes, pixel_centers(width), pixel_centers(height), params)


def box_mask(
    boxes: BoxesLike, height: int, width: int, params: MaskParams | None = None
) -> torch.Tensor:
    """
    Differentiable box mask: Gaussian times both smooth steps.

    With params.normalize_kernel the mask is divided by its maximum over
    the grid, so its peak is exactly 1.
    """
    params = params or MaskParams()
    u, v = pixel_centers(width), pixel_centers(height)
    step_x, step_y = smooth_step_at(boxes, u, v, params)
    mask = gaussian_at(boxes, u, v, params) * step_x * step_y
    if params.normalize_kernel:
        peak = mask.amax(dim=(-2, -1), keepdim=True)
        mask = mask / torch.clamp(peak, min=torch.finfo(DTYPE).tiny)
    return mask


def binary_profiles(
    boxes: BoxesLike, height: int, width: int
) -> tuple[torch.Tensor, torch.Tensor]:
    """Boolean inside tests along x (..., W) and y (..., H) at pixel centers."""
    boxes = as_box_tensor(boxes).detach()
    u, v = pixel_centers(width), pixel_centers(height)
    inside_x = (u >= boxes[..., 0, None]) & (u <= boxes[..., 2, None])
    inside_y = (v >= boxes[..., 1, None]) & (v <= boxes[..., 3, None])
    return inside_x, inside_y


def binary_mask(boxes: BoxesLike, height: int, width: int) -> torch.Tensor:
    """1 where the pixel center lies inside [l, r] x [t, b], else 0."""
    inside_x, inside_y = binary_profiles(boxes, height, width)
    return (inside_y[..., :, None] & inside_x[..., None, :]).to(DTYPE)


def hardened_mask(
    boxes: BoxesLike, height: int, width: int, params: MaskParams | None = None
) -> torch.Tensor:
    """Smooth steps thresholded at 0.5."""
    step_x, step_y = smooth_step_mask(boxes, height, width, params)
    return ((step_x * step_y) >= 0.5).to(DTYPE).detach()


def _profile_span(inside: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor, torch.Tensor]:
    size = inside.shape[-1]
    hits = inside.to(torch.int64)
    first = torch.argmax(hits, dim=-1)
    last = size - 1 - torch.argmax(torch.flip(hits, dims=(-1,)), dim=-1)
    lower = first.to(DTYPE) / size
    upper = (last + 1).to(DTYPE) / size
    return lower, upper, inside.any(dim=-1)


def rasterized_boxes(
    boxes: BoxesLike, height: int, width: int
) -> tuple[torch.Tensor, torch.Tensor]:
    """
    Snap boxes to the span of grid cells whose centers lie inside them.

    Returns:
        (snapped boxes (..., 4), has_pixels (...) bool). Boxes that
        contain no pixel center get has_pixels False and an arbitrary
        snapped extent.
    """
    inside_x, inside_y = binary_profiles(boxes, height, width)
    left, right, any_x = _profile_span(inside_x)
    top, bottom, any_y = _profile_span(inside_y)
    snapped = torch.stack([left, top, right, bottom], dim=-1)
    return snapped, any_x & any_y


def rasterize_masks(
    boxes: BoxesLike, height: int, width: int, params: MaskParams | None = None
) -> MaskSet:
    params = params or MaskParams()
    step_x, step_y = smooth_step_mask(boxes, height, width, params)
    return MaskSet(
        gaussian=gaussian_map(boxes, height, width, params),
        smooth_x=step_x,
        smooth_y=step_y,
        combined=box_mask(boxes, height, width, params),
        binary=binary_mask(boxes, height, width),
        hardened=hardened_mask(boxes, height, width, params),
    )
