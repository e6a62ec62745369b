"""
Gradient engine: exact box gradients of l_total through
masks -> edit -> attention stack -> loss, a central-difference oracle,
and a randomized gradient check.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace

import numpy as np
import torch

from boxtraj.attention.backbone import (
    AttentionField,
    AttentionStack,
    BackboneSpec,
    SceneSpec,
    ToyAttentionStack,
)
from boxtraj.attention.editing import EditParams
from boxtraj.attention.masks import DTYPE, MaskParams, binary_mask, box_mask
from boxtraj.attention.strategy_factory import EditStrategyFactory
from boxtraj.attention.types import EditMode, LossMaskSource
from boxtraj.errors import NonFiniteGradient, ShapeMismatch
from boxtraj.geometry.box import MIN_BOX_SIZE, project_boxes
from boxtraj.optimization.objective import (
    LossBreakdown,
    LossWeights,
    attn_slices,
    loss_reg,
    loss_total,
    neg_slices,
    weighted_total,
)

logger = logging.getLogger(__name__)

COORDINATE_NAMES = ("l", "t", "r", "b")


@dataclass
class EvaluationState:
    """Everything one pipeline evaluation depends on."""

    stack: AttentionStack
    scene: SceneSpec
    boxes: np.ndarray
    user_boxes: np.ndarray
    weights: LossWeights = field(default_factory=LossWeights)
    edit_params: EditParams = field(default_factory=EditParams)
    mask_params: MaskParams = field(default_factory=MaskParams)
    edit_mode: EditMode = EditMode.DIFFERENTIABLE
    timestep: int = 1

    def __post_init__(self) -> None:
        self.boxes = np.asarray(self.boxes, dtype=np.float64).reshape(-1, 4)
        self.user_boxes = np.asarray(self.user_boxes, dtype=np.float64).reshape(-1, 4)
        if self.boxes.shape != self.user_boxes.shape:
            raise ShapeMismatch(
                f"Boxes {self.boxes.shape} vs user boxes {self.user_boxes.shape}"
            )
        if self.boxes.shape[0] != self.scene.frame_count:
            raise ShapeMismatch(
                f"{self.boxes.shape[0]} boxes for a {self.scene.frame_count}-frame scene"
            )
        if self.stack.spec.layer_count < 2:
            raise ShapeMismatch("The attention loss needs at least two layers")

    @property
    def frame_count(self) -> int:
        return self.boxes.shape[0]

    def with_boxes(self, boxes: np.ndarray) -> EvaluationState:
        return replace(self, boxes=np.array(boxes, dtype=np.float64))

    def with_mode(self, mode: EditMode) -> EvaluationState:
        return replace(self, edit_mode=mode)


@dataclass
class GradVector:
    """Gradient with respect to the (F, 4) box parameters."""

    values: np.ndarray

    @property
    def norm(self) -> float:
        return float(np.linalg.norm(self.values))

    def flat(self) -> np.ndarray:
        return self.values.reshape(-1)

    def __len__(self) -> int:
        return self.values.size


def target_masks(state: EvaluationState, boxes: torch.Tensor) -> list[torch.Tensor]:
    """Loss masks at every next-layer resolution."""
    masks = []
    for height, width, _ in state.stack.spec.ladder[1:]:
        if state.weights.loss_mask_source is LossMaskSource.CURRENT_BOX:
            masks.append(box_mask(boxes, height, width, state.mask_params))
        else:
            user = torch.from_numpy(state.user_boxes)
            masks.append(binary_mask(user, height, width))
    return masks


def evaluate(
    state: EvaluationState, boxes: torch.Tensor
) -> tuple[torch.Tensor, LossBreakdown, AttentionField]:
    """
    Run the full pipeline at `boxes`.

    Returns:
        (l_total as a tensor carrying the graph, breakdown, recorded field)
    """
    strategy = EditStrategyFactory(state.edit_params, state.mask_params).get_strategy(
        state.edit_mode
    )
    tokens = state.weights.token_set
    record = state.stack.run_stack(state.scene, boxes, strategy, state.timestep, tokens)
    fields = record.next_layer_fields()
    masks = target_masks(state, boxes)

    attn = attn_slices(fields, masks, tokens)
    neg = neg_slices(fields, masks, tokens)
    l_attn, l_neg = attn.mean(), neg.mean()
    l_reg = loss_reg(boxes, torch.from_numpy(state.user_boxes))
    total = weighted_total(l_attn, l_neg, l_reg, state.weights)
    breakdown = loss_total(l_attn, l_neg, l_reg, state.weights, attn, neg)
    return total, breakdown, record


def evaluate_loss(state: EvaluationState, boxes: np.ndarray | None = None) -> LossBreakdown:
    """Loss breakdown without gradients."""
    boxes = state.boxes if boxes is None else boxes
    with torch.no_grad():
        _, breakdown, _ = evaluate(state, torch.as_tensor(boxes, dtype=DTYPE))
    return breakdown


def grad_total(state: EvaluationState) -> tuple[LossBreakdown, GradVector]:
    """
    l_total and its exact gradient with respect to all box coordinates.

    Raises:
        NonFiniteGradient: any gradient entry is NaN or Inf
    """
    boxes = torch.tensor(state.boxes, dtype=DTYPE, requires_grad=True)
    with torch.enable_grad():
        total, breakdown, _ = evaluate(state, boxes)
        if total.requires_grad:
            (grad,) = torch.autograd.grad(total, [boxes], allow_unused=True)
        else:
            grad = None
    values = np.zeros_like(state.boxes) if grad is None else grad.detach().numpy().copy()
    if not np.all(np.isfinite(values)):
        bad = np.argwhere(~np.isfinite(values))
        raise NonFiniteGradient(
            f"Non-finite gradient at (frame, coord) {bad[:4].tolist()}"
        )
    return breakdown, GradVector(values)


def fd_gradient(
    state: EvaluationState, h: float = 1e-5, attention_only: bool = False
) -> GradVector:
    """
    Central finite differences of l_total, 8F pipeline evaluations.

    Args:
        state: evaluation inputs; boxes are perturbed without projection
        h: step in normalized units, must be positive
        attention_only: difference l_attn + lambda_neg * l_neg only
    """
    if not h > 0.0:
        raise ValueError(f"Finite-difference step must be positive, got {h}")

    def value(boxes: np.ndarray) -> float:
        breakdown = evaluate_loss(state, boxes)
        if attention_only:
            return breakdown.l_attn + state.weights.lambda_neg * breakdown.l_neg
        return breakdown.l_total

    values = np.zeros_like(state.boxes)
    for frame in range(state.frame_count):
        for coord in range(4):
            plus = state.boxes.copy()
            minus = state.boxes.copy()
            plus[frame, coord] += h
            minus[frame, coord] -= h
            values[frame, coord] = (value(plus) - value(minus)) / (2.0 * h)
    return GradVector(values)


def relative_error(analytic: np.ndarray, numeric: np.ndarray) -> np.ndarray:
    scale = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), 1e-8)
    return np.abs(analytic - numeric) / scale


# ============================================================================
# Gradient check
# ============================================================================

@dataclass(frozen=True)
class GradcheckRow:
    trial: int
    frame: int
    coordinate: str
    analytic: float
    numeric: float
    rel_err: float

    @property
    def label(self) -> str:
        return f"{self.trial}:{self.frame}:{self.coordinate}"


@dataclass
class GradcheckReport:
    """Per-coordinate comparison plus the 95th-percentile verdict."""

    mode: EditMode
    tolerance: float
    rows: list[GradcheckRow] = field(default_factory=list)

    @property
    def percentile_95(self) -> float:
        if not self.rows:
            return float("nan")
        return float(np.percentile([row.rel_err for row in self.rows], 95))

    @property
    def passed(self) -> bool:
        return bool(self.percentile_95 < self.tolerance)

    @property
    def status(self) -> str:
        if self.passed:
            return "pass"
        return "expected-fail" if self.mode is EditMode.BASELINE else "fail"

    def summary(self) -> str:
        return (
            f"{self.status} mode={self.mode.value} trials="
            f"{len({row.trial for row in self.rows})} p95_rel_err={self.percentile_95:.3e} "
            f"tolerance={self.tolerance:.1e}"
        )


def random_state(
    rng: np.random.Generator,
    spec: BackboneSpec,
    frames: int = 2,
    lambda_edge_range: tuple[float, float] = (1e-3, 0.1),
    weights: LossWeights | None = None,
    edit_params: EditParams | None = None,
) -> EvaluationState:
    """A random but valid evaluation state for gradient checks."""
    stack = ToyAttentionStack(replace(spec, seed=int(rng.integers(0, 2**31 - 1))))
    centers = rng.uniform(0.3, 0.7, size=(frames, 2))
    sizes = rng.uniform(0.2, 0.45, size=(frames, 2))
    user = project_boxes(
        np.concatenate([centers - sizes / 2.0, centers + sizes / 2.0], axis=1),
        MIN_BOX_SIZE,
    )
    boxes = project_boxes(user + rng.normal(0.0, 0.02, size=user.shape), MIN_BOX_SIZE)
    offsets = rng.uniform(-0.12, 0.12, size=(frames, 2))
    blob_centers = np.clip(centers + offsets, 0.0, 1.0)
    extent = rng.uniform(0.05, 0.12, size=(frames, 2))
    scene = SceneSpec(
        centers=tuple((float(x), float(y)) for x, y in blob_centers),
        extents=tuple((float(x), float(y)) for x, y in extent),
        background_seed=int(rng.integers(0, 2**31 - 1)),
    )
    low, high = lambda_edge_range
    lambda_edge = float(np.exp(rng.uniform(np.log(low), np.log(high))))
    mask_params = MaskParams(lambda_edge=lambda_edge, normalize_kernel=bool(rng.random() < 0.5))
    return EvaluationState(
        stack=stack,
        scene=scene,
        boxes=boxes,
        user_boxes=user,
        weights=weights or LossWeights(canvas=(40, 40)),
        edit_params=edit_params or EditParams(),
        mask_params=mask_params,
        timestep=int(rng.integers(1, spec.edit_steps + 1)),
    )


def gradcheck(
    n_trials: int = 100,
    tolerance: float = 1e-3,
    seed: int = 0,
    spec: BackboneSpec | None = None,
    mode: EditMode = EditMode.DIFFERENTIABLE,
    frames: int = 2,
    h: float = 1e-5,
    lambda_edge_range: tuple[float, float] = (1e-3, 0.1),
    weights: LossWeights | None = None,
    edit_params: EditParams | None = None,
) -> GradcheckReport:
    """
    Compare grad_total against fd_gradient on random states.

    In BASELINE mode the analytic side is the differentiable pipeline's
    gradient and the numeric side differences the hard-mask pipeline, so
    the check documents that the hard edit carries no usable gradient.
    """
    if n_trials < 1:
        raise ValueError(f"n_trials must be >= 1, got {n_trials}")
    spec = spec or BackboneSpec()
    rng = np.random.default_rng(seed)
    report = GradcheckReport(mode=mode, tolerance=tolerance)
    for trial in range(n_trials):
        state = random_state(rng, spec, frames, lambda_edge_range, weights, edit_params)
        _, analytic = grad_total(state)
        numeric = fd_gradient(state.with_mode(mode), h)
        errors = relative_error(analytic.values, numeric.values)
        for frame in range(state.frame_count):
            for coord, name in enumerate(COORDINATE_NAMES):
                report.rows.append(
                    GradcheckRow(
                        trial=trial,
                        frame=frame,
                        coordinate=name,
                        analytic=float(analytic.values[frame, coord]),
                        numeric=float(numeric.values[frame, coord]),
                        rel_err=float(errors[frame, coord]),
                    )
                )
        logger.debug("gradcheck trial %d max rel err %.3e", trial, errors.max())
    logger.info(report.summary())
    return report
