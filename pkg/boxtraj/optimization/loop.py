"""
Interleaved denoise / edit / optimize loop over a trajectory's boxes.

For denoising steps 1..K_S the boxes get O Adam updates against the
attention objective, each followed by projection to valid boxes; every step
then runs one plain evaluation (edited at the current boxes while i <= K_S,
unedited afterwards). There is no latent to update at this scale, so the
plain evaluation only records diagnostics.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field, replace

import numpy as np
import torch

from boxtraj.attention.backbone import AttentionStack, BackboneSpec, SceneSpec, ToyAttentionStack
from boxtraj.attention.editing import EditParams
from boxtraj.attention.masks import DTYPE, MaskParams, binary_mask
from boxtraj.attention.types import EditMode
from boxtraj.errors import NumericalError, OptimizationAborted
from boxtraj.geometry.box import MIN_BOX_SIZE, Trajectory, project_boxes
from boxtraj.optimization.adam import AdamState, adam_step
from boxtraj.optimization.gradient import (
    EvaluationState,
    evaluate,
    evaluate_loss,
    grad_total,
)
from boxtraj.optimization.hooks import IterationHookManager
from boxtraj.optimization.objective import LossBreakdown, LossWeights, inside_mass_fraction

logger = logging.getLogger(__name__)

REPORT_COLUMNS = ("iteration", "l_attn", "l_neg", "l_reg", "l_total", "grad_norm", "box_delta")


@dataclass(frozen=True)
class LoopConfig:
    """Schedule and optimizer settings of optimize_trajectory."""

    timesteps: int = 40
    edit_steps: int = 5
    inner_steps: int = 5
    lr: float = 0.01
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    seed: int = 0
    temporal_edit_steps: int = 0
    min_size: float = MIN_BOX_SIZE

    def __post_init__(self) -> None:
        if self.timesteps < 1:
            raise ValueError(f"timesteps must be >= 1, got {self.timesteps}")
        if not 0 <= self.edit_steps <= self.timesteps:
            raise ValueError(
                f"edit_steps ({self.edit_steps}) must be within timesteps ({self.timesteps})"
            )
        if self.inner_steps < 0:
            raise ValueError(f"inner_steps must be >= 0, got {self.inner_steps}")
        if self.lr <= 0.0:
            raise ValueError(f"lr must be positive, got {self.lr}")
        if self.temporal_edit_steps < 0:
            raise ValueError(
                f"temporal_edit_steps must be >= 0, got {self.temporal_edit_steps}"
            )

    @property
    def total_iterations(self) -> int:
        return self.inner_steps * self.edit_steps

    @classmethod
    def preset(cls, name: str, **overrides) -> LoopConfig:
        """Schedules of the two supported generators."""
        presets = {
            "zeroscope": {},
            "t2v-turbo": {"timesteps": 16},
        }
        if name not in presets:
            raise KeyError(f"Unknown loop preset '{name}'; expected one of {sorted(presets)}")
        return cls(**{**presets[name], **overrides})


@dataclass(frozen=True)
class IterationRecord:
    """One Adam update."""

    iteration: int
    step: int
    inner: int
    breakdown: LossBreakdown
    grad_norm: float
    box_delta: float
    boxes: np.ndarray

    @property
    def l_total(self) -> float:
        return self.breakdown.l_total

    def as_row(self) -> dict[str, float | int]:
        return {
            "iteration": self.iteration,
            "l_attn": self.breakdown.l_attn,
            "l_neg": self.breakdown.l_neg,
            "l_reg": self.breakdown.l_reg,
            "l_total": self.breakdown.l_total,
            "grad_norm": self.grad_norm,
            "box_delta": self.box_delta,
        }


@dataclass(frozen=True)
class StepRecord:
    """Plain evaluation at the end of one denoising step."""

    step: int
    edited: bool
    l_total: float
    inside_fraction: float


@dataclass
class OptReport:
    initial: Trajectory
    final: Trajectory
    iterations: list[IterationRecord] = field(default_factory=list)
    steps: list[StepRecord] = field(default_factory=list)
    initial_loss: LossBreakdown | None = None
    final_loss: LossBreakdown | None = None
    wall_time: float = 0.0
    aborted: str | None = None

    @property
    def row_count(self) -> int:
        return len(self.iterations)

    @property
    def grad_norms(self) -> list[float]:
        return [record.grad_norm for record in self.iterations]

    @property
    def deviation(self) -> float:
        """Frame mean of the Euclidean distance between final and user boxes."""
        delta = self.final.to_array() - self.initial.to_array()
        return float(np.linalg.norm(delta, axis=1).mean())

    def rows(self) -> list[dict[str, float | int]]:
        return [record.as_row() for record in self.iterations]

    def summary(self) -> dict:
        """Report header; wall time stays out so reports are reproducible."""
        return {
            "iterations": self.row_count,
            "initial_l_total": None if self.initial_loss is None else self.initial_loss.l_total,
            "final_l_total": None if self.final_loss is None else self.final_loss.l_total,
            "deviation": self.deviation,
            "edited_steps": [record.step for record in self.steps if record.edited],
            "aborted": self.aborted,
        }


def _plain_evaluation(state: EvaluationState) -> tuple[float, float]:
    """(l_total, inside-mass fraction of A[1] under the current boxes)."""
    with torch.no_grad():
        boxes = torch.as_tensor(state.boxes, dtype=DTYPE)
        _, breakdown, record = evaluate(state, boxes)
        height, width, _ = state.stack.spec.ladder[1]
        fraction = inside_mass_fraction(
            record.pre_edit[1], binary_mask(boxes, height, width), state.weights.token_set
        )
    return breakdown.l_total, fraction


def optimize_trajectory(
    traj_user: Trajectory,
    stack: AttentionStack | BackboneSpec,
    scene: SceneSpec,
    weights: LossWeights | None = None,
    loop: LoopConfig | None = None,
    edit_params: EditParams | None = None,
    mask_params: MaskParams | None = None,
    hooks: IterationHookManager | None = None,
) -> OptReport:
    """
    Adjust a user trajectory so the attention it induces follows it.

    Args:
        traj_user: user boxes, one per scene frame
        stack: attention stack, or a BackboneSpec to build the toy stack from
        scene: synthetic content the stack attends to
        weights: loss weights and mask source
        loop: schedule and Adam settings
        hooks: optional iteration/step callbacks

    Returns:
        OptReport with O * K_S iteration rows and the projected final boxes

    Raises:
        OptimizationAborted: a numerical error stopped the loop; carries the
            report of the completed iterations
    """
    if isinstance(stack, BackboneSpec):
        stack = ToyAttentionStack(stack)
    weights = weights or LossWeights()
    loop = loop or LoopConfig()
    hooks = hooks or IterationHookManager()
    if loop.temporal_edit_steps > 0:
        logger.warning(
            "temporal_edit_steps=%d ignored: only spatial attention is edited",
            loop.temporal_edit_steps,
        )

    user = traj_user.to_array()
    boxes = user.copy()
    base = EvaluationState(
        stack=stack,
        scene=scene,
        boxes=boxes,
        user_boxes=user,
        weights=weights,
        edit_params=edit_params or EditParams(),
        mask_params=mask_params or MaskParams(),
    )
    adam = AdamState(
        size=boxes.size, lr=loop.lr, beta1=loop.beta1, beta2=loop.beta2, eps=loop.eps
    )
    report = OptReport(initial=traj_user, final=traj_user)
    started = time.perf_counter()

    iteration = 0
    try:
        report.initial_loss = evaluate_loss(base)
        for step in range(1, loop.timesteps + 1):
            edited = step <= loop.edit_steps
            inner = 0
            while edited and inner < loop.inner_steps:
                state = replace(base, boxes=boxes, timestep=step)
                breakdown, grad = grad_total(state)
                updated = project_boxes(adam_step(adam, grad, boxes), loop.min_size)
                delta = float(np.abs(updated - boxes).max())
                boxes = updated
                inner += 1
                iteration += 1
                record = IterationRecord(
                    iteration=iteration,
                    step=step,
                    inner=inner,
                    breakdown=breakdown,
                    grad_norm=grad.norm,
                    box_delta=delta,
                    boxes=boxes.copy(),
                )
                report.iterations.append(record)
                logger.debug(
                    "iteration %d (step %d) l_total=%.6g grad_norm=%.3e",
                    iteration, step, breakdown.l_total, grad.norm,
                )
                hooks.broadcast_iteration(record, replace(base, boxes=boxes, timestep=step))

            mode = EditMode.DIFFERENTIABLE if edited else EditMode.IDENTITY
            state = replace(base, boxes=boxes, timestep=step, edit_mode=mode)
            l_total, fraction = _plain_evaluation(state)
            step_record = StepRecord(step=step, edited=edited, l_total=l_total, inside_fraction=fraction)
            report.steps.append(step_record)
            hooks.broadcast_step(step_record, state)

        report.final = Trajectory.from_array(boxes, traj_user.canvas)
        report.final_loss = evaluate_loss(base, boxes)
    except NumericalError as e:
        report.final = Trajectory.from_array(boxes, traj_user.canvas)
        report.aborted = f"{type(e).__name__}: {e}"
        report.wall_time = time.perf_counter() - started
        raise OptimizationAborted(
            f"Optimization stopped after {iteration} iterations: {report.aborted}", report
        ) from e

    report.wall_time = time.perf_counter() - started
    logger.info(
        "Optimized %d frames: l_total %.6g -> %.6g, deviation %.4f, %.2fs",
        traj_user.frame_count,
        report.initial_loss.l_total,
        report.final_loss.l_total,
        report.deviation,
        report.wall_time,
    )
    return report
