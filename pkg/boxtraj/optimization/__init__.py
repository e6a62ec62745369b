"""Objective, gradients, Adam and the trajectory optimization loop."""
from boxtraj.optimization.adam import AdamState, adam_step
from boxtraj.optimization.gradient import (
    EvaluationState,
    GradcheckReport,
    GradVector,
    fd_gradient,
    gradcheck,
    grad_total,
)
from boxtraj.optimization.hooks import IterationHookManager
from boxtraj.optimization.loop import LoopConfig, OptReport, optimize_trajectory
from boxtraj.optimization.objective import (
    LossBreakdown,
    LossWeights,
    loss_attn,
    loss_neg_attn,
    loss_reg,
    loss_total,
)

__all__ = [
    "AdamState",
    "adam_step",
    "EvaluationState",
    "GradcheckReport",
    "GradVector",
    "fd_gradient",
    "gradcheck",
    "grad_total",
    "IterationHookManager",
    "LoopConfig",
    "OptReport",
    "optimize_trajectory",
    "LossBreakdown",
    "LossWeights",
    "loss_attn",
    "loss_neg_attn",
    "loss_reg",
    "loss_total",
]
