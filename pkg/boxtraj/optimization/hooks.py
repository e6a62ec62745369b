"""
Iteration hooks for the optimization loop.

Provides extension points for per-iteration diagnostics (heatmap dumps,
field dumps, progress bars) without coupling them to the loop.
"""

from __future__ import annotations

import logging
from typing import TYPE_CHECKING, Callable

if TYPE_CHECKING:
    from boxtraj.optimization.gradient import EvaluationState
    from boxtraj.optimization.loop import IterationRecord, StepRecord

logger = logging.getLogger(__name__)


# Type aliases for hook signatures
OnIterationHook = Callable[["IterationRecord", "EvaluationState"], None]
OnStepHook = Callable[["StepRecord", "EvaluationState"], None]


class IterationHookManager:
    """
    Registry and broadcaster for optimization-loop hooks.

    Design Principles:
    - Hooks run in registration order
    - Errors are isolated (one hook failure doesn't affect others or the loop)
    - No return values

    Usage:
        hooks = IterationHookManager()
        hooks.add_on_iteration_hook(lambda record, state: print(record.l_total))
        report = optimize_trajectory(traj, stack, scene, hooks=hooks)
    """

    def __init__(self) -> None:
        self._on_iteration_hooks: list[OnIterationHook] = []
        self._on_step_hooks: list[OnStepHook] = []

    def add_on_iteration_hook(self, hook: OnIterationHook) -> None:
        """
        Register a hook called after every box update.

        Args:
            hook: function taking (IterationRecord, EvaluationState); the
                state holds the updated boxes and the step's timestep
        """
        self._on_iteration_hooks.append(hook)

    def add_on_step_hook(self, hook: OnStepHook) -> None:
        """
        Register a hook called after every denoising step's plain evaluation.

        Args:
            hook: function taking (StepRecord, EvaluationState)
        """
        self._on_step_hooks.append(hook)

    def broadcast_iteration(self, record: IterationRecord, state: EvaluationState) -> None:
        for hook in self._on_iteration_hooks:
            try:
                hook(record, state)
            except Exception as e:
                logger.error(
                    "Error in on_iteration hook %s: %s: %s",
                    getattr(hook, "__name__", repr(hook)), type(e).__name__, e,
                )

    def broadcast_step(self, record: StepRecord, state: EvaluationState) -> None:
        for hook in self._on_step_hooks:
            try:
                hook(record, state)
            except Exception as e:
                logger.error(
                    "Error in on_step hook %s: %s: %s",
                    getattr(hook, "__name__", repr(hook)), type(e).__name__, e,
                )
