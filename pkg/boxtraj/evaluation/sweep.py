"""
Hyperparameter and variant sweeps over a fixture suite.

Each ladder value optimizes every fixture and reports fixture means of:
- deviation: mean distance between final and user boxes
- inside_user: share of A[1] tracked-token mass inside the user boxes
- inside_final: share of A[1] tracked-token mass inside the final boxes
- l_total: final objective value
A[1] is recorded with the variant's edit applied at the final boxes on the
first denoising step.
"""

from __future__ import annotations

import logging
from collections.abc import Sequence
from dataclasses import dataclass, field, replace

import numpy as np
import torch

from boxtraj.attention.backbone import BackboneSpec, ToyAttentionStack
from boxtraj.attention.editing import EditParams
from boxtraj.attention.masks import DTYPE, MaskParams, binary_mask
from boxtraj.attention.types import EditMode
from boxtraj.errors import ConfigError
from boxtraj.evaluation.fixtures import Fixture
from boxtraj.optimization.gradient import EvaluationState, evaluate
from boxtraj.optimization.loop import LoopConfig, optimize_trajectory
from boxtraj.optimization.objective import LossWeights, inside_mass_fraction

logger = logging.getLogger(__name__)

LAMBDA_REG_LADDER = (0.001, 0.01, 0.1, 1.0)
LAMBDA_NEG_LADDER = (0.0, 1.0, 10.0, 100.0)
LAMBDA_EDGE_LADDER = (0.0001, 0.001, 0.03, 0.1)
NORMALIZE_LADDER = (True, False)
VARIANTS = ("baseline", "no_opt", "full", "no_balance", "opt_boxes_baseline")

SWEEP_PARAMETERS = ("lambda_reg_scale", "lambda_neg", "lambda_edge", "normalize_kernel", "variant")
SWEEP_COLUMNS = ("parameter", "value", "deviation", "inside_user", "inside_final", "l_total")

SweepValue = float | bool | str


@dataclass(frozen=True)
class SweepSpec:
    """One knob, its ladder and everything held fixed while it varies."""

    parameter: str
    values: tuple[SweepValue, ...]
    fixtures: tuple[Fixture, ...]
    seed: int = 0
    backbone: BackboneSpec = field(default_factory=BackboneSpec)
    weights: LossWeights = field(default_factory=LossWeights)
    loop: LoopConfig = field(default_factory=LoopConfig)
    edit_params: EditParams = field(default_factory=EditParams)
    mask_params: MaskParams = field(default_factory=MaskParams)

    def __post_init__(self) -> None:
        if self.parameter not in SWEEP_PARAMETERS:
            raise ConfigError(
                f"Unknown sweep parameter '{self.parameter}'; expected one of {SWEEP_PARAMETERS}"
            )
        if not self.values:
            raise ConfigError("Sweep ladder must not be empty")
        if not self.fixtures:
            raise ConfigError("Sweep needs at least one fixture")
        if self.parameter == "variant":
            unknown = [value for value in self.values if value not in VARIANTS]
            if unknown:
                raise ConfigError(f"Unknown variants {unknown}; expected one of {VARIANTS}")


@dataclass(frozen=True)
class SweepRow:
    parameter: str
    value: SweepValue
    deviation: float
    inside_user: float
    inside_final: float
    l_total: float

    def as_row(self) -> dict[str, SweepValue]:
        return {name: getattr(self, name) for name in SWEEP_COLUMNS}


@dataclass(frozen=True)
class _Setting:
    """Resolved configuration of one ladder value."""

    weights: LossWeights
    mask_params: MaskParams
    optimize: bool
    eval_mode: EditMode


def parse_sweep_values(parameter: str, text: str) -> tuple[SweepValue, ...]:
    """
    Parse a comma-separated ladder for `parameter`.

    Raises:
        ConfigError: unknown parameter or unparsable value
    """
    if parameter not in SWEEP_PARAMETERS:
        raise ConfigError(
            f"Unknown sweep parameter '{parameter}'; expected one of {SWEEP_PARAMETERS}"
        )
    items = [item.strip() for item in text.split(",") if item.strip()]
    if parameter == "variant":
        return tuple(items)
    if parameter == "normalize_kernel":
        flags = {"true": True, "1": True, "false": False, "0": False}
        try:
            return tuple(flags[item.lower()] for item in items)
        except KeyError as e:
            raise ConfigError(f"normalize_kernel values must be true/false, got {e.args[0]!r}") from None
    try:
        return tuple(float(item) for item in items)
    except ValueError as e:
        raise ConfigError(f"Bad numeric sweep value: {e}") from None


def _setting(spec: SweepSpec, value: SweepValue) -> _Setting:
    weights, mask_params = spec.weights, spec.mask_params
    optimize, mode = True, EditMode.DIFFERENTIABLE
    if spec.parameter == "lambda_reg_scale":
        weights = replace(weights, lambda_reg_scale=float(value), lambda_reg=None)
    elif spec.parameter == "lambda_neg":
        weights = replace(weights, lambda_neg=float(value))
    elif spec.parameter == "lambda_edge":
        mask_params = replace(mask_params, lambda_edge=float(value))
    elif spec.parameter == "normalize_kernel":
        mask_params = replace(mask_params, normalize_kernel=bool(value))
    elif value == "baseline":
        optimize, mode = False, EditMode.BASELINE
    elif value == "no_opt":
        optimize = False
    elif value == "no_balance":
        weights = replace(weights, lambda_neg=0.0)
    elif value == "opt_boxes_baseline":
        mode = EditMode.BASELINE
    return _Setting(weights, mask_params, optimize, mode)


def _run_fixture(
    spec: SweepSpec, setting: _Setting, fixture: Fixture, stack: ToyAttentionStack
) -> tuple[float, float, float, float]:
    weights = replace(setting.weights, canvas=fixture.trajectory.canvas)
    user = fixture.trajectory.to_array()
    final = user
    if setting.optimize:
        report = optimize_trajectory(
            fixture.trajectory,
            stack,
            fixture.scene,
            weights,
            spec.loop,
            spec.edit_params,
            setting.mask_params,
        )
        final = report.final.to_array()

    state = EvaluationState(
        stack=stack,
        scene=fixture.scene,
        boxes=final,
        user_boxes=user,
        weights=weights,
        edit_params=spec.edit_params,
        mask_params=setting.mask_params,
        edit_mode=setting.eval_mode,
        timestep=1,
    )
    with torch.no_grad():
        boxes = torch.as_tensor(final, dtype=DTYPE)
        _, breakdown, record = evaluate(state, boxes)
    height, width, _ = stack.spec.ladder[1]
    tokens = weights.token_set
    attention = record.pre_edit[1]
    inside_user = inside_mass_fraction(attention, binary_mask(user, height, width), tokens)
    inside_final = inside_mass_fraction(attention, binary_mask(final, height, width), tokens)
    deviation = float(np.linalg.norm(final - user, axis=1).mean())
    return deviation, inside_user, inside_final, breakdown.l_total


def run_sweep(spec: SweepSpec) -> list[SweepRow]:
    """
    One row per ladder value, in ladder order.

    Deterministic given spec.seed, which seeds the toy attention stack.
    """
    stack = ToyAttentionStack(replace(spec.backbone, seed=spec.seed))
    rows = []
    for value in spec.values:
        setting = _setting(spec, value)
        metrics = np.array(
            [_run_fixture(spec, setting, fixture, stack) for fixture in spec.fixtures]
        )
        deviation, inside_user, inside_final, l_total = metrics.mean(axis=0)
        row = SweepRow(
            parameter=spec.parameter,
            value=value,
            deviation=float(deviation),
            inside_user=float(inside_user),
            inside_final=float(inside_final),
            l_total=float(l_total),
        )
        logger.info(
            "sweep %s=%s deviation=%.4f inside_user=%.4f inside_final=%.4f l_total=%.6g",
            spec.parameter, value, row.deviation, row.inside_user, row.inside_final, row.l_total,
        )
        rows.append(row)
    return rows
