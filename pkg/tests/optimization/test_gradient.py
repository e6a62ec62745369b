"""
Tests for boxtraj/optimization/gradient.py

Covers:
- EvaluationState validation
- grad_total on a regularizer-only configuration
- Agreement of grad_total with the finite-difference oracle
- Zero finite differences of the hard-mask pipeline
- gradcheck verdicts (pass, fail, expected-fail) and the 100-trial run (slow)
"""
from __future__ import annotations

import time
from unittest.mock import Mock

import numpy as np
import pytest
import torch

from boxtraj.attention.backbone import BackboneSpec, SceneSpec, ToyAttentionStack
from boxtraj.attention.editing import EditParams
from boxtraj.attention.masks import MaskParams
from boxtraj.attention.types import EditMode, LossMaskSource
from boxtraj.errors import NonFiniteGradient, ShapeMismatch
from boxtraj.optimization import gradient
from boxtraj.optimization.gradient import (
    EvaluationState,
    GradcheckReport,
    GradcheckRow,
    evaluate_loss,
    fd_gradient,
    grad_total,
    gradcheck,
    random_state,
    relative_error,
)
from boxtraj.optimization.objective import LossWeights

SMALL_SPEC = BackboneSpec(ladder=((16, 16, 4), (8, 8, 4), (4, 4, 4)))


# ============================================================================
# Fixtures and helpers
# ============================================================================

def make_state(boxes, user_boxes, **kwargs) -> EvaluationState:
    """One- or two-frame state on the small stack with a blob near the boxes."""
    user = np.asarray(user_boxes, dtype=np.float64).reshape(-1, 4)
    frames = user.shape[0]
    scene = SceneSpec(
        centers=tuple(((u[0] + u[2]) / 2 + 0.08, (u[1] + u[3]) / 2) for u in user),
        extents=((0.08, 0.08),) * frames,
        background_seed=3,
    )
    kwargs.setdefault("weights", LossWeights(canvas=(40, 40)))
    return EvaluationState(
        stack=ToyAttentionStack(SMALL_SPEC),
        scene=scene,
        boxes=boxes,
        user_boxes=user,
        **kwargs,
    )


@pytest.fixture
def reg_only_state():
    """Identity edit (w = 1, s = 0) so only the regularizer depends on the box."""
    user = np.array([[0.2, 0.2, 0.6, 0.6]])
    boxes = user + np.array([[0.1, 0.0, 0.0, 0.0]])
    return make_state(
        boxes,
        user,
        weights=LossWeights(lambda_reg=1.0),
        edit_params=EditParams(w=1.0, s=0.0),
    )


# ============================================================================
# EvaluationState
# ============================================================================

class TestEvaluationState:
    """Tests for EvaluationState validation and helpers."""

    def test_box_user_shape_mismatch(self):
        """Boxes and user boxes must align."""
        with pytest.raises(ShapeMismatch):
            make_state([[0.2, 0.2, 0.6, 0.6]] * 2, [[0.2, 0.2, 0.6, 0.6]])

    def test_scene_frame_mismatch(self):
        """Boxes must match the scene frame count."""
        state = make_state([[0.2, 0.2, 0.6, 0.6]], [[0.2, 0.2, 0.6, 0.6]])
        with pytest.raises(ShapeMismatch):
            EvaluationState(state.stack, state.scene, np.zeros((2, 4)), np.zeros((2, 4)))

    def test_needs_two_layers(self):
        """A single-layer stack has no next-layer attention."""
        state = make_state([[0.2, 0.2, 0.6, 0.6]], [[0.2, 0.2, 0.6, 0.6]])
        stack = ToyAttentionStack(BackboneSpec(ladder=((8, 8, 4),)))
        with pytest.raises(ShapeMismatch):
            EvaluationState(stack, state.scene, state.boxes, state.user_boxes)

    def test_with_boxes_copies(self):
        """with_boxes returns a new state and leaves the original alone."""
        state = make_state([[0.2, 0.2, 0.6, 0.6]], [[0.2, 0.2, 0.6, 0.6]])
        moved = state.with_boxes([[0.25, 0.2, 0.6, 0.6]])
        assert moved.boxes[0, 0] == 0.25
        assert state.boxes[0, 0] == 0.2


# ============================================================================
# grad_total
# ============================================================================

class TestGradTotal:
    """Tests for grad_total()."""

    def test_regularizer_gradient(self, reg_only_state):
        """Offsetting l by 0.1 on one frame gives gradient (0.2, 0, 0, 0)."""
        breakdown, grad = grad_total(reg_only_state)
        np.testing.assert_allclose(grad.values, [[0.2, 0.0, 0.0, 0.0]], atol=1e-12)
        assert breakdown.l_reg == pytest.approx(0.01)

    def test_regularizer_gradient_zero_at_user_boxes(self, reg_only_state):
        """At the user boxes the regularizer gradient is exactly zero."""
        state = reg_only_state.with_boxes(reg_only_state.user_boxes)
        _, grad = grad_total(state)
        assert np.all(grad.values == 0.0)

    def test_quadratic_matches_finite_differences(self, reg_only_state):
        """Central differences are exact for the quadratic up to roundoff."""
        _, analytic = grad_total(reg_only_state)
        numeric = fd_gradient(reg_only_state, h=1e-4)
        assert np.abs(analytic.values - numeric.values).max() < 1e-8

    @pytest.mark.parametrize("source", list(LossMaskSource))
    def test_full_pipeline_matches_finite_differences(self, source):
        """Autograd gradients through the whole stack match central differences."""
        user = np.array([[0.25, 0.3, 0.6, 0.7], [0.3, 0.3, 0.65, 0.7]])
        boxes = user + 0.02
        state = make_state(
            boxes,
            user,
            weights=LossWeights(canvas=(40, 40), loss_mask_source=source),
            mask_params=MaskParams(lambda_edge=0.05),
        )
        _, analytic = grad_total(state)
        numeric = fd_gradient(state, h=1e-5)
        assert np.percentile(relative_error(analytic.values, numeric.values), 95) < 1e-3

    def test_breakdown_matches_evaluate_loss(self):
        """grad_total reports the same losses as a no-grad evaluation."""
        user = np.array([[0.25, 0.3, 0.6, 0.7]])
        state = make_state(user + 0.01, user)
        breakdown, _ = grad_total(state)
        plain = evaluate_loss(state)
        assert breakdown.l_total == pytest.approx(plain.l_total, rel=1e-12)

    def test_gradient_norm(self, reg_only_state):
        """GradVector exposes the norm and the flat vector."""
        _, grad = grad_total(reg_only_state)
        assert grad.norm == pytest.approx(0.2)
        assert len(grad) == 4
        assert grad.flat().shape == (4,)

    def test_non_finite_gradient(self, reg_only_state, monkeypatch):
        """NaN gradients raise NonFiniteGradient."""

        def poisoned(state, boxes):
            return (boxes * float("nan")).sum(), Mock(), None

        monkeypatch.setattr(gradient, "evaluate", poisoned)
        with pytest.raises(NonFiniteGradient):
            grad_total(reg_only_state)


# ============================================================================
# Finite differences of both edits
# ============================================================================

class TestFiniteDifferences:
    """Tests for fd_gradient() on the hard and smooth edits."""

    def test_bad_step(self, reg_only_state):
        """The step must be positive."""
        with pytest.raises(ValueError):
            fd_gradient(reg_only_state, h=0.0)

    def test_baseline_attention_terms_flat(self):
        """The hard-mask pipeline's attention loss has zero finite differences."""
        rng = np.random.default_rng(5)
        for _ in range(3):
            state = random_state(rng, SMALL_SPEC, frames=2).with_mode(EditMode.BASELINE)
            numeric = fd_gradient(state, h=1e-6, attention_only=True)
            flat = np.abs(numeric.values) <= 1e-10
            assert flat.mean() >= 0.95

    def test_smooth_attention_terms_move(self):
        """The smooth pipeline's attention loss responds to every coordinate."""
        rng = np.random.default_rng(5)
        for _ in range(3):
            state = random_state(rng, SMALL_SPEC, frames=2, lambda_edge_range=(0.02, 0.1))
            numeric = fd_gradient(state, h=1e-6, attention_only=True)
            moving = np.abs(numeric.values) > 1e-10
            assert moving.mean() >= 0.95


# ============================================================================
# gradcheck
# ============================================================================

class TestGradcheck:
    """Tests for gradcheck() and GradcheckReport."""

    def test_passes_on_smooth_edit(self):
        """Random small-stack states pass at 1e-3."""
        report = gradcheck(n_trials=4, spec=SMALL_SPEC, frames=1, lambda_edge_range=(0.01, 0.1))
        assert report.status == "pass"
        assert len(report.rows) == 16

    def test_zero_tolerance_fails(self):
        """Tolerance 0 can never be met."""
        report = gradcheck(n_trials=1, tolerance=0.0, spec=SMALL_SPEC, frames=1)
        assert report.status == "fail"

    def test_baseline_expected_fail(self):
        """The hard edit is reported as an expected failure."""
        report = gradcheck(n_trials=2, spec=SMALL_SPEC, frames=1, mode=EditMode.BASELINE)
        assert not report.passed
        assert report.status == "expected-fail"
        assert report.summary().startswith("expected-fail mode=baseline trials=2")

    def test_same_seed_same_report(self):
        """gradcheck is deterministic for a given seed."""
        first = gradcheck(n_trials=1, spec=SMALL_SPEC, frames=1, seed=9)
        second = gradcheck(n_trials=1, spec=SMALL_SPEC, frames=1, seed=9)
        assert first.rows == second.rows

    def test_bad_trial_count(self):
        """At least one trial is needed."""
        with pytest.raises(ValueError):
            gradcheck(n_trials=0)

    def test_percentile_verdict(self):
        """The verdict uses the 95th percentile, not the maximum."""
        rows = [GradcheckRow(0, 0, "l", 1.0, 1.0, 0.0) for _ in range(99)]
        rows.append(GradcheckRow(0, 0, "t", 1.0, 2.0, 0.5))
        report = GradcheckReport(EditMode.DIFFERENTIABLE, 1e-3, rows)
        assert report.passed
        assert rows[-1].label == "0:0:t"

    def test_empty_report(self):
        """An empty report does not pass."""
        assert GradcheckReport(EditMode.DIFFERENTIABLE, 1e-3).status == "fail"

    @pytest.mark.slow
    def test_default_stack(self):
        """The default 40 -> 5 ladder passes the check."""
        report = gradcheck(n_trials=5, frames=2)
        assert report.status == "pass"

    @pytest.mark.slow
    def test_hundred_trials_within_a_minute(self):
        """100 random configurations on the default ladder pass at 1e-3 in under 60 s."""
        started = time.perf_counter()
        report = gradcheck(n_trials=100, tolerance=1e-3, h=1e-5, lambda_edge_range=(1e-3, 0.1))
        elapsed = time.perf_counter() - started
        assert report.status == "pass"
        assert len({row.trial for row in report.rows}) == 100
        assert report.percentile_95 < 1e-3
        assert elapsed < 60.0


def test_relative_error_floor():
    """Relative error uses a floor so two zeros compare equal."""
    np.testing.assert_array_equal(relative_error(np.zeros(2), np.zeros(2)), [0.0, 0.0])
    assert relative_error(np.array([1.0]), np.array([0.5]))[0] == pytest.approx(0.5)


def test_torch_dtype_is_double(reg_only_state):
    """Pipeline tensors are float64."""
    from boxtraj.optimization.gradient import evaluate

    total, _, record = evaluate(reg_only_state, torch.as_tensor(reg_only_state.boxes))
    assert total.dtype == torch.float64
    assert record.pre_edit[0].dtype == torch.float64
