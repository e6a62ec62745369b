"""
Tests for boxtraj/optimization/adam.py
"""
from __future__ import annotations

import numpy as np
import pytest
import torch

from boxtraj.errors import LengthMismatch
from boxtraj.optimization.adam import AdamState, adam_step
from boxtraj.optimization.gradient import GradVector


class TestAdamStep:
    """Tests for adam_step()."""

    def test_zero_gradient_keeps_parameters(self):
        """A zero gradient on a fresh state changes nothing."""
        params = np.array([0.1, 0.2, 0.6, 0.7])
        updated = adam_step(AdamState(4), np.zeros(4), params)
        np.testing.assert_array_equal(updated, params)

    def test_first_step_magnitude(self):
        """The first update is lr * sign(g) per coordinate, up to eps."""
        grad = np.array([3.0, -0.5, 1e-3, -200.0])
        params = np.zeros(4)
        updated = adam_step(AdamState(4, lr=0.01), grad, params)
        np.testing.assert_allclose(updated, -0.01 * np.sign(grad), rtol=1e-4)

    def test_descends_twice(self):
        """Two identical positive-gradient steps lower the parameter twice."""
        state = AdamState(1)
        first = adam_step(state, np.array([0.5]), np.array([0.4]))
        second = adam_step(state, np.array([0.5]), first)
        assert second[0] < first[0] < 0.4
        assert state.step == 2

    def test_moments_updated(self):
        """Moments follow the exponential averages."""
        state = AdamState(2)
        adam_step(state, np.array([1.0, -2.0]), np.zeros(2))
        np.testing.assert_allclose(state.m, [0.1, -0.2])
        np.testing.assert_allclose(state.v, [0.001, 0.004])

    def test_keeps_parameter_shape(self):
        """(F, 4) parameters come back as (F, 4)."""
        state = AdamState(8)
        grad = GradVector(np.ones((2, 4)))
        updated = adam_step(state, grad, np.full((2, 4), 0.5))
        assert updated.shape == (2, 4)

    def test_length_mismatch(self):
        """Gradient and state sizes must agree."""
        with pytest.raises(LengthMismatch):
            adam_step(AdamState(4), np.zeros(3), np.zeros(4))
        with pytest.raises(LengthMismatch):
            adam_step(AdamState(4), np.zeros(4), np.zeros(8))

    def test_invalid_size(self):
        """A state needs at least one parameter."""
        with pytest.raises(ValueError):
            AdamState(0)

    def test_minimizes_quadratic(self):
        """Repeated steps converge on the minimum of a quadratic."""
        state = AdamState(2, lr=0.05)
        x = np.array([0.9, 0.1])
        target = np.array([0.4, 0.6])
        for _ in range(500):
            x = adam_step(state, 2.0 * (x - target), x)
        np.testing.assert_allclose(x, target, atol=1e-2)


@pytest.mark.parametrize("lr, betas", [(0.01, (0.9, 0.999)), (0.1, (0.5, 0.9))])
def test_matches_torch_adam(lr, betas):
    """Several updates agree with torch.optim.Adam, bias correction included."""
    rng = np.random.default_rng(5)
    grads = rng.normal(0.0, 1.0, size=(6, 8))
    params = rng.uniform(0.0, 1.0, size=8)

    state = AdamState(8, lr=lr, beta1=betas[0], beta2=betas[1], eps=1e-8)
    ours = params.copy()
    reference = torch.tensor(params, dtype=torch.float64, requires_grad=True)
    optimizer = torch.optim.Adam([reference], lr=lr, betas=betas, eps=1e-8)
    for grad in grads:
        ours = adam_step(state, grad, ours)
        optimizer.zero_grad()
        reference.grad = torch.tensor(grad, dtype=torch.float64)
        optimizer.step()
        np.testing.assert_allclose(ours, reference.detach().numpy(), rtol=1e-12, atol=1e-14)
