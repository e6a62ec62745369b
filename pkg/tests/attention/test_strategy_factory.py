"""
Tests for boxtraj/attention/strategy_factory.py
"""
from __future__ import annotations

import pytest
import torch

from boxtraj.attention.editing import BaselineEdit, DifferentiableEdit, EditParams, IdentityEdit
from boxtraj.attention.masks import DTYPE, MaskParams
from boxtraj.attention.strategy_factory import EditStrategyFactory
from boxtraj.attention.types import EditMode


class TestEditStrategyFactory:
    """Tests for EditStrategyFactory."""

    @pytest.fixture
    def factory(self):
        """Factory with non-default parameters."""
        return EditStrategyFactory(EditParams(s=0.3), MaskParams(lambda_edge=0.05))

    @pytest.mark.parametrize(
        "mode, cls",
        [
            (EditMode.IDENTITY, IdentityEdit),
            (EditMode.BASELINE, BaselineEdit),
            (EditMode.DIFFERENTIABLE, DifferentiableEdit),
        ],
    )
    def test_get_strategy(self, factory, mode, cls):
        """Each mode maps to its strategy class."""
        strategy = factory.get_strategy(mode)
        assert isinstance(strategy, cls)
        assert strategy.mode is mode

    def test_lookup_by_name(self, factory):
        """Modes can be given by their string value."""
        assert factory.get_strategy("baseline").name == "baseline"

    def test_parameters_shared(self, factory):
        """Every strategy carries the factory's parameters."""
        for mode in EditMode:
            strategy = factory.get_strategy(mode)
            assert strategy.edit_params.s == 0.3
            assert strategy.mask_params.lambda_edge == 0.05

    def test_differentiable_flags(self, factory):
        """Only the smooth edit is differentiable."""
        assert factory.get_strategy(EditMode.DIFFERENTIABLE).differentiable
        assert not factory.get_strategy(EditMode.BASELINE).differentiable
        assert not factory.get_strategy(EditMode.IDENTITY).differentiable

    def test_unknown_mode(self, factory):
        """Unknown names raise ValueError and are not supported."""
        assert not factory.supports("peekaboo")
        assert factory.supports("identity")
        with pytest.raises(ValueError):
            factory.get_strategy("peekaboo")

    def test_identity_returns_input(self, factory):
        """The identity strategy hands back the same tensor."""
        attention = torch.zeros(1, 1, 2, 2, 1, dtype=DTYPE)
        assert factory.get_strategy(EditMode.IDENTITY).apply(attention, torch.zeros(4)) is attention
