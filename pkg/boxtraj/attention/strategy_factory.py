"""
Edit strategy factory.

File: boxtraj/attention/strategy_factory.py
"""
from __future__ import annotations

from boxtraj.attention.editing import (
    BaselineEdit,
    DifferentiableEdit,
    EditParams,
    EditStrategy,
    IdentityEdit,
)
from boxtraj.attention.masks import MaskParams
from boxtraj.attention.types import EditMode


class EditStrategyFactory:
    """Factory for selecting edit strategies sharing one set of parameters."""

    def __init__(
        self,
        edit_params: EditParams | None = None,
        mask_params: MaskParams | None = None,
    ) -> None:
        self.edit_params = edit_params or EditParams()
        self.mask_params = mask_params or MaskParams()
        self._strategies: dict[EditMode, EditStrategy] = {
            EditMode.IDENTITY: IdentityEdit(self.edit_params, self.mask_params),
            EditMode.BASELINE: BaselineEdit(self.edit_params, self.mask_params),
            EditMode.DIFFERENTIABLE: DifferentiableEdit(
                self.edit_params, self.mask_params
            ),
        }

    def get_strategy(self, mode: EditMode | str) -> EditStrategy:
        """
        Get the strategy for an edit mode.

        Raises:
            ValueError: unknown mode name
        """
        return self._strategies[EditMode(mode)]

    def supports(self, mode: EditMode | str) -> bool:
        try:
            return EditMode(mode) in self._strategies
        except ValueError:
            return False
