"""Masks, attention edits and the toy attention stack."""
from boxtraj.attention.backbone import (
    AttentionField,
    AttentionStack,
    BackboneSpec,
    SceneSpec,
    ToyAttentionStack,
)
from boxtraj.attention.editing import EditParams, edit_baseline, edit_differentiable
from boxtraj.attention.masks import MaskParams, binary_mask, box_mask, gaussian_map
from boxtraj.attention.strategy_factory import EditStrategyFactory
from boxtraj.attention.types import EditMode, LossMaskSource

__all__ = [
    "AttentionField",
    "AttentionStack",
    "BackboneSpec",
    "SceneSpec",
    "ToyAttentionStack",
    "EditParams",
    "edit_baseline",
    "edit_differentiable",
    "MaskParams",
    "binary_mask",
    "box_mask",
    "gaussian_map",
    "EditStrategyFactory",
    "EditMode",
    "LossMaskSource",
]
