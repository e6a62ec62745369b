"""
Attention stack interface and the deterministic toy cross-attention stack.

The toy stack stands in for a video generator's spatial cross-attention
layers. Layer 0 attention is synthesized from a SceneSpec (a smooth blob
per frame on the subject token plus seeded noise that decays with the
denoising step). Each following layer is one attention block:

    features  = sum_n A'[c, f, h, w, n] * V[c, n, :]     (per channel)
    projected = features @ P                              (seeded, near identity)
    pooled    = 2x2 average pool
    A_next    = softmax_n(scale / sqrt(Q) * pooled . K[c', n])

Every operation is per frame, so frames never interact.
"""

from __future__ import annotations

import logging
import math
from abc import ABC, abstractmethod
from collections.abc import Callable, Sequence
from dataclasses import dataclass, field

import numpy as np
import torch
import torch.nn.functional as F

from boxtraj.attention.editing import EditStrategy
from boxtraj.attention.masks import DTYPE, BoxesLike, as_box_tensor, pixel_centers
from boxtraj.errors import ShapeMismatch
from boxtraj.geometry.box import Trajectory

logger = logging.getLogger(__name__)

LayerSpec = tuple[int, int, int]  # (H, W, C)
EditFn = EditStrategy | Callable[[torch.Tensor, torch.Tensor, Sequence[int]], torch.Tensor]

DEFAULT_LADDER: tuple[LayerSpec, ...] = (
    (40, 40, 8),
    (20, 20, 8),
    (10, 10, 8),
    (5, 5, 8),
)


@dataclass(frozen=True)
class BackboneSpec:
    """
    Shape and seeding of the toy attention stack.

    n_tracked is the number of tracked text tokens (the first n_tracked of
    n_tokens); the remaining tokens give the token softmax something to
    compete with.
    """

    ladder: tuple[LayerSpec, ...] = DEFAULT_LADDER
    n_tracked: int = 1
    n_tokens: int = 4
    seed: int = 0
    timesteps: int = 40
    edit_steps: int = 5
    value_noise: float = 0.05
    logit_scale: float = 12.0

    def __post_init__(self) -> None:
        if not self.ladder:
            raise ValueError("Layer ladder must not be empty")
        if not 1 <= self.n_tracked < self.n_tokens:
            raise ValueError(
                f"Need 1 <= n_tracked < n_tokens, got {self.n_tracked}/{self.n_tokens}"
            )
        if not 0 <= self.edit_steps <= self.timesteps:
            raise ValueError(
                f"edit_steps ({self.edit_steps}) must be within timesteps "
                f"({self.timesteps})"
            )
        for (h0, w0, c0), (h1, w1, c1) in zip(self.ladder, self.ladder[1:]):
            if c0 < 1 or c1 < 1 or h0 != 2 * h1 or w0 != 2 * w1:
                raise ShapeMismatch(
                    f"Ladder step {(h0, w0, c0)} -> {(h1, w1, c1)} is not a 2x2 pooling"
                )

    @property
    def tracked_tokens(self) -> tuple[int, ...]:
        return tuple(range(self.n_tracked))

    @property
    def layer_count(self) -> int:
        return len(self.ladder)


@dataclass(frozen=True)
class SceneSpec:
    """Synthetic content: per-frame blob centers and extents, noise settings."""

    centers: tuple[tuple[float, float], ...]
    extents: tuple[tuple[float, float], ...]
    background_seed: int = 0
    peak: float = 0.6
    noise_level: float = 0.1

    def __post_init__(self) -> None:
        if len(self.centers) == 0 or len(self.centers) != len(self.extents):
            raise ValueError(
                f"Need matching non-empty centers/extents, got "
                f"{len(self.centers)}/{len(self.extents)}"
            )
        for cx, cy in self.centers:
            if not (0.0 <= cx <= 1.0 and 0.0 <= cy <= 1.0):
                raise ValueError(f"Blob center ({cx}, {cy}) outside [0, 1]^2")
        for ex, ey in self.extents:
            if ex <= 0.0 or ey <= 0.0:
                raise ValueError(f"Blob extent ({ex}, {ey}) must be positive")
        if not 0.0 < self.peak * (1.0 + self.noise_level) <= 1.0:
            raise ValueError("peak * (1 + noise_level) must lie in (0, 1]")

    @property
    def frame_count(self) -> int:
        return len(self.centers)

    @classmethod
    def following(
        cls,
        traj: Trajectory,
        offset: tuple[float, float] = (0.1, 0.0),
        extent: tuple[float, float] = (0.08, 0.08),
        **kwargs,
    ) -> SceneSpec:
        """Blob at each box center plus a fixed offset, clipped to the canvas."""
        centers = np.clip(
            np.array([box.center for box in traj]) + np.asarray(offset), 0.0, 1.0
        )
        return cls(
            centers=tuple((float(x), float(y)) for x, y in centers),
            extents=tuple(tuple(extent) for _ in range(len(traj))),
            **kwargs,
        )


@dataclass
class AttentionField:
    """Recorded attention of one stack evaluation."""

    pre_edit: list[torch.Tensor] = field(default_factory=list)
    post_edit: list[torch.Tensor] = field(default_factory=list)
    values: list[torch.Tensor] = field(default_factory=list)
    ladder: tuple[LayerSpec, ...] = DEFAULT_LADDER

    @property
    def layer_count(self) -> int:
        return len(self.pre_edit)

    def next_layer_fields(self) -> list[torch.Tensor]:
        """Attention induced by each edited layer, A[1] .. A[L-1]."""
        return self.pre_edit[1:]


class AttentionStack(ABC):
    """
    Pluggable attention stack.

    Subclasses provide the layer-0 field and the layer-to-layer map;
    run_stack drives edits through the ladder.

    Usage:
        stack = ToyAttentionStack(BackboneSpec(seed=3))
        field = stack.run_stack(scene, boxes, DifferentiableEdit(), t=1)
        a1 = field.pre_edit[1]
    """

    def __init__(self, spec: BackboneSpec) -> None:
        self.spec = spec

    @abstractmethod
    def synth_field(
        self, scene: SceneSpec, t: int
    ) -> tuple[torch.Tensor, torch.Tensor]:
        """Layer-0 attention (C, F, H, W, N) and values for timestep t."""
        pass

    @abstractmethod
    def forward_layer(
        self, attention: torch.Tensor, values: torch.Tensor, layer: int
    ) -> tuple[torch.Tensor, torch.Tensor]:
        """Map edited attention of `layer` to attention and values of layer + 1."""
        pass

    def run_stack(
        self,
        scene: SceneSpec,
        boxes: BoxesLike,
        edit_fn: EditFn,
        t: int,
        tokens: Sequence[int] | None = None,
    ) -> AttentionField:
        """
        Edit every layer in turn and propagate to the next.

        Returns:
            AttentionField with pre- and post-edit attention for all layers
        """
        tokens = tuple(tokens) if tokens is not None else self.spec.tracked_tokens
        boxes = as_box_tensor(boxes)
        if boxes.ndim == 2 and boxes.shape[0] != scene.frame_count:
            raise ShapeMismatch(
                f"{boxes.shape[0]} boxes for a {scene.frame_count}-frame scene"
            )
        apply = edit_fn.apply if isinstance(edit_fn, EditStrategy) else edit_fn

        attention, values = self.synth_field(scene, t)
        record = AttentionField(ladder=self.spec.ladder)
        last = self.spec.layer_count - 1
        for layer in range(self.spec.layer_count):
            edited = apply(attention, boxes, tokens)
            record.pre_edit.append(attention)
            record.post_edit.append(edited)
            record.values.append(values)
            if layer < last:
                attention, values = self.forward_layer(edited, values, layer)
        return record


class ToyAttentionStack(AttentionStack):
    """Seeded toy stack; immutable after construction."""

    def __init__(self, spec: BackboneSpec | None = None) -> None:
        super().__init__(spec or BackboneSpec())
        spec = self.spec
        generator = torch.Generator().manual_seed(spec.seed)
        n = spec.n_tokens
        eye = torch.eye(n, dtype=DTYPE)

        def noise(*shape: int) -> torch.Tensor:
            return spec.value_noise * torch.randn(*shape, generator=generator, dtype=DTYPE)

        # Values (C, N, D) with D = N: token one-hots plus noise.
        self._values = [eye + noise(c, n, n) for _, _, c in spec.ladder]
        # Projection (C * D, Q) with Q = N: channel average plus noise.
        self._projections = [
            eye.repeat(c, 1) / c + noise(c * n, n) / c for _, _, c in spec.ladder[:-1]
        ]
        # Keys (C, N, Q) for layers 1..L-1; index 0 is unused.
        self._keys = [eye + noise(c, n, n) for _, _, c in spec.ladder]
        shares = torch.rand(n - 1, generator=generator, dtype=DTYPE) + 0.5
        self._context_shares = shares / shares.sum()

    def noise_decay(self, t: int) -> float:
        """Noise amplitude multiplier, 1 at the first step and falling linearly."""
        steps = self.spec.timesteps
        return min(1.0, max(0.0, (steps - t + 1) / steps))

    def _noise_seed(self, scene: SceneSpec, t: int) -> int:
        return (self.spec.seed * 1_000_003 + scene.background_seed * 7_919 + t) % (2**63)

    def synth_field(self, scene, t):
        height, width, channels = self.spec.ladder[0]
        centers = torch.tensor(scene.centers, dtype=DTYPE)
        extents = torch.tensor(scene.extents, dtype=DTYPE)
        u = pixel_centers(width)[None, None, :]
        v = pixel_centers(height)[None, :, None]
        blob = torch.exp(
            -((u - centers[:, 0, None, None]) ** 2) / (2.0 * extents[:, 0, None, None] ** 2)
            - ((v - centers[:, 1, None, None]) ** 2) / (2.0 * extents[:, 1, None, None] ** 2)
        )

        generator = torch.Generator().manual_seed(self._noise_seed(scene, t))
        grain = torch.rand(
            (channels, scene.frame_count, height, width), generator=generator, dtype=DTYPE
        )
        amplitude = scene.noise_level * scene.peak * self.noise_decay(t)
        subject = scene.peak * blob[None] + amplitude * grain
        context = (1.0 - subject)[..., None] * self._context_shares
        attention = torch.cat([subject[..., None], context], dim=-1)
        return attention, self._values[0]

    def downsample(self, features: torch.Tensor) -> torch.Tensor:
        """2x2 average pooling of (F, H, W, D) features."""
        pooled = F.avg_pool2d(features.permute(0, 3, 1, 2), kernel_size=2)
        return pooled.permute(0, 2, 3, 1)

    def forward_layer(self, attention, values, layer):
        ladder = self.spec.ladder
        if not 0 <= layer < len(ladder) - 1:
            raise ShapeMismatch(f"Layer {layer} has no successor in a {len(ladder)}-layer ladder")
        height, width, channels = ladder[layer]
        n = self.spec.n_tokens
        if attention.ndim != 5 or (
            attention.shape[0], attention.shape[2], attention.shape[3], attention.shape[4]
        ) != (channels, height, width, n):
            raise ShapeMismatch(
                f"Layer {layer} expects (C={channels}, F, {height}, {width}, N={n}), "
                f"got {tuple(attention.shape)}"
            )
        if tuple(values.shape) != tuple(self._values[layer].shape):
            raise ShapeMismatch(
                f"Layer {layer} values must be {tuple(self._values[layer].shape)}, "
                f"got {tuple(values.shape)}"
            )

        frames = attention.shape[1]
        features = torch.einsum("cfhwn,cnd->fhwcd", attention, values)
        features = features.reshape(frames, height, width, -1)
        projected = features @ self._projections[layer]
        pooled = self.downsample(projected)

        next_height, next_width, _ = ladder[layer + 1]
        if pooled.shape[1:3] != (next_height, next_width):
            raise ShapeMismatch(
                f"Pooled grid {tuple(pooled.shape[1:3])} does not match "
                f"layer {layer + 1} ({next_height}, {next_width})"
            )
        keys = self._keys[layer + 1]
        scale = self.spec.logit_scale / math.sqrt(keys.shape[-1])
        logits = torch.einsum("fhwq,cnq->cfhwn", pooled, keys) * scale
        return torch.softmax(logits, dim=-1), self._values[layer + 1]
