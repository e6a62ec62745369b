"""
Run configuration loaded from YAML.

A run file has up to eight sections (mask, edit, backbone, scene, loss,
loop, curation, trajectory); anything left out keeps its default. Every
key carries a provenance tag: "paper" values come from the published
method and may only change when the file sets
`override_paper_defaults: true` (or the caller allows it), "artifact"
values are desk-scale or plumbing choices and change freely.
"""

from __future__ import annotations

import logging
import os
from dataclasses import MISSING, dataclass, field, fields, replace
from enum import Enum
from pathlib import Path
from typing import Any

import yaml

from boxtraj.attention.backbone import DEFAULT_LADDER, BackboneSpec, LayerSpec, SceneSpec
from boxtraj.attention.editing import EditParams
from boxtraj.attention.masks import MaskParams
from boxtraj.attention.types import LossMaskSource
from boxtraj.errors import ConfigError, ShapeMismatch
from boxtraj.geometry.box import DEFAULT_CANVAS, BoxParams, Trajectory
from boxtraj.geometry.curation import CurationParams
from boxtraj.geometry.patterns import PATTERNS, build_pattern
from boxtraj.optimization.loop import LoopConfig
from boxtraj.optimization.objective import LossWeights
from boxtraj.storage.formats import read_trajectory

logger = logging.getLogger(__name__)

SEED_ENV = "BOXTRAJ_SEED"
OVERRIDE_KEY = "override_paper_defaults"

PAPER = "paper"
ARTIFACT = "artifact"


@dataclass(frozen=True)
class BackboneSection:
    ladder: tuple[LayerSpec, ...] = DEFAULT_LADDER
    n_tracked: int = 1
    n_tokens: int = 4
    value_noise: float = 0.05
    logit_scale: float = 12.0


@dataclass(frozen=True)
class SceneSection:
    offset: tuple[float, float] = (0.1, 0.0)
    extent: tuple[float, float] = (0.08, 0.08)
    background_seed: int = 0
    peak: float = 0.6
    noise_level: float = 0.1


@dataclass(frozen=True)
class LossSection:
    lambda_neg: float = 10.0
    lambda_reg_scale: float = 0.1
    lambda_reg: float | None = None
    loss_mask_source: LossMaskSource = LossMaskSource.USER_BOX
    token_set: tuple[int, ...] = (0,)


@dataclass(frozen=True)
class TrajectorySection:
    pattern: str = "linear"
    path: str | None = None
    frames: int = 24
    start: tuple[float, float, float, float] = (0.2, 0.3, 0.5, 0.6)
    end: tuple[float, float, float, float] = (0.35, 0.35, 0.65, 0.65)
    canvas: tuple[int, int] = DEFAULT_CANVAS
    amplitude: float = 0.1
    periods: int = 2
    hold_fraction: float = 0.5


# section.key -> (provenance, description)
PROVENANCE: dict[str, tuple[str, str]] = {
    "mask.sigma_scale": (PAPER, "Gaussian sigma as a fraction of the box extent"),
    "mask.lambda_edge": (PAPER, "smooth-step edge width relative to the box diagonal"),
    "mask.normalize_kernel": (PAPER, "divide the combined mask by its peak"),
    "mask.kappa_floor": (ARTIFACT, "lower bound of the edge width"),
    "edit.preset": (ARTIFACT, "generator preset (zeroscope, t2v-turbo) applied before the keys below"),
    "edit.w": (PAPER, "attenuation applied outside the box"),
    "edit.s": (PAPER, "Gaussian boost added inside the box"),
    "edit.channel_fraction": (PAPER, "share of leading channels that are edited"),
    "backbone.ladder": (ARTIFACT, "(H, W, C) per layer, each step a 2x2 pooling"),
    "backbone.n_tracked": (ARTIFACT, "number of tracked tokens"),
    "backbone.n_tokens": (ARTIFACT, "tokens per attention slice, tracked plus context"),
    "backbone.value_noise": (ARTIFACT, "noise on seeded values, projections and keys"),
    "backbone.logit_scale": (ARTIFACT, "multiplier on next-layer attention logits"),
    "scene.offset": (ARTIFACT, "attention blob offset from the user box center"),
    "scene.extent": (ARTIFACT, "attention blob standard deviation per axis"),
    "scene.background_seed": (ARTIFACT, "seed of the layer-0 noise"),
    "scene.peak": (ARTIFACT, "blob peak of the subject token"),
    "scene.noise_level": (ARTIFACT, "noise amplitude relative to the peak at step 1"),
    "loss.lambda_neg": (PAPER, "weight of the background-balancing loss"),
    "loss.lambda_reg_scale": (PAPER, "deviation penalty scale, times sqrt(canvas pixels)"),
    "loss.lambda_reg": (PAPER, "explicit deviation penalty, overrides the scale"),
    "loss.loss_mask_source": (ARTIFACT, "loss target: user_box or current_box"),
    "loss.token_set": (ARTIFACT, "tracked token indices"),
    "loop.preset": (ARTIFACT, "generator schedule preset (zeroscope, t2v-turbo)"),
    "loop.timesteps": (PAPER, "denoising steps K"),
    "loop.edit_steps": (PAPER, "leading steps with spatial edits and optimization"),
    "loop.inner_steps": (PAPER, "Adam updates per edited step"),
    "loop.lr": (ARTIFACT, "Adam learning rate in normalized units"),
    "loop.beta1": (ARTIFACT, "Adam first-moment decay"),
    "loop.beta2": (ARTIFACT, "Adam second-moment decay"),
    "loop.eps": (ARTIFACT, "Adam denominator floor"),
    "loop.seed": (ARTIFACT, "run seed unless --seed or BOXTRAJ_SEED is given"),
    "loop.temporal_edit_steps": (ARTIFACT, "accepted and ignored with a warning"),
    "loop.min_size": (ARTIFACT, "minimum box side after projection"),
    "curation.min_iou": (PAPER, "minimum IoU between consecutive boxes"),
    "curation.min_extent": (PAPER, "minimum box side, normalized"),
    "curation.window": (PAPER, "frames kept per trajectory"),
    "trajectory.pattern": (ARTIFACT, f"one of {', '.join(sorted(PATTERNS))}"),
    "trajectory.path": (ARTIFACT, "trajectory JSON to load instead of a pattern"),
    "trajectory.frames": (ARTIFACT, "frame count of pattern trajectories"),
    "trajectory.start": (ARTIFACT, "first box (l, t, r, b)"),
    "trajectory.end": (ARTIFACT, "last or turning box (l, t, r, b)"),
    "trajectory.canvas": (ARTIFACT, "canvas (W, H) in pixels"),
    "trajectory.amplitude": (ARTIFACT, "zigzag vertical amplitude"),
    "trajectory.periods": (ARTIFACT, "zigzag periods"),
    "trajectory.hold_fraction": (ARTIFACT, "stationary_to_move hold share"),
}

_SECTIONS: dict[str, type] = {
    "mask": MaskParams,
    "edit": EditParams,
    "backbone": BackboneSection,
    "scene": SceneSection,
    "loss": LossSection,
    "loop": LoopConfig,
    "curation": CurationParams,
    "trajectory": TrajectorySection,
}
_PRESET_SECTIONS = ("edit", "loop")
_VARIABLE_LENGTH = ("backbone.ladder", "loss.token_set")


@dataclass(frozen=True)
class RunConfig:
    """Everything a CLI run needs, one frozen section per concern."""

    mask: MaskParams = field(default_factory=MaskParams)
    edit: EditParams = field(default_factory=EditParams)
    backbone: BackboneSection = field(default_factory=BackboneSection)
    scene: SceneSection = field(default_factory=SceneSection)
    loss: LossSection = field(default_factory=LossSection)
    loop: LoopConfig = field(default_factory=LoopConfig)
    curation: CurationParams = field(default_factory=CurationParams)
    trajectory: TrajectorySection = field(default_factory=TrajectorySection)
    source: Path | None = None

    def backbone_spec(self, seed: int | None = None) -> BackboneSpec:
        section = self.backbone
        return BackboneSpec(
            ladder=section.ladder,
            n_tracked=section.n_tracked,
            n_tokens=section.n_tokens,
            seed=self.loop.seed if seed is None else seed,
            timesteps=self.loop.timesteps,
            edit_steps=self.loop.edit_steps,
            value_noise=section.value_noise,
            logit_scale=section.logit_scale,
        )

    def loss_weights(self, canvas: tuple[int, int] | None = None) -> LossWeights:
        section = self.loss
        return LossWeights(
            lambda_neg=section.lambda_neg,
            lambda_reg_scale=section.lambda_reg_scale,
            canvas=canvas or self.trajectory.canvas,
            lambda_reg=section.lambda_reg,
            loss_mask_source=section.loss_mask_source,
            token_set=section.token_set,
        )

    def user_trajectory(self) -> Trajectory:
        """The configured trajectory: a JSON file if `path` is set, else a pattern."""
        section = self.trajectory
        if section.path is not None:
            path = Path(section.path)
            if not path.is_absolute() and self.source is not None:
                path = self.source.parent / path
            return read_trajectory(path)
        start = BoxParams.from_sequence(section.start)
        end = BoxParams.from_sequence(section.end)
        kwargs: dict[str, Any] = {"frames": section.frames, "canvas": section.canvas}
        if section.pattern == "stationary":
            kwargs["box"] = start
        elif section.pattern == "u_turn":
            kwargs.update(start=start, turn=end)
        else:
            kwargs.update(start=start, end=end)
        if section.pattern == "zigzag":
            kwargs.update(amplitude=section.amplitude, periods=section.periods)
        elif section.pattern == "stationary_to_move":
            kwargs["hold_fraction"] = section.hold_fraction
        return build_pattern(section.pattern, **kwargs)

    def scene_for(self, traj: Trajectory) -> SceneSpec:
        section = self.scene
        return SceneSpec.following(
            traj,
            offset=section.offset,
            extent=section.extent,
            background_seed=section.background_seed,
            peak=section.peak,
            noise_level=section.noise_level,
        )


# ============================================================================
# Loading
# ============================================================================

def _coerce(key: str, default: Any, value: Any) -> Any:
    """Convert a YAML value to the type of the field default."""
    if isinstance(default, Enum):
        try:
            return type(default)(value)
        except ValueError:
            choices = [member.value for member in type(default)]
            raise ConfigError(f"{key}: expected one of {choices}, got {value!r}") from None
    if isinstance(default, bool):
        if not isinstance(value, bool):
            raise ConfigError(f"{key}: expected true/false, got {value!r}")
        return value
    if isinstance(default, int) and not isinstance(default, bool) and not isinstance(default, float):
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{key}: expected an integer, got {value!r}")
        return value
    if isinstance(default, float):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{key}: expected a number, got {value!r}")
        return float(value)
    if isinstance(default, tuple):
        if not isinstance(value, (list, tuple)):
            raise ConfigError(f"{key}: expected a list, got {value!r}")
        if not default:
            return tuple(value)
        template = default[0]
        if key not in _VARIABLE_LENGTH and len(value) != len(default):
            raise ConfigError(f"{key}: expected {len(default)} entries, got {len(value)}")
        return tuple(_coerce(f"{key}[{i}]", template, item) for i, item in enumerate(value))
    if isinstance(default, str):
        if not isinstance(value, str):
            raise ConfigError(f"{key}: expected a string, got {value!r}")
        return value
    # Optional fields default to None.
    if value is None:
        return None
    if key == "loss.lambda_reg":
        return _coerce(key, 0.0, value)
    return _coerce(key, "", value)


def _section_defaults(cls: type) -> dict[str, Any]:
    defaults = {}
    for item in fields(cls):
        if item.default is not MISSING:
            defaults[item.name] = item.default
        elif item.default_factory is not MISSING:
            defaults[item.name] = item.default_factory()
    return defaults


def _base_section(name: str, preset: str | None) -> Any:
    cls = _SECTIONS[name]
    if preset is None:
        return cls()
    try:
        return cls.preset(preset)
    except KeyError as e:
        raise ConfigError(f"{name}.preset: {e.args[0]}") from None


def _build_section(
    name: str, raw: Any, allow_paper_overrides: bool
) -> Any:
    if raw is None:
        raw = {}
    if not isinstance(raw, dict):
        raise ConfigError(f"{name}: expected a mapping, got {type(raw).__name__}")
    raw = dict(raw)
    preset = raw.pop("preset", None) if name in _PRESET_SECTIONS else None
    if preset is not None and not isinstance(preset, str):
        raise ConfigError(f"{name}.preset: expected a string, got {preset!r}")
    base = _base_section(name, preset)
    defaults = _section_defaults(_SECTIONS[name])

    values = {}
    for key, value in raw.items():
        path = f"{name}.{key}"
        if key not in defaults:
            raise ConfigError(f"Unknown config key '{path}'")
        coerced = _coerce(path, defaults[key], value)
        provenance, _ = PROVENANCE[path]
        if provenance == PAPER and coerced != getattr(base, key) and not allow_paper_overrides:
            raise ConfigError(
                f"'{path}' changes a published default ({getattr(base, key)!r} -> "
                f"{coerced!r}); set {OVERRIDE_KEY}: true to allow it"
            )
        values[key] = coerced
    try:
        return replace(base, **values)
    except (TypeError, ValueError) as e:
        raise ConfigError(f"{name}: {e}") from None


def parse_run_config(
    data: Any, allow_paper_overrides: bool = False, source: Path | None = None
) -> RunConfig:
    """
    Build a RunConfig from parsed YAML.

    Raises:
        ConfigError: unknown section or key, bad value type, invalid value,
            or an unapproved change to a paper default
    """
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigError("Run config must be a mapping of sections")
    data = dict(data)
    override = data.pop(OVERRIDE_KEY, False)
    if not isinstance(override, bool):
        raise ConfigError(f"{OVERRIDE_KEY}: expected true/false, got {override!r}")
    allow = allow_paper_overrides or override

    unknown = sorted(set(data) - set(_SECTIONS))
    if unknown:
        raise ConfigError(f"Unknown config section(s): {', '.join(unknown)}")

    sections = {name: _build_section(name, data.get(name), allow) for name in _SECTIONS}
    config = RunConfig(**sections, source=source)
    if config.trajectory.pattern not in PATTERNS:
        raise ConfigError(
            f"trajectory.pattern: unknown pattern {config.trajectory.pattern!r}; "
            f"expected one of {sorted(PATTERNS)}"
        )
    try:
        config.backbone_spec()
        config.loss_weights()
        if len(config.backbone.ladder) < 2:
            raise ValueError("the attention loss needs at least two ladder layers")
    except (ValueError, ShapeMismatch) as e:
        raise ConfigError(f"Invalid configuration: {e}") from None
    if config.loop.temporal_edit_steps > 0:
        logger.warning(
            "loop.temporal_edit_steps=%d will be ignored", config.loop.temporal_edit_steps
        )
    return config


def load_run_config(path: Path, allow_paper_overrides: bool = False) -> RunConfig:
    path = Path(path)
    try:
        with open(path, "r", encoding="utf-8") as f:
            data = yaml.safe_load(f)
    except yaml.YAMLError as e:
        raise ConfigError(f"{path}: invalid YAML ({e})") from None
    except OSError as e:
        raise ConfigError(f"{path}: cannot read config ({e.strerror})") from None
    return parse_run_config(data, allow_paper_overrides, source=path)


def resolve_seed(cli_seed: int | None, config: RunConfig) -> int:
    """--seed first, then the BOXTRAJ_SEED environment variable, then loop.seed."""
    if cli_seed is not None:
        return cli_seed
    env = os.getenv(SEED_ENV)
    if env is not None and env.strip():
        try:
            return int(env)
        except ValueError:
            raise ConfigError(f"{SEED_ENV} must be an integer, got {env!r}") from None
    return config.loop.seed


def describe_defaults() -> str:
    """Table of every config key with its default and provenance tag."""
    lines = [f"{'key':<28} {'default':<30} {'source':<9} description"]
    for name, cls in _SECTIONS.items():
        defaults = _section_defaults(cls)
        if name in _PRESET_SECTIONS:
            defaults = {"preset": None, **defaults}
        for key, default in defaults.items():
            provenance, description = PROVENANCE[f"{name}.{key}"]
            shown = default.value if isinstance(default, Enum) else default
            lines.append(f"{name + '.' + key:<28} {str(shown):<30} {provenance:<9} {description}")
    return "\n".join(lines)
