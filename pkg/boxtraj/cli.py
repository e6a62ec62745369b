"""
Command-line interface.

Exit codes: 0 success, 1 validation failure (bad arguments, config, input
files, rejected trajectories, I/O errors), 2 numerical failure.
"""

from __future__ import annotations

import argparse
import logging
import sys
from collections.abc import Sequence
from dataclasses import replace
from pathlib import Path

import torch

from boxtraj.attention.backbone import ToyAttentionStack
from boxtraj.attention.masks import DTYPE, box_mask, rasterize_masks
from boxtraj.attention.strategy_factory import EditStrategyFactory
from boxtraj.attention.types import EditMode
from boxtraj.errors import (
    CurationRejection,
    NumericalError,
    OptimizationAborted,
    ValidationError,
)
from boxtraj.evaluation.fixtures import offset_blob_suite
from boxtraj.evaluation.metrics import per_frame_iou
from boxtraj.evaluation.sweep import SWEEP_COLUMNS, SWEEP_PARAMETERS, SweepSpec, parse_sweep_values, run_sweep
from boxtraj.geometry.box import DEFAULT_CANVAS, BoxParams
from boxtraj.geometry.curation import curate_stream
from boxtraj.optimization.gradient import EvaluationState, evaluate, gradcheck
from boxtraj.optimization.hooks import IterationHookManager
from boxtraj.optimization.loop import REPORT_COLUMNS, IterationRecord, OptReport, optimize_trajectory
from boxtraj.storage.config import RunConfig, load_run_config, resolve_seed
from boxtraj.storage.field_file import write_field
from boxtraj.storage.formats import read_detections, read_trajectory, write_table, write_trajectory
from boxtraj.storage.heatmap import render_heatmap
from boxtraj.utils.hashing import calculate_file_hash

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_NUMERICAL = 2

GRADCHECK_COLUMNS = ("trial", "frame", "coordinate", "analytic", "numeric", "rel_err")
MIOU_COLUMNS = ("frame", "iou")


class BoxTrajArgumentParser(argparse.ArgumentParser):
    """ArgumentParser whose usage errors exit with the validation code."""

    def error(self, message: str):
        self.print_usage(sys.stderr)
        self.exit(EXIT_VALIDATION, f"{self.prog}: error: {message}\n")


def configure_logging(verbosity: int) -> None:
    level = logging.WARNING
    if verbosity == 1:
        level = logging.INFO
    elif verbosity >= 2:
        level = logging.DEBUG
    logging.basicConfig(
        level=level,
        stream=sys.stderr,
        format="%(levelname)s %(name)s: %(message)s",
        force=True,
    )


def _load_config(args: argparse.Namespace) -> RunConfig:
    if args.config is None:
        return RunConfig()
    return load_run_config(args.config, allow_paper_overrides=args.allow_paper_overrides)


def _record_output(path: Path) -> Path:
    logger.info("Wrote %s sha256=%s", path, calculate_file_hash(path))
    return path


def _subject_grid(attention: torch.Tensor, token: int, frame: int = 0) -> torch.Tensor:
    """Channel mean of one token's attention in one frame, (H, W)."""
    return attention[:, frame, :, :, token].mean(dim=0)


# ============================================================================
# Subcommands
# ============================================================================

def cmd_render_masks(args: argparse.Namespace) -> int:
    config = _load_config(args)
    traj = config.user_trajectory()
    box = torch.as_tensor(traj.to_array()[:1], dtype=DTYPE)
    for height, width, _ in config.backbone.ladder:
        masks = rasterize_masks(box, height, width, config.mask)
        for name, grid in masks.items():
            stem = args.out / f"mask_{name}_{height}x{width}"
            _record_output(write_field(stem.with_suffix(".afld"), grid[0]))
            render_heatmap(grid[0], stem.with_suffix(".pgm"), vmax=1.0)
    return EXIT_OK


def cmd_edit(args: argparse.Namespace) -> int:
    config = _load_config(args)
    seed = resolve_seed(args.seed, config)
    traj = config.user_trajectory()
    scene = config.scene_for(traj)
    stack = ToyAttentionStack(config.backbone_spec(seed))
    strategy = EditStrategyFactory(config.edit, config.mask).get_strategy(args.mode)
    tokens = config.loss.token_set
    record = stack.run_stack(scene, traj.to_array(), strategy, 1, tokens)
    for layer in range(record.layer_count):
        for phase, attention in (("pre", record.pre_edit[layer]), ("post", record.post_edit[layer])):
            stem = args.out / f"layer{layer}_{phase}"
            _record_output(write_field(stem.with_suffix(".afld"), attention))
            render_heatmap(
                _subject_grid(attention, tokens[0]), stem.with_suffix(".pgm"), boxes=[traj[0]]
            )
    return EXIT_OK


def _dump_hook(out_dir: Path, every: int):
    dump_dir = out_dir / "dumps"
    dump_dir.mkdir(parents=True, exist_ok=True)

    def dump(record: IterationRecord, state: EvaluationState) -> None:
        if record.iteration % every:
            return
        boxes = torch.as_tensor(state.boxes, dtype=DTYPE)
        with torch.no_grad():
            _, _, field = evaluate(state, boxes)
        height, width, _ = state.stack.spec.ladder[1]
        attention = field.pre_edit[1]
        overlays = [
            BoxParams.from_sequence(state.user_boxes[0]),
            BoxParams.from_sequence(state.boxes[0]),
        ]
        stem = dump_dir / f"iter{record.iteration:03d}"
        write_field(stem.with_name(stem.name + "_a1.afld"), attention)
        render_heatmap(
            _subject_grid(attention, state.weights.token_set[0]),
            stem.with_name(stem.name + "_a1.pgm"),
            boxes=overlays,
        )
        mask = box_mask(boxes[:1], height, width, state.mask_params)[0]
        render_heatmap(mask, stem.with_name(stem.name + "_mask.pgm"), boxes=overlays[:1])

    return dump


def _write_opt_report(args: argparse.Namespace, report: OptReport) -> None:
    _record_output(
        write_table(args.out, "report", REPORT_COLUMNS, report.rows(), args.format, report.summary())
    )
    _record_output(write_trajectory(args.out / "final_traj.json", report.final))


def cmd_optimize(args: argparse.Namespace) -> int:
    config = _load_config(args)
    seed = resolve_seed(args.seed, config)
    traj = config.user_trajectory()
    hooks = IterationHookManager()
    if args.dump_every:
        hooks.add_on_iteration_hook(_dump_hook(args.out, args.dump_every))
    try:
        report = optimize_trajectory(
            traj,
            ToyAttentionStack(config.backbone_spec(seed)),
            config.scene_for(traj),
            config.loss_weights(traj.canvas),
            config.loop,
            config.edit,
            config.mask,
            hooks,
        )
    except OptimizationAborted as e:
        _write_opt_report(args, e.report)
        raise
    _write_opt_report(args, report)
    return EXIT_OK


def cmd_gradcheck(args: argparse.Namespace) -> int:
    config = _load_config(args)
    seed = resolve_seed(args.seed, config)
    report = gradcheck(
        n_trials=args.trials,
        tolerance=args.tolerance,
        seed=seed,
        spec=config.backbone_spec(seed),
        mode=EditMode(args.mode),
        frames=args.frames,
        weights=config.loss_weights(),
        edit_params=config.edit,
    )
    rows = [
        {
            "trial": row.trial,
            "frame": row.frame,
            "coordinate": row.coordinate,
            "analytic": row.analytic,
            "numeric": row.numeric,
            "rel_err": row.rel_err,
        }
        for row in report.rows
    ]
    header = {"status": report.status, "p95_rel_err": report.percentile_95, "tolerance": report.tolerance}
    _record_output(write_table(args.out, "gradcheck", GRADCHECK_COLUMNS, rows, args.format, header))
    print(report.summary())
    return EXIT_NUMERICAL if report.status == "fail" else EXIT_OK


def cmd_filter_traj(args: argparse.Namespace) -> int:
    config = _load_config(args)
    seed = resolve_seed(args.seed, config)
    records = read_detections(args.detections)
    params = config.curation
    if args.window is not None:
        params = replace(params, window=args.window)
    canvas = next((record.canvas for record in records if record.canvas), DEFAULT_CANVAS)
    try:
        traj = curate_stream(records, args.frames, params, seed, canvas)
    except CurationRejection as e:
        print(f"rejected: {e.reason}: {e}", file=sys.stderr)
        return EXIT_VALIDATION
    _record_output(write_trajectory(args.out / "trajectory.json", traj))
    return EXIT_OK


def cmd_eval_miou(args: argparse.Namespace) -> int:
    controls = read_trajectory(args.trajectory)
    scores = per_frame_iou(controls, read_detections(args.detections))
    mean = float(scores.mean())
    rows = [{"frame": index, "iou": float(score)} for index, score in enumerate(scores)]
    if args.format == "csv":
        rows.append({"frame": "mean", "iou": mean})
    _record_output(write_table(args.out, "miou", MIOU_COLUMNS, rows, args.format, {"miou": mean}))
    print(f"miou {mean:.9g}")
    return EXIT_OK


def cmd_sweep(args: argparse.Namespace) -> int:
    config = _load_config(args)
    seed = resolve_seed(args.seed, config)
    values = parse_sweep_values(args.param, args.values)
    fixtures = offset_blob_suite(args.fixtures, args.frames, config.scene.offset, seed)
    spec = SweepSpec(
        parameter=args.param,
        values=values,
        fixtures=tuple(fixtures),
        seed=seed,
        backbone=config.backbone_spec(seed),
        weights=config.loss_weights(),
        loop=config.loop,
        edit_params=config.edit,
        mask_params=config.mask,
    )
    rows = [row.as_row() for row in run_sweep(spec)]
    header = {"parameter": args.param, "fixtures": len(fixtures), "seed": seed}
    _record_output(write_table(args.out, "sweep", SWEEP_COLUMNS, rows, args.format, header))
    return EXIT_OK


# ============================================================================
# Parser and dispatch
# ============================================================================

def _positive_int(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text}")
    return value


def build_parser() -> argparse.ArgumentParser:
    common = BoxTrajArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="run configuration (YAML)")
    common.add_argument("--seed", type=int, help="run seed (default: BOXTRAJ_SEED, then loop.seed)")
    common.add_argument("--out", type=Path, default=Path("."), help="output directory")
    common.add_argument("--format", choices=("csv", "json"), default="csv", help="table format")
    common.add_argument("--threads", type=_positive_int, help="torch intra-op threads")
    common.add_argument(
        "--allow-paper-overrides",
        action="store_true",
        help="accept config files that change published defaults",
    )
    common.add_argument("-v", "--verbose", action="count", default=0, help="-v info, -vv debug")

    parser = BoxTrajArgumentParser(
        prog="boxtraj",
        description="Box-trajectory optimization by differentiable attention editing",
    )
    commands = parser.add_subparsers(dest="command", metavar="COMMAND", required=True)

    render = commands.add_parser("render-masks", parents=[common], help="export masks of frame 0")
    render.set_defaults(handler=cmd_render_masks)

    edit = commands.add_parser("edit", parents=[common], help="run the stack with one edit mode")
    edit.add_argument(
        "--mode", choices=[mode.value for mode in EditMode], default=EditMode.DIFFERENTIABLE.value
    )
    edit.set_defaults(handler=cmd_edit)

    optimize = commands.add_parser("optimize", parents=[common], help="optimize the trajectory")
    optimize.add_argument("--dump-every", type=_positive_int, help="dump A[1] every N iterations")
    optimize.set_defaults(handler=cmd_optimize)

    check = commands.add_parser("gradcheck", parents=[common], help="compare against finite differences")
    check.add_argument("--trials", type=_positive_int, default=100)
    check.add_argument("--tolerance", type=float, default=1e-3)
    check.add_argument("--frames", type=_positive_int, default=2)
    check.add_argument(
        "--mode",
        choices=[EditMode.DIFFERENTIABLE.value, EditMode.BASELINE.value],
        default=EditMode.DIFFERENTIABLE.value,
    )
    check.set_defaults(handler=cmd_gradcheck)

    filter_traj = commands.add_parser("filter-traj", parents=[common], help="curate a detection stream")
    filter_traj.add_argument("--detections", type=Path, required=True)
    filter_traj.add_argument("--frames", type=_positive_int, required=True)
    filter_traj.add_argument("--window", type=_positive_int)
    filter_traj.set_defaults(handler=cmd_filter_traj)

    miou = commands.add_parser("eval-miou", parents=[common], help="closest-match mIoU")
    miou.add_argument("--trajectory", type=Path, required=True)
    miou.add_argument("--detections", type=Path, required=True)
    miou.set_defaults(handler=cmd_eval_miou)

    sweep = commands.add_parser("sweep", parents=[common], help="ablation sweep over fixtures")
    sweep.add_argument("--param", choices=SWEEP_PARAMETERS, required=True)
    sweep.add_argument("--values", required=True, help="comma-separated ladder")
    sweep.add_argument("--fixtures", type=_positive_int, default=5)
    sweep.add_argument("--frames", type=_positive_int, default=24)
    sweep.set_defaults(handler=cmd_sweep)

    return parser


def cli_dispatch(argv: Sequence[str] | None = None) -> int:
    """Parse `argv`, run the subcommand and map failures to exit codes."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_OK if e.code is None else int(e.code)

    configure_logging(args.verbose)
    if args.threads:
        torch.set_num_threads(args.threads)

    try:
        args.out.mkdir(parents=True, exist_ok=True)
        return args.handler(args)
    except NumericalError as e:
        print(f"numerical error: {e}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (ValidationError, ValueError, KeyError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_VALIDATION
    except OSError as e:
        print(f"I/O error: {e}", file=sys.stderr)
        return EXIT_VALIDATION
