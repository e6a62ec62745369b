"""Control-adherence metric, fixture scenes and the sweep harness."""
from boxtraj.evaluation.fixtures import Fixture, offset_blob_suite
from boxtraj.evaluation.metrics import corpus_miou, miou, per_frame_iou
from boxtraj.evaluation.sweep import SweepRow, SweepSpec, run_sweep

__all__ = [
    "Fixture",
    "offset_blob_suite",
    "corpus_miou",
    "miou",
    "per_frame_iou",
    "SweepRow",
    "SweepSpec",
    "run_sweep",
]
