"""
Write the offset-blob fixture suite to a directory.

For every fixture scene this produces:
- <name>.traj.json: the user trajectory
- <name>.yaml: a run config that loads that trajectory
- <name>.detections.jsonl: planted detections, a jittered copy of each
  user box plus a higher-scoring distractor
"""

import argparse
import sys
from pathlib import Path

import numpy as np
import yaml

from boxtraj.evaluation.fixtures import offset_blob_suite
from boxtraj.geometry.box import BoxParams, DetectionRecord, project_box
from boxtraj.storage.formats import write_detections, write_trajectory

FIXTURE_LADDER = [[40, 40, 8], [20, 20, 8], [10, 10, 8], [5, 5, 8]]


def planted_detections(fixture, rng: np.random.Generator) -> list[DetectionRecord]:
    records = []
    for index, box in enumerate(fixture.trajectory):
        jitter = rng.normal(0.0, 0.01, size=4)
        near = project_box(np.array(box.as_tuple()) + jitter)
        far = project_box(BoxParams(0.7, 0.05, 0.95, 0.25))
        records.append(DetectionRecord(index, ((near, 0.6), (far, 0.9))))
    return records


def fixture_config(trajectory_file: str, offset: tuple[float, float]) -> dict:
    return {
        "trajectory": {"path": trajectory_file},
        "backbone": {"ladder": FIXTURE_LADDER},
        "scene": {"offset": list(offset)},
    }


def write_suite(out_dir: Path, scenes: int, frames: int, seed: int) -> list[Path]:
    out_dir.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)
    offset = (0.1, 0.0)
    written = []
    for fixture in offset_blob_suite(scenes, frames, offset, seed):
        traj_path = write_trajectory(out_dir / f"{fixture.name}.traj.json", fixture.trajectory)
        config_path = out_dir / f"{fixture.name}.yaml"
        config_path.write_text(
            yaml.safe_dump(fixture_config(traj_path.name, offset), sort_keys=False),
            encoding="utf-8",
        )
        detections_path = write_detections(
            out_dir / f"{fixture.name}.detections.jsonl", planted_detections(fixture, rng)
        )
        written.extend([traj_path, config_path, detections_path])
    return written


def main():
    """Main fixture generation function."""
    parser = argparse.ArgumentParser(description="Write the offset-blob fixture suite")
    parser.add_argument("--out", type=Path, default=Path("fixtures"))
    parser.add_argument("--scenes", type=int, default=5)
    parser.add_argument("--frames", type=int, default=24)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()

    try:
        written = write_suite(args.out, args.scenes, args.frames, args.seed)
    except (OSError, ValueError) as e:
        print(f"ERROR: {e}", file=sys.stderr)
        sys.exit(1)
    print(f"Wrote {len(written)} fixture files to {args.out}")


if __name__ == "__main__":
    main()
