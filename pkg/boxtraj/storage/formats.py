"""
Text formats: trajectory JSON, detection JSONL, CSV tables and JSON reports.

Floats are written with 9 significant digits, CSV rows end in '\\n' and JSON
keys are sorted, so identical runs produce identical bytes.
"""

from __future__ import annotations

import csv
import io
import json
from collections.abc import Iterable, Mapping, Sequence
from pathlib import Path
from typing import Any

from boxtraj.errors import InvalidBox, InvalidDetectionStream
from boxtraj.geometry.box import DEFAULT_CANVAS, BoxParams, DetectionRecord, Trajectory

FORMAT_VERSION = 1


def format_float(value: float) -> str:
    return f"{value:.9g}"


def _format_cell(value: Any) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return format_float(value)
    if value is None:
        return ""
    return str(value)


def _rounded(value: Any) -> Any:
    if isinstance(value, bool) or value is None:
        return value
    if isinstance(value, float):
        return float(format_float(value))
    if isinstance(value, Mapping):
        return {str(key): _rounded(item) for key, item in value.items()}
    if isinstance(value, (list, tuple)):
        return [_rounded(item) for item in value]
    if hasattr(value, "item"):
        return _rounded(value.item())
    return value


def _dump_json(payload: Any) -> str:
    return json.dumps(_rounded(payload), indent=2, sort_keys=True) + "\n"


# ============================================================================
# Trajectories
# ============================================================================

def trajectory_to_dict(traj: Trajectory) -> dict:
    return {
        "canvas": list(traj.canvas),
        "frames": [list(box.as_tuple()) for box in traj],
    }


def trajectory_from_dict(data: Mapping) -> Trajectory:
    """
    Raises:
        InvalidBox: missing keys, malformed frames or invalid boxes
    """
    if not isinstance(data, Mapping) or "frames" not in data:
        raise InvalidBox("Trajectory JSON needs a 'frames' list")
    canvas = data.get("canvas", DEFAULT_CANVAS)
    if not isinstance(canvas, Sequence) or len(canvas) != 2:
        raise InvalidBox(f"Trajectory canvas must be [W, H], got {canvas!r}")
    frames = data["frames"]
    if not isinstance(frames, Sequence) or any(
        not isinstance(frame, Sequence) or len(frame) != 4 for frame in frames
    ):
        raise InvalidBox("Trajectory frames must be [l, t, r, b] lists")
    try:
        boxes = tuple(BoxParams.from_sequence([float(v) for v in frame]) for frame in frames)
    except (TypeError, ValueError) as e:
        raise InvalidBox(f"Non-numeric box coordinate: {e}") from None
    return Trajectory(boxes, (int(canvas[0]), int(canvas[1])))


def write_trajectory(path: Path, traj: Trajectory) -> Path:
    path = Path(path)
    path.write_text(_dump_json(trajectory_to_dict(traj)), encoding="utf-8")
    return path


def read_trajectory(path: Path) -> Trajectory:
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise InvalidBox(f"{path}: not valid JSON ({e})") from None
    return trajectory_from_dict(data)


# ============================================================================
# Detection records
# ============================================================================

def detection_from_dict(data: Mapping, line: int = 0) -> DetectionRecord:
    """
    Parse one detection object. With a "canvas": [W, H] entry the box
    coordinates are pixels and get normalized here.

    Raises:
        InvalidDetectionStream: malformed entry
    """
    where = f"line {line}" if line else "detection"
    if not isinstance(data, Mapping) or "frame" not in data:
        raise InvalidDetectionStream(f"{where}: expected an object with a 'frame' key")
    canvas = data.get("canvas")
    scale_x = scale_y = 1.0
    if canvas is not None:
        if not isinstance(canvas, Sequence) or len(canvas) != 2 or min(canvas) <= 0:
            raise InvalidDetectionStream(f"{where}: canvas must be [W, H], got {canvas!r}")
        scale_x, scale_y = 1.0 / float(canvas[0]), 1.0 / float(canvas[1])

    boxes = []
    for entry in data.get("boxes", []):
        if not isinstance(entry, Sequence) or len(entry) != 5:
            raise InvalidDetectionStream(f"{where}: boxes must be [l, t, r, b, score]")
        try:
            l, t, r, b, score = (float(value) for value in entry)
        except (TypeError, ValueError):
            raise InvalidDetectionStream(f"{where}: non-numeric box {entry!r}") from None
        box = BoxParams(l * scale_x, t * scale_y, r * scale_x, b * scale_y)
        if not box.is_valid():
            raise InvalidDetectionStream(f"{where}: invalid box {entry!r}")
        boxes.append((box, score))
    try:
        frame = int(data["frame"])
    except (TypeError, ValueError):
        raise InvalidDetectionStream(f"{where}: frame must be an integer") from None
    return DetectionRecord(
        frame_index=frame,
        boxes=tuple(boxes),
        canvas=None if canvas is None else (int(canvas[0]), int(canvas[1])),
    )


def read_detections(path: Path) -> list[DetectionRecord]:
    records = []
    with open(path, "r", encoding="utf-8") as f:
        for number, line in enumerate(f, start=1):
            if not line.strip():
                continue
            try:
                data = json.loads(line)
            except json.JSONDecodeError as e:
                raise InvalidDetectionStream(f"line {number}: not valid JSON ({e})") from None
            records.append(detection_from_dict(data, number))
    return records


def write_detections(path: Path, records: Iterable[DetectionRecord]) -> Path:
    """Write normalized detections, one JSON object per line."""
    lines = []
    for record in records:
        payload = {
            "frame": record.frame_index,
            "boxes": [[*box.as_tuple(), score] for box, score in record.boxes],
        }
        lines.append(json.dumps(_rounded(payload), sort_keys=True))
    path = Path(path)
    path.write_text("".join(line + "\n" for line in lines), encoding="utf-8")
    return path


# ============================================================================
# Tables and reports
# ============================================================================

def render_csv(columns: Sequence[str], rows: Iterable[Mapping[str, Any]]) -> str:
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        writer.writerow([_format_cell(row.get(column)) for column in columns])
    return buffer.getvalue()


def write_csv(path: Path, columns: Sequence[str], rows: Iterable[Mapping[str, Any]]) -> Path:
    path = Path(path)
    path.write_text(render_csv(columns, rows), encoding="utf-8", newline="")
    return path


def read_csv(path: Path) -> list[dict[str, str]]:
    with open(path, "r", encoding="utf-8", newline="") as f:
        return list(csv.DictReader(f))


def write_json_report(path: Path, kind: str, payload: Mapping[str, Any]) -> Path:
    """Versioned JSON report: {"format_version", "kind", **payload}."""
    document = {"format_version": FORMAT_VERSION, "kind": kind, **payload}
    path = Path(path)
    path.write_text(_dump_json(document), encoding="utf-8")
    return path


def write_table(
    out_dir: Path,
    stem: str,
    columns: Sequence[str],
    rows: Sequence[Mapping[str, Any]],
    output_format: str = "csv",
    header: Mapping[str, Any] | None = None,
) -> Path:
    """Write `rows` as <stem>.csv or as a <stem>.json report with the header."""
    out_dir = Path(out_dir)
    if output_format == "json":
        payload = {**(header or {}), "columns": list(columns), "rows": list(rows)}
        return write_json_report(out_dir / f"{stem}.json", stem, payload)
    if output_format != "csv":
        raise ValueError(f"Unknown output format {output_format!r}")
    return write_csv(out_dir / f"{stem}.csv", columns, rows)
