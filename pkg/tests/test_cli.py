"""
Tests for the boxtraj command line.

Covers:
- Exit codes for usage, validation and numerical failures
- Each subcommand's output files on the quick fixture config
- Byte-identical reruns
"""
from __future__ import annotations

import json
from pathlib import Path

import pytest

from boxtraj.cli import EXIT_NUMERICAL, EXIT_OK, EXIT_VALIDATION, cli_dispatch
from boxtraj.errors import NonFiniteGradient
from boxtraj.optimization import loop as loop_module
from boxtraj.storage.field_file import read_field
from boxtraj.storage.formats import read_csv, read_trajectory
from boxtraj.storage.heatmap import read_heatmap

QUICK_CONFIG = Path(__file__).parent.parent / "fixtures" / "quick.yaml"


@pytest.fixture(autouse=True)
def no_env_seed(monkeypatch):
    """Keep BOXTRAJ_SEED from leaking into runs."""
    monkeypatch.delenv("BOXTRAJ_SEED", raising=False)


def write_jsonl(path: Path, records: list[dict]) -> Path:
    path.write_text("".join(json.dumps(record) + "\n" for record in records))
    return path


# ============================================================================
# Usage errors
# ============================================================================

class TestUsage:
    """Tests for argument handling."""

    def test_unknown_subcommand(self):
        """Unknown subcommands exit with the validation code."""
        assert cli_dispatch(["render"]) == EXIT_VALIDATION

    def test_missing_required(self, tmp_path):
        """Missing required options exit with the validation code."""
        assert cli_dispatch(["eval-miou", "--out", str(tmp_path)]) == EXIT_VALIDATION

    def test_help(self, capsys):
        """--help exits cleanly."""
        assert cli_dispatch(["--help"]) == EXIT_OK
        assert "optimize" in capsys.readouterr().out

    def test_bad_config(self, tmp_path):
        """Config errors exit with the validation code."""
        config = tmp_path / "bad.yaml"
        config.write_text("loss:\n  lambda_neg: 1.0\n")
        assert cli_dispatch(["render-masks", "--config", str(config), "--out", str(tmp_path)]) == EXIT_VALIDATION

    def test_numerical_error(self, tmp_path, monkeypatch):
        """An aborted optimization exits 2 and still writes the partial report."""
        real = loop_module.grad_total
        calls = {"count": 0}

        def flaky(state):
            calls["count"] += 1
            if calls["count"] == 4:
                raise NonFiniteGradient("nan in frame 1")
            return real(state)

        monkeypatch.setattr(loop_module, "grad_total", flaky)
        code = cli_dispatch(["optimize", "--config", str(QUICK_CONFIG), "--out", str(tmp_path)])
        assert code == EXIT_NUMERICAL
        assert len(read_csv(tmp_path / "report.csv")) == 3
        assert (tmp_path / "final_traj.json").exists()


# ============================================================================
# Subcommands
# ============================================================================

class TestSubcommands:
    """Tests for each subcommand on the quick config."""

    def test_render_masks(self, tmp_path):
        """One field and one heatmap per mask kind and layer."""
        code = cli_dispatch(["render-masks", "--config", str(QUICK_CONFIG), "--out", str(tmp_path)])
        assert code == EXIT_OK
        assert read_field(tmp_path / "mask_combined_16x16.afld").shape == (16, 16)
        assert read_heatmap(tmp_path / "mask_binary_4x4.pgm").shape == (4, 4)

    def test_edit(self, tmp_path):
        """Pre and post fields are written for every layer."""
        code = cli_dispatch(
            ["edit", "--config", str(QUICK_CONFIG), "--out", str(tmp_path), "--mode", "baseline"]
        )
        assert code == EXIT_OK
        for layer in range(3):
            assert (tmp_path / f"layer{layer}_pre.afld").exists()
            assert (tmp_path / f"layer{layer}_post.pgm").exists()
        assert read_field(tmp_path / "layer0_pre.afld").shape == (4, 2, 16, 16, 4)

    def test_optimize(self, tmp_path):
        """The default schedule writes 25 report rows and the final trajectory."""
        code = cli_dispatch(["optimize", "--config", str(QUICK_CONFIG), "--out", str(tmp_path)])
        assert code == EXIT_OK
        rows = read_csv(tmp_path / "report.csv")
        assert len(rows) == 25
        assert rows[0]["iteration"] == "1"
        final = read_trajectory(tmp_path / "final_traj.json")
        assert final.frame_count == 2
        assert final.canvas == (16, 16)

    def test_optimize_dumps(self, tmp_path):
        """--dump-every writes A[1] fields on schedule."""
        code = cli_dispatch(
            ["optimize", "--config", str(QUICK_CONFIG), "--out", str(tmp_path), "--dump-every", "10"]
        )
        assert code == EXIT_OK
        dumps = sorted(path.name for path in (tmp_path / "dumps").glob("*.afld"))
        assert dumps == ["iter010_a1.afld", "iter020_a1.afld"]

    def test_optimize_is_byte_identical(self, tmp_path):
        """Identical runs produce identical files."""
        for name in ("a", "b"):
            args = ["optimize", "--config", str(QUICK_CONFIG), "--out", str(tmp_path / name), "--seed", "3"]
            assert cli_dispatch(args) == EXIT_OK
        for name in ("report.csv", "final_traj.json"):
            assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()

    def test_optimize_json_report(self, tmp_path):
        """JSON reports carry the summary and rows."""
        code = cli_dispatch(
            ["optimize", "--config", str(QUICK_CONFIG), "--out", str(tmp_path), "--format", "json"]
        )
        assert code == EXIT_OK
        document = json.loads((tmp_path / "report.json").read_text())
        assert document["kind"] == "report"
        assert document["iterations"] == 25
        assert len(document["rows"]) == 25

    def test_gradcheck(self, tmp_path, capsys):
        """A few trials of the smooth edit pass at the default tolerance."""
        code = cli_dispatch(
            ["gradcheck", "--config", str(QUICK_CONFIG), "--out", str(tmp_path), "--trials", "3", "--format", "json"]
        )
        assert code == EXIT_OK
        document = json.loads((tmp_path / "gradcheck.json").read_text())
        assert document["status"] == "pass"
        assert len(document["rows"]) == 3 * 2 * 4
        assert "pass" in capsys.readouterr().out

    def test_gradcheck_baseline_expected_fail(self, tmp_path):
        """The hard edit reports expected-fail and still exits 0."""
        code = cli_dispatch(
            ["gradcheck", "--config", str(QUICK_CONFIG), "--out", str(tmp_path), "--trials", "2",
             "--mode", "baseline", "--format", "json"]
        )
        assert code == EXIT_OK
        assert json.loads((tmp_path / "gradcheck.json").read_text())["status"] == "expected-fail"

    def test_gradcheck_failure_exits_two(self, tmp_path):
        """A zero tolerance fails the check with the numerical code."""
        code = cli_dispatch(
            ["gradcheck", "--config", str(QUICK_CONFIG), "--out", str(tmp_path), "--trials", "2", "--tolerance", "0"]
        )
        assert code == EXIT_NUMERICAL

    def test_filter_traj_accepts(self, tmp_path):
        """A smooth stream is interpolated and cut to the window."""
        detections = write_jsonl(
            tmp_path / "d.jsonl",
            [
                {"frame": 0, "boxes": [[0.1, 0.2, 0.4, 0.5, 0.9]]},
                {"frame": 29, "boxes": [[0.3, 0.2, 0.6, 0.5, 0.8]]},
            ],
        )
        code = cli_dispatch(
            ["filter-traj", "--detections", str(detections), "--frames", "30", "--out", str(tmp_path)]
        )
        assert code == EXIT_OK
        assert read_trajectory(tmp_path / "trajectory.json").frame_count == 24

    def test_filter_traj_rejects(self, tmp_path, capsys):
        """Rejected streams exit 1 and name the reason."""
        detections = write_jsonl(tmp_path / "d.jsonl", [{"frame": 0, "boxes": [[0.1, 0.2, 0.4, 0.5, 0.9]]}])
        code = cli_dispatch(
            ["filter-traj", "--detections", str(detections), "--frames", "30", "--out", str(tmp_path)]
        )
        assert code == EXIT_VALIDATION
        assert "too_few_detections" in capsys.readouterr().err
        assert not (tmp_path / "trajectory.json").exists()

    def test_eval_miou(self, tmp_path, capsys):
        """Per-frame IoUs plus a mean row."""
        trajectory = tmp_path / "t.json"
        trajectory.write_text(json.dumps({"frames": [[0.0, 0.0, 0.5, 1.0], [0.0, 0.0, 0.5, 1.0]]}))
        detections = write_jsonl(tmp_path / "d.jsonl", [{"frame": 0, "boxes": [[0.0, 0.0, 0.4, 1.0, 0.5]]}])
        code = cli_dispatch(
            ["eval-miou", "--trajectory", str(trajectory), "--detections", str(detections), "--out", str(tmp_path)]
        )
        assert code == EXIT_OK
        rows = read_csv(tmp_path / "miou.csv")
        assert [row["frame"] for row in rows] == ["0", "1", "mean"]
        assert float(rows[0]["iou"]) == pytest.approx(0.8)
        assert float(rows[2]["iou"]) == pytest.approx(0.4)
        assert capsys.readouterr().out.strip() == "miou 0.4"

    def test_eval_miou_missing_file(self, tmp_path):
        """Unreadable inputs exit with the validation code."""
        code = cli_dispatch(
            ["eval-miou", "--trajectory", str(tmp_path / "none.json"),
             "--detections", str(tmp_path / "none.jsonl"), "--out", str(tmp_path)]
        )
        assert code == EXIT_VALIDATION

    def test_sweep(self, tmp_path):
        """One row per ladder value."""
        code = cli_dispatch(
            ["sweep", "--config", str(QUICK_CONFIG), "--out", str(tmp_path), "--param", "lambda_edge",
             "--values", "0.01,0.03", "--fixtures", "1", "--frames", "2"]
        )
        assert code == EXIT_OK
        rows = read_csv(tmp_path / "sweep.csv")
        assert [row["value"] for row in rows] == ["0.01", "0.03"]

    def test_sweep_bad_values(self, tmp_path):
        """Unparsable ladders exit with the validation code."""
        code = cli_dispatch(
            ["sweep", "--out", str(tmp_path), "--param", "lambda_neg", "--values", "1,x", "--fixtures", "1"]
        )
        assert code == EXIT_VALIDATION
