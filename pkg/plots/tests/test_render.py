"""Rendering tests against committed benchmark CLI outputs.

The fixtures under ``data/`` are verbatim ``trajectory.csv``/``summary.json``
outputs of the benchmark command (a 3-schedule dumbbell error run and a
complete-graph max-rating run).
"""

import shutil
from pathlib import Path

import pytest

from eloplots import PlotSpec, load_trajectories, render
from eloplots.cli import main

DATA = Path(__file__).parent / "data"


@pytest.fixture
def error_dir(tmp_path):
    d = tmp_path / "error"
    d.mkdir()
    shutil.copy(DATA / "error_trajectory.csv", d / "trajectory.csv")
    shutil.copy(DATA / "error_summary.json", d / "summary.json")
    return d


@pytest.fixture
def maxabs_dir(tmp_path):
    d = tmp_path / "maxabs"
    d.mkdir()
    shutil.copy(DATA / "maxabs_trajectory.csv", d / "trajectory.csv")
    shutil.copy(DATA / "maxabs_summary.json", d / "summary.json")
    return d


class TestLoadTrajectories:
    def test_series_grouped_by_metric_and_unit(self, error_dir):
        series = load_trajectories(error_dir)
        metrics = {m for _, m, _ in series}
        assert metrics == {
            "error:uniform", "error:design_seq", "error:design_par",
        }
        units = {u for _, m, u in series if m == "error:design_par"}
        assert units == {"games", "rounds"}

    def test_missing_column_rejected(self, tmp_path):
        bad = tmp_path / "bad"
        bad.mkdir()
        (bad / "trajectory.csv").write_text("replication,time,value\n0,1,2\n")
        with pytest.raises(ValueError, match="missing columns"):
            load_trajectories(bad)

    def test_empty_dir_rejected(self, tmp_path):
        with pytest.raises(ValueError, match="no CSV"):
            load_trajectories(tmp_path)


class TestErrorDecayFigure:
    def test_three_curves_on_games_axis(self, error_dir, tmp_path):
        out = tmp_path / "fig1.png"
        result = render(PlotSpec(error_dir, "error_decay", "games", out))
        assert out.exists() and out.stat().st_size > 5_000
        assert len(result.curve_labels) == 3
        assert result.x_label == "games"
        assert sorted(result.curve_labels) == [
            "design_par", "design_seq", "uniform",
        ]

    def test_both_units_add_rounds_curve(self, error_dir, tmp_path):
        result = render(
            PlotSpec(error_dir, "error_decay", "both", tmp_path / "fig.png")
        )
        # three schedules on the games axis plus the parallel rounds curve
        assert len(result.curve_labels) == 4
        assert "design_par [rounds]" in result.curve_labels
        assert result.x_label == "games / rounds"

    def test_single_replication_band_collapses(self, error_dir, tmp_path):
        text = (error_dir / "trajectory.csv").read_text().splitlines()
        header, rows = text[0], [r for r in text[1:] if r.startswith("0,")]
        solo = tmp_path / "solo"
        solo.mkdir()
        (solo / "trajectory.csv").write_text("\n".join([header] + rows) + "\n")
        result = render(
            PlotSpec(solo, "error_decay", "games", tmp_path / "solo.png")
        )
        assert result.path.exists()
        series = load_trajectories(solo)
        for s in series.values():
            _, mean, lo, hi = s.band()
            assert (lo == mean).all() and (hi == mean).all()

    def test_wrong_metric_dir_rejected(self, maxabs_dir, tmp_path):
        with pytest.raises(ValueError, match="no 'error' rows"):
            render(PlotSpec(maxabs_dir, "error_decay", "games", tmp_path / "x.png"))


class TestMaxRatingFigure:
    def test_reference_line_and_curves(self, maxabs_dir, tmp_path):
        out = tmp_path / "fig3.png"
        result = render(PlotSpec(maxabs_dir, "max_rating", "games", out))
        assert out.exists() and out.stat().st_size > 5_000
        assert result.curve_labels == ("uniform",)
        assert result.y_label == "largest absolute rating"

    def test_multiple_files_overlay(self, maxabs_dir, tmp_path):
        shutil.copy(
            maxabs_dir / "trajectory.csv", maxabs_dir / "trajectory_b.csv"
        )
        result = render(
            PlotSpec(maxabs_dir, "max_rating", "games", tmp_path / "multi.png")
        )
        assert len(result.curve_labels) == 2
        assert all(":" in label for label in result.curve_labels)


class TestCli:
    def test_end_to_end(self, error_dir, tmp_path, capsys):
        out = tmp_path / "cli.png"
        rc = main(["--in", str(error_dir), "--fig", "error", "--unit", "both",
                   "--out", str(out)])
        assert rc == 0
        assert out.exists()
        assert "4 curves" in capsys.readouterr().out

    def test_maxabs_alias(self, maxabs_dir, tmp_path):
        out = tmp_path / "cli2.png"
        rc = main(["--in", str(maxabs_dir), "--fig", "maxabs", "--out", str(out)])
        assert rc == 0
        assert out.exists()
