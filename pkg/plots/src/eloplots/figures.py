"""Turn benchmark trajectory CSVs into error-decay and max-rating figures.

Input is the benchmark interface: one or more ``*.csv`` files with columns
``replication,time,unit,metric,value`` (plus an optional ``summary.json``
that is surfaced in the figure title).  Each metric/unit pair becomes one
curve: the mean over replications with a shaded 25-75 percentile band.
"""

from __future__ import annotations

import csv
import json
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

__all__ = ["PlotSpec", "RenderResult", "load_trajectories", "render"]

REQUIRED_COLUMNS = ("replication", "time", "unit", "metric", "value")

_FIGURE_METRIC = {"error_decay": "error", "max_rating": "maxabs"}


@dataclass(frozen=True)
class PlotSpec:
    """What to draw: input directory, figure kind, time unit, output path."""

    input_dir: str | Path
    figure: str  # "error_decay" or "max_rating"
    unit: str = "games"  # "games", "rounds" or "both"
    output: str | Path = "figure.png"

    def __post_init__(self) -> None:
        if self.figure not in _FIGURE_METRIC:
            raise ValueError(f"unknown figure kind {self.figure!r}")
        if self.unit not in ("games", "rounds", "both"):
            raise ValueError(f"unknown unit {self.unit!r}")


@dataclass(frozen=True)
class RenderResult:
    path: Path
    curve_labels: tuple[str, ...]
    x_label: str
    y_label: str


@dataclass
class Series:
    """All replications of one (metric, unit) pair of one CSV file."""

    by_replication: dict[int, list[tuple[float, float]]] = field(
        default_factory=lambda: defaultdict(list)
    )

    def band(self) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
        """Common time grid with mean and 25-75 percentiles across runs."""
        times = sorted({t for rows in self.by_replication.values() for t, _ in rows})
        grid = np.array(times)
        stacked = []
        for rows in self.by_replication.values():
            rows = sorted(rows)
            ts = np.array([t for t, _ in rows])
            vs = np.array([v for _, v in rows])
            stacked.append(np.interp(grid, ts, vs))
        mat = np.vstack(stacked)
        return (
            grid,
            mat.mean(axis=0),
            np.percentile(mat, 25, axis=0),
            np.percentile(mat, 75, axis=0),
        )


def load_trajectories(input_dir: str | Path) -> dict[tuple[str, str, str], Series]:
    """Parse every CSV in the directory into (file, metric, unit) series."""
    input_dir = Path(input_dir)
    paths = sorted(input_dir.glob("*.csv"))
    if not paths:
        raise ValueError(f"no CSV files in {input_dir}")
    series: dict[tuple[str, str, str], Series] = defaultdict(Series)
    for path in paths:
        with open(path, newline="") as fh:
            reader = csv.DictReader(fh)
            missing = [c for c in REQUIRED_COLUMNS if c not in (reader.fieldnames or ())]
            if missing:
                raise ValueError(f"{path}: missing columns {missing}")
            for row in reader:
                key = (path.stem, row["metric"], row["unit"])
                series[key].by_replication[int(row["replication"])].append(
                    (float(row["time"]), float(row["value"]))
                )
    return dict(series)


def _summary_note(input_dir: Path) -> str:
    summary = input_dir / "summary.json"
    if not summary.exists():
        return ""
    try:
        payload = json.loads(summary.read_text())
    except json.JSONDecodeError:
        return ""
    n = payload.get("n")
    return f" (n = {n})" if n is not None else ""


def render(spec: PlotSpec) -> RenderResult:
    """Draw the requested figure and write it to ``spec.output``."""
    input_dir = Path(spec.input_dir)
    series = load_trajectories(input_dir)
    prefix = _FIGURE_METRIC[spec.figure]
    units = ("games", "rounds") if spec.unit == "both" else (spec.unit,)
    multi_file = len({stem for stem, _, _ in series}) > 1

    selected = {
        key: s
        for key, s in series.items()
        if key[1].split(":")[0] == prefix and key[2] in units
    }
    if not selected:
        raise ValueError(
            f"no {prefix!r} rows with unit in {units} found under {input_dir}"
        )

    fig, ax = plt.subplots(figsize=(6.4, 4.2))
    labels = []
    for (stem, metric, unit), s in sorted(selected.items()):
        grid, mean, lo, hi = s.band()
        label = metric.split(":", 1)[1] if ":" in metric else metric
        if multi_file:
            label = f"{stem}:{label}"
        if spec.unit == "both":
            label = f"{label} [{unit}]"
        style = "--" if unit == "rounds" else "-"
        positive = grid > 0 if spec.figure == "error_decay" else slice(None)
        line, = ax.plot(grid[positive], mean[positive], style, label=label)
        ax.fill_between(
            grid[positive], lo[positive], hi[positive],
            alpha=0.25, color=line.get_color(), linewidth=0,
        )
        labels.append(label)

    if spec.figure == "error_decay":
        ax.set_xscale("log")
        ax.set_yscale("log")
        y_label = "mean squared error per player"
    else:
        ax.set_xscale("log")
        ax.axhline(1.75, color="black", linestyle=":", linewidth=1, label="1.75")
        y_label = "largest absolute rating"
    x_label = "games / rounds" if spec.unit == "both" else spec.unit
    ax.set_xlabel(x_label)
    ax.set_ylabel(y_label)
    ax.set_title(f"{spec.figure}{_summary_note(input_dir)}")
    ax.legend(fontsize=8)
    fig.tight_layout()
    out = Path(spec.output)
    out.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(out, dpi=150)
    plt.close(fig)
    return RenderResult(out, tuple(labels), x_label, y_label)
