"""Command line entry: render benchmark figures from CSV output directories."""

from __future__ import annotations

import argparse

from .figures import PlotSpec, render

_FIG_ALIASES = {"error": "error_decay", "maxabs": "max_rating"}


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="plots", description="render benchmark trajectory figures"
    )
    parser.add_argument("--in", dest="input_dir", required=True,
                        help="directory holding trajectory CSV files")
    parser.add_argument("--fig", choices=sorted(_FIG_ALIASES), required=True)
    parser.add_argument("--unit", choices=["games", "rounds", "both"],
                        default="games")
    parser.add_argument("--out", required=True, help="output image path")
    args = parser.parse_args(argv)
    spec = PlotSpec(args.input_dir, _FIG_ALIASES[args.fig], args.unit, args.out)
    result = render(spec)
    print(f"wrote {result.path} ({len(result.curve_labels)} curves)")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
