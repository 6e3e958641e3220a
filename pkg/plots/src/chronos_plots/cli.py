"""Command-line entry points for the figure renderers."""

from __future__ import annotations

import argparse
import sys

from .plotting import PlotDataError, plot_convergence, plot_work_precision


def _int_list(text: str) -> list[int]:
    return [int(tok) for tok in text.split(",") if tok]


def main_convergence(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="plot-convergence",
        description="Log-log convergence figure with order guide lines from a "
                    "harness CSV; prints fitted slopes.")
    parser.add_argument("--csv", required=True)
    parser.add_argument("--out", default="convergence.png")
    parser.add_argument("--orders", type=_int_list, default=None,
                        help="comma-separated guide-line orders")
    args = parser.parse_args(argv)
    try:
        plot_convergence(args.csv, args.out, orders=args.orders)
    except PlotDataError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(f"wrote {args.out}")
    return 0


def main_work_precision(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="plot-work-precision",
        description="Log-log wall-time vs error figure from a harness CSV.")
    parser.add_argument("--csv", required=True)
    parser.add_argument("--out", default="work_precision.png")
    args = parser.parse_args(argv)
    try:
        plot_work_precision(args.csv, args.out)
    except PlotDataError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(f"wrote {args.out}")
    return 0


if __name__ == "__main__":
    sys.exit(main_convergence())
