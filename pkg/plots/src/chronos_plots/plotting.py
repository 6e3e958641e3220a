"""CSV parsing, slope fitting, and the two figure kinds."""

from __future__ import annotations

import csv
import math

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np


class PlotDataError(Exception):
    """Raised for malformed or insufficient CSV input."""


def read_table(path) -> tuple[list[str], list[dict]]:
    try:
        with open(path, newline="") as fh:
            reader = csv.DictReader(fh)
            if reader.fieldnames is None:
                raise PlotDataError(f"{path}: empty CSV (no header row)")
            rows = list(reader)
    except OSError as exc:
        raise PlotDataError(f"cannot read {path}: {exc}")
    if not rows:
        raise PlotDataError(f"{path}: no data rows")
    return list(reader.fieldnames), rows


def _parse_float(rows, column):
    values = []
    for i, row in enumerate(rows):
        cell = row[column]
        try:
            values.append(float(cell))
        except (TypeError, ValueError):
            raise PlotDataError(
                f"non-numeric value {cell!r} in row {i + 2}, column {column!r}")
    return np.array(values)


def _row_ok(row) -> bool:
    return row.get("flag", "ok") == "ok"


def convergence_series(path) -> dict[str, tuple[np.ndarray, np.ndarray]]:
    """Series of (h, error) per method.

    Accepts the harness long format (columns method, h, error, and an
    optional flag column marking blow-up rows) or a wide format with an h
    column and one error column per method.  Flagged rows are excluded.
    """
    header, rows = read_table(path)
    if "h" not in header:
        raise PlotDataError(f"{path}: missing required column 'h'")
    series = {}
    if "method" in header and "error" in header:
        methods = []
        for row in rows:
            if row["method"] not in methods:
                methods.append(row["method"])
        for method in methods:
            mine = [r for r in rows if r["method"] == method and _row_ok(r)]
            h = _parse_float(mine, "h")
            err = _parse_float(mine, "error")
            series[method] = (h, err)
    else:
        clean = [r for r in rows if _row_ok(r)]
        h = _parse_float(clean, "h")
        skip = {"h", "order", "steps", "flag", "time_s"}
        error_columns = [c for c in header if c not in skip]
        if not error_columns:
            raise PlotDataError(f"{path}: no error columns beside 'h'")
        for column in error_columns:
            series[column] = (h, _parse_float(clean, column))
    if not series:
        raise PlotDataError(f"{path}: no usable series")
    return series


def work_precision_series(path) -> dict[str, tuple[np.ndarray, np.ndarray]]:
    """Series of (wall time, error) per method from the long harness format."""
    header, rows = read_table(path)
    for needed in ("method", "time_s", "error"):
        if needed not in header:
            raise PlotDataError(f"{path}: missing required column {needed!r}")
    series = {}
    methods = []
    for row in rows:
        if row["method"] not in methods:
            methods.append(row["method"])
    for method in methods:
        mine = [r for r in rows if r["method"] == method and _row_ok(r)]
        series[method] = (_parse_float(mine, "time_s"), _parse_float(mine, "error"))
    return series


def fit_slope(h, err, floor: float = 1e-14) -> float:
    """Least-squares log-log slope over finite points above the floor."""
    h = np.asarray(h, dtype=float)
    err = np.abs(np.asarray(err, dtype=float))
    mask = np.isfinite(err) & (err > floor) & np.isfinite(h) & (h > 0)
    if mask.sum() < 2:
        return float("nan")
    return float(np.polyfit(np.log(h[mask]), np.log(err[mask]), 1)[0])


def plot_convergence(csv_path, out_path, orders=None) -> dict[str, float]:
    """Log-log convergence plot with dashed order guide segments.

    Writes a PNG and returns (and prints) the fitted slope per series.
    """
    series = convergence_series(csv_path)
    fig, ax = plt.subplots(figsize=(6.0, 4.5))
    slopes = {}
    for name, (h, err) in series.items():
        slopes[name] = fit_slope(h, err)
        ax.loglog(h, np.abs(err), "o-", label=name, markersize=4)
    # dashed guide segments anchored at the lower-right of each series
    guide_orders = orders if orders else sorted(
        {round(s) for s in slopes.values() if math.isfinite(s) and s > 0})
    all_h = np.concatenate([h for h, _ in series.values()])
    h_lo, h_hi = np.min(all_h), np.min(all_h) * 4.0
    for i, order in enumerate(guide_orders):
        finite = [abs(e) for _, (hh, ee) in series.items()
                  for e in ee if np.isfinite(e) and e != 0]
        base = np.percentile(finite, 15) * (3.0 ** i)
        ax.loglog([h_lo, h_hi], [base, base * (h_hi / h_lo) ** order], "k--",
                  linewidth=0.8)
        ax.annotate(str(order), (h_hi, base * (h_hi / h_lo) ** order),
                    fontsize=8, ha="left")
    ax.set_xlabel("Step size h")
    ax.set_ylabel("Relative error")
    ax.legend(fontsize=8)
    ax.grid(True, which="both", alpha=0.25)
    fig.tight_layout()
    fig.savefig(out_path, dpi=150)
    plt.close(fig)
    for name, slope in slopes.items():
        print(f"{name}: fitted slope {slope:.2f}")
    return slopes


def plot_work_precision(csv_path, out_path) -> dict[str, int]:
    """Log-log wall-time vs error plot, one series per method; writes a PNG."""
    series = work_precision_series(csv_path)
    fig, ax = plt.subplots(figsize=(6.0, 4.5))
    counts = {}
    for name, (time_s, err) in series.items():
        counts[name] = len(time_s)
        ax.loglog(time_s, np.abs(err), "o-", label=name, markersize=4)
    ax.set_xlabel("Time (s)")
    ax.set_ylabel("Relative error")
    ax.legend(fontsize=8)
    ax.grid(True, which="both", alpha=0.25)
    fig.tight_layout()
    fig.savefig(out_path, dpi=150)
    plt.close(fig)
    for name, count in counts.items():
        print(f"{name}: {count} points")
    return counts
