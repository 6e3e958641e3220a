"""Small shared helpers for the experiment drivers."""

from __future__ import annotations

import csv
import time

import numpy as np


def fit_loglog_slope(h, err, floor: float = 1e-13, ceiling: float = np.inf,
                     h_max: float = np.inf) -> float:
    """Least-squares slope of log(err) vs log(h) over the asymptotic window.

    Points are excluded when non-finite, below ``floor`` (reference-accuracy /
    roundoff flooring), above ``ceiling`` (pre-asymptotic blow-up), or coarser
    than ``h_max``.
    """
    h = np.asarray(h, dtype=float)
    err = np.abs(np.asarray(err, dtype=float))
    mask = np.isfinite(err) & (err > floor) & (err < ceiling) & (h <= h_max)
    if mask.sum() < 2:
        return float("nan")
    return float(np.polyfit(np.log(h[mask]), np.log(err[mask]), 1)[0])


def write_csv(path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow(row)


def fmt(value) -> str:
    """Full round-trip precision for floats; plain rendering otherwise."""
    if isinstance(value, float):
        return repr(value)
    return str(value)


class Timer:
    def __enter__(self):
        self.start = time.perf_counter()
        return self

    def __exit__(self, *exc):
        self.seconds = time.perf_counter() - self.start
        return False
