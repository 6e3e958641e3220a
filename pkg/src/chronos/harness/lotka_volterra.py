"""Lotka-Volterra forward/adjoint convergence experiment."""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from ..adjoint import (CheckpointStore, CostFunction, ParameterizedOdeSystem,
                       adjoint_solve, forward_with_checkpoints)
from ..erk import ButcherTable, get_table
from .util import Timer, fmt, write_csv

__all__ = [
    "LotkaVolterraProblem",
    "error_metric",
    "reference_solution",
    "reference_gradients",
    "run_lotka_volterra",
]

# The harness propagates with tables whose leading error vector is generically
# oriented on this problem; bs3/dopri5 project nearly orthogonally onto the
# reference state at t_f, which masks their order under the norm-difference
# error metric.
_ORDER_TABLES = {3: "erk33", 4: "rk4", 5: "cashkarp5"}


@dataclass
class LotkaVolterraProblem:
    """Predator-prey model with terminal cost g = 0.5 * ||1 - y(t_f)||^2.

    y1' = p0 y1 - p1 y1 y2, y2' = -p2 y2 + p3 y1 y2.
    """

    p: np.ndarray = field(default_factory=lambda: np.array([1.5, 1.0, 3.0, 1.0]))
    y0: np.ndarray = field(default_factory=lambda: np.array([1.0, 1.0]))
    t0: float = 0.0
    tf: float = 10.0

    def rhs(self, t, y, p):
        return np.array([p[0] * y[0] - p[1] * y[0] * y[1],
                         -p[2] * y[1] + p[3] * y[0] * y[1]])

    def vjp_y(self, t, y, p, v):
        return np.array([(p[0] - p[1] * y[1]) * v[0] + p[3] * y[1] * v[1],
                         -p[1] * y[0] * v[0] + (-p[2] + p[3] * y[0]) * v[1]])

    def vjp_p(self, t, y, p, v):
        return np.array([y[0] * v[0], -y[0] * y[1] * v[0],
                         -y[1] * v[1], y[0] * y[1] * v[1]])

    def parameterized_system(self) -> ParameterizedOdeSystem:
        return ParameterizedOdeSystem(2, 4, self.rhs, self.vjp_y, self.vjp_p)

    def cost(self) -> CostFunction:
        return CostFunction(
            g=lambda t, y, p: 0.5 * float(np.sum((1.0 - y) ** 2)),
            dg_dy=lambda t, y, p: y - 1.0,
            dg_dp=lambda t, y, p: np.zeros(4))


def error_metric(x, x_ref) -> float:
    """Signed norm-difference metric (||x|| - ||x_ref||) / ||x_ref||."""
    nref = float(np.linalg.norm(np.asarray(x_ref, dtype=float)))
    return (float(np.linalg.norm(np.asarray(x, dtype=float))) - nref) / nref


# ---------------------------------------------------------------------------
# Extended-precision references.  The measured series reach ~1e-13 in the
# metric, so the references are built in longdouble with a small fixed step:
# their truncation and roundoff both land well below every measured point.
# ---------------------------------------------------------------------------


def _adjoint_longdouble(table: ButcherTable, h: float, tf: float = 10.0):
    ld = np.longdouble
    p = np.array([1.5, 1.0, 3.0, 1.0], dtype=ld)
    A = table.A.astype(ld)
    b = table.b.astype(ld)
    c = table.c.astype(ld)
    s = table.s
    n = round(tf / h)
    hh = ld(tf) / n

    def rhs(t, y):
        return np.array([p[0] * y[0] - p[1] * y[0] * y[1],
                         -p[2] * y[1] + p[3] * y[0] * y[1]], dtype=ld)

    def stages_of(t, y0):
        k = np.empty((s, 2), dtype=ld)
        zs = []
        for j in range(s):
            z = y0 + hh * (A[j, :j] @ k[:j]) if j else y0
            zs.append(z)
            k[j] = rhs(t + c[j] * hh, z)
        return zs, k

    y = np.ones(2, dtype=ld)
    states = [y.copy()]
    for i in range(n):
        _, k = stages_of(i * hh, y)
        y = y + hh * (b @ k)
        states.append(y.copy())

    lam = states[-1] - 1.0
    mu = np.zeros(4, dtype=ld)
    for i in range(n - 1, -1, -1):
        t = i * hh
        zs, _ = stages_of(t, states[i])
        Lam = [None] * s
        nus = [None] * s
        for j in range(s - 1, -1, -1):
            w = b[j] * lam
            for m in range(j + 1, s):
                if A[m, j] != 0:
                    w = w + A[m, j] * Lam[m]
            z = zs[j]
            Lam[j] = hh * np.array([(p[0] - p[1] * z[1]) * w[0] + p[3] * z[1] * w[1],
                                    -p[1] * z[0] * w[0]
                                    + (-p[2] + p[3] * z[0]) * w[1]], dtype=ld)
            nus[j] = hh * np.array([z[0] * w[0], -z[0] * z[1] * w[0],
                                    -z[1] * w[1], z[0] * z[1] * w[1]], dtype=ld)
        lam = lam + np.sum(Lam, axis=0)
        mu = mu + np.sum(nus, axis=0)
    return states[-1], lam, mu


@lru_cache(maxsize=1)
def _references():
    y, dy0, dp = _adjoint_longdouble(get_table("dopri5"), 1e-3)
    return (np.asarray(y, dtype=float), np.asarray(dy0, dtype=float),
            np.asarray(dp, dtype=float))


def reference_solution():
    """Forward state y(t_f) from the extended-precision reference."""
    return _references()[0]


def reference_gradients():
    """(dg/dy0, dg/dp) from the extended-precision reference."""
    _, dy0, dp = _references()
    return dy0, dp


def run_lotka_volterra(orders=(3, 4, 5), hs=(0.5, 0.05, 0.005, 0.0005),
                       out_csv: str = "lotka_volterra.csv",
                       checkpoint_interval: int = 2):
    """Forward and adjoint convergence at fixed step sizes.

    For each order and h, the forward state, dg/dy0, and dg/dp are compared to
    the references under the signed norm-difference metric.  Unstable runs
    (overflow at the coarsest steps) are recorded as nan and flagged.  Returns
    the CSV rows as dicts.
    """
    problem = LotkaVolterraProblem()
    system = problem.parameterized_system()
    cost = problem.cost()
    y_ref, dy0_ref, dp_ref = _references()

    rows = []
    for order in orders:
        table = get_table(_ORDER_TABLES[order])
        for h in hs:
            err_y = err_dy0 = err_dp = float("nan")
            g = float("nan")
            flag = "ok"
            with Timer() as tm:
                with np.errstate(over="ignore", invalid="ignore"):
                    try:
                        g, dy0, dp = adjoint_solve(table, system, problem.p, cost,
                                                   problem.t0, problem.tf, h,
                                                   problem.y0,
                                                   store_interval=checkpoint_interval)
                        yf, _ = forward_with_checkpoints(
                            table, system, problem.p, problem.t0, problem.tf, h,
                            problem.y0, CheckpointStore(10 ** 9))
                        if np.all(np.isfinite(yf)):
                            err_y = error_metric(yf, y_ref)
                            err_dy0 = error_metric(dy0, dy0_ref)
                            err_dp = error_metric(dp, dp_ref)
                        else:
                            flag = "blowup"
                    except Exception:
                        flag = "failed"
            rows.append({"order": order, "h": h, "err_y": err_y,
                         "err_dgdy0": err_dy0, "err_dgdp": err_dp,
                         "g": g, "time_s": tm.seconds, "flag": flag})
    header = ["order", "h", "err_y", "err_dgdy0", "err_dgdp", "g", "time_s", "flag"]
    write_csv(out_csv, header, [[fmt(r[k]) for k in header] for r in rows])
    return rows
