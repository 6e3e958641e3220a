"""Discrete adjoint sensitivity analysis for fixed-step explicit Runge-Kutta.

The forward sweep stores state snapshots at a fixed step interval; the
backward sweep regenerates missing step-start states from the nearest earlier
checkpoint and rebuilds each step's stages before applying the transposed
stage recurrences.  Gradients are exact for the discrete-time map (up to
roundoff), not approximations of the continuous adjoint ODE.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import diagnostics as diag
from .core import StateVector
from .erk import ButcherTable

__all__ = [
    "ParameterizedOdeSystem",
    "AdjointState",
    "CheckpointStore",
    "CostFunction",
    "forward_with_checkpoints",
    "adjoint_step",
    "adjoint_solve",
]


@dataclass
class ParameterizedOdeSystem:
    """Right-hand side f(t, y, p) with transposed Jacobian-vector products.

    ``vjp_y(t, y, p, v)`` returns (df/dy)^T v (length n) and
    ``vjp_p(t, y, p, v)`` returns (df/dp)^T v (length n_params).
    """

    dimension: int
    n_params: int
    rhs: Callable
    vjp_y: Callable
    vjp_p: Callable

    def f(self, t, y, p):
        out = np.asarray(self.rhs(t, y, p), dtype=float)
        if out.shape != (self.dimension,):
            raise diag.default_context().fail(
                diag.ERR_DIMENSION_MISMATCH, "rhs output dimension mismatch",
                "ParameterizedOdeSystem", "adjoint")
        return out

    def jt_y(self, t, y, p, v):
        out = np.asarray(self.vjp_y(t, y, p, v), dtype=float)
        if out.shape != (self.dimension,):
            raise diag.default_context().fail(
                diag.ERR_DIMENSION_MISMATCH, "vjp_y output dimension mismatch",
                "ParameterizedOdeSystem", "adjoint")
        return out

    def jt_p(self, t, y, p, v):
        out = np.asarray(self.vjp_p(t, y, p, v), dtype=float)
        if out.shape != (self.n_params,):
            raise diag.default_context().fail(
                diag.ERR_DIMENSION_MISMATCH, "vjp_p output dimension mismatch",
                "ParameterizedOdeSystem", "adjoint")
        return out


@dataclass
class AdjointState:
    """Adjoint variables: lambda (w.r.t. state) and mu (w.r.t. parameters)."""

    lam: np.ndarray
    mu: np.ndarray


@dataclass
class CostFunction:
    """Terminal cost g(t_f, y, p) with its gradients."""

    g: Callable
    dg_dy: Callable
    dg_dp: Callable


class CheckpointStore:
    """In-memory snapshots at a fixed step interval (plus step 0 and the final step)."""

    def __init__(self, interval: int):
        if interval < 1:
            raise diag.default_context().fail(
                diag.ERR_INVALID_ARGUMENT, "checkpoint interval must be >= 1",
                "CheckpointStore", "adjoint")
        self.interval = interval
        self._snapshots: dict[int, tuple[float, np.ndarray]] = {}

    def maybe_store(self, index: int, t: float, y: np.ndarray, final: bool = False):
        if index == 0 or final or index % self.interval == 0:
            self._snapshots[index] = (t, np.array(y))

    def has(self, index: int) -> bool:
        return index in self._snapshots

    def get(self, index: int) -> tuple[float, np.ndarray]:
        t, y = self._snapshots[index]
        return t, y

    @property
    def indices(self) -> list[int]:
        return sorted(self._snapshots)

    def __len__(self) -> int:
        return len(self._snapshots)


def _step_grid(t0: float, tf: float, h: float):
    """Step count and per-step sizes; the last step truncates onto tf."""
    span = tf - t0
    n = max(1, math.ceil(span / h - 1e-9))
    sizes = np.full(n, h)
    sizes[-1] = tf - (t0 + (n - 1) * h)
    return n, sizes


def _erk_step_param(table: ButcherTable, system: ParameterizedOdeSystem, p, t, y, h):
    """Forward step returning (y_next, stages); shared by both sweeps so the
    recomputed trajectory is bit-identical to the stored one."""
    A, b, c = table.A, table.b, table.c
    s = table.s
    k = np.empty((s, system.dimension))
    stages = []
    for i in range(s):
        z = y if i == 0 else y + h * (A[i, :i] @ k[:i])
        stages.append(z)
        k[i] = system.f(t + c[i] * h, z, p)
    return y + h * (b @ k), stages


def forward_with_checkpoints(table: ButcherTable, system: ParameterizedOdeSystem,
                             p, t0: float, tf: float, h: float, y0: StateVector,
                             store: CheckpointStore):
    """Fixed-step forward integration storing snapshots per the store's policy.

    Returns (y_final, n_steps).
    """
    n, sizes = _step_grid(t0, tf, h)
    y = np.array(y0, dtype=float)
    t = t0
    store.maybe_store(0, t, y)
    for i in range(n):
        y, _ = _erk_step_param(table, system, p, t, y, sizes[i])
        t = tf if i == n - 1 else t0 + (i + 1) * h
        store.maybe_store(i + 1, t, y, final=(i == n - 1))
    return y, n


def adjoint_step(table: ButcherTable, system: ParameterizedOdeSystem, p, t: float,
                 y_step_start: StateVector, lambda_in: StateVector,
                 mu_in: StateVector, h: float) -> AdjointState:
    """Transpose one forward step: propagate (lambda, mu) from t+h back to t.

    Stage states are regenerated from the step-start state; the stage adjoints
    are Lambda_i = h * vjp_y(t_i, z_i)^T (b_i lambda + sum_{j>i} a_{j,i} Lambda_j)
    and nu_i uses the same combination with the inner sum from j = i (equal for
    explicit tables since a_{i,i} = 0).
    """
    A, b, c = table.A, table.b, table.c
    s = table.s
    lam_in = np.asarray(lambda_in, dtype=float)
    _, stages = _erk_step_param(table, system, p, t, np.asarray(y_step_start, float), h)
    Lam = [None] * s
    nu = [None] * s
    for i in range(s - 1, -1, -1):
        w = b[i] * lam_in
        for j in range(i + 1, s):
            if A[j, i] != 0.0:
                w = w + A[j, i] * Lam[j]
        ti = t + c[i] * h
        Lam[i] = h * system.jt_y(ti, stages[i], p, w)
        w_p = b[i] * lam_in
        for j in range(i, s):
            if A[j, i] != 0.0:
                w_p = w_p + A[j, i] * Lam[j]
        nu[i] = h * system.jt_p(ti, stages[i], p, w_p)
    lam_out = lam_in + np.sum(Lam, axis=0)
    mu_out = np.asarray(mu_in, dtype=float) + np.sum(nu, axis=0)
    return AdjointState(lam=lam_out, mu=mu_out)


def adjoint_solve(table: ButcherTable, system: ParameterizedOdeSystem, p,
                  cost: CostFunction, t0: float, tf: float, h: float,
                  y0: StateVector, store_interval: int = 1):
    """Forward solve with checkpoints, then a backward adjoint sweep.

    Returns (g_value, dg_dy0, dg_dp): the cost at t_f and its exact discrete
    gradients with respect to the initial state and the parameters.
    """
    p = np.asarray(p, dtype=float)
    store = CheckpointStore(store_interval)
    y_final, n = forward_with_checkpoints(table, system, p, t0, tf, h, y0, store)
    _, sizes = _step_grid(t0, tf, h)
    g_value = float(cost.g(tf, y_final, p))
    lam = np.asarray(cost.dg_dy(tf, y_final, p), dtype=float)
    mu = np.asarray(cost.dg_dp(tf, y_final, p), dtype=float)

    # Backward sweep; un-checkpointed step-start states are recomputed from the
    # nearest earlier checkpoint, one segment at a time.
    segment: dict[int, tuple[float, np.ndarray]] = {}
    for i in range(n - 1, -1, -1):
        if store.has(i):
            t_i, y_i = store.get(i)
        else:
            if i not in segment:
                segment.clear()
                base = (i // store.interval) * store.interval
                t_b, y_b = store.get(base)
                y_run = y_b
                for j in range(base, i + 1):
                    segment[j] = (t0 + j * h, y_run)
                    y_run, _ = _erk_step_param(table, system, p, t0 + j * h,
                                               y_run, sizes[j])
            t_i, y_i = segment[i]
        adj = adjoint_step(table, system, p, t_i, y_i, lam, mu, sizes[i])
        lam, mu = adj.lam, adj.mu
    return g_value, lam, mu
