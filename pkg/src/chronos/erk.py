"""Explicit Runge-Kutta core: Butcher tables, one-step map, embedded estimates."""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from . import diagnostics as diag
from .core import (EvolveResult, OdeSystem, StateVector, StepAttempt, StepController,
                   ToleranceSpec, evolve_adaptive)

__all__ = [
    "ButcherTable",
    "erk_step",
    "builtin_tables",
    "get_table",
    "order_condition_residuals",
    "verify_order",
    "erk_evolve",
    "erk_evolve_fixed",
]


@dataclass
class ButcherTable:
    """Coefficients (A, b, c) of an explicit method, optionally with an embedding.

    The matrix A must be strictly lower triangular and c must equal the row
    sums of A.  ``order`` is the classical order p of (A, b, c); ``embed_order``
    is the order of (A, b_embed, c) when an embedding is present.
    """

    name: str
    A: np.ndarray
    b: np.ndarray
    c: np.ndarray
    order: int
    b_embed: np.ndarray | None = None
    embed_order: int | None = None

    def __post_init__(self):
        self.A = np.asarray(self.A, dtype=float)
        self.b = np.asarray(self.b, dtype=float)
        self.c = np.asarray(self.c, dtype=float)
        if self.b_embed is not None:
            self.b_embed = np.asarray(self.b_embed, dtype=float)
        s = self.s
        if self.A.shape != (s, s) or self.c.shape != (s,):
            raise diag.default_context().fail(
                diag.ERR_DIMENSION_MISMATCH, "inconsistent table shapes",
                "ButcherTable", "erk")
        if np.any(np.abs(np.triu(self.A)) > 0):
            raise diag.default_context().fail(
                diag.ERR_INVALID_ARGUMENT, "A must be strictly lower triangular",
                "ButcherTable", "erk")
        if not np.allclose(self.A.sum(axis=1), self.c, rtol=0, atol=1e-14):
            raise diag.default_context().fail(
                diag.ERR_INVALID_ARGUMENT, "c must equal the row sums of A",
                "ButcherTable", "erk")

    @property
    def s(self) -> int:
        return len(self.b)


def erk_step(table: ButcherTable, system: OdeSystem, t: float, y: StateVector,
             h: float):
    """One explicit Runge-Kutta step.

    Returns ``(y_next, stages, est)`` where ``stages`` are the s internal stage
    states and ``est`` is the embedded error estimate
    h * sum_i (b_i - b_embed_i) f(t + c_i h, z_i), or None without an embedding.
    """
    A, b, c = table.A, table.b, table.c
    s = table.s
    k = np.empty((s, system.dimension))
    stages = []
    for i in range(s):
        z = y if i == 0 else y + h * (A[i, :i] @ k[:i])
        stages.append(z)
        k[i] = system(t + c[i] * h, z)
    y_next = y + h * (b @ k)
    est = None
    if table.b_embed is not None:
        est = h * ((b - table.b_embed) @ k)
    return y_next, stages, est


# ---------------------------------------------------------------------------
# Order conditions via rooted trees
# ---------------------------------------------------------------------------
# A tree is a tuple of child trees; () is the single node.  The elementary
# weight of a tree must equal 1/gamma(tree) for every tree up to the order.


@lru_cache(maxsize=None)
def _trees_up_to(max_order: int):
    by_order: dict[int, list[tuple]] = {1: [()]}
    for n in range(2, max_order + 1):
        pool = [(m, t) for m in range(1, n) for t in by_order[m]]
        found = set()

        def extend(remaining, start, children):
            if remaining == 0:
                found.add(tuple(sorted(children)))
                return
            for idx in range(start, len(pool)):
                m, t = pool[idx]
                if m > remaining:
                    continue
                extend(remaining - m, idx, children + [t])

        extend(n - 1, 0, [])
        by_order[n] = sorted(found)
    return by_order


def _tree_order(tree) -> int:
    return 1 + sum(_tree_order(child) for child in tree)


def _tree_density(tree) -> int:
    gamma = _tree_order(tree)
    for child in tree:
        gamma *= _tree_density(child)
    return gamma


def _tree_weight_vector(tree, A: np.ndarray) -> np.ndarray:
    phi = np.ones(A.shape[0])
    for child in tree:
        phi = phi * (A @ _tree_weight_vector(child, A))
    return phi


def order_condition_residuals(A, b, c, max_order: int) -> dict[int, float]:
    """Max |b . phi(t) - 1/gamma(t)| over the rooted trees of each order."""
    A = np.asarray(A, dtype=float)
    b = np.asarray(b, dtype=float)
    residuals = {}
    for order, trees in _trees_up_to(max_order).items():
        worst = 0.0
        for tree in trees:
            lhs = float(b @ _tree_weight_vector(tree, A))
            worst = max(worst, abs(lhs - 1.0 / _tree_density(tree)))
        residuals[order] = worst
    return residuals


def verify_order(table: ButcherTable, tol: float = 1e-12) -> bool:
    """True when (A, b, c) meets its stated order and the embedding meets its own."""
    res = order_condition_residuals(table.A, table.b, table.c, table.order)
    if any(r > tol for r in res.values()):
        return False
    if table.b_embed is not None:
        res = order_condition_residuals(table.A, table.b_embed, table.c,
                                        table.embed_order)
        if any(r > tol for r in res.values()):
            return False
    return True


# ---------------------------------------------------------------------------
# Built-in tables
# ---------------------------------------------------------------------------


def _build_tables() -> dict[str, ButcherTable]:
    tables = {}

    tables["euler"] = ButcherTable("euler", np.zeros((1, 1)), [1.0], [0.0], order=1)

    tables["heun2"] = ButcherTable(
        "heun2", [[0, 0], [1, 0]], [0.5, 0.5], [0.0, 1.0], order=2,
        b_embed=[1.0, 0.0], embed_order=1)

    # 3-stage order-2 pair with a first-order embedding (the adaptive
    # second-order baseline used in the work-precision experiment).
    tables["erk2-3stage"] = ButcherTable(
        "erk2-3stage",
        [[0, 0, 0], [0.5, 0, 0], [0, 1, 0]],
        [0.25, 0.5, 0.25],
        [0.0, 0.5, 1.0],
        order=2,
        b_embed=[0.5, 0.5, 0.0],
        embed_order=1)

    # Bogacki-Shampine 3(2).
    tables["bs3"] = ButcherTable(
        "bs3",
        [[0, 0, 0, 0],
         [1 / 2, 0, 0, 0],
         [0, 3 / 4, 0, 0],
         [2 / 9, 1 / 3, 4 / 9, 0]],
        [2 / 9, 1 / 3, 4 / 9, 0],
        [0, 1 / 2, 3 / 4, 1],
        order=3,
        b_embed=[7 / 24, 1 / 4, 1 / 3, 1 / 8],
        embed_order=2)

    # A second 3-stage third-order method with abscissae (0, 1, 3/4); its
    # leading error term is oriented differently from bs3's, which matters for
    # norm-projected error measurements.
    tables["erk33"] = ButcherTable(
        "erk33",
        [[0, 0, 0],
         [1, 0, 0],
         [9 / 16, 3 / 16, 0]],
        [5 / 18, -1 / 6, 8 / 9],
        [0, 1, 3 / 4],
        order=3)

    tables["rk4"] = ButcherTable(
        "rk4",
        [[0, 0, 0, 0],
         [1 / 2, 0, 0, 0],
         [0, 1 / 2, 0, 0],
         [0, 0, 1, 0]],
        [1 / 6, 1 / 3, 1 / 3, 1 / 6],
        [0, 1 / 2, 1 / 2, 1],
        order=4)

    # Dormand-Prince 5(4).
    tables["dopri5"] = ButcherTable(
        "dopri5",
        [[0, 0, 0, 0, 0, 0, 0],
         [1 / 5, 0, 0, 0, 0, 0, 0],
         [3 / 40, 9 / 40, 0, 0, 0, 0, 0],
         [44 / 45, -56 / 15, 32 / 9, 0, 0, 0, 0],
         [19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729, 0, 0, 0],
         [9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656, 0, 0],
         [35 / 384, 0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0]],
        [35 / 384, 0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0],
        [0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1, 1],
        order=5,
        b_embed=[5179 / 57600, 0, 7571 / 16695, 393 / 640, -92097 / 339200,
                 187 / 2100, 1 / 40],
        embed_order=4)

    # Cash-Karp 5(4).
    tables["cashkarp5"] = ButcherTable(
        "cashkarp5",
        [[0, 0, 0, 0, 0, 0],
         [1 / 5, 0, 0, 0, 0, 0],
         [3 / 40, 9 / 40, 0, 0, 0, 0],
         [3 / 10, -9 / 10, 6 / 5, 0, 0, 0],
         [-11 / 54, 5 / 2, -70 / 27, 35 / 27, 0, 0],
         [1631 / 55296, 175 / 512, 575 / 13824, 44275 / 110592, 253 / 4096, 0]],
        [37 / 378, 0, 250 / 621, 125 / 594, 0, 512 / 1771],
        [0, 1 / 5, 3 / 10, 3 / 5, 1, 7 / 8],
        order=5,
        b_embed=[2825 / 27648, 0, 18575 / 48384, 13525 / 55296, 277 / 14336, 1 / 4],
        embed_order=4)

    # Butcher's 7-stage order-6 method.
    tables["butcher6"] = ButcherTable(
        "butcher6",
        [[0, 0, 0, 0, 0, 0, 0],
         [1 / 2, 0, 0, 0, 0, 0, 0],
         [2 / 9, 4 / 9, 0, 0, 0, 0, 0],
         [7 / 36, 2 / 9, -1 / 12, 0, 0, 0, 0],
         [-35 / 144, -55 / 36, 35 / 48, 15 / 8, 0, 0, 0],
         [-1 / 360, -11 / 36, -1 / 8, 1 / 2, 1 / 10, 0, 0],
         [-41 / 260, 22 / 13, 43 / 156, -118 / 39, 32 / 195, 80 / 39, 0]],
        [13 / 200, 0, 11 / 40, 11 / 40, 4 / 25, 4 / 25, 13 / 200],
        [0, 1 / 2, 2 / 3, 1 / 3, 5 / 6, 1 / 6, 1],
        order=6)

    return tables


_TABLES = None


def builtin_tables() -> dict[str, ButcherTable]:
    """The named built-in tables (returns a fresh shallow copy of the registry)."""
    global _TABLES
    if _TABLES is None:
        _TABLES = _build_tables()
    return dict(_TABLES)


def get_table(name: str) -> ButcherTable:
    tables = builtin_tables()
    if name not in tables:
        raise diag.default_context().fail(
            diag.ERR_INVALID_ARGUMENT,
            f"unknown table {name!r}; available: {sorted(tables)}",
            "get_table", "erk")
    return tables[name]


# ---------------------------------------------------------------------------
# Drivers
# ---------------------------------------------------------------------------


def erk_evolve(table: ButcherTable, system: OdeSystem, tol: ToleranceSpec,
               t0: float, tf: float, y0: StateVector,
               controller: StepController | None = None,
               h0: float | None = None, logger=None,
               max_steps: int = 1_000_000) -> EvolveResult:
    """Adaptive embedded-pair integration of ``system`` from t0 to tf."""
    if table.b_embed is None:
        raise diag.default_context().fail(
            diag.ERR_INVALID_ARGUMENT,
            f"table {table.name!r} has no embedding; adaptive evolve needs one",
            "erk_evolve", "erk")

    def attempt(t, y, h):
        y_next, _, est = erk_step(table, system, t, y, h)
        return StepAttempt(y_next=y_next, est=est, nfe=table.s)

    return evolve_adaptive(attempt, t0, tf, y0, tol, order=table.embed_order,
                           controller=controller, h0=h0, logger=logger,
                           scope="ErkEvolve", max_steps=max_steps)


def erk_evolve_fixed(table: ButcherTable, system: OdeSystem, t0: float, tf: float,
                     y0: StateVector, n_steps: int) -> StateVector:
    """Fixed-step integration with n equal steps (no error control)."""
    h = (tf - t0) / n_steps
    y = np.asarray(y0, dtype=float).copy()
    for i in range(n_steps):
        y, _, _ = erk_step(table, system, t0 + i * h, y, h)
    return y
