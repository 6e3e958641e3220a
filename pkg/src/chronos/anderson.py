"""Anderson-accelerated fixed-point solving with incrementally updated QR factors.

The least-squares problem min ||f_k - dF gamma|| over the residual-difference
history is maintained through a thin QR factorization that is updated column
by column: modified Gram-Schmidt (with one reorthogonalization pass) on
insert, Givens downdates on removal.  Per-iteration damping and depth control
are exposed through user callbacks.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import diagnostics as diag
from .core import StateVector

__all__ = [
    "FixedPointProblem",
    "AndersonConfig",
    "AaWorkspace",
    "AaResult",
    "NonConvergenceError",
    "qr_insert",
    "qr_remove",
    "aa_gain_inputs",
    "fixed_point_solve",
]


@dataclass
class FixedPointProblem:
    """A fixed-point problem G(u) = u of the given dimension."""

    dimension: int
    G: Callable[[StateVector], StateVector]

    def apply(self, u: StateVector) -> StateVector:
        out = np.asarray(self.G(u), dtype=float)
        if out.shape != (self.dimension,):
            raise diag.default_context().fail(
                diag.ERR_DIMENSION_MISMATCH, "G output dimension mismatch",
                "FixedPointProblem", "anderson")
        return out


@dataclass
class AndersonConfig:
    """Solver options: window depth, delay, damping, callbacks, stopping rule.

    ``damping`` is either a fixed factor in (0, 1] or a callback
    (iter, u, g_val, qt_f, depth, user_data) -> factor, invoked once per
    accelerated iteration.  ``depth_fn`` is an optional callback
    (iter, u, g_val, f_val, df_history, R, depth, user_data)
    -> (new_depth, remove_flags) whose flagged history slots are removed via
    QR downdates.
    """

    max_depth: int = 3
    delay: int = 0
    damping: float | Callable = 1.0
    depth_fn: Callable | None = None
    max_iters: int = 100
    stop_tol: float = 1e-10
    user_data: object = None
    cond_limit: float = 1e14

    def __post_init__(self):
        if self.max_depth < 0 or self.delay < 0 or self.max_iters < 1:
            raise diag.default_context().fail(
                diag.ERR_INVALID_ARGUMENT, "invalid Anderson configuration",
                "AndersonConfig", "anderson")
        if not callable(self.damping) and not (0.0 < self.damping <= 1.0):
            raise diag.default_context().fail(
                diag.ERR_INVALID_ARGUMENT, "fixed damping must lie in (0, 1]",
                "AndersonConfig", "anderson")


class AaWorkspace:
    """Difference histories (dU, dG, dF) and the QR factors of dF."""

    def __init__(self, dimension: int, max_depth: int):
        self.dimension = dimension
        self.max_depth = max_depth
        self.du: list[np.ndarray] = []
        self.dg: list[np.ndarray] = []
        self.df: list[np.ndarray] = []
        self.Q = np.zeros((dimension, 0))
        self.R = np.zeros((0, 0))

    @property
    def depth(self) -> int:
        return self.Q.shape[1]

    def matrices(self):
        dU = np.column_stack(self.du) if self.du else np.zeros((self.dimension, 0))
        dG = np.column_stack(self.dg) if self.dg else np.zeros((self.dimension, 0))
        return dU, dG


def qr_insert(ws: AaWorkspace, du: np.ndarray, dg: np.ndarray) -> None:
    """Append a history column and extend the QR factors of dF = dG - dU.

    Uses modified Gram-Schmidt with a single reorthogonalization pass.
    """
    df = np.asarray(dg, dtype=float) - np.asarray(du, dtype=float)
    m = ws.depth
    v = df.copy()
    r_col = np.zeros(m + 1)
    for _ in range(2):  # MGS + one correction pass keeps Q orthonormal
        for j in range(m):
            proj = ws.Q[:, j] @ v
            r_col[j] += proj
            v -= proj * ws.Q[:, j]
    r_col[m] = np.linalg.norm(v)
    new_R = np.zeros((m + 1, m + 1))
    new_R[:m, :m] = ws.R
    new_R[:, m] = r_col
    if r_col[m] > 0.0:
        q_new = v / r_col[m]
    else:
        q_new = np.zeros(ws.dimension)
    ws.Q = np.column_stack([ws.Q, q_new])
    ws.R = new_R
    ws.du.append(np.array(du, dtype=float))
    ws.dg.append(np.array(dg, dtype=float))
    ws.df.append(df)


def qr_remove(ws: AaWorkspace, index: int) -> None:
    """Delete history column ``index`` and re-triangularize with Givens rotations."""
    m = ws.depth
    if not (0 <= index < m):
        raise diag.default_context().fail(
            diag.ERR_INVALID_ARGUMENT, f"column index {index} out of range (depth {m})",
            "qr_remove", "anderson")
    R = np.delete(ws.R, index, axis=1)
    Q = ws.Q.copy()
    for j in range(index, m - 1):
        a, b = R[j, j], R[j + 1, j]
        r = np.hypot(a, b)
        if r == 0.0:
            continue
        c, s = a / r, b / r
        rows = np.array([c * R[j, :] + s * R[j + 1, :],
                         -s * R[j, :] + c * R[j + 1, :]])
        R[j, :], R[j + 1, :] = rows
        cols = np.array([c * Q[:, j] + s * Q[:, j + 1],
                         -s * Q[:, j] + c * Q[:, j + 1]])
        Q[:, j], Q[:, j + 1] = cols
    ws.Q = Q[:, : m - 1]
    ws.R = R[: m - 1, :]
    del ws.du[index]
    del ws.dg[index]
    del ws.df[index]


def aa_gain_inputs(ws: AaWorkspace, f: np.ndarray) -> np.ndarray:
    """Q^T f: the projection coefficients of the residual onto the history span.

    The predicted post-acceleration residual satisfies
    ||f - dF gamma||^2 = ||f||^2 - ||Q^T f||^2.
    """
    return ws.Q.T @ np.asarray(f, dtype=float)


@dataclass
class AaResult:
    u: np.ndarray
    iterations: int
    residual_history: list[float]
    converged: bool
    beta_history: list[float]


class NonConvergenceError(diag.ChronosError):
    """Raised when max_iters is exceeded; carries the best iterate seen."""

    def __init__(self, err: diag.ErrCode, best: AaResult):
        super().__init__(err)
        self.best = best


def _solve_gamma(ws: AaWorkspace, qt_f: np.ndarray) -> np.ndarray:
    m = ws.depth
    if m == 0:
        return np.zeros(0)
    gamma = np.zeros(m)
    for i in range(m - 1, -1, -1):
        gamma[i] = (qt_f[i] - ws.R[i, i + 1:] @ gamma[i + 1:]) / ws.R[i, i]
    return gamma


def fixed_point_solve(problem: FixedPointProblem, u0: StateVector,
                      cfg: AndersonConfig) -> AaResult:
    """Iterate the (optionally Anderson-accelerated) damped fixed-point map.

    With residual f_k = G(u_k) - u_k and gamma minimizing ||f_k - dF gamma||,
    the damped update is
    u_{k+1} = beta*(G(u_k) - dG gamma) + (1-beta)*(u_k - dU gamma);
    depth 0 (or iterations within the delay window) reduces it to
    u_{k+1} = beta*G(u_k) + (1-beta)*u_k.  Stops when ||f_k||_2 <= stop_tol.
    """
    if cfg.max_depth > problem.dimension:
        warnings.warn("Anderson depth exceeds problem dimension; the history "
                      "will be rank deficient", stacklevel=2)
    ws = AaWorkspace(problem.dimension, cfg.max_depth)
    u = np.array(u0, dtype=float)
    u_prev = None
    g_prev = None
    residuals: list[float] = []
    betas: list[float] = []
    best_u = u.copy()
    best_rnorm = np.inf
    fixed_beta = None if callable(cfg.damping) else float(cfg.damping)

    for k in range(cfg.max_iters):
        g = problem.apply(u)
        f = g - u
        rnorm = float(np.linalg.norm(f))
        residuals.append(rnorm)
        if rnorm < best_rnorm:
            best_rnorm = rnorm
            best_u = u.copy()
        if rnorm <= cfg.stop_tol:
            return AaResult(u, k, residuals, True, betas)

        accelerate = cfg.max_depth > 0 and k >= max(1, cfg.delay)
        if accelerate:
            if ws.depth == cfg.max_depth:
                qr_remove(ws, 0)
            qr_insert(ws, u - u_prev, g - g_prev)
            # Rank-deficiency and conditioning safeguards: shed oldest columns.
            while ws.depth > 1 and abs(ws.R[-1, -1]) <= 1e-14 * max(
                    1.0, float(np.linalg.norm(ws.df[-1]))):
                qr_remove(ws, 0)
            while ws.depth > 1:
                diags = np.abs(np.diag(ws.R))
                if diags.max() <= cfg.cond_limit * max(diags.min(), 1e-300):
                    break
                qr_remove(ws, 0)
            if cfg.depth_fn is not None:
                new_depth, flags = cfg.depth_fn(k, u, g, f, list(ws.df),
                                                ws.R.copy(), ws.depth,
                                                cfg.user_data)
                flagged = [i for i, rm in enumerate(flags) if rm]
                if ws.depth - len(flagged) != new_depth:
                    raise diag.default_context().fail(
                        diag.ERR_CALLBACK_FAILURE,
                        "depth callback flags inconsistent with new_depth",
                        "fixed_point_solve", "anderson")
                for i in reversed(flagged):
                    qr_remove(ws, i)
            qt_f = aa_gain_inputs(ws, f)
            if fixed_beta is not None:
                beta = fixed_beta
            else:
                beta = float(cfg.damping(k, u, g, qt_f, ws.depth, cfg.user_data))
                if not (0.0 < beta <= 1.0):
                    raise diag.default_context().fail(
                        diag.ERR_CALLBACK_FAILURE,
                        f"damping callback returned {beta}, outside (0, 1]",
                        "fixed_point_solve", "anderson")
            gamma = _solve_gamma(ws, qt_f)
            dU, dG = ws.matrices()
            u_next = beta * (g - dG @ gamma) + (1.0 - beta) * (u - dU @ gamma)
        else:
            beta = fixed_beta if fixed_beta is not None else 1.0
            u_next = beta * g + (1.0 - beta) * u

        betas.append(beta)
        u_prev = u
        g_prev = g
        u = u_next

    err = diag.ErrCode(diag.ERR_MAX_ITERS,
                       f"no convergence within {cfg.max_iters} iterations "
                       f"(best residual {best_rnorm:.3e})",
                       "fixed_point_solve", "anderson")
    diag.default_context().record(err)
    raise NonConvergenceError(err, AaResult(best_u, cfg.max_iters, residuals,
                                            False, betas))
