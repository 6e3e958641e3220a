"""Low-storage Runge-Kutta: SSP families of orders 2-4 and RKC/RKL super time stepping.

The super-time-stepping methods run a three-term recurrence that holds only
z_{j-1}, z_{j-2}, z_0, and f(t_{n-1}, z_0) simultaneously; the SSP methods keep
at most two stage states live at a time.  Work-vector allocations are counted
so tests can assert storage is independent of the stage count.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable

import numpy as np

from . import diagnostics as diag
from .core import (EvolveResult, OdeSystem, StateVector, StepAttempt, StepController,
                   ToleranceSpec, evolve_adaptive)
from .erk import ButcherTable

__all__ = [
    "StsConfig",
    "SspConfig",
    "StageLimitExceeded",
    "nominal_extent",
    "select_stage_count",
    "sts_step",
    "ssp_step",
    "sts_evolve",
    "ssp_composite_table",
    "work_vector_allocations",
]

# Default stage safety factors.  The nominal RKC extent 0.81*s^2 used for stage
# selection exceeds the classical coefficients' true stability interval
# (~0.653*s^2), so the RKC default safety covers the gap; the RKL extent
# formula is tight, so a small safety suffices.
_DEFAULT_STAGE_SAFETY = {"RKC": 1.30, "RKL": 1.01}

_work_allocs = 0


def work_vector_allocations() -> int:
    """Running count of state-sized work vectors allocated by the step routines."""
    return _work_allocs


def _work_copy(x: np.ndarray) -> np.ndarray:
    global _work_allocs
    _work_allocs += 1
    return np.array(x, dtype=float)


def _work_empty(n: int) -> np.ndarray:
    global _work_allocs
    _work_allocs += 1
    return np.empty(n)


@dataclass
class StsConfig:
    """Configuration of a super-time-stepping (RKC/RKL) integration."""

    method: str = "RKC"
    rho_estimator: Callable[[float, StateVector], float] | None = None
    max_stages: int = 200
    stage_safety: float | None = None
    rho_recompute_period: int = 25

    def __post_init__(self):
        if self.method not in ("RKC", "RKL"):
            raise diag.default_context().fail(
                diag.ERR_INVALID_ARGUMENT, f"unknown STS method {self.method!r}",
                "StsConfig", "lsrk")
        if self.max_stages < 2:
            raise diag.default_context().fail(
                diag.ERR_INVALID_ARGUMENT, "max_stages must be >= 2", "StsConfig", "lsrk")
        if self.stage_safety is not None and self.stage_safety < 1.0:
            raise diag.default_context().fail(
                diag.ERR_INVALID_ARGUMENT, "stage_safety must be >= 1", "StsConfig", "lsrk")

    @property
    def resolved_stage_safety(self) -> float:
        if self.stage_safety is not None:
            return self.stage_safety
        return _DEFAULT_STAGE_SAFETY[self.method]


@dataclass
class SspConfig:
    """Selected SSP family and stage count.

    SSP2 admits any s >= 2, SSP3 requires s = k^2 with k >= 2, and SSP4 fixes
    s = 10.
    """

    family: str
    stage_count: int

    def __post_init__(self):
        fam, s = self.family, self.stage_count
        ok = ((fam == "SSP2" and s >= 2)
              or (fam == "SSP3" and s >= 4 and math.isqrt(s) ** 2 == s)
              or (fam == "SSP4" and s == 10))
        if not ok:
            raise diag.default_context().fail(
                diag.ERR_INVALID_ARGUMENT,
                f"invalid stage count {s} for family {fam}", "SspConfig", "lsrk")

    @property
    def order(self) -> int:
        return {"SSP2": 2, "SSP3": 3, "SSP4": 4}[self.family]


class StageLimitExceeded(diag.ChronosError):
    """Raised when the stability condition needs more than max_stages stages.

    Carries ``h_max``, the largest step the stage budget can stabilize; the
    caller is expected to reduce the step and retry.
    """

    def __init__(self, err: diag.ErrCode, h_max: float):
        super().__init__(err)
        self.h_max = h_max


def nominal_extent(method: str, s: int) -> float:
    """Advertised negative-real-axis stability extent for s stages."""
    if method == "RKC":
        return 0.81 * s * s
    return (s * s + s - 2) / 2.0


def select_stage_count(cfg: StsConfig, h: float, rho: float) -> int:
    """Smallest s >= 2 with nominal_extent(s) >= stage_safety * h * rho."""
    need = cfg.resolved_stage_safety * h * rho
    if need <= nominal_extent(cfg.method, 2):
        return 2
    if cfg.method == "RKC":
        s = max(2, math.ceil(math.sqrt(need / 0.81)))
    else:
        s = max(2, math.ceil((-1.0 + math.sqrt(9.0 + 8.0 * need)) / 2.0))
    while nominal_extent(cfg.method, s) < need:
        s += 1
    while s > 2 and nominal_extent(cfg.method, s - 1) >= need:
        s -= 1
    if s > cfg.max_stages:
        h_max = nominal_extent(cfg.method, cfg.max_stages) / (cfg.resolved_stage_safety * rho)
        err = diag.ErrCode(diag.ERR_INVALID_ARGUMENT,
                           f"stability needs {s} stages > max_stages={cfg.max_stages}; "
                           "reduce step", "select_stage_count", "lsrk")
        diag.default_context().record(err)
        raise StageLimitExceeded(err, h_max)
    return s


# ---------------------------------------------------------------------------
# RKC / RKL recurrence coefficients
# ---------------------------------------------------------------------------


@lru_cache(maxsize=64)
def _sts_coefficients(method: str, s: int):
    """Arrays (mu, nu, mu_t, gam_t, c), indexed by stage 0..s, for one step."""
    mu = np.zeros(s + 1)
    nu = np.zeros(s + 1)
    mu_t = np.zeros(s + 1)
    gam_t = np.zeros(s + 1)
    c = np.zeros(s + 1)
    if method == "RKC":
        eps = 2.0 / 13.0
        w0 = 1.0 + eps / s ** 2
        T = np.zeros(s + 1)
        dT = np.zeros(s + 1)
        d2T = np.zeros(s + 1)
        T[0], T[1] = 1.0, w0
        dT[1] = 1.0
        for j in range(2, s + 1):
            T[j] = 2 * w0 * T[j - 1] - T[j - 2]
            dT[j] = 2 * T[j - 1] + 2 * w0 * dT[j - 1] - dT[j - 2]
            d2T[j] = 4 * dT[j - 1] + 2 * w0 * d2T[j - 1] - d2T[j - 2]
        w1 = dT[s] / d2T[s]
        b = np.zeros(s + 1)
        for j in range(2, s + 1):
            b[j] = d2T[j] / dT[j] ** 2
        b[0] = b[1] = b[2]
        a = 1.0 - b * T
        mu_t[1] = b[1] * w1
        for j in range(2, s + 1):
            mu[j] = 2 * b[j] * w0 / b[j - 1]
            nu[j] = -b[j] / b[j - 2]
            mu_t[j] = 2 * b[j] * w1 / b[j - 1]
            gam_t[j] = -a[j - 1] * mu_t[j]
            c[j] = (dT[s] / d2T[s]) * (d2T[j] / dT[j])
        # Stage 1 advances by exactly mu_t[1]*h, so that is its abscissa; an
        # inconsistent c[1] leaks an O(h^2 * rho) term into the error estimate
        # on stiff non-autonomous problems.
        c[1] = mu_t[1]
        c[s] = 1.0
    else:  # RKL
        b = np.zeros(s + 1)
        for j in range(2, s + 1):
            b[j] = (j * j + j - 2.0) / (2.0 * j * (j + 1.0))
        b[0] = b[1] = 1.0 / 3.0
        a = 1.0 - b
        w1 = 4.0 / (s * s + s - 2.0)
        mu_t[1] = b[1] * w1
        for j in range(2, s + 1):
            mu[j] = (2.0 * j - 1.0) / j * b[j] / b[j - 1]
            nu[j] = -(j - 1.0) / j * b[j] / b[j - 2]
            mu_t[j] = mu[j] * w1
            gam_t[j] = -a[j - 1] * mu_t[j]
        for j in range(2, s + 1):
            c[j] = (j * j + j - 2.0) / (s * s + s - 2.0)
        c[1] = mu_t[1]  # the exact stage-1 advance (the j-formula gives 0)
    return mu, nu, mu_t, gam_t, c


def sts_step(cfg: StsConfig, system: OdeSystem, t: float, y: StateVector, h: float,
             s: int):
    """One RKC/RKL step with s stages; returns (y_next, est).

    The recurrence keeps four state-sized vectors live (z_{j-1}, z_{j-2}, z_0,
    and f(t, z_0)) regardless of s.  The error estimate is
    (12 (y - y_next) + 6 h (f(t, y) + f(t + h, y_next))) / 15.
    """
    y_next, est, _ = _sts_step_fsal(cfg, system, t, y, h, s, None)
    return y_next, est


def _sts_step_fsal(cfg: StsConfig, system: OdeSystem, t, y, h, s, f0):
    """Step core; accepts a previously computed f(t, y) and returns the
    estimate's endpoint evaluation f(t + h, y_next) for reuse.

    Four state-sized work vectors stay live regardless of s; the stage update
    runs through a preallocated scratch so no per-stage temporaries are
    allocated (large-array temporaries are mmap-churn expensive).
    """
    mu, nu, mu_t, gam_t, c = _sts_coefficients(cfg.method, s)
    n = len(y)
    z0 = _work_copy(y)
    nfe = 0
    if f0 is None:
        f0 = system(t, z0)
        nfe += 1
    z_prev = _work_empty(n)  # z_{j-2}
    z_curr = _work_empty(n)  # z_{j-1}
    z_next = _work_empty(n)
    scratch = _work_empty(n)
    np.copyto(z_prev, z0)
    np.multiply(f0, h * mu_t[1], out=z_curr)
    z_curr += z0
    for j in range(2, s + 1):
        fj = system(t + c[j - 1] * h, z_curr)
        nfe += 1
        if not np.all(np.isfinite(fj)):
            raise diag.default_context().fail(
                diag.ERR_NOT_FINITE, f"non-finite stage derivative at stage {j}",
                "sts_step", "lsrk")
        np.multiply(z_curr, mu[j], out=z_next)
        np.multiply(z_prev, nu[j], out=scratch)
        z_next += scratch
        np.multiply(z0, 1.0 - mu[j] - nu[j], out=scratch)
        z_next += scratch
        np.multiply(fj, h * mu_t[j], out=scratch)
        z_next += scratch
        np.multiply(f0, h * gam_t[j], out=scratch)
        z_next += scratch
        z_prev, z_curr, z_next = z_curr, z_next, z_prev
    y_next = z_curr.copy()
    f_end = system(t + h, y_next)
    nfe += 1
    est = (12.0 * (z0 - y_next) + 6.0 * h * (f0 + f_end)) / 15.0
    return y_next, est, (f_end, nfe)


# ---------------------------------------------------------------------------
# SSP methods
# ---------------------------------------------------------------------------


class _Affine:
    """sigma * y0 + h * (d . stage derivatives); used to assemble Butcher forms."""

    __slots__ = ("sigma", "d")

    def __init__(self, sigma, d):
        self.sigma = sigma
        self.d = d

    def __add__(self, other):
        return _Affine(self.sigma + other.sigma, self.d + other.d)

    def scale(self, a):
        return _Affine(a * self.sigma, a * self.d)


class _TableBuilder:
    def __init__(self, s):
        self.s = s
        self.rows = []

    def y0(self):
        return _Affine(1.0, np.zeros(self.s))

    def feval(self, state):
        assert abs(state.sigma - 1.0) < 1e-12
        self.rows.append(state.d.copy())
        unit = np.zeros(self.s)
        unit[len(self.rows) - 1] = 1.0
        return _Affine(0.0, unit)


def _ssp_combination(s: int):
    """Index bookkeeping for SSP3(n^2): Euler run, snapshot, and combination."""
    n = math.isqrt(s)
    return {
        "n": n,
        "r": s - n,
        "istar": n * (n + 1) // 2,
        "snapshot": (n - 1) * (n - 2) // 2,
        "w1": n / (2.0 * n - 1.0),
        "w2": (n - 1.0) / (2.0 * n - 1.0),
    }


@lru_cache(maxsize=64)
def ssp_composite_table(family: str, s: int) -> ButcherTable:
    """Equivalent dense Butcher table of a low-storage SSP method (with embedding)."""
    cfg = SspConfig(family, s)
    B = _TableBuilder(s)
    if family == "SSP2":
        hr = 1.0 / (s - 1)
        x = B.y0()
        for _ in range(1, s):
            x = x + B.feval(x).scale(hr)
        last = B.feval(x).scale(hr)
        u = B.y0().scale(1.0 / s) + (x + last).scale((s - 1.0) / s)
        # Embedding: the chain of s-1 forward Euler substeps (first order).
        b_embed = np.full(s, 1.0 / (s - 1))
        b_embed[-1] = 0.0
    elif family == "SSP3":
        p = _ssp_combination(s)
        hr = 1.0 / p["r"]
        x = B.y0()
        keep = x if p["snapshot"] == 0 else None
        for i in range(1, s + 1):
            step = x + B.feval(x).scale(hr)
            x = keep.scale(p["w1"]) + step.scale(p["w2"]) if i == p["istar"] else step
            if i == p["snapshot"]:
                keep = x
        u = x
        # Embedding: explicit midpoint through the half-time chain stage.
        b_embed = np.zeros(s)
        b_embed[p["r"] // 2] = 1.0
    else:  # SSP4, s = 10
        q1 = B.y0()
        q2 = B.y0()
        for _ in range(5):
            q1 = q1 + B.feval(q1).scale(1.0 / 6.0)
        q2 = q2.scale(1.0 / 25.0) + q1.scale(9.0 / 25.0)
        q1 = q2.scale(15.0) + q1.scale(-5.0)
        for _ in range(4):
            q1 = q1 + B.feval(q1).scale(1.0 / 6.0)
        u = q2 + q1.scale(3.0 / 5.0) + B.feval(q1).scale(1.0 / 10.0)
        b_embed = _ssp4_embedding(np.array(B.rows), u.d)
    A = np.array(B.rows)
    b = u.d
    assert abs(u.sigma - 1.0) < 1e-12
    return ButcherTable(f"{family.lower()}-{s}", A, b, A.sum(axis=1),
                        order=cfg.order, b_embed=b_embed, embed_order=cfg.order - 1)


def _ssp4_embedding(A: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Order-3 companion weights: project the bushy order-4 tree direction onto
    the nullspace of the order-3 condition matrix and perturb b along it."""
    c = A.sum(axis=1)
    C = np.vstack([np.ones_like(c), c, c * c, A @ c])
    _, _, Vt = np.linalg.svd(C)
    null = Vt[4:].T
    v = c ** 3
    d = null @ (null.T @ v)
    d *= 0.05 / (d @ v)
    return b - d


def ssp_step(cfg: SspConfig, system: OdeSystem, t: float, y: StateVector, h: float):
    """One SSP step with at most two live stage registers; returns (y_next, est).

    The embedded estimate is accumulated on the fly as
    h * sum_i (b_i - b_embed_i) f(t + c_i h, z_i).
    """
    table = ssp_composite_table(cfg.family, cfg.stage_count)
    w = (table.b - table.b_embed) * h
    c = table.c
    s = cfg.stage_count
    est = _work_empty(len(y))
    est[:] = 0.0

    if cfg.family == "SSP2":
        hr = h / (s - 1)
        x = _work_copy(y)
        for i in range(s - 1):
            f = system(t + c[i] * h, x)
            est += w[i] * f
            x += hr * f
        f = system(t + c[s - 1] * h, x)
        est += w[s - 1] * f
        y_next = y / s + ((s - 1.0) / s) * (x + hr * f)
        return y_next, est

    if cfg.family == "SSP3":
        p = _ssp_combination(s)
        hr = h / p["r"]
        x = _work_copy(y)
        keep = _work_copy(x) if p["snapshot"] == 0 else None
        for i in range(1, s + 1):
            f = system(t + c[i - 1] * h, x)
            est += w[i - 1] * f
            if i == p["istar"]:
                x *= p["w2"]
                x += (p["w2"] * hr) * f
                x += p["w1"] * keep
            else:
                x += hr * f
            if i == p["snapshot"]:
                keep = _work_copy(x)
        return x, est

    # SSP4(10)
    q1 = _work_copy(y)
    q2 = _work_copy(y)
    stage = 0
    for _ in range(5):
        f = system(t + c[stage] * h, q1)
        est += w[stage] * f
        q1 += (h / 6.0) * f
        stage += 1
    q2 *= 1.0 / 25.0
    q2 += (9.0 / 25.0) * q1
    q1 *= -5.0
    q1 += 15.0 * q2
    for _ in range(4):
        f = system(t + c[stage] * h, q1)
        est += w[stage] * f
        q1 += (h / 6.0) * f
        stage += 1
    f = system(t + c[stage] * h, q1)
    est += w[stage] * f
    y_next = q2 + 0.6 * q1 + (h / 10.0) * f
    return y_next, est


# ---------------------------------------------------------------------------
# Adaptive driver with spectral-radius reuse
# ---------------------------------------------------------------------------


def sts_evolve(cfg: StsConfig, system: OdeSystem, tol: ToleranceSpec,
               t0: float, tf: float, y0: StateVector,
               controller: StepController | None = None,
               h0: float | None = None, logger=None,
               max_steps: int = 1_000_000) -> EvolveResult:
    """Adaptive RKC/RKL integration.

    The spectral-radius estimate is recomputed every ``rho_recompute_period``
    accepted steps and after every error-rejected step; the stage count is
    reselected each attempt.  Stats report rho evaluations, total and maximum
    stage counts.
    """
    if cfg.rho_estimator is None:
        raise diag.default_context().fail(
            diag.ERR_INVALID_ARGUMENT, "sts_evolve requires a rho_estimator",
            "sts_evolve", "lsrk")

    state = {"rho": 0.0, "stale": True, "since": 0,
             "rho_evals": 0, "stage_total": 0, "max_stages": 0,
             "f_cache": None}  # (t, f(t, y)) from the last estimate evaluation

    def attempt(t, y, h):
        if state["stale"] or state["since"] >= cfg.rho_recompute_period:
            state["rho"] = float(cfg.rho_estimator(t, y))
            state["rho_evals"] += 1
            state["since"] = 0
            state["stale"] = False
        try:
            s = select_stage_count(cfg, h, state["rho"])
        except StageLimitExceeded as exc:
            return StepAttempt(status="reduce",
                               h_suggest=min(0.9 * exc.h_max, 0.5 * h))
        # f(t, y) from the previous step's error estimate is still valid here
        # (after a rejection neither t nor y has changed).
        f0 = None
        if state["f_cache"] is not None and state["f_cache"][0] == t:
            f0 = state["f_cache"][1]
        y_next, est, (f_end, nfe) = _sts_step_fsal(cfg, system, t, y, h, s, f0)
        return StepAttempt(y_next=y_next, est=est, nfe=nfe,
                           info={"stages": s, "f_end": f_end, "t_end": t + h})

    def on_accept(t, y, h, est, result):
        state["since"] += 1
        s = result.info["stages"]
        state["stage_total"] += s
        state["max_stages"] = max(state["max_stages"], s)
        state["f_cache"] = (result.info["t_end"], result.info["f_end"])

    def on_reject(t, y, h, est, result):
        state["stale"] = True

    result = evolve_adaptive(attempt, t0, tf, y0, tol, order=2,
                             controller=controller, h0=h0, logger=logger,
                             scope="StsEvolve", max_steps=max_steps,
                             on_accept=on_accept, on_reject=on_reject)
    result.stats.extra.update(rho_evals=state["rho_evals"],
                              stage_total=state["stage_total"],
                              max_stage_count=state["max_stages"])
    return result
