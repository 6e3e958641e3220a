"""Gray-Scott reaction-diffusion experiments: splitting convergence and the
RKC vs second-order ERK work-precision comparison."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .. import diagnostics as diag
from ..core import OdeSystem, PartitionedOdeSystem, Stepper, ToleranceSpec
from ..erk import erk_evolve, get_table
from ..lsrk import StsConfig, sts_evolve
from ..splitting import default_methods, splitting_evolve, stepper_from_erk
from .util import Timer, fmt, write_csv

__all__ = [
    "GrayScottProblem",
    "exact_stepper_linear",
    "exact_stepper_riccati",
    "run_gray_scott_splitting",
    "run_gray_scott_lsrk",
]

# One explicit Runge-Kutta step of matching order handles the diffusion
# partition inside each splitting subintegration.
_ORDER_TABLES = {1: "euler", 2: "heun2", 3: "bs3", 4: "rk4", 6: "butcher6"}


@dataclass
class GrayScottProblem:
    """Periodic two-species reaction-diffusion system on [-1, 1]^2.

    The state is the u block followed by the v block, each an n*n row-major
    field.  The right-hand side splits into the u reaction (linear in u for
    frozen v), the v reaction (a Riccati equation for frozen u), and the
    diffusion of both species.
    """

    n: int = 64
    eps1: float = 2e-5
    eps2: float = 1e-5
    a: float = 0.04
    b: float = 0.06

    def __post_init__(self):
        self.dx = 2.0 / self.n
        coords = -1.0 + self.dx * np.arange(self.n)
        self.x, self.y = np.meshgrid(coords, coords, indexing="ij")

    @property
    def dimension(self) -> int:
        return 2 * self.n * self.n

    def initial_state(self) -> np.ndarray:
        u = 1.0 - np.exp(-80.0 * ((self.x + 0.05) ** 2 + (self.y + 0.02) ** 2))
        v = np.exp(-80.0 * ((self.x - 0.05) ** 2 + (self.y - 0.02) ** 2))
        return np.concatenate([u.ravel(), v.ravel()])

    def split(self, state: np.ndarray):
        m = self.n * self.n
        return state[:m], state[m:]

    def laplacian(self, field_flat: np.ndarray) -> np.ndarray:
        f = field_flat.reshape(self.n, self.n)
        lap = (np.roll(f, 1, 0) + np.roll(f, -1, 0) + np.roll(f, 1, 1)
               + np.roll(f, -1, 1) - 4.0 * f) / (self.dx * self.dx)
        return lap.ravel()

    # Partition right-hand sides, in the order (u reaction, v reaction, diffusion).
    def f1(self, t, state):
        u, v = self.split(state)
        du = -u * v * v + self.a * (1.0 - u)
        return np.concatenate([du, np.zeros_like(v)])

    def f2(self, t, state):
        u, v = self.split(state)
        dv = u * v * v - (self.a + self.b) * v
        return np.concatenate([np.zeros_like(u), dv])

    def f3(self, t, state):
        u, v = self.split(state)
        return np.concatenate([self.eps1 * self.laplacian(u),
                               self.eps2 * self.laplacian(v)])

    def total_rhs(self, t, state):
        return self.f1(t, state) + self.f2(t, state) + self.f3(t, state)

    def partitioned(self) -> PartitionedOdeSystem:
        return PartitionedOdeSystem(self.dimension, [self.f1, self.f2, self.f3])

    def system(self) -> OdeSystem:
        return OdeSystem(self.dimension, self.total_rhs)

    def gershgorin_rho(self, factor: float = 3.0):
        """Spectral-radius estimator from the diffusion operator's Gershgorin
        bound, scaled by a configurable safety factor."""
        bound = factor * max(self.eps1, self.eps2) * 8.0 / (self.dx * self.dx)
        return lambda t, y: bound


class _LinearReactionStepper(Stepper):
    """Exact flow of the u reaction: u' = -(v^2 + a) u + a with v frozen."""

    def __init__(self, problem: GrayScottProblem):
        self.problem = problem

    def evolve(self, t_start, t_end, state):
        tau = t_end - t_start
        if tau == 0.0:
            return state
        pr = self.problem
        u, v = pr.split(state)
        q = v * v + pr.a
        u_eq = pr.a / q
        u_new = u_eq + (u - u_eq) * np.exp(-q * tau)
        return np.concatenate([u_new, v])


class _RiccatiReactionStepper(Stepper):
    """Exact flow of the v reaction: v' = u v^2 - (a+b) v with u frozen.

    Solved through w = 1/v, which satisfies w' = (a+b) w - u.  A w sign change
    inside the subinterval is a finite-time blow-up of v and raises an error
    carrying the blow-up time.
    """

    def __init__(self, problem: GrayScottProblem):
        self.problem = problem

    def evolve(self, t_start, t_end, state):
        tau = t_end - t_start
        if tau == 0.0:
            return state
        pr = self.problem
        s = pr.a + pr.b
        u, v = pr.split(state)
        v_new = np.array(v)
        nz = v != 0.0
        w0 = np.ones_like(v)
        w0[nz] = 1.0 / v[nz]
        U = u / s
        w = U + (w0 - U) * math.exp(s * tau)
        crossed = nz & (np.sign(w) != np.sign(w0))
        if np.any(crossed):
            ratio = U[crossed] / (U[crossed] - w0[crossed])
            with np.errstate(divide="ignore", invalid="ignore"):
                t_cross = np.where(ratio > 0, np.log(ratio) / s, np.inf)
            t_blow = t_start + float(np.min(t_cross))
            raise diag.default_context().fail(
                diag.ERR_BLOWUP, f"Riccati partition blows up at t = {t_blow!r}",
                "exact_stepper_riccati", "harness")
        v_new[nz] = 1.0 / w[nz]
        return np.concatenate([u, v_new])


def exact_stepper_linear(problem: GrayScottProblem) -> Stepper:
    """Exact per-component stepper for the linear u-reaction partition."""
    return _LinearReactionStepper(problem)


def exact_stepper_riccati(problem: GrayScottProblem) -> Stepper:
    """Exact per-component stepper for the Riccati v-reaction partition."""
    return _RiccatiReactionStepper(problem)


def _reference_solution(problem: GrayScottProblem, t_end: float, reltol: float = 1e-12):
    tol = ToleranceSpec(reltol, reltol)
    result = erk_evolve(get_table("dopri5"), problem.system(), tol, 0.0, t_end,
                        problem.initial_state())
    return result.y


def run_gray_scott_splitting(n: int = 64, t_end: float = 10.0, i_max: int = 7,
                             methods=None, out_csv: str = "gray_scott_splitting.csv",
                             logger=None, reference_reltol: float = 1e-12):
    """Fixed-step convergence of the default splitting methods.

    For each method and h = 2^-i (i = 0..i_max) the relative whole-state l2
    error against a tight-tolerance fifth-order reference is written to CSV.
    Returns the rows as a list of dicts.
    """
    problem = GrayScottProblem(n=n)
    y0 = problem.initial_state()
    y_ref = _reference_solution(problem, t_end, reference_reltol)
    ref_norm = float(np.linalg.norm(y_ref))
    if methods is None:
        methods = default_methods(3)

    diffusion_system = OdeSystem(problem.dimension, problem.f3)
    rows = []
    for name, coeffs in methods.items():
        table = get_table(_ORDER_TABLES[coeffs.order])
        steppers = [exact_stepper_linear(problem),
                    exact_stepper_riccati(problem),
                    stepper_from_erk(table, diffusion_system, substeps=1)]
        for i in range(i_max + 1):
            h = 2.0 ** (-i)
            n_steps = max(1, round(t_end / h))
            flag = "ok"
            error = float("nan")
            with Timer() as tm:
                try:
                    y = splitting_evolve(coeffs, steppers, 0.0, t_end, y0, n_steps,
                                         logger=logger)
                    error = float(np.linalg.norm(y - y_ref)) / ref_norm
                except diag.ChronosError as exc:
                    flag = "blowup" if exc.err.code == diag.ERR_BLOWUP else "failed"
            rows.append({"method": name, "order": coeffs.order, "h": h,
                         "error": error, "time_s": tm.seconds,
                         "steps": n_steps, "flag": flag})
    header = ["method", "order", "h", "error", "time_s", "steps", "flag"]
    write_csv(out_csv, header, [[fmt(r[k]) for k in header] for r in rows])
    return rows


def run_gray_scott_lsrk(n: int = 256, t_end: float = 100.0, reltols=None,
                        abstol: float = 1e-13, rho_factor: float = 2.75,
                        out_csv: str = "gray_scott_lsrk.csv", logger=None,
                        reference_reltol: float = 1e-10, repeats: int = 2,
                        initial_step: float | None = None):
    """Work-precision comparison: adaptive RKC vs the 3-stage order-2 pair.

    Both integrate the unpartitioned system at each relative tolerance,
    starting from the same initial step (default t_end/20, a sensible scale
    for the loosest tolerance; each controller adapts from there).  Rows
    record error, wall time, step counts, and the maximum RKC stage count.
    The integrations are deterministic, so each run repeats ``repeats`` times
    and keeps the minimum wall time.
    """
    if reltols is None:
        reltols = [1e-2, 1e-3, 1e-4, 1e-5]
    h0 = initial_step if initial_step is not None else t_end / 20.0
    problem = GrayScottProblem(n=n)
    y0 = problem.initial_state()
    system = problem.system()
    y_ref = _reference_solution(problem, t_end, reference_reltol)
    ref_norm = float(np.linalg.norm(y_ref))

    def timed(run):
        best = None
        for _ in range(max(1, repeats)):
            with Timer() as tm:
                res = run()
            best = tm.seconds if best is None else min(best, tm.seconds)
        return res, best

    rows = []
    for reltol in reltols:
        tol = ToleranceSpec(reltol, abstol)
        cfg = StsConfig("RKC", rho_estimator=problem.gershgorin_rho(rho_factor))
        res, seconds = timed(lambda: sts_evolve(cfg, system, tol, 0.0, t_end, y0,
                                                h0=h0, logger=logger))
        rows.append({"method": "rkc", "reltol": reltol,
                     "error": float(np.linalg.norm(res.y - y_ref)) / ref_norm,
                     "time_s": seconds, "steps": res.stats.steps,
                     "rejections": res.stats.rejections, "nfe": res.stats.nfe,
                     "max_stages": res.stats.extra["max_stage_count"]})
        res, seconds = timed(lambda: erk_evolve(get_table("erk2-3stage"), system,
                                                tol, 0.0, t_end, y0, h0=h0,
                                                logger=logger))
        rows.append({"method": "erk2", "reltol": reltol,
                     "error": float(np.linalg.norm(res.y - y_ref)) / ref_norm,
                     "time_s": seconds, "steps": res.stats.steps,
                     "rejections": res.stats.rejections, "nfe": res.stats.nfe,
                     "max_stages": 3})
    header = ["method", "reltol", "error", "time_s", "steps", "rejections",
              "nfe", "max_stages"]
    write_csv(out_csv, header, [[fmt(r[k]) for k in header] for r in rows])
    return rows
