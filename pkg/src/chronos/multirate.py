"""Multirate slow/fast integration with decoupled and stepsize-tolerance controllers.

The slow scale advances with a Lie-Trotter or Strang slow/fast splitting whose
fast flow is an inner adaptive integration; slow error is estimated by step
doubling (two half-steps vs one full step).  The decoupled controller family
lets the inner integrator adapt its own step against a fixed inner tolerance;
the stepsize-tolerance family additionally scales the inner tolerance by a
factor driven by the fast error accumulated over each slow step.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import diagnostics as diag
from .core import (EvolveResult, OdeSystem, StateVector, StepAttempt, StepController,
                   Stepper, ToleranceSpec, controller_next_step, evolve_adaptive,
                   wrms_norm)
from .erk import ButcherTable, erk_step, get_table

__all__ = [
    "MultirateConfig",
    "SlowErrorEstimate",
    "slow_error_estimate",
    "decoupled_update",
    "htol_update",
    "multirate_evolve",
    "MultirateStepper",
]


@dataclass
class MultirateConfig:
    """Controller family, inner tolerance policy, and slow-step construction."""

    kind: str = "decoupled"
    slow_controller: StepController = field(default_factory=StepController)
    fast_controller: StepController | None = None
    tolfac_controller: StepController | None = None
    inner_tol: ToleranceSpec = field(default_factory=lambda: ToleranceSpec(1e-6, 1e-9))
    tolfac: float = 1.0
    tolfac_min: float = 1e-5
    splitting: str = "lie"
    slow_table: ButcherTable | None = None

    def __post_init__(self):
        if self.kind not in ("decoupled", "stepsize_tolerance"):
            raise diag.default_context().fail(
                diag.ERR_INVALID_ARGUMENT, f"unknown controller kind {self.kind!r}",
                "MultirateConfig", "multirate")
        if self.splitting not in ("lie", "strang"):
            raise diag.default_context().fail(
                diag.ERR_INVALID_ARGUMENT, f"unknown slow splitting {self.splitting!r}",
                "MultirateConfig", "multirate")
        if not (self.tolfac_min <= self.tolfac <= 1.0):
            raise diag.default_context().fail(
                diag.ERR_INVALID_ARGUMENT, "tolfac must lie in [tolfac_min, 1]",
                "MultirateConfig", "multirate")
        if self.kind == "decoupled" and self.fast_controller is None:
            self.fast_controller = StepController()
        if self.kind == "stepsize_tolerance" and self.tolfac_controller is None:
            self.tolfac_controller = StepController()
        if self.slow_table is None:
            self.slow_table = get_table("heun2")

    @property
    def slow_order(self) -> int:
        return 1 if self.splitting == "lie" else 2


@dataclass
class SlowErrorEstimate:
    est_vector: np.ndarray
    est_wrms: float


def slow_error_estimate(method: Callable[[float, StateVector, float], StateVector],
                        t: float, y: StateVector, H: float, tol: ToleranceSpec):
    """Step-doubling estimate for one slow step.

    ``method`` advances y over a slow interval; the estimate is the difference
    between two half-steps (the kept solution) and one full step.  Returns
    (SlowErrorEstimate, y_fine).
    """
    coarse = method(t, y, H)
    half = method(t, y, 0.5 * H)
    fine = method(t + 0.5 * H, half, 0.5 * H)
    est = fine - coarse
    return SlowErrorEstimate(est, wrms_norm(est, y, tol)), fine


def decoupled_update(cfg: MultirateConfig, H: float, h: float,
                     est_slow_wrms: float, est_fast_wrms: float,
                     orders: tuple[int, int]) -> tuple[float, float]:
    """Independent single-rate controller updates for the slow and fast steps."""
    H_next = controller_next_step(cfg.slow_controller, H, est_slow_wrms, orders[0])
    h_next = controller_next_step(cfg.fast_controller, h, est_fast_wrms, orders[1])
    return H_next, h_next


def htol_update(cfg: MultirateConfig, H: float, tolfac: float,
                est_slow_wrms: float, est_fast_accum_wrms: float) -> tuple[float, float]:
    """Slow-step update plus the inner-tolerance factor update.

    The tolerance factor exploits the (linear) proportionality between the
    requested tolerance and the realized fast error: an accumulated fast
    contribution of E shrinks tolfac by 1/E (safety-scaled), clamped to
    [tolfac_min, 1].
    """
    ctrl = cfg.tolfac_controller
    H_next = controller_next_step(cfg.slow_controller, H, est_slow_wrms,
                                  cfg.slow_order)
    if est_fast_accum_wrms <= 0.0:
        raw = tolfac * ctrl.growth_max
    else:
        raw = ctrl.safety * tolfac / est_fast_accum_wrms
    tolfac_next = float(min(1.0, max(cfg.tolfac_min, raw)))
    return H_next, tolfac_next


def _require_adaptive_stepper(fast_stepper) -> None:
    for attr in ("evolve", "reset", "set_tolerance"):
        if not hasattr(fast_stepper, attr):
            raise diag.default_context().fail(
                diag.ERR_INVALID_ARGUMENT,
                f"fast stepper must provide {attr} (adaptive Stepper contract)",
                "multirate_evolve", "multirate")


def multirate_evolve(cfg: MultirateConfig, slow_rhs: Callable, fast_stepper,
                     t0: float, tf: float, y0: StateVector, tol: ToleranceSpec,
                     controller_order: int | None = None,
                     h0: float | None = None, logger=None,
                     max_steps: int = 200_000) -> EvolveResult:
    """Advance slow steps H with an inner adaptive fast integration.

    Steps are accepted on the WRMS of the step-doubling slow estimate.  Stats
    report the slow-step history, inner-step totals, and (for the
    stepsize-tolerance family) the tolfac history.
    """
    _require_adaptive_stepper(fast_stepper)
    y0 = np.asarray(y0, dtype=float)
    dim = len(y0)
    slow_system = OdeSystem(dim, slow_rhs)
    table = cfg.slow_table
    state = {"tolfac": cfg.tolfac, "inner_steps": 0, "inner_h": [],
             "tolfac_history": [cfg.tolfac], "fast_est_accum": 0.0,
             "slow_nfe": 0}

    def slow_onestep(t, y, H):
        state["slow_nfe"] += table.s
        y_next, _, _ = erk_step(table, slow_system, t, y, H)
        return y_next

    def fast_flow(ta, tb, y):
        y_next = fast_stepper.evolve(ta, tb, y)
        stats = getattr(fast_stepper, "last_stats", None)
        if stats is not None:
            state["inner_steps"] += stats.steps
            state["inner_h"].extend(stats.h_history)
        return y_next

    def composite(t, y, H):
        if cfg.splitting == "lie":
            y1 = slow_onestep(t, y, H)
            return fast_flow(t, t + H, y1)
        y1 = slow_onestep(t, y, 0.5 * H)
        y2 = fast_flow(t, t + H, y1)
        return slow_onestep(t + 0.5 * H, y2, 0.5 * H)

    def attempt(t, y, H):
        if cfg.kind == "stepsize_tolerance":
            fast_stepper.set_tolerance(
                ToleranceSpec(state["tolfac"] * cfg.inner_tol.reltol,
                              cfg.inner_tol.abstol))
        else:
            fast_stepper.set_tolerance(cfg.inner_tol)
        fast_acc = np.zeros(dim)

        def tracked_composite(ta, ya, Ha):
            out = composite(ta, ya, Ha)
            acc = getattr(fast_stepper, "accumulated_est", None)
            if acc is not None:
                fast_acc[:] = fast_acc + acc
            return out

        try:
            coarse = composite(t, y, H)
            half = tracked_composite(t, y, 0.5 * H)
            fine = tracked_composite(t + 0.5 * H, half, 0.5 * H)
        except diag.ChronosError:
            # Inner failure: retry with a smaller slow step; the loop's h_min
            # bounds the number of retries.
            return StepAttempt(status="reduce", h_suggest=0.5 * H)
        est = fine - coarse
        fast_wrms = wrms_norm(fast_acc, y, tol)
        return StepAttempt(y_next=fine, est=est, nfe=0,
                           info={"fast_accum_wrms": fast_wrms})

    est_accum = np.zeros(dim)

    def on_accept(t, y, H, est, result):
        est_accum[:] = est_accum + result.est
        if cfg.kind == "stepsize_tolerance":
            est_fast = result.info["fast_accum_wrms"]
            _, tolfac_next = htol_update(cfg, H, state["tolfac"], est, est_fast)
            if (logger is not None and tolfac_next == cfg.tolfac_min
                    and state["tolfac"] == cfg.tolfac_min and est_fast > 1.0):
                logger.warning("MultirateEvolve", "tolfac-clamped",
                               tolfac=tolfac_next, fast_est=est_fast)
            state["tolfac"] = tolfac_next
            state["tolfac_history"].append(tolfac_next)

    order = controller_order if controller_order is not None else cfg.slow_order
    result = evolve_adaptive(attempt, t0, tf, y0, tol, order=order,
                             controller=cfg.slow_controller, h0=h0,
                             logger=logger, scope="MultirateEvolve",
                             max_steps=max_steps, on_accept=on_accept)
    inner_h = state["inner_h"]
    result.stats.nfe += state["slow_nfe"]
    result.stats.extra.update(
        inner_steps=state["inner_steps"],
        mean_inner_h=float(np.mean(inner_h)) if inner_h else 0.0,
        mean_H=float(np.mean(result.stats.h_history)) if result.stats.h_history else 0.0,
        tolfac_history=state["tolfac_history"],
        est_accum_vector=est_accum,
    )
    return result


class MultirateStepper(Stepper):
    """A multirate integration packaged as a Stepper, enabling telescopic nesting.

    Exposes the same adaptive-stepper protocol as the ERK stepper: per-call
    tolerances via :meth:`set_tolerance`, plus ``last_stats`` and
    ``accumulated_est`` from the most recent :meth:`evolve`.
    """

    def __init__(self, cfg: MultirateConfig, slow_rhs: Callable, fast_stepper,
                 tol: ToleranceSpec):
        _require_adaptive_stepper(fast_stepper)
        self.cfg = cfg
        self.slow_rhs = slow_rhs
        self.fast_stepper = fast_stepper
        self.tol = tol
        self.last_stats = None
        self.accumulated_est: np.ndarray | None = None

    def set_tolerance(self, tol: ToleranceSpec):
        self.tol = tol

    def reset(self, t, y):
        self.last_stats = None
        self.accumulated_est = None
        self.fast_stepper.reset(t, y)

    def evolve(self, t_start, t_end, y):
        if t_end == t_start:
            return y
        result = multirate_evolve(self.cfg, self.slow_rhs, self.fast_stepper,
                                  t_start, t_end, y, self.tol)
        self.last_stats = result.stats
        self.accumulated_est = result.stats.extra["est_accum_vector"]
        return result.y
