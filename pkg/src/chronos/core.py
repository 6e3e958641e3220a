"""Foundational state, problem, stepper, and step-controller abstractions."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import diagnostics as diag

__all__ = [
    "StateVector",
    "as_state",
    "OdeSystem",
    "PartitionedOdeSystem",
    "Stepper",
    "ToleranceSpec",
    "StepController",
    "wrms_norm",
    "controller_next_step",
    "StepAttempt",
    "EvolveStats",
    "EvolveResult",
    "evolve_adaptive",
]

# The universal state currency is a dense 1-D float64 array.
StateVector = np.ndarray


def as_state(values) -> StateVector:
    """Coerce to a float64 state vector, validating finiteness."""
    y = np.atleast_1d(np.asarray(values, dtype=float))
    if diag.check_level() == "full" and not np.all(np.isfinite(y)):
        raise diag.default_context().fail(
            diag.ERR_NOT_FINITE, "state contains NaN or Inf", "as_state", "core")
    return y


def check_finite(y: StateVector, where: str) -> None:
    if diag.check_level() == "full" and not np.all(np.isfinite(y)):
        raise diag.default_context().fail(
            diag.ERR_NOT_FINITE, f"non-finite state in {where}", where, "core")


@dataclass
class OdeSystem:
    """An initial value problem right-hand side y' = f(t, y) of fixed dimension."""

    dimension: int
    rhs: Callable[[float, StateVector], StateVector]

    def __post_init__(self):
        if self.dimension < 1:
            raise diag.default_context().fail(
                diag.ERR_INVALID_ARGUMENT, "dimension must be positive", "OdeSystem", "core")

    def __call__(self, t: float, y: StateVector) -> StateVector:
        out = np.asarray(self.rhs(t, y), dtype=float)
        if out.shape != (self.dimension,):
            raise diag.default_context().fail(
                diag.ERR_DIMENSION_MISMATCH,
                f"rhs returned shape {out.shape}, expected ({self.dimension},)",
                "OdeSystem.rhs", "core")
        return out


@dataclass
class PartitionedOdeSystem:
    """Additively partitioned right-hand side y' = f_1(t,y) + ... + f_P(t,y)."""

    dimension: int
    partitions: Sequence[Callable[[float, StateVector], StateVector]]

    def __post_init__(self):
        if len(self.partitions) < 2:
            raise diag.default_context().fail(
                diag.ERR_INVALID_ARGUMENT, "need at least 2 partitions",
                "PartitionedOdeSystem", "core")

    @property
    def n_partitions(self) -> int:
        return len(self.partitions)

    def partition(self, k: int, t: float, y: StateVector) -> StateVector:
        out = np.asarray(self.partitions[k](t, y), dtype=float)
        if out.shape != (self.dimension,):
            raise diag.default_context().fail(
                diag.ERR_DIMENSION_MISMATCH,
                f"partition {k} returned shape {out.shape}, expected ({self.dimension},)",
                "PartitionedOdeSystem", "core")
        return out

    def total_rhs(self, t: float, y: StateVector) -> StateVector:
        total = self.partition(0, t, y).copy()
        for k in range(1, self.n_partitions):
            total += self.partition(k, t, y)
        return total

    def as_system(self) -> OdeSystem:
        return OdeSystem(self.dimension, self.total_rhs)


class Stepper:
    """Abstract "evolve state over [t_a, t_b]" contract.

    Implementations must return ``y`` unchanged for zero-width intervals and
    must carry no memory of prior subintervals after :meth:`reset`.
    """

    def evolve(self, t_start: float, t_end: float, y: StateVector) -> StateVector:
        raise NotImplementedError

    def reset(self, t: float, y: StateVector) -> None:
        pass

    def set_forcing(self, forcing: StateVector | None) -> None:
        raise diag.default_context().fail(
            diag.ERR_UNSUPPORTED, f"{type(self).__name__} does not support forcing",
            "Stepper.set_forcing", "core")

    @property
    def supports_forcing(self) -> bool:
        return type(self).set_forcing is not Stepper.set_forcing


@dataclass
class ToleranceSpec:
    """Relative and absolute tolerances; abstol may be a per-component vector."""

    reltol: float = 1e-6
    abstol: float | np.ndarray = 1e-9

    def __post_init__(self):
        abstol = np.asarray(self.abstol, dtype=float)
        if self.reltol <= 0 or np.any(abstol <= 0):
            raise diag.default_context().fail(
                diag.ERR_INVALID_ARGUMENT, "tolerances must be strictly positive",
                "ToleranceSpec", "core")

    def weights(self, y: StateVector) -> np.ndarray:
        return self.reltol * np.abs(y) + self.abstol

    def scaled(self, factor: float) -> "ToleranceSpec":
        return ToleranceSpec(self.reltol * factor, np.asarray(self.abstol) * factor)


def wrms_norm(e: StateVector, y: StateVector, tol: ToleranceSpec) -> float:
    """Weighted RMS norm of ``e`` with weights from ``y`` and the tolerances.

    Returns sqrt( (1/n) sum_i ( e_i / (reltol*|y_i| + abstol_i) )^2 ), so a
    value <= 1 means "within tolerance".
    """
    e = np.asarray(e, dtype=float)
    y = np.asarray(y, dtype=float)
    if e.shape != y.shape:
        raise diag.default_context().fail(
            diag.ERR_DIMENSION_MISMATCH,
            f"error shape {e.shape} does not match state shape {y.shape}",
            "wrms_norm", "core")
    w = e / tol.weights(y)
    return float(np.sqrt(np.mean(w * w)))


@dataclass
class StepController:
    """Elementary step-size controller (I or PI form).

    Produced step sizes are always clamped to [shrink_min*h, growth_max*h].
    The I controller is the normative default; PI additionally uses the
    previous step's error estimate.
    """

    kind: str = "I"
    safety: float = 0.9
    growth_max: float = 10.0
    shrink_min: float = 0.1
    first_growth_max: float = 1e4
    # PI exponents as multiples of 1/(order+1); unused by the I controller.
    pi_kI: float = 0.7
    pi_kP: float = 0.4

    def __post_init__(self):
        if not (0 < self.safety <= 1.0):
            raise diag.default_context().fail(
                diag.ERR_INVALID_ARGUMENT, "safety must be in (0, 1]",
                "StepController", "core")
        if self.growth_max <= 1 or not (0 < self.shrink_min < 1):
            raise diag.default_context().fail(
                diag.ERR_INVALID_ARGUMENT, "need growth_max > 1 and shrink_min in (0,1)",
                "StepController", "core")
        if self.kind not in ("I", "PI"):
            raise diag.default_context().fail(
                diag.ERR_INVALID_ARGUMENT, f"unknown controller kind {self.kind!r}",
                "StepController", "core")


def controller_next_step(ctrl: StepController, h: float, est: float, order: int,
                         est_prev: float | None = None, first: bool = False) -> float:
    """Next step size from the WRMS-normalized error estimate (target 1).

    A zero estimate returns the growth-capped maximum.  ``first`` lifts the
    growth cap to the controller's first-step value.
    """
    growth = ctrl.first_growth_max if first else ctrl.growth_max
    if est <= 0.0:
        return growth * h
    k = 1.0 / (order + 1)
    if ctrl.kind == "PI" and est_prev is not None and est_prev > 0.0:
        factor = ctrl.safety * est ** (-ctrl.pi_kI * k) * est_prev ** (ctrl.pi_kP * k)
    else:
        factor = ctrl.safety * est ** (-k)
    factor = min(growth, max(ctrl.shrink_min, factor))
    return factor * h


@dataclass
class StepAttempt:
    """Outcome of one trial step: next state, error estimate, and bookkeeping.

    ``status`` is "ok" for a completed attempt or "reduce" when the method
    could not attempt the step at this size (e.g. stage count exhausted) and
    suggests retrying with ``h_suggest``.
    """

    y_next: StateVector | None = None
    est: StateVector | None = None
    nfe: int = 0
    status: str = "ok"
    h_suggest: float | None = None
    info: dict = field(default_factory=dict)


@dataclass
class EvolveStats:
    steps: int = 0
    rejections: int = 0
    nfe: int = 0
    h_history: list = field(default_factory=list)
    extra: dict = field(default_factory=dict)


@dataclass
class EvolveResult:
    t: float
    y: StateVector
    stats: EvolveStats


def evolve_adaptive(attempt: Callable[[float, StateVector, float], StepAttempt],
                    t0: float, tf: float, y0: StateVector, tol: ToleranceSpec,
                    order: int,
                    controller: StepController | None = None,
                    h0: float | None = None,
                    h_min: float | None = None,
                    max_steps: int = 1_000_000,
                    on_accept: Callable | None = None,
                    on_reject: Callable | None = None,
                    logger=None,
                    scope: str = "EvolveAdaptive") -> EvolveResult:
    """Generic accept/reject loop shared by the single-rate integrators.

    Steps are accepted when the WRMS-normalized estimate is <= 1; the final
    step is truncated to land exactly on ``tf``.  A step never shrinks below
    ``h_min`` (default 10*eps*|tf - t0|) without raising "step size too small".
    """
    if tf <= t0:
        raise diag.default_context().fail(
            diag.ERR_INVALID_ARGUMENT, "tf must exceed t0", "evolve_adaptive", "core")
    ctrl = controller or StepController()
    span = tf - t0
    h = h0 if h0 is not None else 1e-4 * span
    hmin = h_min if h_min is not None else 10.0 * np.finfo(float).eps * abs(span)
    t = t0
    y = as_state(y0).copy()
    stats = EvolveStats()
    est_prev: float | None = None
    first = True
    attempts = 0
    while t < tf - 1e-14 * abs(span):
        if attempts >= max_steps:
            raise diag.default_context().fail(
                diag.ERR_MAX_STEPS, f"exceeded {max_steps} step attempts",
                "evolve_adaptive", "core")
        attempts += 1
        truncated = h >= (tf - t)
        h_try = min(h, tf - t)
        if logger is not None:
            logger.info(scope, "begin-step-attempt", step=stats.steps + 1, tn=t, h=h_try)
        result = attempt(t, y, h_try)
        stats.nfe += result.nfe
        if result.status == "reduce":
            h = result.h_suggest if result.h_suggest is not None else 0.5 * h_try
            if logger is not None:
                logger.info(scope, "end-step-attempt", step=stats.steps + 1, tn=t,
                            h=h_try, accepted=0)
            if h < hmin:
                raise diag.default_context().fail(
                    diag.ERR_STEP_TOO_SMALL, "step size too small", "evolve_adaptive", "core")
            continue
        if result.est is None:
            est = 0.0
        else:
            est = wrms_norm(result.est, y, tol)
        accepted = est <= 1.0
        if logger is not None:
            logger.info(scope, "end-step-attempt", step=stats.steps + 1, tn=t, h=h_try,
                        est=est, accepted=int(accepted))
        if accepted:
            check_finite(result.y_next, "evolve_adaptive")
            t = tf if truncated else t + h_try
            y = result.y_next
            stats.steps += 1
            stats.h_history.append(h_try)
            if on_accept is not None:
                on_accept(t, y, h_try, est, result)
            h = controller_next_step(ctrl, h_try, est, order, est_prev, first=first)
            est_prev = est
            first = False
        else:
            stats.rejections += 1
            if on_reject is not None:
                on_reject(t, y, h_try, est, result)
            # A rejected step must not grow.
            h = min(controller_next_step(ctrl, h_try, est, order, est_prev), h_try)
        if h < hmin:
            raise diag.default_context().fail(
                diag.ERR_STEP_TOO_SMALL, "step size too small", "evolve_adaptive", "core")
    return EvolveResult(t=tf, y=y, stats=stats)
