"""Operator splitting over pluggable steppers, plus the two-partition forcing method.

A splitting method is defined by weights alpha (one per sequential method) and
a tensor beta of subintegration time endpoints: within sequential method i,
stage j evolves partition k over [t + beta[i,j,k]*h, t + beta[i,j+1,k]*h].
Zero-width subintegrations are skipped without evaluating anything.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import diagnostics as diag
from .core import (OdeSystem, StateVector, StepAttempt, Stepper, StepController,
                   ToleranceSpec, evolve_adaptive)
from .erk import ButcherTable, erk_step

__all__ = [
    "SplittingCoefficients",
    "splitting_step",
    "splitting_evolve",
    "lie_trotter",
    "strang",
    "parallel",
    "suzuki3",
    "compose",
    "forcing_step",
    "ForcingMethod",
    "ErkStepper",
    "stepper_from_erk",
    "FlowStepper",
    "save_coefficients",
    "load_coefficients",
    "default_methods",
]


@dataclass
class SplittingCoefficients:
    """Weights alpha over r sequential methods and endpoint tensor beta.

    Invariants: every sequential method starts at the step's left edge
    (beta[:, 0, :] == 0), the alpha weights sum to 1, and
    sum_i alpha_i * beta[i, -1, k] == 1 for every partition k.
    """

    name: str
    alpha: np.ndarray
    beta: np.ndarray
    order: int

    def __post_init__(self):
        self.alpha = np.asarray(self.alpha, dtype=float)
        self.beta = np.asarray(self.beta, dtype=float)
        if self.beta.ndim != 3 or self.beta.shape[0] != len(self.alpha):
            raise diag.default_context().fail(
                diag.ERR_DIMENSION_MISMATCH,
                f"beta must have shape (r, s+1, P); got {self.beta.shape}",
                "SplittingCoefficients", "splitting")
        self.validate()

    @property
    def r(self) -> int:
        return self.beta.shape[0]

    @property
    def s(self) -> int:
        return self.beta.shape[1] - 1

    @property
    def n_partitions(self) -> int:
        return self.beta.shape[2]

    def validate(self, tol: float = 1e-10) -> None:
        if np.any(np.abs(self.beta[:, 0, :]) > 0):
            raise diag.default_context().fail(
                diag.ERR_INVALID_ARGUMENT, "beta[:, 0, :] must be zero",
                "SplittingCoefficients", "splitting")
        if abs(self.alpha.sum() - 1.0) > tol:
            raise diag.default_context().fail(
                diag.ERR_INVALID_ARGUMENT, "alpha must sum to 1",
                "SplittingCoefficients", "splitting")
        final = self.alpha @ self.beta[:, -1, :]
        if np.any(np.abs(final - 1.0) > tol):
            raise diag.default_context().fail(
                diag.ERR_INVALID_ARGUMENT,
                "sum_i alpha_i * beta[i, -1, k] must be 1 for every partition",
                "SplittingCoefficients", "splitting")


def splitting_step(coeffs: SplittingCoefficients, steppers, t: float,
                   y: StateVector, h: float) -> StateVector:
    """One operator-splitting step of size h from (t, y)."""
    if len(steppers) != coeffs.n_partitions:
        raise diag.default_context().fail(
            diag.ERR_DIMENSION_MISMATCH,
            f"need {coeffs.n_partitions} steppers, got {len(steppers)}",
            "splitting_step", "splitting")
    beta = coeffs.beta
    total = np.zeros_like(np.asarray(y, dtype=float))
    for i in range(coeffs.r):
        state = np.array(y, dtype=float)
        for stepper in steppers:
            stepper.reset(t, state)
        for j in range(coeffs.s):
            for k in range(coeffs.n_partitions):
                if beta[i, j + 1, k] == beta[i, j, k]:
                    continue
                t_start = t + beta[i, j, k] * h
                t_end = t + beta[i, j + 1, k] * h
                try:
                    state = steppers[k].evolve(t_start, t_end, state)
                except diag.ChronosError as exc:
                    raise diag.default_context().fail(
                        diag.ERR_CALLBACK_FAILURE,
                        f"stepper failed at sequential method {i + 1}, stage {j + 1}, "
                        f"partition {k + 1}: {exc.err.message}",
                        "splitting_step", "splitting") from exc
        total += coeffs.alpha[i] * state
    return total


def splitting_evolve(coeffs: SplittingCoefficients, steppers, t0: float, tf: float,
                     y0: StateVector, n_steps: int, logger=None) -> StateVector:
    """Fixed-step splitting integration over n equal steps."""
    h = (tf - t0) / n_steps
    y = np.array(y0, dtype=float)
    for i in range(n_steps):
        t = t0 + i * h
        if logger is not None:
            logger.info("SplittingEvolve", "begin-step-attempt", step=i + 1, tn=t, h=h)
        y = splitting_step(coeffs, steppers, t, y, h)
        if logger is not None:
            logger.info("SplittingEvolve", "end-step-attempt", step=i + 1, tn=t, h=h,
                        accepted=1)
    return y


# ---------------------------------------------------------------------------
# Built-in coefficient families
# ---------------------------------------------------------------------------


def lie_trotter(n_partitions: int) -> SplittingCoefficients:
    """First-order sequential splitting: each partition once over the full step."""
    P = _check_partitions(n_partitions)
    beta = np.zeros((1, 2, P))
    beta[0, 1, :] = 1.0
    return SplittingCoefficients("lie-trotter", [1.0], beta, order=1)


def strang(n_partitions: int) -> SplittingCoefficients:
    """Symmetric second-order splitting: half steps up, full step on the last
    partition, half steps back down."""
    P = _check_partitions(n_partitions)
    beta = np.zeros((1, P + 1, P))
    for k in range(P - 1):
        # Partition k+1 (1-based) advances to 1/2 at stage 1 and finishes
        # during stage P - k.
        beta[0, 1:, k] = 0.5
        beta[0, P - k:, k] = 1.0
    beta[0, 1:, P - 1] = 1.0
    return SplittingCoefficients("strang", [1.0], beta, order=2)


def parallel(n_partitions: int) -> SplittingCoefficients:
    """First-order parallel splitting: y + sum_k (phi_k(y) - y)."""
    P = _check_partitions(n_partitions)
    r = P + 1
    alpha = np.ones(r)
    alpha[-1] = -(P - 1.0)
    beta = np.zeros((r, 2, P))
    for i in range(P):
        beta[i, 1, i] = 1.0
    return SplittingCoefficients("parallel", alpha, beta, order=1)


def suzuki3(n_partitions: int) -> SplittingCoefficients:
    """Third-order real-coefficient splitting: an asymmetric [g, g, 1-2g]
    composition of Strang halves with g = 1/(2 - 2^(1/3))."""
    g = 1.0 / (2.0 - 2.0 ** (1.0 / 3.0))
    method = _compose_chunks(strang(n_partitions), [g, g, 1.0 - 2.0 * g], order=3)
    method.name = "suzuki3"
    return method


def compose(base: SplittingCoefficients, scheme: str) -> SplittingCoefficients:
    """Raise an even-order symmetric method two orders by composition.

    ``scheme`` is "triple_jump" (three chunks) or "quintuple_jump" (five).
    The base must consist of a single sequential method ending at beta = 1.
    """
    p = base.order
    if p % 2 != 0:
        raise diag.default_context().fail(
            diag.ERR_INVALID_ARGUMENT, "composition requires an even-order base",
            "compose", "splitting")
    if base.r != 1:
        raise diag.default_context().fail(
            diag.ERR_UNSUPPORTED, "composition requires a single sequential method",
            "compose", "splitting")
    if scheme == "triple_jump":
        g = 1.0 / (2.0 - 2.0 ** (1.0 / (p + 1.0)))
        weights = [g, 1.0 - 2.0 * g, g]
    elif scheme == "quintuple_jump":
        g = 1.0 / (4.0 - 4.0 ** (1.0 / (p + 1.0)))
        weights = [g, g, 1.0 - 4.0 * g, g, g]
    else:
        raise diag.default_context().fail(
            diag.ERR_INVALID_ARGUMENT, f"unknown composition scheme {scheme!r}",
            "compose", "splitting")
    method = _compose_chunks(base, weights, order=p + 2)
    method.name = f"{base.name}+{scheme}"
    return method


def _check_partitions(P: int) -> int:
    if P < 2:
        raise diag.default_context().fail(
            diag.ERR_INVALID_ARGUMENT, "need at least 2 partitions",
            "splitting coefficients", "splitting")
    return P


def _compose_chunks(base: SplittingCoefficients, weights, order: int) -> SplittingCoefficients:
    """Chain scaled copies of a single-sequential-method scheme."""
    P = base.n_partitions
    s = base.s
    if np.any(np.abs(base.beta[0, -1, :] - 1.0) > 1e-12):
        raise diag.default_context().fail(
            diag.ERR_INVALID_ARGUMENT, "composition base must end at beta = 1",
            "compose", "splitting")
    m = len(weights)
    beta = np.zeros((1, m * s + 1, P))
    offset = 0.0
    for chunk, gamma in enumerate(weights):
        for j in range(1, s + 1):
            beta[0, chunk * s + j, :] = offset + gamma * base.beta[0, j, :]
        offset += gamma
    return SplittingCoefficients(base.name, [1.0], beta, order=order)


def default_methods(n_partitions: int = 3) -> dict[str, SplittingCoefficients]:
    """The five default methods of orders 1, 2, 3, 4, 6: Lie-Trotter, Strang,
    Suzuki-3, and the Yoshida-style triple-jump compositions of Strang."""
    P = n_partitions
    y4 = compose(strang(P), "triple_jump")
    y4.name = "yoshida4"
    y6 = compose(y4, "triple_jump")
    y6.name = "yoshida6"
    return {
        "lie-trotter": lie_trotter(P),
        "strang": strang(P),
        "suzuki3": suzuki3(P),
        "yoshida4": y4,
        "yoshida6": y6,
    }


# ---------------------------------------------------------------------------
# Steppers
# ---------------------------------------------------------------------------


class FlowStepper(Stepper):
    """Stepper wrapping an exact flow map callable (t_start, t_end, y) -> y."""

    def __init__(self, flow):
        self._flow = flow

    def evolve(self, t_start, t_end, y):
        if t_end == t_start:
            return y
        return self._flow(t_start, t_end, y)


class ErkStepper(Stepper):
    """Explicit Runge-Kutta subintegration as a Stepper.

    In fixed mode the interval is covered with ``substeps`` equal steps (sign
    agnostic, so composition methods may integrate backward).  In adaptive mode
    an embedded pair controls the error against ``tol``; the accepted step size
    persists between calls until :meth:`reset`.  A constant forcing vector may
    be added to the right-hand side via :meth:`set_forcing`.
    """

    def __init__(self, table: ButcherTable, system: OdeSystem,
                 substeps: int = 1, tol: ToleranceSpec | None = None,
                 controller: StepController | None = None):
        self.table = table
        self.system = system
        self.substeps = substeps
        self.tol = tol
        self.controller = controller
        self._forcing: np.ndarray | None = None
        self._h_prev: float | None = None
        self.last_stats = None
        self.accumulated_est: np.ndarray | None = None
        if tol is not None and table.b_embed is None:
            raise diag.default_context().fail(
                diag.ERR_INVALID_ARGUMENT,
                f"adaptive subintegration needs an embedded table; {table.name!r} has none",
                "ErkStepper", "splitting")

    # -- Stepper interface ---------------------------------------------------

    def reset(self, t, y):
        self._h_prev = None
        self.last_stats = None
        self.accumulated_est = None

    def set_forcing(self, forcing):
        self._forcing = None if forcing is None else np.asarray(forcing, dtype=float)

    def set_tolerance(self, tol: ToleranceSpec):
        if self.tol is None:
            raise diag.default_context().fail(
                diag.ERR_UNSUPPORTED, "fixed-substep stepper has no tolerance",
                "ErkStepper.set_tolerance", "splitting")
        self.tol = tol

    def evolve(self, t_start, t_end, y):
        if t_end == t_start:
            return y
        if self.tol is None:
            return self._evolve_fixed(t_start, t_end, y)
        return self._evolve_adaptive(t_start, t_end, y)

    # -- internals -----------------------------------------------------------

    def _rhs(self, t, y):
        f = self.system(t, y)
        if self._forcing is not None:
            f = f + self._forcing
        return f

    def _evolve_fixed(self, t_start, t_end, y):
        system = OdeSystem(self.system.dimension, self._rhs)
        h = (t_end - t_start) / self.substeps
        state = np.asarray(y, dtype=float)
        for i in range(self.substeps):
            state, _, _ = erk_step(self.table, system, t_start + i * h, state, h)
        return state

    def _evolve_adaptive(self, t_start, t_end, y):
        reverse = t_end < t_start
        if reverse:
            dim = self.system.dimension
            system = OdeSystem(dim, lambda tau, v: -self._rhs(-tau, v))
            a, b = -t_start, -t_end
        else:
            system = OdeSystem(self.system.dimension, self._rhs)
            a, b = t_start, t_end
        est_acc = np.zeros(self.system.dimension)

        def attempt(t, y_in, h):
            y_next, _, est = erk_step(self.table, system, t, y_in, h)
            return StepAttempt(y_next=y_next, est=est, nfe=self.table.s)

        def on_accept(t, y_acc, h, est, result):
            est_acc[:] = est_acc + result.est

        h0 = self._h_prev
        result = evolve_adaptive(attempt, a, b, y, self.tol,
                                 order=self.table.embed_order,
                                 controller=self.controller, h0=h0,
                                 on_accept=on_accept, scope="ErkStepperEvolve")
        if result.stats.h_history:
            self._h_prev = result.stats.h_history[-1]
        self.last_stats = result.stats
        self.accumulated_est = est_acc
        return result.y


def stepper_from_erk(table: ButcherTable, system: OdeSystem,
                     substeps: int = 1, tol: ToleranceSpec | None = None,
                     controller: StepController | None = None) -> ErkStepper:
    """Wrap explicit Runge-Kutta evolution as a Stepper (fixed or adaptive)."""
    return ErkStepper(table, system, substeps=substeps, tol=tol, controller=controller)


# ---------------------------------------------------------------------------
# Forcing method
# ---------------------------------------------------------------------------


def forcing_step(steppers, t: float, y: StateVector, h: float) -> StateVector:
    """One step of the two-partition forcing method.

    Partition 1 evolves over [t, t+h]; its average tendency
    f* = (v1(t+h) - y)/h is then added as a constant forcing while partition 2
    evolves from the original y over the same interval.
    """
    if len(steppers) != 2:
        raise diag.default_context().fail(
            diag.ERR_INVALID_ARGUMENT, "forcing method needs exactly 2 steppers",
            "forcing_step", "splitting")
    s1, s2 = steppers
    if not s2.supports_forcing:
        raise diag.default_context().fail(
            diag.ERR_UNSUPPORTED, "partition-2 stepper must support set_forcing",
            "forcing_step", "splitting")
    y = np.asarray(y, dtype=float)
    s1.reset(t, y)
    v1 = s1.evolve(t, t + h, y)
    f_star = (v1 - y) / h
    s2.set_forcing(f_star)
    try:
        s2.reset(t, y)
        v2 = s2.evolve(t, t + h, y)
    finally:
        s2.set_forcing(None)
    return v2


class ForcingMethod:
    """Fixed-step driver for the forcing method; validates stepper support up front."""

    def __init__(self, steppers):
        if len(steppers) != 2:
            raise diag.default_context().fail(
                diag.ERR_INVALID_ARGUMENT, "forcing method needs exactly 2 steppers",
                "ForcingMethod", "splitting")
        if not steppers[1].supports_forcing:
            raise diag.default_context().fail(
                diag.ERR_UNSUPPORTED, "partition-2 stepper must support set_forcing",
                "ForcingMethod", "splitting")
        self.steppers = list(steppers)

    def evolve(self, t0, tf, y0, n_steps, logger=None):
        h = (tf - t0) / n_steps
        y = np.asarray(y0, dtype=float)
        for i in range(n_steps):
            t = t0 + i * h
            if logger is not None:
                logger.info("ForcingEvolve", "begin-step-attempt", step=i + 1, tn=t, h=h)
            y = forcing_step(self.steppers, t, y, h)
            if logger is not None:
                logger.info("ForcingEvolve", "end-step-attempt", step=i + 1, tn=t, h=h,
                            accepted=1)
        return y


# ---------------------------------------------------------------------------
# Coefficient file format
# ---------------------------------------------------------------------------


def save_coefficients(coeffs: SplittingCoefficients, path) -> None:
    """Write "r s P order", then alpha, then beta in row-major (i, j, k) order."""
    with open(path, "w") as fh:
        fh.write(f"{coeffs.r} {coeffs.s} {coeffs.n_partitions} {coeffs.order}\n")
        fh.write(" ".join(repr(float(a)) for a in coeffs.alpha) + "\n")
        for i in range(coeffs.r):
            for j in range(coeffs.s + 1):
                fh.write(" ".join(repr(float(b)) for b in coeffs.beta[i, j]) + "\n")


def load_coefficients(path) -> SplittingCoefficients:
    """Read the text format written by :func:`save_coefficients`."""
    try:
        with open(path) as fh:
            tokens = fh.read().split()
    except OSError as exc:
        raise diag.default_context().fail(
            diag.ERR_IO, f"cannot read {path}: {exc}", "load_coefficients", "splitting")
    try:
        r, s, P, order = (int(tokens[i]) for i in range(4))
        values = [float(tok) for tok in tokens[4:]]
    except (ValueError, IndexError):
        raise diag.default_context().fail(
            diag.ERR_INVALID_ARGUMENT, "malformed coefficient file header",
            "load_coefficients", "splitting")
    expected = r + r * (s + 1) * P
    if len(values) != expected:
        raise diag.default_context().fail(
            diag.ERR_INVALID_ARGUMENT,
            f"expected {expected} values after header, found {len(values)}",
            "load_coefficients", "splitting")
    alpha = np.array(values[:r])
    beta = np.array(values[r:]).reshape(r, s + 1, P)
    return SplittingCoefficients("from-file", alpha, beta, order=order)
