"""Symplectic partitioned Runge-Kutta methods for separable Hamiltonian systems.

Two explicit fixed-step procedures are provided: the standard formulation and
an increment formulation that carries compensated (Kahan-Babuska-Neumaier)
sums to reduce roundoff accumulation over long integrations.  The standard
form needs a few less floating-point operations and one less stored vector per
step; that cost difference is documented here, not asserted by tests.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import diagnostics as diag
from .core import StateVector

__all__ = [
    "HamiltonianSystem",
    "SprkCoefficients",
    "CompensatedAccumulator",
    "sprk_step_standard",
    "sprk_step_increment",
    "builtin_sprk",
    "sprk_evolve",
]


@dataclass
class HamiltonianSystem:
    """Separable system: p' = f1(t, q) (force), q' = f2(t, p) (velocity)."""

    n_p: int
    n_q: int
    f1: Callable[[float, StateVector], StateVector]
    f2: Callable[[float, StateVector], StateVector]

    def force(self, t: float, q: StateVector) -> StateVector:
        out = np.asarray(self.f1(t, q), dtype=float)
        if out.shape != (self.n_p,):
            raise diag.default_context().fail(
                diag.ERR_DIMENSION_MISMATCH, "f1 output dimension mismatch",
                "HamiltonianSystem.f1", "sprk")
        return out

    def velocity(self, t: float, p: StateVector) -> StateVector:
        out = np.asarray(self.f2(t, p), dtype=float)
        if out.shape != (self.n_q,):
            raise diag.default_context().fail(
                diag.ERR_DIMENSION_MISMATCH, "f2 output dimension mismatch",
                "HamiltonianSystem.f2", "sprk")
        return out


@dataclass
class SprkCoefficients:
    """Stage weights (a, a_hat) of an s-stage method of the given order.

    Abscissae are inclusive prefix sums, computed on the fly: c_i = sum(a[:i+1])
    and c_hat_i = sum(a_hat[:i+1]).  Both weight vectors must sum to 1.
    """

    name: str
    a: np.ndarray
    a_hat: np.ndarray
    order: int

    def __post_init__(self):
        self.a = np.asarray(self.a, dtype=float)
        self.a_hat = np.asarray(self.a_hat, dtype=float)
        if self.a.shape != self.a_hat.shape or self.a.ndim != 1:
            raise diag.default_context().fail(
                diag.ERR_DIMENSION_MISMATCH, "a and a_hat must be equal-length vectors",
                "SprkCoefficients", "sprk")
        for label, w in (("a", self.a), ("a_hat", self.a_hat)):
            if abs(w.sum() - 1.0) > 1e-12:
                raise diag.default_context().fail(
                    diag.ERR_INVALID_ARGUMENT, f"{label} must sum to 1",
                    "SprkCoefficients", "sprk")

    @property
    def s(self) -> int:
        return len(self.a)

    @property
    def c(self) -> np.ndarray:
        return np.cumsum(self.a)

    @property
    def c_hat(self) -> np.ndarray:
        return np.cumsum(self.a_hat)


class CompensatedAccumulator:
    """Running compensated sum of a state vector (Neumaier variant).

    ``total()`` returns value + compensation; adding zero leaves both parts
    unchanged.
    """

    def __init__(self, value: StateVector):
        self.value = np.array(value, dtype=float)
        self.compensation = np.zeros_like(self.value)

    def add(self, delta: StateVector) -> None:
        delta = np.asarray(delta, dtype=float)
        t = self.value + delta
        value_bigger = np.abs(self.value) >= np.abs(delta)
        correction = np.where(value_bigger,
                              (self.value - t) + delta,
                              (delta - t) + self.value)
        self.compensation += correction
        self.value = t

    def total(self) -> np.ndarray:
        return self.value + self.compensation


def sprk_step_standard(coeffs: SprkCoefficients, system: HamiltonianSystem,
                       t: float, p: StateVector, q: StateVector, h: float):
    """One step of the standard formulation.

    P_i = P_{i-1} + h a_hat_i f1(t + c_hat_i h, Q_i);
    Q_{i+1} = Q_i + h a_i f2(t + c_i h, P_i).
    """
    c, c_hat = coeffs.c, coeffs.c_hat
    P = np.array(p, dtype=float)
    Q = np.array(q, dtype=float)
    for i in range(coeffs.s):
        P += h * coeffs.a_hat[i] * system.force(t + c_hat[i] * h, Q)
        Q += h * coeffs.a[i] * system.velocity(t + c[i] * h, P)
    return P, Q


def sprk_step_increment(coeffs: SprkCoefficients, system: HamiltonianSystem,
                        t: float, p: StateVector, q: StateVector, h: float,
                        acc_p: CompensatedAccumulator, acc_q: CompensatedAccumulator):
    """One step of the increment formulation with compensated summation.

    Stage increments are built from the base state (p, q); the final update
    folds them into the accumulators.  Returns the accumulator totals, which
    the caller should use as the next base state.
    """
    c, c_hat = coeffs.c, coeffs.c_hat
    dP = np.zeros_like(np.asarray(p, dtype=float))
    dQ = np.zeros_like(np.asarray(q, dtype=float))
    for i in range(coeffs.s):
        dP = dP + h * coeffs.a_hat[i] * system.force(t + c_hat[i] * h, q + dQ)
        dQ = dQ + h * coeffs.a[i] * system.velocity(t + c[i] * h, p + dP)
    acc_p.add(dP)
    acc_q.add(dQ)
    return acc_p.total(), acc_q.total()


def builtin_sprk(order: int) -> SprkCoefficients:
    """Built-in methods of orders 1-4; higher orders must be user-supplied."""
    if order == 1:
        return SprkCoefficients("symplectic-euler-1", [1.0], [1.0], order=1)
    if order == 2:
        return SprkCoefficients("leapfrog-2", [1.0, 0.0], [0.5, 0.5], order=2)
    if order == 3:
        return SprkCoefficients(
            "ruth-3",
            [2.0 / 3.0, -2.0 / 3.0, 1.0],
            [7.0 / 24.0, 3.0 / 4.0, -1.0 / 24.0],
            order=3)
    if order == 4:
        theta = 1.0 / (2.0 - 2.0 ** (1.0 / 3.0))
        return SprkCoefficients(
            "forest-ruth-4",
            [theta, 1.0 - 2.0 * theta, theta, 0.0],
            [theta / 2.0, (1.0 - theta) / 2.0, (1.0 - theta) / 2.0, theta / 2.0],
            order=4)
    raise diag.default_context().fail(
        diag.ERR_UNSUPPORTED, f"no built-in method of order {order} (built-ins cover 1-4)",
        "builtin_sprk", "sprk")


def sprk_evolve(coeffs: SprkCoefficients, system: HamiltonianSystem, t0: float,
                p0: StateVector, q0: StateVector, h: float, n_steps: int,
                algorithm: str = "standard",
                observer: Callable[[float, StateVector, StateVector], None] | None = None):
    """Fixed-step integration over n steps; returns the final (p, q).

    ``observer`` (if given) is called after every step with (t, p, q).
    """
    if algorithm not in ("standard", "increment"):
        raise diag.default_context().fail(
            diag.ERR_INVALID_ARGUMENT, f"unknown algorithm {algorithm!r}",
            "sprk_evolve", "sprk")
    p = np.array(p0, dtype=float)
    q = np.array(q0, dtype=float)
    if algorithm == "increment":
        acc_p = CompensatedAccumulator(p)
        acc_q = CompensatedAccumulator(q)
    t = t0
    for i in range(n_steps):
        t = t0 + i * h
        if algorithm == "standard":
            p, q = sprk_step_standard(coeffs, system, t, p, q, h)
        else:
            p, q = sprk_step_increment(coeffs, system, t, p, q, h, acc_p, acc_q)
        if observer is not None:
            observer(t + h, p, q)
    return p, q
