"""chronos: one-step time integration toolkit.

Method families: explicit and low-storage Runge-Kutta, symplectic partitioned
Runge-Kutta, operator splitting and the forcing method, multirate step control,
discrete adjoint sensitivities for explicit Runge-Kutta, and Anderson-accelerated
fixed-point solving, plus structured logging/error handling and a benchmark CLI.
"""

__version__ = "0.1.0"
