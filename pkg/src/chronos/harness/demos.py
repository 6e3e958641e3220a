"""Demo subcommands: long-time symplectic energy behavior and Anderson
acceleration strategies (including example damping/depth callbacks)."""

from __future__ import annotations

import numpy as np

from ..anderson import AndersonConfig, FixedPointProblem, fixed_point_solve
from ..sprk import HamiltonianSystem, builtin_sprk, sprk_evolve
from .util import Timer, fmt, write_csv

__all__ = [
    "harmonic_oscillator",
    "run_sprk_demo",
    "gain_damping",
    "residual_depth",
    "run_aa_demo",
]


def harmonic_oscillator() -> HamiltonianSystem:
    return HamiltonianSystem(1, 1, lambda t, q: -q, lambda t, p: p)


def run_sprk_demo(n_steps: int = 100_000, h: float = 0.1,
                  out_csv: str = "sprk_demo.csv"):
    """Energy conservation of the built-in methods on the harmonic oscillator."""
    system = harmonic_oscillator()
    p0, q0 = np.array([1.0]), np.array([0.0])
    e0 = 0.5 * (p0[0] ** 2 + q0[0] ** 2)
    rows = []
    for order in (1, 2, 3, 4):
        coeffs = builtin_sprk(order)
        for algorithm in ("standard", "increment"):
            max_dev = 0.0

            def watch(t, p, q):
                nonlocal max_dev
                max_dev = max(max_dev, abs(0.5 * (p[0] ** 2 + q[0] ** 2) - e0))

            with Timer() as tm:
                p, q = sprk_evolve(coeffs, system, 0.0, p0, q0, h, n_steps,
                                   algorithm=algorithm, observer=watch)
            rows.append({"method": coeffs.name, "order": order,
                         "algorithm": algorithm, "h": h, "steps": n_steps,
                         "max_energy_error": max_dev, "time_s": tm.seconds})
    header = ["method", "order", "algorithm", "h", "steps", "max_energy_error",
              "time_s"]
    write_csv(out_csv, header, [[fmt(r[k]) for k in header] for r in rows])
    return rows


def gain_damping(beta_min: float = 0.1):
    """Example damping callback: blend toward plain iteration when the
    predicted acceleration gain is poor.

    The predicted post-acceleration residual is sqrt(||f||^2 - ||Qt f||^2);
    its ratio to ||f|| is the gain angle theta, and beta = max(beta_min,
    1 - theta)."""

    def damping(k, u, g_val, qt_f, depth, user_data):
        f = g_val - u
        nf = float(np.linalg.norm(f))
        if nf == 0.0 or len(qt_f) == 0:
            return 1.0
        predicted = np.sqrt(max(0.0, nf * nf - float(qt_f @ qt_f)))
        theta = predicted / nf
        return max(beta_min, 1.0 - theta)

    return damping


def residual_depth():
    """Example depth callback: shed the oldest history column whenever the
    residual norm failed to decrease."""
    state = {"prev": np.inf}

    def depth_fn(k, u, g_val, f_val, df_history, R, depth, user_data):
        rnorm = float(np.linalg.norm(f_val))
        grew = rnorm >= state["prev"]
        state["prev"] = rnorm
        if grew and depth > 1:
            flags = [True] + [False] * (depth - 1)
            return depth - 1, flags
        return depth, [False] * depth

    return depth_fn


def _affine_problem(n: int, seed: int):
    rng = np.random.default_rng(seed)
    M = rng.standard_normal((n, n))
    M *= 0.8 / max(np.abs(np.linalg.eigvals(M)))
    b = rng.standard_normal(n)
    return FixedPointProblem(n, lambda u: M @ u + b), np.zeros(n)


def run_aa_demo(seed: int = 0, out_csv: str = "aa_demo.csv"):
    """Compare fixed, damped, gain-damped, and depth-adapted acceleration."""
    problems = {
        "affine-n6": _affine_problem(6, seed),
        "cosine": (FixedPointProblem(1, lambda u: np.cos(u)), np.array([1.0])),
    }
    rows = []
    for pname, (problem, u0) in problems.items():
        # Callback strategies carry per-solve state, so configs are per
        # problem; the window depth is capped by the problem dimension.
        m = min(3, problem.dimension)
        strategies = {
            "plain": AndersonConfig(max_depth=0, damping=1.0, max_iters=500),
            "aa-depth3": AndersonConfig(max_depth=m, damping=1.0, max_iters=500),
            "aa-damped": AndersonConfig(max_depth=m, damping=0.7, max_iters=500),
            "aa-gain-damping": AndersonConfig(max_depth=m, damping=gain_damping(),
                                              max_iters=500),
            "aa-residual-depth": AndersonConfig(max_depth=m, damping=1.0,
                                                depth_fn=residual_depth(),
                                                max_iters=500),
        }
        for sname, cfg in strategies.items():
            with Timer() as tm:
                res = fixed_point_solve(problem, u0, cfg)
            rows.append({"problem": pname, "strategy": sname,
                         "iterations": res.iterations,
                         "final_residual": res.residual_history[-1],
                         "time_s": tm.seconds})
    header = ["problem", "strategy", "iterations", "final_residual", "time_s"]
    write_csv(out_csv, header, [[fmt(r[k]) for k in header] for r in rows])
    return rows
