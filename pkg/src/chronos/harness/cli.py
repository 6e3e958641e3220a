"""Command-line entry point for the experiment harness."""

from __future__ import annotations

import argparse
import os
import sys

from .. import diagnostics as diag
from ..diagnostics import Logger, logger_from_environment


def _build_logger(level: str | None) -> Logger:
    if level is None:
        return logger_from_environment()
    level = level.upper()
    sinks = {"ERROR": "stderr"}
    order = ["ERROR", "WARNING", "INFO", "DEBUG"]
    if level not in order:
        raise diag.ChronosError(diag.ErrCode(
            diag.ERR_INVALID_ARGUMENT, f"unknown log level {level!r}", "cli", "harness"))
    for lv in order[: order.index(level) + 1]:
        sinks.setdefault(lv, os.environ.get(f"CHRONOS_LOG_{lv}", "stderr"))
    return Logger(max_level=level, sinks=sinks)


def _float_list(text: str) -> list[float]:
    return [float(tok) for tok in text.split(",") if tok]


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="chronos",
        description="Desk-scale time-integration experiments; results go to CSV.")
    parser.add_argument("--log-level", default=None,
                        help="enable logging up to this level (ERROR/WARNING/INFO/DEBUG)")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gray-scott-splitting",
                       help="splitting convergence study on the Gray-Scott system")
    p.add_argument("--grid", type=int, default=64)
    p.add_argument("--t-end", type=float, default=10.0)
    p.add_argument("--i-max", type=int, default=7,
                   help="step sizes h = 2^-i for i = 0..i_max")
    p.add_argument("--out", default="gray_scott_splitting.csv")

    p = sub.add_parser("gray-scott-lsrk",
                       help="RKC vs order-2 ERK work-precision on Gray-Scott")
    p.add_argument("--grid", type=int, default=256)
    p.add_argument("--t-end", type=float, default=100.0)
    p.add_argument("--reltols", type=_float_list, default=[1e-2, 1e-3, 1e-4, 1e-5])
    p.add_argument("--abstol", type=float, default=1e-13)
    p.add_argument("--rho-factor", type=float, default=2.75)
    p.add_argument("--out", default="gray_scott_lsrk.csv")

    p = sub.add_parser("lotka-volterra",
                       help="forward/adjoint convergence on the predator-prey model")
    p.add_argument("--orders", type=lambda s: [int(x) for x in s.split(",")],
                   default=[3, 4, 5])
    p.add_argument("--h-list", type=_float_list, default=[0.5, 0.05, 0.005, 0.0005])
    p.add_argument("--out", default="lotka_volterra.csv")

    p = sub.add_parser("sprk-demo", help="long-time energy behavior demo")
    p.add_argument("--steps", type=int, default=100_000)
    p.add_argument("--h", type=float, default=0.1)
    p.add_argument("--out", default="sprk_demo.csv")

    p = sub.add_parser("aa-demo", help="Anderson acceleration strategies demo")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default="aa_demo.csv")

    args = parser.parse_args(argv)
    try:
        logger = _build_logger(args.log_level)
    except diag.ChronosError as exc:
        print(exc, file=sys.stderr)
        return 2

    try:
        if args.command == "gray-scott-splitting":
            from .gray_scott import run_gray_scott_splitting
            run_gray_scott_splitting(n=args.grid, t_end=args.t_end, i_max=args.i_max,
                                     out_csv=args.out, logger=logger)
        elif args.command == "gray-scott-lsrk":
            from .gray_scott import run_gray_scott_lsrk
            run_gray_scott_lsrk(n=args.grid, t_end=args.t_end, reltols=args.reltols,
                                abstol=args.abstol, rho_factor=args.rho_factor,
                                out_csv=args.out, logger=logger)
        elif args.command == "lotka-volterra":
            from .lotka_volterra import run_lotka_volterra
            run_lotka_volterra(orders=args.orders, hs=args.h_list, out_csv=args.out)
        elif args.command == "sprk-demo":
            from .demos import run_sprk_demo
            run_sprk_demo(n_steps=args.steps, h=args.h, out_csv=args.out)
        elif args.command == "aa-demo":
            from .demos import run_aa_demo
            run_aa_demo(seed=args.seed, out_csv=args.out)
    except diag.ChronosError as exc:
        print(exc, file=sys.stderr)
        return abs(exc.err.code) % 100 or 1
    print(f"wrote {args.out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
