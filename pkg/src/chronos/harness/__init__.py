"""Benchmark harness: desk-scale reproductions of the convergence and
work-precision experiments, plus demo subcommands, all emitting CSV."""
