#!/usr/bin/env python3
"""Run the shipped figure configs and check each against its time budget.

Usage::

    python3 scripts/reproduce_figures.py            # every figure
    python3 scripts/reproduce_figures.py fig3 fig7  # a subset
    python3 scripts/reproduce_figures.py --out results

Budgets are wall-clock seconds on a single laptop-class core, with at least
3x headroom over the measured times so a slower machine still passes.  Set STAGELAB_THREADS to use
more cores for the grid sweeps.  Exit status is the worst CLI exit code, or 1
if any figure overran its budget.
"""

import argparse
import sys
import time

from stagelab.cli import REPRO, main

# seconds; measured single-core times are in the README
BUDGETS = {
    "fig2": 900,
    "fig3": 30,
    "fig4": 60,
    "fig5": 60,
    "fig6": 60,
    "fig7": 60,
    "fig8": 30,
    "fig9": 120,
    "fig10": 60,
    "fig11": 30,
}


def run(fig: str, out: str) -> tuple[int, float]:
    t0 = time.perf_counter()
    code = main(["repro", fig, "--out", out])
    return code, time.perf_counter() - t0


def cli(argv=None) -> int:
    p = argparse.ArgumentParser(description=__doc__.split("\n\n")[0])
    p.add_argument("figures", nargs="*", default=list(REPRO))
    p.add_argument("--out", default="out")
    args = p.parse_args(argv)
    unknown = [f for f in args.figures if f not in REPRO]
    if unknown:
        print(f"unknown figures {unknown}; choose from {list(REPRO)}", file=sys.stderr)
        return 2
    worst = 0
    rows = []
    for fig in args.figures:
        code, dt = run(fig, args.out)
        over = dt > BUDGETS[fig]
        worst = max(worst, code, 1 if over else 0)
        rows.append((fig, code, dt, BUDGETS[fig], over))
    print("\nfigure  exit  seconds  budget")
    for fig, code, dt, budget, over in rows:
        print(f"{fig:<7} {code:>4} {dt:>8.1f} {budget:>7}{'  OVER BUDGET' if over else ''}")
    return worst


if __name__ == "__main__":
    sys.exit(cli())
