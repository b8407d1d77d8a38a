"""Command-line front end.

    stagelab equilibrium    [--config FILE] [--set key=value ...] [--out DIR]
    stagelab chart          ...
    stagelab locus          ...
    stagelab simulate       ...
    stagelab velocity-stack ...
    stagelab repro FIG      [--out DIR] [--set key=value ...]

Exit codes: 0 success, 1 numerical/runtime failure, 2 invalid configuration.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
import time
from pathlib import Path
from typing import Callable, Optional, Sequence

import numpy as np

from . import svg
from .config import ConfigError, ExperimentConfig, SimBlock, StackBlock, load, shipped
from .equilibrium import (
    Family,
    PreconditionError,
    scaled_residual,
    slipping_pd,
    slipping_pid,
    sticking_pd,
    sticking_pid,
)
from .sim import analyze_steady_state, integrate
from .stability import ConvergenceError
from .sweep import (
    INDETERMINATE,
    STABLE,
    amplitude_chart,
    parameter_stack,
    root_locus,
    stability_chart,
)

EXIT_OK, EXIT_RUNTIME, EXIT_CONFIG = 0, 1, 2
VERDICT_NAMES = {STABLE: "stable", 0: "unstable", INDETERMINATE: "indeterminate"}


class RuntimeFailure(RuntimeError):
    """A numerical step failed after the configuration was accepted."""


def _num(x) -> str:
    """Shortest round-trip decimal for a float."""
    x = float(x)
    if math.isnan(x):
        return "nan"
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return repr(x)


def _write_csv(path: Path, header: Sequence[str], rows) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(row) + "\n")
    return path


def _out(cfg: ExperimentConfig, out_dir: Optional[str], suffix: str) -> Path:
    base = Path(out_dir) if out_dir else Path(cfg.output.dir)
    return base / f"{cfg.output.prefix}_{suffix}"


def _write_meta(cfg: ExperimentConfig, out_dir: Optional[str], command: str, extra=None) -> None:
    meta = {
        "command": command,
        "seed": os.environ.get("STAGELAB_SEED"),
        "threads": os.environ.get("STAGELAB_THREADS", "1"),
        "config": cfg.to_dict(),
    }
    if extra:
        meta.update(extra)
    p = _out(cfg, out_dir, f"{command}_meta.json")
    p.parent.mkdir(parents=True, exist_ok=True)
    p.write_text(json.dumps(meta, indent=2) + "\n")


# --- commands ------------------------------------------------------------------------


def cmd_equilibrium(cfg: ExperimentConfig, out_dir: Optional[str]) -> int:
    """All requested equilibrium families with their rhs residuals.

    Sticking families exist only at v_r = 0 and PD families only at k_i = 0,
    so those families are evaluated with that one field overridden; the
    override is reported.  Slipping families need the configured v_r != 0.
    """
    model = cfg.model()
    eq = cfg.equilibrium
    rows = []
    for fam in eq.families:
        family = Family(fam)
        m = model
        if family in (Family.STICKING_PD, Family.STICKING_PID):
            m = m.replace(v_r=0.0)
        if family in (Family.STICKING_PD, Family.SLIPPING_PD):
            m = m.replace(k_i=0.0)
        if family is Family.STICKING_PD:
            pt = sticking_pd(m, eq.eps0)
        elif family is Family.STICKING_PID:
            pt = sticking_pid(m, eq.eps_i0)
        elif family is Family.SLIPPING_PD:
            pt = slipping_pd(m)
        else:
            pt = slipping_pid(m)
        res = scaled_residual(pt.state, m)
        free = "" if pt.free_parameter is None else _num(pt.free_parameter)
        rows.append([fam, free, str(pt.admissible).lower(), _num(m.reference.v_r),
                     _num(m.gains.k_i), " ".join(_num(x) for x in pt.state), _num(res)])
        names = ",".join(m.state_names)
        print(f"{fam:13s} [{names}] = [{', '.join(f'{x:.10g}' for x in pt.state)}]"
              f"  free={free or '-'} admissible={pt.admissible} residual={res:.3g}"
              f"  (v_r={m.reference.v_r:g}, k_i={m.gains.k_i:g})")
    header = ["family", "free_parameter", "admissible", "v_r", "k_i", "state", "residual"]
    path = _write_csv(_out(cfg, out_dir, "equilibrium.csv"), header, rows)
    _write_meta(cfg, out_dir, "equilibrium")
    print(f"wrote {path}")
    return EXIT_OK


def _require(block, name: str) -> None:
    if block is None:
        raise ConfigError(f"this command needs a {name!r} block in the config")


def _chart_rows(field):
    xs, ys = field.grid.x.values(), field.grid.y.values()
    for ix, x in enumerate(xs):
        for iy, y in enumerate(ys):
            yield [_num(x), _num(y), _num(field.values[ix, iy]),
                   VERDICT_NAMES[int(field.verdicts[ix, iy])]]


def cmd_chart(cfg: ExperimentConfig, out_dir: Optional[str]) -> int:
    _require(cfg.grid, "grid")
    model = cfg.model()
    if cfg.chart.mode == "eigen":
        field = stability_chart(cfg.grid, model, cfg.controller_arg)
        value_col = "max_real"
    else:
        sim = cfg.sim or SimBlock()
        field = amplitude_chart(cfg.grid, model, sim.t_end, cfg.chart.coordinate,
                                sim.rtol, sim.atol, sim.settle_fraction)
        value_col = "amplitude_pp"
    csv = _write_csv(_out(cfg, out_dir, "chart.csv"), ["x", "y", value_col, "verdict"],
                     _chart_rows(field))
    title = f"{cfg.system} {field.controller.upper()} {cfg.chart.mode}"
    pic = svg.chart(field, _out(cfg, out_dir, "chart.svg"), title)
    summary = {"stable_cells": field.stable_count,
               "indeterminate_cells": field.indeterminate_count,
               "boundary_polylines": len(field.boundary)}
    _write_meta(cfg, out_dir, "chart", summary)
    print(" ".join(f"{k}={v}" for k, v in summary.items()))
    print(f"wrote {csv}\nwrote {pic}")
    return EXIT_OK


def cmd_locus(cfg: ExperimentConfig, out_dir: Optional[str]) -> int:
    _require(cfg.locus, "locus")
    lb = cfg.locus
    rl = root_locus(lb.param, lb.lo, lb.hi, lb.n_points, cfg.model(), cfg.controller_arg,
                    lb.scale, lb.refine)
    rows = []
    for b in range(rl.branches.shape[1]):
        for k, val in enumerate(rl.values):
            z = rl.branches[k, b]
            rows.append([str(b), _num(val), _num(z.real), _num(z.imag), str(int(rl.stable[k]))])
    csv = _write_csv(_out(cfg, out_dir, "locus.csv"),
                     ["branch_id", "param", "re", "im", "stable_flag"], rows)
    exclude = [rl.lambda_z_branch] if lb.exclude_lambda_z and rl.lambda_z_branch is not None else []
    pic = svg.locus(rl, _out(cfg, out_dir, "locus.svg"), exclude,
                    f"{cfg.system} root locus over {lb.param}")
    crossings = [rl.crossings(b) for b in range(rl.branches.shape[1])]
    summary = {"points": len(rl.values), "lambda_z_branch": rl.lambda_z_branch,
               "crossings": crossings, "splits": len(rl.splits)}
    _write_meta(cfg, out_dir, "locus", summary)
    print(" ".join(f"{k}={v}" for k, v in summary.items()))
    print(f"wrote {csv}\nwrote {pic}")
    return EXIT_OK


def _metrics_line(system: str, status: str, m) -> str:
    def opt(x):
        return "-" if x is None else f"{x:.6g}"

    return (f"system={system} status={status} classification={m.classification} "
            f"amplitude_pp={m.amplitude_pp:.6g} period={opt(m.period)} "
            f"stick_fraction={opt(m.stick_fraction)} n_cycles={m.n_cycles}")


def cmd_simulate(cfg: ExperimentConfig, out_dir: Optional[str]) -> int:
    _require(cfg.sim, "sim")
    sb = cfg.sim
    systems = list(sb.systems) if sb.systems else [cfg.system]
    coordinate = sb.coordinate or "eps_dot"
    rows, failed, amps = [], False, {}
    for system in systems:
        model = cfg.model(system)
        tr = integrate(model, t_end=sb.t_end, rtol=sb.rtol, atol=sb.atol)
        t = np.arange(0.0, tr.t_end, 1.0 / sb.sample_rate)
        t = np.append(t, tr.t_end) if t[-1] < tr.t_end else t
        states = tr.resample(t)
        _write_csv(_out(cfg, out_dir, f"{system}_trajectory.csv"), ["t", *model.state_names],
                   ([_num(a), *(_num(v) for v in row)] for a, row in zip(t, states)))
        try:
            m = analyze_steady_state(tr, coordinate, sb.settle_fraction)
        except ValueError as exc:
            raise RuntimeFailure(f"{system}: {exc}") from None
        print(_metrics_line(system, tr.status, m))
        amps[system] = m.amplitude_pp
        rows.append([system, tr.status, m.classification, _num(m.amplitude_pp),
                     _num(m.period) if m.period is not None else "",
                     _num(m.stick_fraction) if m.stick_fraction is not None else "",
                     str(m.n_cycles)])
        failed |= tr.status not in ("ok", "diverged")

        xn, vn = ("eps", "eps_dot") if system == "alpha" else ("eps_b", "eps_b_dot")
        ix, iv = tr.index(xn), tr.index(vn)
        keep = t >= sb.settle_fraction * tr.t_end
        hl = None
        if m.classification == "limit-cycle" and m.period:
            cyc = t >= tr.t_end - m.period
            hl = (states[cyc, ix], states[cyc, iv])
        svg.phase(states[keep, ix], states[keep, iv],
                  _out(cfg, out_dir, f"{system}_phase.svg"), hl, (xn, vn),
                  f"{system}: {m.classification}")
    _write_csv(_out(cfg, out_dir, "metrics.csv"),
               ["system", "status", "classification", "amplitude_pp", "period",
                "stick_fraction", "n_cycles"], rows)
    extra = {}
    if "alpha" in amps and "beta" in amps and amps["alpha"] > 0:
        extra["amplitude_ratio_beta_over_alpha"] = amps["beta"] / amps["alpha"]
        print(f"amplitude_ratio beta/alpha={extra['amplitude_ratio_beta_over_alpha']:.6g}")
    _write_meta(cfg, out_dir, "simulate", extra)
    return EXIT_RUNTIME if failed else EXIT_OK


def cmd_velocity_stack(cfg: ExperimentConfig, out_dir: Optional[str]) -> int:
    _require(cfg.grid, "grid")
    sb = cfg.stack or StackBlock()
    values = sb.stack_values()
    if sb.param == "v_r" and any(v == 0.0 for v in values):
        raise ConfigError("velocity stack needs nonzero v_r values")
    st = parameter_stack(cfg.grid, sb.param, values, cfg.model(), cfg.controller_arg)
    rows = [[_num(v), str(f.stable_count), str(f.indeterminate_count)]
            for v, f in zip(st.values, st.fields)]
    csv = _write_csv(_out(cfg, out_dir, "stack.csv"),
                     [sb.param, "stable_cells", "indeterminate_cells"], rows)
    pic = svg.stack(st, _out(cfg, out_dir, "stack.svg"),
                    f"{cfg.system} boundaries across {sb.param}")
    summary = {"param": sb.param, "min_area_value": st.value_min_area,
               "min_area_cells": int(st.areas.min())}
    _write_meta(cfg, out_dir, "velocity-stack", summary)
    print(" ".join(f"{k}={v}" for k, v in summary.items()))
    print(f"wrote {csv}\nwrote {pic}")
    return EXIT_OK


COMMANDS: dict[str, Callable[[ExperimentConfig, Optional[str]], int]] = {
    "equilibrium": cmd_equilibrium,
    "chart": cmd_chart,
    "locus": cmd_locus,
    "simulate": cmd_simulate,
    "velocity-stack": cmd_velocity_stack,
}

# figure id -> (command, shipped config) jobs
REPRO: dict[str, list[tuple[str, str]]] = {
    "fig2": [("chart", "fig2_ki_kp"), ("chart", "fig2_ki_kd"),
             ("chart", "fig2_ki_kp_sim"), ("chart", "fig2_ki_kd_sim")],
    "fig3": [("chart", "fig3_alpha"), ("chart", "fig3_beta")],
    "fig4": [("velocity-stack", "fig4_alpha"), ("velocity-stack", "fig4_beta")],
    "fig5": [("chart", "fig5_alpha"), ("chart", "fig5_beta"),
             ("chart", "fig5_alpha_decoupled"), ("chart", "fig5_beta_decoupled")],
    "fig6": [("velocity-stack", "fig6_alpha"), ("velocity-stack", "fig6_beta")],
    "fig7": [("locus", "fig7_alpha_kp"), ("locus", "fig7_beta_kp"),
             ("locus", "fig7_alpha_kd"), ("locus", "fig7_beta_kd")],
    "fig8": [("velocity-stack", "fig8_mu_k"), ("velocity-stack", "fig8_mu_c")],
    "fig9": [("simulate", "fig9_case1"), ("simulate", "fig9_case2"),
             ("simulate", "fig9_case3"), ("simulate", "fig9_case4")],
    "fig10": [("simulate", "fig10")],
    "fig11": [("chart", "fig11_mu_k_mu_c"), ("chart", "fig11_mu_t_mu_b")],
}


def cmd_repro(fig: str, out_dir: Optional[str], overrides) -> int:
    if fig not in REPRO:
        raise ConfigError(f"unknown figure {fig!r}; choose from {sorted(REPRO, key=lambda s: int(s[3:]))}")
    base = Path(out_dir) if out_dir else Path("out")
    worst = EXIT_OK
    for command, name in REPRO[fig]:
        cfg = load(shipped(name), overrides)
        print(f"== {fig}: {command} {name}")
        t0 = time.perf_counter()
        code = COMMANDS[command](cfg, str(base / fig))
        print(f"   done in {time.perf_counter() - t0:.1f} s")
        worst = max(worst, code)
    return worst


# --- entry point ---------------------------------------------------------------------


HELP = {
    "equilibrium": "equilibrium states of the requested families",
    "chart": "stability or simulated-amplitude chart over a 2-D grid",
    "locus": "eigenvalue branches along a one-parameter sweep",
    "simulate": "time simulation with steady-state classification",
    "velocity-stack": "stack of charts over a third parameter",
}


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="stagelab", description=__doc__.split("\n\n")[0])
    sub = p.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        s = sub.add_parser(name, help=HELP[name])
        s.add_argument("--config", "-c", help="JSON config (default: shipped default.json)")
        s.add_argument("--set", dest="overrides", action="append", default=[],
                       metavar="KEY=VALUE", help="dotted-path override, e.g. gains.k_p=3e4")
        s.add_argument("--out", help="output directory (overrides output.dir)")
    r = sub.add_parser("repro", help="run the shipped configs for one figure")
    r.add_argument("figure", help="fig2 ... fig11")
    r.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE")
    r.add_argument("--out", help="output directory (default: out)")
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = _parser().parse_args(argv)
    try:
        if args.command == "repro":
            return cmd_repro(args.figure, args.out, args.overrides)
        path = args.config or shipped("default")
        cfg = load(path, args.overrides)
        return COMMANDS[args.command](cfg, args.out)
    except (ConfigError, PreconditionError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (RuntimeFailure, ConvergenceError, ArithmeticError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
