"""Command-line front end.

Verbs: ``run``, ``sweep``, ``check`` and ``dump-config``. Exit codes: 0 on
success, 1 on configuration or solver errors (and runs hitting the step
limit), 2 when the OCP turned infeasible or the start state is unsafe, 3
when a certification check failed.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path
from typing import Sequence

import numpy as np

from .config import PRESETS, ConfigError, RunConfig, dump_config, load_config
from .ocp import InfeasibleOcp, OcpSolverError, OcpSpec, bellman_residual
from .sim import ClosedLoopRun, SweepResult, Termination, run_closed_loop, sweep

log = logging.getLogger("horizon_mpc")

EXIT_OK, EXIT_ERROR, EXIT_INFEASIBLE, EXIT_CHECK = 0, 1, 2, 3
SWEEP_COLUMNS = ["N", "Ntilde", "constraint_horizon", "J", "beta", "alpha",
                 "applicable", "bound_holds", "V0"]
FIG2_COLUMNS = ["constraint_horizon", "measured_J", "bound_V0_over_alpha"]


def parse_int_list(text: str) -> list[int]:
    """``"1,3,5"`` or ``"8..19"`` (inclusive), possibly mixed: ``"1,4..6"``."""
    out: list[int] = []
    for part in text.split(","):
        part = part.strip()
        if not part:
            continue
        if ".." in part:
            lo, hi = part.split("..", 1)
            out.extend(range(int(lo), int(hi) + 1))
        else:
            out.append(int(part))
    if not out:
        raise argparse.ArgumentTypeError(f"empty integer list {text!r}")
    return out


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def write_trajectory_csv(path: Path, spec: OcpSpec, run: ClosedLoopRun) -> None:
    n, m = spec.sys.n, spec.sys.m
    labels = spec.barriers.labels() if spec.barriers is not None else []
    header = ["k"] + [f"x{i + 1}" for i in range(n)] + [f"u{i + 1}" for i in range(m)]
    header += ["l", "V_N"] + labels
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for k, x in enumerate(run.states):
            row = [k] + [_fmt(v) for v in x]
            if k < run.T:
                row += [_fmt(v) for v in run.inputs[k]] + [_fmt(run.stage_costs[k])]
            else:
                row += [""] * (m + 1)
            row.append(_fmt(run.values[k]) if k < run.values.size else "")
            if spec.barriers is not None:
                row += [_fmt(v) for v in spec.barriers.values(x)]
            w.writerow(row)


def write_sweep_csv(path: Path, result: SweepResult) -> None:
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SWEEP_COLUMNS)
        for (N, K), cell in sorted(result.cells.items()):
            head = [N, N - K, K]
            if cell.status == "na":
                w.writerow([N, "", K, "N.A."] + [""] * 5)
            elif not cell.ok:
                w.writerow(head + [cell.status] + [""] * 5)
            elif cell.report is None:
                w.writerow(head + [_fmt(cell.J), "", "", "", "", _fmt(cell.V0)])
            else:
                r = cell.report
                w.writerow(head + [_fmt(cell.J), _fmt(r.beta), _fmt(r.alpha),
                                   _fmt(r.applicable), _fmt(r.bound_holds), _fmt(r.V0)])


def write_fig2_csv(path: Path, result: SweepResult, N: int) -> None:
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(FIG2_COLUMNS)
        for (n, K), cell in sorted(result.cells.items()):
            if n == N and cell.ok and cell.report is not None and cell.report.applicable:
                w.writerow([K, _fmt(cell.J), _fmt(cell.report.estimated_bound)])


def _resolve_config(args) -> RunConfig:
    if args.config and args.preset:
        raise ConfigError("--preset", "give either --config or --preset")
    if args.config:
        cfg = load_config(args.config)
    else:
        cfg = PRESETS[args.preset or "paper-benchmark"]()
    N = min(args.N) if isinstance(args.N, list) else args.N
    horizon = getattr(args, "constraint_horizon", None)
    if getattr(args, "constraint_horizons", None) and args.ntilde is None:
        # sweep template: any valid pair will do, each cell sets its own
        horizon = 1
    return cfg.with_overrides(
        N=N,
        Ntilde=args.ntilde,
        constraint_horizon=horizon,
        out_dir=args.out_dir,
        eps=args.eps,
        max_steps=args.max_steps,
        abs_tol=args.tol,
        rel_tol=args.tol,
        seed=args.seed,
    )


def _bellman_check(spec: OcpSpec, states, samples: int) -> float:
    idx = np.unique(np.linspace(0, len(states) - 1, min(samples, len(states))).astype(int))
    worst = 0.0
    for k in idx:
        for n in range(1, spec.N + 1):
            worst = max(worst, bellman_residual(spec, states[k], n))
    return worst


def cmd_run(args) -> int:
    cfg = _resolve_config(args)
    if args.dump_config:
        Path(args.dump_config).write_text(dump_config(cfg))
    spec = cfg.build_spec()
    x0 = np.array(cfg.x0)
    bad = spec.violations(x0, cfg.feas_tol)
    if bad:
        print(f"x0 violates the safe set: {', '.join(bad)}", file=sys.stderr)
        return EXIT_INFEASIBLE
    run = run_closed_loop(spec, x0, cfg.eps, cfg.max_steps, certify_run=True)
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_trajectory_csv(out / "trajectory.csv", spec, run)
    report = run.report.to_dict() if run.report is not None else {}
    report.update({
        "terminated": run.terminated.value,
        "steps": run.T,
        "seed": cfg.seed,
    })
    if run.failure is not None:
        report["failure"] = str(run.failure)
        report["failed_state"] = run.failure.x0.tolist()
    (out / "bound_report.json").write_text(json.dumps(report, indent=2, sort_keys=True) + "\n")
    print(f"{run.terminated.value}: T={run.T} J={run.J:.10g} -> {out}")
    if run.terminated is Termination.CONVERGED:
        return EXIT_OK
    if run.terminated is Termination.INFEASIBLE:
        print(str(run.failure), file=sys.stderr)
        return EXIT_INFEASIBLE
    print(f"no convergence within {cfg.max_steps} steps", file=sys.stderr)
    return EXIT_ERROR


def _sweep_checks(cfg: RunConfig, result: SweepResult, tol: float, bellman_samples: int) -> list[str]:
    problems = []
    for (N, K), cell in sorted(result.cells.items()):
        tag = f"N={N} N-Ntilde={K}"
        if cell.status == "na":
            continue
        if not cell.ok:
            problems.append(f"{tag}: {cell.status} {cell.message}")
            continue
        if cell.safe is False or cell.decay_ok is False:
            problems.append(f"{tag}: barrier invariance violated")
        if cell.report is not None:
            problems += [f"{tag}: {v}" for v in cell.report.violations(tol)]
        if bellman_samples > 0:
            spec = cfg.build_spec(N=N, Ntilde=N - K)
            run = run_closed_loop(spec, np.array(cfg.x0), cfg.eps, cfg.max_steps)
            worst = _bellman_check(spec, run.states, bellman_samples)
            if worst > 1e-5:
                problems.append(f"{tag}: Bellman residual {worst:.3g}")
    return problems


def cmd_sweep(args, force_check: bool = False) -> int:
    cfg = _resolve_config(args)
    N_list = args.N if isinstance(args.N, list) else [cfg.N]
    horizons = args.constraint_horizons or [cfg.constraint_horizon]
    result = sweep(
        cfg.build_spec(),
        N_list, horizons, np.array(cfg.x0), cfg.eps, cfg.max_steps,
        certify_run=True, jobs=args.jobs,
    )
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_sweep_csv(out / "sweep.csv", result)
    if len(N_list) == 1:
        write_fig2_csv(out / "fig2_data.csv", result, N_list[0])
    else:
        for N in N_list:
            write_fig2_csv(out / f"fig2_data_N{N}.csv", result, N)
    for (N, K), cell in sorted(result.cells.items()):
        r = cell.report
        info = "N.A." if cell.status == "na" else (
            f"J={cell.J:.8g}" + ("" if r is None else
                                 f" beta={r.beta:.4g} alpha={r.alpha:.4g} applicable={r.applicable}")
        )
        print(f"N={N:>3} N-Ntilde={K:>3} {cell.status:<10} {info}")
    exit_code = EXIT_OK
    if any(c.status == "infeasible" for c in result.cells.values()):
        exit_code = EXIT_INFEASIBLE
    elif any(c.status == "error" for c in result.cells.values()):
        exit_code = EXIT_ERROR
    if args.check or force_check:
        problems = _sweep_checks(cfg, result, args.check_tol, args.bellman_samples)
        for p in problems:
            print(f"CHECK FAILED {p}", file=sys.stderr)
        if problems and exit_code == EXIT_OK:
            exit_code = EXIT_CHECK
        if not problems:
            print("all certification checks passed")
    return exit_code


def cmd_dump_config(args) -> int:
    cfg = _resolve_config(args)
    text = dump_config(cfg)
    if args.output:
        Path(args.output).write_text(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="YAML run configuration")
    common.add_argument("--preset", choices=sorted(PRESETS), help="built-in configuration")
    common.add_argument("--ntilde", type=int, help="number of unconstrained tail steps")
    common.add_argument("--out-dir")
    common.add_argument("--eps", type=float, help="stop once the stage cost drops below this")
    common.add_argument("--max-steps", type=int)
    common.add_argument("--tol", type=float, help="QP absolute and relative tolerance")
    common.add_argument("--jobs", type=int, default=None, help="worker processes for sweeps")
    common.add_argument("--seed", type=int)
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="horizon-mpc", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="verb", required=True)

    p_run = sub.add_parser("run", parents=[common], help="closed-loop run with bound report")
    p_run.add_argument("--N", type=int)
    p_run.add_argument("--constraint-horizon", type=int)
    p_run.add_argument("--dump-config", metavar="PATH", help="also write the resolved config")
    p_run.set_defaults(func=cmd_run)

    for verb, helptext in (("sweep", "sweep over N and constraint horizons"),
                           ("check", "sweep plus all certification checks")):
        p = sub.add_parser(verb, parents=[common], help=helptext)
        p.add_argument("--N", type=parse_int_list, help="e.g. 20 or 6,13,20")
        p.add_argument("--constraint-horizons", "--constraint-horizon",
                       dest="constraint_horizons", type=parse_int_list, help="e.g. 8..19 or 1,3,5")
        p.add_argument("--check", action="store_true", help="run certification checks")
        p.add_argument("--check-tol", type=float, default=1e-6)
        p.add_argument("--bellman-samples", type=int, default=5,
                       help="states per cell for the Bellman residual check (0 disables)")
        p.set_defaults(func=cmd_sweep if verb == "sweep" else
                       (lambda a: cmd_sweep(a, force_check=True)))

    p_dump = sub.add_parser("dump-config", parents=[common], help="print the resolved config")
    p_dump.add_argument("--N", type=int)
    p_dump.add_argument("--constraint-horizon", type=int)
    p_dump.add_argument("-o", "--output")
    p_dump.set_defaults(func=cmd_dump_config)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if getattr(args, "constraint_horizons", None) is not None:
        args.constraint_horizon = None
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    except InfeasibleOcp as exc:
        print(str(exc), file=sys.stderr)
        return EXIT_INFEASIBLE
    except OcpSolverError as exc:
        print(f"solver error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
