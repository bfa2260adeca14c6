"""Command-line entry point: ``malalimit <subcommand> [options]``.

Exit codes: 0 success, 1 invalid parameters or unreadable config, 2 I/O
failure while writing results (and for ``verify``, 1 if any check fails).
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import sys
import time
import warnings
from pathlib import Path

from . import __version__
from .experiments import (
    ExperimentPlan,
    run_acceptance_study,
    run_convergence_study,
    run_drift_study,
    run_path_comparison,
    write_report,
)
from .limits import simulate_limit_sde, solve_s_ode
from .mala import MalaConfig, make_rng, run_chain, write_trajectory_csv
from .spectral import ParameterError, field_from_s, s_statistic, sobolev_norm_sq

EXIT_OK, EXIT_INVALID, EXIT_IO = 0, 1, 2

# stream namespaces for the single-run subcommands
SAMPLE_STREAM, SDE_STREAM = 11, 12

_OVERRIDES = (
    # flag, plan key, nargs, help
    ("--seed", "seed", None, "master seed; every output is a pure function of it"),
    ("--N", "N", "+", "truncation dimension(s) N, number of Karhunen-Loeve modes"),
    ("--ell", "ell", None, "proposal scale ell in delta = ell / N^zeta"),
    ("--zeta", "zeta", "+", "scaling exponent(s) zeta in delta = ell / N^zeta (1/2 is the non-stationary scaling)"),
    ("--T", "T", None, "time horizon T; the chain runs ceil(T sqrt(N)) steps"),
    ("--S0", "S0", None, "initial value of S = ||x||_C^2 / N (x0_j = sqrt(S0) lambda_j)"),
    ("--kappa", "kappa", None, "eigenvalue decay lambda_j = j^-kappa; needs kappa > 1/2"),
    ("--s", "s", None, "Sobolev index s of the state space H^s; needs 0 <= s < kappa - 1/2"),
    ("--target", "target", None, "change of measure Psi: 'zero' or 'sqrt_sobolev'"),
    ("--replicas", "replicas", None, "independent chains per cell"),
    ("--n-noise", "n_noise", None, "noise draws for the drift diagnostic"),
    ("--dt", "dt", None, "Euler-Maruyama step for the limit SDE (also the ODE step in compare)"),
    ("--ode-h", "ode_h", None, "RK4 step for the S-equation"),
    ("--threads", "threads", None, "worker threads (0 = one per CPU)"),
    ("--output", "output_dir", None, "output directory (default: $MALALIMIT_OUTPUT or ./malalimit-out)"),
)


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="JSON plan file; keys mirror the plan fields")
    for flag, key, nargs, text in _OVERRIDES:
        common.add_argument(flag, dest=key, nargs=nargs, default=None, help=text)
    common.add_argument("--plots", action="store_true", help="also write static SVG plots")
    common.add_argument("--dump-config", metavar="PATH",
                        help="write the effective plan (file plus overrides) as JSON and continue")

    parser = argparse.ArgumentParser(
        prog="malalimit",
        description="MALA in Karhunen-Loeve coordinates, its fluid ODE and diffusion limits.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")
    sub.add_parser("sample", parents=[common], help="run one chain and write trajectory.csv")
    ode = sub.add_parser("ode", parents=[common], help="solve dS/dt = b_l(S) and write ode.csv")
    ode.add_argument("--h", type=float, default=None, help="RK4 step (overrides --ode-h)")
    sub.add_parser("sde", parents=[common], help="one Euler-Maruyama path of the limit SDE, written to sde.csv")
    sub.add_parser("verify", parents=[common], help="run the invariant suites; nonzero exit on any failure")
    sub.add_parser("acceptance", parents=[common], help="first-move acceptance study")
    sub.add_parser("convergence", parents=[common], help="sup-distance of S^(N) to the ODE")
    sub.add_parser("compare", parents=[common], help="MALA against limit-SDE checkpoint distributions")
    sub.add_parser("report", parents=[common], help="all studies plus the drift diagnostic in one directory")
    return parser


def load_plan(args) -> ExperimentPlan:
    """Config file (if any) overlaid with command-line overrides, validated as one plan."""
    data = {}
    if args.config:
        try:
            data = json.loads(Path(args.config).read_text())
        except OSError as exc:
            raise ParameterError("config", f"cannot read {args.config}: {exc.strerror or exc}") from None
        except json.JSONDecodeError as exc:
            raise ParameterError("config", f"{args.config} is not valid JSON: {exc}") from None
        if not isinstance(data, dict):
            raise ParameterError("config", f"{args.config} must hold a JSON object")
    for _, key, _, _ in _OVERRIDES:
        value = getattr(args, key, None)
        if value is not None:
            data[key] = value
    return ExperimentPlan.from_dict(data)


def _single(plan: ExperimentPlan, what: str):
    if len(plan.N) != 1 or len(plan.zeta) != 1:
        raise ParameterError("N", f"{what} runs a single configuration; give one N and one zeta")
    return plan.N[0], plan.zeta[0]


def _write_rows(path: Path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([format(float(v), ".17g") if not isinstance(v, int) else v for v in r])


def cmd_sample(plan: ExperimentPlan, args) -> int:
    N, zeta = _single(plan, "sample")
    cov, model = plan.model_for(N)
    cfg = MalaConfig(plan.ell, zeta, N, plan.seed)
    traj = run_chain(field_from_s(plan.S0, cov), model, cov, cfg, plan.T, rng=make_rng(plan.seed, SAMPLE_STREAM, N))
    out = Path(plan.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_trajectory_csv(traj, out / "trajectory.csv", out / "snapshots.csv")
    print(f"N={N} zeta={zeta:g} delta={cfg.delta:.6g} steps={traj.steps}")
    print(f"acceptance rate {traj.acceptance_rate:.4f}, S(T) = {traj.S[-1]:.6g}")
    print(f"wrote {out / 'trajectory.csv'}")
    return EXIT_OK


def cmd_ode(plan: ExperimentPlan, args) -> int:
    h = args.h if args.h is not None else plan.ode_h
    sol = solve_s_ode(plan.S0, plan.ell, plan.T, h)
    out = Path(plan.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    _write_rows(out / "ode.csv", ("t", "S"), zip(sol.t, sol.S))
    print(f"S({plan.T:g}) = {float(sol.S[-1])!r}")
    print(f"wrote {out / 'ode.csv'}")
    return EXIT_OK


def cmd_sde(plan: ExperimentPlan, args) -> int:
    M, _ = _single(plan, "sde")
    cov, model = plan.model_for(M)
    path = simulate_limit_sde(field_from_s(plan.S0, cov), plan.S0, model, cov, plan.ell, plan.T, plan.dt,
                              make_rng(plan.seed, SDE_STREAM, M), records=plan.grid_points)
    rows = [(t, so, s_statistic(x, cov), math.sqrt(sobolev_norm_sq(x, cov.s)))
            for t, so, x in zip(path.t, path.S_ode, path.x)]
    out = Path(plan.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    _write_rows(out / "sde.csv", ("t", "S_ode", "S", "norm_s"), rows)
    print(f"M={M} modes, dropped trace {path.discarded_trace:.3g}; S(T) = {rows[-1][2]:.6g} (ODE {rows[-1][1]:.6g})")
    print(f"wrote {out / 'sde.csv'}")
    return EXIT_OK


def cmd_verify(plan: ExperimentPlan, args) -> int:
    from .verify import run_all

    checks = run_all(seed=plan.seed)
    for c in checks:
        print(c.line())
    failed = sum(not c.passed for c in checks)
    print(f"{len(checks) - failed}/{len(checks)} checks passed")
    return EXIT_OK if failed == 0 else EXIT_INVALID


_STUDIES = {
    "acceptance": (run_acceptance_study,),
    "convergence": (run_convergence_study,),
    "compare": (run_path_comparison,),
    "report": (run_convergence_study, run_acceptance_study, run_drift_study, run_path_comparison),
}


def cmd_study(plan: ExperimentPlan, args) -> int:
    started = time.time()
    reports = [fn(plan) for fn in _STUDIES[args.command]]
    summary = write_report(reports, plan.output_dir, plan=plan, plots=args.plots, started=started)
    for name, rep in summary["reports"].items():
        print(f"{name}: {json.dumps(rep)}")
    print(f"wrote {plan.output_dir}")
    return EXIT_OK


_COMMANDS = {"sample": cmd_sample, "ode": cmd_ode, "sde": cmd_sde, "verify": cmd_verify}


def parse_and_dispatch(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        plan = load_plan(args)
    except ParameterError as exc:
        print(f"malalimit: invalid {exc}", file=sys.stderr)
        return EXIT_INVALID
    try:
        if args.dump_config:
            Path(args.dump_config).write_text(plan.to_json() + "\n")
        with warnings.catch_warnings():
            warnings.simplefilter("default")
            return _COMMANDS.get(args.command, cmd_study)(plan, args)
    except ParameterError as exc:
        print(f"malalimit: invalid {exc}", file=sys.stderr)
        return EXIT_INVALID
    except OSError as exc:
        print(f"malalimit: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


def main(argv=None) -> None:
    sys.exit(parse_and_dispatch(argv))


if __name__ == "__main__":  # pragma: no cover
    main()
