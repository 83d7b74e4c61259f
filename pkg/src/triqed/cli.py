"""Command-line entry points.

Subcommands
-----------
run            one scenario -> time-series CSV
sweep-k        cavity-decay sweep with exponential fits -> CSV
sweep-gamma    atomic-decay sweep with exponential fits -> CSV
classify-map   entanglement class over the (p, tau) plane -> CSV
validate       oracle-equivalence/conservation suite -> report (+ CSV)

Common flags: --config (INI scenario file), --out (CSV path), --solver,
--traj, --seed, --dt, --workers.  Flags override the config file.
"""

from __future__ import annotations

import argparse
import sys

import numpy as np

from .config import ScenarioConfig, SolverKind, load_config
from .model import InputStateSpec
from .runner import (
    MapSubsystem,
    RateKind,
    SWEEP_QUANTITIES,
    classification_map,
    dissipation_sweep,
    format_csv,
    run_scenario,
    validate,
)

_DEFAULT_OUT = {
    "run": "run.csv",
    "sweep-k": "sweep_k.csv",
    "sweep-gamma": "sweep_gamma.csv",
    "classify-map": "classify_map.csv",
}


def _add_common_flags(sub: argparse.ArgumentParser) -> None:
    sub.add_argument("--config", help="INI scenario file (see triqed.config)")
    sub.add_argument("--out", help="output CSV path")
    sub.add_argument(
        "--solver",
        choices=[k.value for k in SolverKind],
        help="propagation backend override",
    )
    sub.add_argument("--traj", type=int, help="trajectory count (mcwf)")
    sub.add_argument("--seed", type=int, help="base random seed (mcwf)")
    sub.add_argument("--dt", type=float, help="integrator step override")
    sub.add_argument("--workers", type=int, help="worker processes (mcwf)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="triqed",
        description="Tripartite cavity-QED transfer: scenarios, sweeps, maps.",
    )
    commands = parser.add_subparsers(dest="command", required=True)

    run_p = commands.add_parser("run", help="run one scenario to a time-series CSV")
    _add_common_flags(run_p)

    for name, help_text in (
        ("sweep-k", "sweep the cavity decay rate, fit exponential decays"),
        ("sweep-gamma", "sweep the atomic decay rate, fit exponential decays"),
    ):
        sweep_p = commands.add_parser(name, help=help_text)
        _add_common_flags(sweep_p)
        sweep_p.add_argument(
            "--input",
            choices=["w", "ghz", "both"],
            default="both",
            help="input state family to sweep (default both)",
        )
        sweep_p.add_argument(
            "--fixed-rate",
            type=float,
            default=None,
            help="held-constant value of the other decay rate",
        )
        sweep_p.add_argument(
            "--rates",
            default=None,
            help="comma-separated rate grid override (default: built-in grid)",
        )
        sweep_p.add_argument(
            "--fit-max-rate",
            type=float,
            default=0.2 if name == "sweep-k" else None,
            help=(
                "largest rate included in the decay fit (peaks are still "
                "reported for every swept rate); cavity sweeps default to "
                "0.2 because fidelity floors flatten the decay beyond it"
            ),
        )

    map_p = commands.add_parser(
        "classify-map", help="classify the (p, tau) mixture plane"
    )
    _add_common_flags(map_p)
    map_p.add_argument(
        "--subsystem",
        choices=[s.value for s in MapSubsystem],
        default="atoms",
        help="register to classify (default atoms)",
    )
    map_p.add_argument("--p-points", type=int, default=101)
    map_p.add_argument("--tau-points", type=int, default=600)

    val_p = commands.add_parser(
        "validate", help="run the oracle and conservation-law suite"
    )
    _add_common_flags(val_p)
    return parser


def _config_from_args(args) -> ScenarioConfig:
    cfg = load_config(args.config) if args.config else ScenarioConfig()
    return cfg.with_overrides(
        solver=args.solver,
        n_traj=args.traj,
        base_seed=args.seed,
        dt=args.dt,
        workers=args.workers,
        output_path=args.out,
    )


def _write(path: str, text: str) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)
    print(f"wrote {path}", file=sys.stderr)


def _cmd_run(args) -> int:
    cfg = _config_from_args(args)
    result = run_scenario(cfg)
    out = cfg.output_path or _DEFAULT_OUT["run"]
    _write(out, result.csv_text())
    return 0


def _cmd_sweep(args, rate_kind: RateKind) -> int:
    cfg = _config_from_args(args)
    if cfg.solver is SolverKind.MCWF:
        print("sweeps need a deterministic solver (exact or factorized)", file=sys.stderr)
        return 2
    inputs = {
        "w": [InputStateSpec.w()],
        "ghz": [InputStateSpec.ghz()],
        "both": [InputStateSpec.w(), InputStateSpec.ghz()],
    }[args.input]
    rate_values = (
        None
        if args.rates is None
        else tuple(float(part) for part in args.rates.split(","))
    )
    blocks = []
    for spec in inputs:
        result = dissipation_sweep(
            spec,
            rate_kind,
            rate_values=rate_values,
            fixed_other_rate=args.fixed_rate,
            solver=cfg.solver,
            dt=cfg.grid.dt,
            fit_max_rate=args.fit_max_rate,
        )
        for note in result.warnings:
            print(f"note ({spec.variant}): {note}", file=sys.stderr)
        text = result.csv_text()
        blocks.append(text if not blocks else text.split("\n", 1)[1])
        for name in SWEEP_QUANTITIES:
            fit = result.fits[name]
            if fit is not None:
                print(
                    f"{spec.variant} {name}: decay {fit.decay:.4f} "
                    f"(f0 {fit.f0:.4f}, rms log residual {fit.rms_log_residual:.4f})",
                    file=sys.stderr,
                )
    key = "sweep-k" if rate_kind is RateKind.CAVITY else "sweep-gamma"
    _write(cfg.output_path or _DEFAULT_OUT[key], "".join(blocks))
    return 0


def _cmd_classify_map(args) -> int:
    cfg = _config_from_args(args)
    result = classification_map(
        p_grid=np.linspace(0.0, 1.0, args.p_points),
        tau_grid=None if args.tau_points == 600 else _default_tau_grid(args.tau_points),
        subsystem=MapSubsystem(args.subsystem),
        params=cfg.model,
        dt=cfg.grid.dt,
    )
    _write(cfg.output_path or _DEFAULT_OUT["classify-map"], result.csv_text())
    return 0


def _default_tau_grid(n_points: int) -> np.ndarray:
    from .model import TAU_OFF_DEFAULT

    return np.linspace(0.0, 2.0 * np.pi + TAU_OFF_DEFAULT, n_points)


def _cmd_validate(args) -> int:
    cfg = _config_from_args(args)
    report = validate(
        n_traj=args.traj if args.traj is not None else 1600,
        base_seed=cfg.base_seed,
        dt=cfg.grid.dt,
        workers=cfg.workers,
    )
    sys.stdout.write(report.text())
    if cfg.output_path:
        _write(cfg.output_path, report.csv_text())
    return 0 if report.passed else 1


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "run":
        return _cmd_run(args)
    if args.command == "sweep-k":
        return _cmd_sweep(args, RateKind.CAVITY)
    if args.command == "sweep-gamma":
        return _cmd_sweep(args, RateKind.ATOMIC)
    if args.command == "classify-map":
        return _cmd_classify_map(args)
    if args.command == "validate":
        return _cmd_validate(args)
    raise AssertionError(f"unhandled command {args.command!r}")


if __name__ == "__main__":
    sys.exit(main())
