"""Command-line front end.

Exit status: 0 success/pass, 1 verdict fail, 2 configuration error,
3 numerical failure.
"""

from __future__ import annotations

import argparse
import datetime as _dt
import json
import os
import sys
from dataclasses import replace
from pathlib import Path

from . import balance
from .balance import OccupancyDistribution, SolverError
from .config import ConfigError, analytic_law, dump_config, load_document, parse_document, spec_echo
from .distributions import DistributionError
from .harness import ExperimentPlan, HarnessError, insensitivity_experiment, sensitivity_control
from .model import ModelError, NetworkSpec
from .sim import SimConfig, SimulationError, run

EXIT_OK, EXIT_FAIL, EXIT_CONFIG, EXIT_NUMERIC = 0, 1, 2, 3
REPORT_DIR_ENV = "INSENSITIVITY_REPORT_DIR"
RESIDUAL_LIMIT = 1e-9


def _truncation(text: str | None) -> list[int] | None:
    if text is None:
        return None
    try:
        return [int(x) for x in text.replace(" ", "").split(",") if x]
    except ValueError:
        raise ConfigError(f"--truncation must be a comma-separated list of integers, got {text!r}") from None


def _report_path(args: argparse.Namespace, command: str, suffix: str) -> Path:
    if args.out:
        return Path(args.out)
    stamp = _dt.datetime.now().strftime("%Y%m%dT%H%M%S")
    stem = Path(args.config).stem if getattr(args, "config", None) else command
    name = f"{stem}.{command}.{stamp}{suffix}"
    env_dir = os.environ.get(REPORT_DIR_ENV)
    if env_dir:
        return Path(env_dir) / name
    if getattr(args, "config", None):
        return Path(args.config).resolve().parent / name
    return Path.cwd() / name


def _write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text)
    print(f"wrote {path}")


def _load_spec(args: argparse.Namespace) -> tuple[NetworkSpec, dict, list[int] | None]:
    doc = load_document(args.config)
    spec = parse_document(doc)
    if isinstance(spec, ExperimentPlan):
        raise ConfigError(f"{args.config}: expected a network spec, got an experiment plan")
    echo = spec_echo(doc)
    truncation = _truncation(args.truncation) or echo.get("truncation")
    return spec, echo, truncation


def cmd_solve(args: argparse.Namespace) -> int:
    spec, echo, truncation = _load_spec(args)
    pi = balance.solve_spec(spec, truncation)
    pi.meta["config"] = json.dumps({**echo, "truncation": truncation}, sort_keys=True)
    _write(_report_path(args, "solve", ".tsv"), pi.to_table())
    return EXIT_OK


def cmd_verify(args: argparse.Namespace) -> int:
    spec, echo, truncation = _load_spec(args)
    if args.pi in (None, "auto"):
        pi = balance.solve_spec(spec, truncation)
    else:
        pi = OccupancyDistribution.from_table(Path(args.pi).read_text())
    report = balance.verify_partial_balance(spec, pi)
    out = report.to_dict()
    out["config"] = {**echo, "truncation": truncation, "pi": args.pi or "auto"}
    out["limit"] = RESIDUAL_LIMIT
    out["pass"] = report.max_rel_residual <= RESIDUAL_LIMIT
    _write(_report_path(args, "verify", ".json"), dump_config(out))
    print(f"max relative residual (interior): {report.max_rel_residual:.3e}")
    return EXIT_OK if out["pass"] else EXIT_FAIL


def cmd_simulate(args: argparse.Namespace) -> int:
    spec, echo, truncation = _load_spec(args)
    doc = load_document(args.config)
    sim_obj = doc.data.get("sim", {}) or {}
    cfg = SimConfig(
        seed=args.seed if args.seed is not None else int(sim_obj.get("seed", 0)),
        max_events=args.events if args.events is not None else int(sim_obj.get("max_events", 100_000)),
        warmup_events=sim_obj.get("warmup_events"),
        snapshot_interval=int(sim_obj.get("snapshot_interval", 50)),
        epoch_interval=int(sim_obj.get("epoch_interval", 10)),
        initialization=str(sim_obj.get("initialization", "empty")),
    )
    if cfg.initialization == "stationary":
        cfg = replace(cfg, stationary=balance.solve_spec(spec, truncation))
    stats = run(spec, cfg)
    report = stats.to_report()
    report["config"] = {**echo, "sim": cfg.to_dict()}
    _write(_report_path(args, "simulate", ".json"), dump_config(report))
    return EXIT_OK


def cmd_experiment(args: argparse.Namespace) -> int:
    doc = load_document(args.config)
    plan = parse_document(doc)
    if not isinstance(plan, ExperimentPlan):
        raise ConfigError(f"{args.config}: expected an experiment plan (with 'arms')")
    if args.seed is not None or args.events is not None:
        sim = replace(
            plan.sim,
            seed=args.seed if args.seed is not None else plan.sim.seed,
            max_events=args.events if args.events is not None else plan.sim.max_events,
            warmup_events=plan.sim.warmup_events,
        )
        plan.sim = sim
        plan.echo["sim"] = sim.to_dict()
    if args.threshold_tv is not None:
        plan.thresholds.tv_max = args.threshold_tv
        plan.echo["thresholds"]["tv_max"] = args.threshold_tv
    if args.truncation is not None:
        trunc = _truncation(args.truncation)
        plan.analytic = analytic_law(plan.spec.rates, plan.echo["analytic"]["method"], trunc)
        plan.echo["analytic"]["truncation"] = trunc
    report = insensitivity_experiment(plan)
    path = _report_path(args, "experiment", ".json")
    _write(path, report.to_json())
    summary = report.summary()
    _write(path.with_suffix(".txt"), summary)
    print(summary, end="")
    return EXIT_OK if report.verdict else EXIT_FAIL


def cmd_control(args: argparse.Namespace) -> int:
    report = sensitivity_control(
        args.rho,
        events=args.events or 1_000_000,
        seed=args.seed if args.seed is not None else 0,
    )
    _write(_report_path(args, "control", ".json"), dump_config(report))
    for name, r in report["runs"].items():
        print(f"{name:<22} mean {r['mean_occupancy']:.4f} (expected {r['expected_mean']:.4f})")
    print(f"TV FIFO exp vs det: {report['tv_fifo_exp_vs_det']:.4f}")
    return EXIT_OK if report["sensitivity_demonstrated"] else EXIT_FAIL


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="insens", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p: argparse.ArgumentParser, config: bool = True) -> None:
        if config:
            p.add_argument("--config", required=True, metavar="PATH")
        p.add_argument("--out", metavar="PATH")
        p.add_argument("--seed", type=int, metavar="U64")
        p.add_argument("--events", type=int, metavar="N")
        p.add_argument("--truncation", metavar="LIST", help="comma-separated box bounds, e.g. 30,30")
        p.add_argument("--threshold-tv", type=float, metavar="X")

    p = sub.add_parser("solve", help="stationary occupancy law as a table")
    common(p)
    p.set_defaults(func=cmd_solve)
    p = sub.add_parser("verify-balance", help="partial balance residuals")
    common(p)
    p.add_argument("--pi", default="auto", metavar="PATH|auto")
    p.set_defaults(func=cmd_verify)
    p = sub.add_parser("simulate", help="simulate and write occupancy/residual statistics")
    common(p)
    p.set_defaults(func=cmd_simulate)
    p = sub.add_parser("experiment", help="run an insensitivity experiment plan")
    common(p)
    p.set_defaults(func=cmd_experiment)
    p = sub.add_parser("control", help="FIFO vs PS sensitivity control at utilisation rho")
    common(p, config=False)
    p.add_argument("--rho", type=float, default=0.8)
    p.set_defaults(func=cmd_control)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, DistributionError, ModelError, HarnessError, FileNotFoundError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (SolverError, SimulationError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
