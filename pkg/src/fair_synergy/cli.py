"""Command-line entry point: ``fair-synergy <command> ...``.

Machine-readable output goes to stdout (or ``--out``); human-readable text
goes to stderr. Exit codes: 0 success, 1 KKT check failed (``verify``),
2 invalid input, 3 solver did not converge (output is still written).
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from importlib.metadata import PackageNotFoundError, version

from .estimators import METHOD_NAMES, make_allocator
from .fairness import InfeasibleAllocationError, check_allocation, equity_summary, verify_kkt
from .harness import ExperimentConfig, run_benchmark, run_scaling, tomllib
from .utility import Allocation, Scenario, fit_gamma, read_curve_csv

EXIT_OK = 0
EXIT_KKT_FAILED = 1
EXIT_INVALID = 2
EXIT_UNCONVERGED = 3

SEED_ENV = "FAIR_SYNERGY_SEED"


class CliError(Exception):
    def __init__(self, message: str, code: int = EXIT_INVALID):
        super().__init__(message)
        self.code = code


def _package_version() -> str:
    try:
        return version("artifact")
    except PackageNotFoundError:
        return "0.0.0"


def _env_seed() -> int | None:
    raw = os.environ.get(SEED_ENV)
    if raw is None or raw == "":
        return None
    try:
        return int(raw)
    except ValueError:
        raise CliError(f"{SEED_ENV} must be an integer, got {raw!r}") from None


def _read_json(path: str, what: str):
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise CliError(f"cannot read {what}: {exc}") from None
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise CliError(
            f"malformed JSON in {what} {path}: {exc.msg} at line {exc.lineno} column {exc.colno}"
        ) from None


def _load_scenario(path: str) -> Scenario:
    data = _read_json(path, "scenario")
    try:
        return Scenario.from_dict(data)
    except KeyError as exc:
        raise CliError(f"invalid scenario: missing field {exc.args[0]!r}") from None
    except (TypeError, ValueError) as exc:
        raise CliError(f"invalid scenario: {exc}") from None


def _load_allocation(path: str) -> Allocation:
    data = _read_json(path, "allocation")
    if isinstance(data, dict) and "allocation" in data:
        data = data["allocation"]
    try:
        return Allocation.from_dict(data)
    except KeyError as exc:
        raise CliError(f"invalid allocation: missing field {exc.args[0]!r}") from None
    except (TypeError, ValueError) as exc:
        raise CliError(f"invalid allocation: {exc}") from None


def _load_config(path: str, seed: int | None) -> ExperimentConfig:
    try:
        if path.lower().endswith(".toml"):
            with open(path, "rb") as fh:
                data = tomllib.load(fh)
        else:
            data = _read_json(path, "config")
    except OSError as exc:
        raise CliError(f"cannot read config: {exc}") from None
    except tomllib.TOMLDecodeError as exc:
        raise CliError(f"malformed TOML in config {path}: {exc}") from None
    if not isinstance(data, dict):
        raise CliError("config must be a table/object")
    if seed is not None:
        data["master_seed"] = seed
    elif "master_seed" not in data:
        env = _env_seed()
        if env is not None:
            data["master_seed"] = env
    try:
        return ExperimentConfig.from_dict(data)
    except (TypeError, ValueError) as exc:
        raise CliError(f"invalid config: {exc}") from None


def _emit(payload, out: str | None) -> None:
    text = json.dumps(payload, indent=2)
    if out:
        with open(out, "w", encoding="utf-8") as fh:
            fh.write(text + "\n")
    else:
        sys.stdout.write(text + "\n")


def cmd_allocate(args) -> int:
    scenario = _load_scenario(args.scenario)
    seed = args.seed if args.seed is not None else _env_seed()
    est = make_allocator(args.method, random_state=seed, n_restarts=args.restarts)
    try:
        est.fit(scenario)
    except ValueError as exc:
        raise CliError(f"allocation failed: {exc}") from None
    diag = est.diagnostics_.to_dict() if est.diagnostics_ is not None else {}
    diag.setdefault("converged", est.converged_)
    report = equity_summary(scenario, est.allocation_)
    _emit(
        {
            "method": args.method,
            "allocation": est.allocation_.to_dict(),
            "diagnostics": diag,
            "fairness": report.to_dict(),
        },
        args.out,
    )
    if not est.converged_:
        print("warning: solver did not converge; best iterate written", file=sys.stderr)
        return EXIT_UNCONVERGED
    return EXIT_OK


def _run_sweep(args, runner) -> int:
    config = _load_config(args.config, args.seed)
    if args.timing:
        config.record_timing = True
    table = runner(config, threads=args.threads)
    csv_text = table.to_csv()
    if args.out:
        with open(args.out, "w", encoding="utf-8", newline="") as fh:
            fh.write(csv_text)
    else:
        sys.stdout.write(csv_text)
    print(table.format_summary(), file=sys.stderr)
    return EXIT_OK


def cmd_benchmark(args) -> int:
    return _run_sweep(args, run_benchmark)


def cmd_scale(args) -> int:
    return _run_sweep(args, run_scaling)


def cmd_verify(args) -> int:
    scenario = _load_scenario(args.scenario)
    allocation = _load_allocation(args.allocation)
    try:
        check_allocation(scenario, allocation)
    except InfeasibleAllocationError as exc:
        raise CliError(f"infeasible allocation: {exc}") from None
    report = verify_kkt(scenario, allocation)
    _emit(report.to_dict(), None)
    if report.kkt_ok:
        return EXIT_OK
    print(
        f"KKT check failed: compute residual {report.kkt_residual_compute:.3g}, "
        f"data residual {report.kkt_residual_data:.3g}",
        file=sys.stderr,
    )
    return EXIT_KKT_FAILED


def cmd_fit_gamma(args) -> int:
    try:
        samples = read_curve_csv(args.csv)
    except OSError as exc:
        raise CliError(f"cannot read curve CSV: {exc}") from None
    except ValueError as exc:
        raise CliError(f"malformed curve CSV: {exc}") from None
    try:
        gamma, scale, r2 = fit_gamma(samples)
    except ValueError as exc:
        raise CliError(f"cannot fit: {exc}") from None
    _emit({"gamma": gamma, "scale": scale, "r2": r2}, None)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fair-synergy",
        description="Fair allocation of cloud compute and labeling budgets across agents.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {_package_version()}")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("allocate", help="allocate one scenario with one method")
    p.add_argument("scenario", help="scenario JSON file")
    p.add_argument("--method", choices=METHOD_NAMES, default="fair-synergy")
    p.add_argument("--seed", type=int, default=None, help=f"RNG seed (fallback: ${SEED_ENV})")
    p.add_argument("--restarts", type=int, default=0, help="extra random ACS starts (DL only)")
    p.add_argument("--out", default=None, help="write JSON here instead of stdout")
    p.set_defaults(func=cmd_allocate)

    for name, func, text in (
        ("benchmark", cmd_benchmark, "Monte-Carlo comparison of methods"),
        ("scale", cmd_scale, "agent-count sweep with budgets proportional to fleet size"),
    ):
        p = sub.add_parser(name, help=text)
        p.add_argument("config", help="experiment config (TOML or JSON)")
        p.add_argument("--out", default=None, help="write CSV here instead of stdout")
        p.add_argument("--threads", type=int, default=None,
                       help="worker threads (default: available CPUs)")
        p.add_argument("--seed", type=int, default=None, help="override master_seed")
        p.add_argument("--timing", action="store_true",
                       help="record wall-clock solve times (CSV no longer reproducible)")
        p.set_defaults(func=func)

    p = sub.add_parser("verify", help="check KKT/fairness conditions of an allocation")
    p.add_argument("scenario", help="scenario JSON file")
    p.add_argument("allocation", help="allocation JSON (allocate output or {compute, data})")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("fit-gamma", help="fit a power-law elasticity to a resource,accuracy CSV")
    p.add_argument("csv", help="CSV with header resource,accuracy")
    p.set_defaults(func=cmd_fit_gamma)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    if getattr(args, "threads", None) is not None and args.threads < 1:
        parser.error("--threads must be >= 1")
    try:
        return args.func(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code


if __name__ == "__main__":
    sys.exit(main())
