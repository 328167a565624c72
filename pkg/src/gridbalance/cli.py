"""``gridbalance`` command line.

Exit codes: 0 success, 1 usage error, 2 validation failure, 3 runtime failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import time
from pathlib import Path

from .dispatch import DispatchError, Portfolio, simulate_prepared, prepare
from .optimizer import SENSITIVITY_PARAMETERS, optimize_portfolio, sensitivity_sweep
from .presets import DATA_DIR
from .report import format_report, read_summary, summarize, summary_json, verify_dispatch_csv, write_dispatch_csv
from .scenario import ScenarioError, ScenarioValidationError, input_digest, load_scenario, load_scenario_traces
from .traces import TraceError

EXIT_OK, EXIT_USAGE, EXIT_INVALID, EXIT_RUNTIME = 0, 1, 2, 3
CONFIG_DIR_ENV = "GRIDBALANCE_CONFIG_DIR"
# balance residual tolerated by verify-dispatch, GW
VERIFY_TOLERANCE = 1e-6

log = logging.getLogger("gridbalance")


class UsageError(Exception):
    pass


class ValidationFailure(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def resolve_scenario_path(name: str) -> Path:
    """A scenario path as given, else ``name`` or ``name.yaml`` in the config directory, else a shipped preset."""
    path = Path(name)
    if path.exists():
        return path
    dirs = [Path(os.environ[CONFIG_DIR_ENV])] if os.environ.get(CONFIG_DIR_ENV) else []
    dirs.append(DATA_DIR)
    for d in dirs:
        for candidate in (d / name, d / f"{name}.yaml"):
            if candidate.exists():
                return candidate
    return path


def _scenario(name):
    return load_scenario(resolve_scenario_path(name))


def _portfolio(path) -> Portfolio:
    """Portfolio from a JSON file holding either a portfolio or a whole run summary."""
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise ValidationFailure(f"{path}: portfolio file not found") from None
    except json.JSONDecodeError as exc:
        raise ValidationFailure(f"{path}: not valid JSON ({exc})") from None
    if isinstance(data, dict) and "portfolio" in data:
        data = data["portfolio"]
    try:
        return Portfolio.from_dict(data)
    except (TypeError, ValueError, AttributeError) as exc:
        raise ValidationFailure(f"{path}: {exc}") from None


def _check_portfolio(portfolio: Portfolio, scenario) -> None:
    keys = {
        "pv_gw": {z.id for z in scenario.zones},
        "wind_gw": {z.id for z in scenario.zones},
        "storage_power_gw": set(scenario.region_ids),
        "storage_energy_gwh": set(scenario.region_ids),
        "link_capacity_gw": {ic.id for ic in scenario.interconnectors},
    }
    for name, allowed in keys.items():
        extra = set(getattr(portfolio, name)) - allowed
        if extra:
            raise ValidationFailure(f"portfolio {name} names unknown ids {sorted(extra)}")


def _emit(text: str, out) -> None:
    if out:
        Path(out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def _window(text: str):
    try:
        start, stop = (int(x) for x in text.split(":"))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected START:STOP, got {text!r}") from None
    return start, stop


def cmd_validate(args) -> int:
    scenario = _scenario(args.scenario)
    try:
        traces = load_scenario_traces(scenario)
        prepare(scenario, traces)
    except (TraceError, DispatchError) as exc:
        raise ValidationFailure(str(exc)) from None
    print(f"{scenario.id}: ok ({len(scenario.regions)} regions, {traces.horizon} intervals)")
    return EXIT_OK


def cmd_simulate(args) -> int:
    scenario = _scenario(args.scenario)
    portfolio = _portfolio(args.portfolio)
    _check_portfolio(portfolio, scenario)
    started = time.perf_counter()
    traces = load_scenario_traces(scenario)
    dr = simulate_prepared(prepare(scenario, traces), portfolio, args.burn_in_years)
    rs = summarize(scenario, portfolio, dr, input_digest=input_digest(scenario),
                   runtime_s=time.perf_counter() - started)
    if args.dispatch_csv:
        write_dispatch_csv(dr, args.window, args.dispatch_csv)
    _emit(summary_json(rs), args.out)
    print(f"runtime {rs.runtime_s:.2f} s", file=sys.stderr)
    return EXIT_OK


def cmd_optimize(args) -> int:
    scenario = _scenario(args.scenario)
    started = time.perf_counter()
    traces = load_scenario_traces(scenario)

    def progress(generation, best):
        if not args.quiet:
            print(f"generation {generation}: best {best:.6g}", file=sys.stderr, flush=True)

    overrides = {}
    if args.generations is not None:
        overrides["generations"] = args.generations
    if args.population is not None:
        overrides["population"] = args.population
    opt = optimize_portfolio(
        scenario, traces, seed=args.seed, threads=args.threads, checkpoint=args.checkpoint,
        burn_in_years=args.burn_in_years, progress=progress, **overrides,
    )
    dr = simulate_prepared(prepare(scenario, traces), opt.portfolio, args.burn_in_years)
    rs = summarize(scenario, opt.portfolio, dr, seed=args.seed, input_digest=input_digest(scenario),
                   optimum=opt, runtime_s=time.perf_counter() - started)
    _emit(summary_json(rs), args.out)
    print(f"runtime {rs.runtime_s:.2f} s", file=sys.stderr)
    return EXIT_OK


def cmd_sensitivity(args) -> int:
    scenario = _scenario(args.scenario)
    portfolio = _portfolio(args.portfolio)
    _check_portfolio(portfolio, scenario)
    traces = load_scenario_traces(scenario)
    parameters = args.parameters or SENSITIVITY_PARAMETERS
    unknown = set(parameters) - set(SENSITIVITY_PARAMETERS)
    if unknown:
        raise UsageError(f"unknown sensitivity parameters {sorted(unknown)}")
    rows = sensitivity_sweep(
        portfolio, scenario, traces, parameters=parameters, multipliers=args.multipliers,
        reoptimize=args.reoptimize, seed=args.seed, threads=args.threads, burn_in_years=args.burn_in_years,
    )
    lines = ["parameter,multiplier,lcoe"] + [f"{r.parameter},{r.multiplier:g},{r.lcoe:.6g}" for r in rows]
    _emit("\n".join(lines) + "\n", args.out)
    return EXIT_OK


def cmd_report(args) -> int:
    try:
        rs = read_summary(args.summary)
    except FileNotFoundError:
        raise ValidationFailure(f"{args.summary}: summary file not found") from None
    except (ValueError, TypeError) as exc:
        raise ValidationFailure(f"{args.summary}: {exc}") from None
    _emit(format_report(rs), args.out)
    return EXIT_OK


def cmd_verify_dispatch(args) -> int:
    try:
        worst, rows = verify_dispatch_csv(args.csv)
    except FileNotFoundError:
        raise ValidationFailure(f"{args.csv}: file not found") from None
    except ValueError as exc:
        raise ValidationFailure(str(exc)) from None
    print(f"{rows} rows, largest balance residual {worst:.3g} GW")
    if worst > args.tolerance:
        raise ValidationFailure(f"balance identity violated by {worst:.3g} GW (tolerance {args.tolerance:g})")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="gridbalance", description="Renewable grid dispatch simulation and capacity optimisation.")
    p.add_argument("-v", "--verbose", action="store_true", help="log warnings and progress details")
    sub = p.add_subparsers(dest="command", parser_class=_Parser)

    def common(sp, seed=True):
        sp.add_argument("--out", help="write output here instead of standard output")
        sp.add_argument("--burn-in-years", type=int, default=0, help="leading calendar years simulated but not scored")
        if seed:
            sp.add_argument("--seed", type=int, default=0)
            sp.add_argument("--threads", type=int, default=1, help="parallel evaluations per generation")

    sp = sub.add_parser("validate", help="check a scenario and its traces")
    sp.add_argument("scenario")
    sp.set_defaults(func=cmd_validate)

    sp = sub.add_parser("simulate", help="dispatch a fixed portfolio and summarise it")
    sp.add_argument("scenario")
    sp.add_argument("portfolio", help="JSON portfolio or run summary")
    sp.add_argument("--dispatch-csv", help="also write interval dispatch to this CSV")
    sp.add_argument("--window", type=_window, help="START:STOP interval range for --dispatch-csv")
    common(sp, seed=False)
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("optimize", help="search for the least-cost reliable portfolio")
    sp.add_argument("scenario")
    sp.add_argument("--checkpoint", help="JSON checkpoint file; resumed when present")
    sp.add_argument("--generations", type=int)
    sp.add_argument("--population", type=int)
    sp.add_argument("--quiet", action="store_true", help="no per-generation progress")
    common(sp)
    sp.set_defaults(func=cmd_optimize)

    sp = sub.add_parser("sensitivity", help="LCOE under scaled cost parameters")
    sp.add_argument("scenario")
    sp.add_argument("portfolio")
    sp.add_argument("--parameters", nargs="+")
    sp.add_argument("--multipliers", nargs="+", type=float, default=[0.75, 1.0, 1.25])
    sp.add_argument("--reoptimize", action="store_true", help="re-optimise the portfolio for every case")
    common(sp)
    sp.set_defaults(func=cmd_sensitivity)

    sp = sub.add_parser("report", help="print a run summary as text")
    sp.add_argument("summary")
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_report)

    sp = sub.add_parser("verify-dispatch", help="check the balance identity in a dispatch CSV")
    sp.add_argument("csv")
    sp.add_argument("--tolerance", type=float, default=VERIFY_TOLERANCE)
    sp.set_defaults(func=cmd_verify_dispatch)
    return p


def run_cli(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        if args.command is None:
            raise UsageError("a subcommand is required")
        if getattr(args, "threads", 1) < 1 or getattr(args, "burn_in_years", 0) < 0:
            raise UsageError("--threads must be at least 1 and --burn-in-years non-negative")
        logging.basicConfig(level=logging.INFO if args.verbose else logging.ERROR, format="%(levelname)s: %(message)s")
        return args.func(args)
    except UsageError as exc:
        print(f"gridbalance: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ScenarioValidationError as exc:
        print(f"gridbalance: invalid scenario:\n{exc}", file=sys.stderr)
        return EXIT_INVALID
    except (ScenarioError, ValidationFailure) as exc:
        print(f"gridbalance: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except (TraceError, DispatchError) as exc:
        print(f"gridbalance: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except (OSError, ValueError, ArithmeticError) as exc:
        print(f"gridbalance: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


def main() -> None:
    sys.exit(run_cli())


if __name__ == "__main__":
    main()
