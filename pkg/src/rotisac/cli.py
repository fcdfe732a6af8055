"""Command-line front end.

Subcommands:
  run            execute an experiment spec from a JSON config file
  solve          solve one sampled scenario and dump the solution as JSON
  check          run the gradient/invariant diagnostic suites
  sweep-defaults write the six predefined experiment specs as JSON files

Exit codes: 0 success, 1 usage error, 2 runtime failure, 3 check failure.
The ``ISAC_ROTATE_LOG`` environment variable sets the log level.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

from . import harness
from .ao import ARCHITECTURES, AoConfig, evaluate_baseline, run_ao
from .channel import ScenarioConfig, sample_scenario
from .checks import run_all_checks
from .harness import (
    ExperimentSpec,
    default_experiments,
    rows_to_csv,
    rows_to_json,
    run_experiment,
    spec_from_json,
    spec_to_json,
    summarize,
)
from .metrics import beampattern_mse, state_to_dict, sum_rate

log = logging.getLogger("rotisac")


def _setup_logging():
    level = os.environ.get("ISAC_ROTATE_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s")


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="rotisac",
        description="Rotatable-array ISAC simulator and experiment runner",
    )
    sub = parser.add_subparsers(dest="command")

    p_run = sub.add_parser("run", help="run an experiment spec")
    p_run.add_argument("--config", required=True, help="experiment spec JSON file")
    p_run.add_argument("--jobs", type=int, default=1, help="parallel workers")
    p_run.add_argument("--out", default=None, help="output path (overrides spec)")
    p_run.add_argument("--format", choices=("csv", "json"), default="csv")
    p_run.add_argument("--arch", default=None,
                       help="comma-separated architecture list (overrides spec)")
    p_run.add_argument("--seed", type=int, default=None,
                       help="seed base (overrides spec)")

    p_solve = sub.add_parser("solve", help="solve one scenario")
    p_solve.add_argument("--config", default=None,
                         help="scenario config JSON file (defaults used otherwise)")
    p_solve.add_argument("--seed", type=int, default=0)
    p_solve.add_argument("--arch", default="rot-bs+rot-ris", choices=ARCHITECTURES)
    p_solve.add_argument("--out", default=None, help="write solution JSON here")

    p_check = sub.add_parser("check", help="run the diagnostic suites")

    p_defaults = sub.add_parser("sweep-defaults", help="emit predefined experiment specs")
    p_defaults.add_argument("--out", default=".", help="directory for the JSON files")

    return parser


def cmd_run(args) -> int:
    try:
        text = Path(args.config).read_text()
    except OSError as exc:
        print(f"error: cannot read config {args.config}: {exc}", file=sys.stderr)
        return 1
    try:
        spec = spec_from_json(text)
        if args.arch:
            spec.architectures = [a.strip() for a in args.arch.split(",") if a.strip()]
        if args.seed is not None:
            spec.seed_base = args.seed
        spec.validate()
    except (ValueError, KeyError, TypeError) as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    try:
        rows = run_experiment(spec, jobs=max(1, args.jobs))
        out_path = Path(args.out if args.out else spec.output)
        payload = rows_to_csv(rows) if args.format == "csv" else rows_to_json(rows)
        out_path.write_text(payload)
        for entry in summarize(rows):
            print(
                f"value={entry['sweep_value']:g} arch={entry['architecture']:>16s} "
                f"rate={entry['sum_rate_mean']:.3f}±{entry['sum_rate_se']:.3f} "
                f"mse={entry['mse_mean']:.4f} feasible={entry['num_feasible']}/{entry['count']}"
            )
        print(f"wrote {len(rows)} rows to {out_path}")
    except OSError as exc:
        print(f"error: I/O failure on {exc.filename}: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


def cmd_solve(args) -> int:
    try:
        if args.config:
            data = json.loads(Path(args.config).read_text())
            config = harness._dataclass_from_dict(ScenarioConfig, data, "scenario")
        else:
            config = ScenarioConfig()
        config.validate()
    except (OSError, ValueError, KeyError, TypeError) as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    try:
        scenario = sample_scenario(config, args.seed)
        if args.arch == "rot-bs+rot-ris":
            state = run_ao(scenario, AoConfig())
        else:
            state = evaluate_baseline(scenario, AoConfig(), args.arch)
        eval_scenario = scenario
        if args.arch.endswith("no-ris"):
            eval_scenario = scenario.without_ris_user_links()
        rate = sum_rate(eval_scenario, state)
        mse = beampattern_mse(eval_scenario, state)
        document = {
            "seed": args.seed,
            "architecture": args.arch,
            "sum_rate": rate,
            "mse": mse,
            "feasible": state.feasible,
            "state": state_to_dict(state),
        }
        payload = json.dumps(document, indent=1)
        if args.out:
            Path(args.out).write_text(payload)
        else:
            print(payload)
        print(
            f"seed={args.seed} arch={args.arch} rate={rate:.3f} mse={mse:.5f} "
            f"feasible={state.feasible} outer={state.outer_iterations}",
            file=sys.stderr,
        )
    except OSError as exc:
        print(f"error: I/O failure on {exc.filename}: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


def cmd_check(_args) -> int:
    try:
        ok = run_all_checks(verbose=True)
    except Exception as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0 if ok else 3


def cmd_sweep_defaults(args) -> int:
    try:
        out_dir = Path(args.out)
        out_dir.mkdir(parents=True, exist_ok=True)
        for name, spec in default_experiments().items():
            path = out_dir / f"{name}.json"
            path.write_text(spec_to_json(spec))
            print(f"wrote {path}")
    except OSError as exc:
        print(f"error: I/O failure on {exc.filename}: {exc}", file=sys.stderr)
        return 2
    return 0


def cli_main(argv=None) -> int:
    _setup_logging()
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 1 if exc.code not in (0, None) else 0
    if args.command is None:
        parser.print_help()
        return 1
    handlers = {
        "run": cmd_run,
        "solve": cmd_solve,
        "check": cmd_check,
        "sweep-defaults": cmd_sweep_defaults,
    }
    return handlers[args.command](args)


def main():
    sys.exit(cli_main())


if __name__ == "__main__":
    main()
