"""Command-line front end: ``fdecert run|list|describe``."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import scenarios

EXIT_OK, EXIT_VIOLATION, EXIT_CONFIG = 0, 1, 2


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="fdecert",
                                description="Sampled stability and dissipativity checks "
                                            "for delay equations.")
    sub = p.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="run a scenario file or shipped scenario name")
    run.add_argument("scenario", help="path to a .toml file or a shipped scenario name")
    run.add_argument("--out", type=Path, default=None,
                     help="output directory (default: ./fdecert-out/<name>)")
    run.add_argument("--seed", type=int, default=None, help="override the scenario seed")
    run.add_argument("--quiet", action="store_true", help="do not print the report")
    sub.add_parser("list", help="list shipped scenarios")
    desc = sub.add_parser("describe", help="print a shipped scenario with effective defaults")
    desc.add_argument("name")
    return p


def write_outputs(out: Path, results: dict, report: str, traj=None) -> None:
    out.mkdir(parents=True, exist_ok=True)
    (out / "report.txt").write_text(report)
    (out / "results.json").write_text(json.dumps(results, indent=2, sort_keys=True) + "\n")
    if traj is not None:
        traj.to_table(out / "trajectory.csv")


def cmd_run(args) -> int:
    try:
        sc = scenarios.resolve(args.scenario)
        if args.seed is not None:
            if not 0 <= args.seed < 2**64:
                raise scenarios.ConfigError("--seed must be an unsigned 64-bit integer")
            sc = sc.with_seed(args.seed)
        scenarios.build(sc)
    except scenarios.ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    results = scenarios.run_scenario(sc)
    report = scenarios.render_report(results)
    traj = scenarios.nominal_trajectory(sc) if sc.config["checks"]["tables"] else None
    out = args.out if args.out is not None else Path("fdecert-out") / sc.name
    write_outputs(out, results, report, traj)
    if not args.quiet:
        print(report)
        print(f"wrote {out}")
    return results["exit_code"]


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    if args.command == "list":
        for name, desc in scenarios.list_scenarios():
            print(f"{name:<26} {desc}")
        return EXIT_OK
    if args.command == "describe":
        try:
            print(scenarios.describe(args.name), end="")
        except scenarios.ConfigError as exc:
            print(f"error: {exc}", file=sys.stderr)
            return EXIT_CONFIG
        return EXIT_OK
    return cmd_run(args)


if __name__ == "__main__":
    sys.exit(main())
