"""Command line: ``distortlab {run,sweep,verify-bayes,fit-constants} CONFIG``.

Exit codes: 0 success, 2 config error, 3 bound violation in verify mode
(``verify-bayes``, or a gated leakage-bound violation in ``run``/``sweep``
with ``--verify``).
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from .config import ConfigError, load_config
from .report import (
    CHECK_COLUMNS,
    FRONTIER_COLUMNS,
    METRICS_COLUMNS,
    write_csv,
    write_json,
)
from .runner import fit_constants_run, run_scenario, sweep_frontier, verify_bayes_suite

EXIT_OK, EXIT_CONFIG, EXIT_VIOLATION = 0, 2, 3

log = logging.getLogger("distortlab")


def _eps1_list(text: str) -> list[float]:
    try:
        values = [float(v) for v in text.split(",") if v.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"not a comma-separated number list: {text!r}") from exc
    if not values:
        raise argparse.ArgumentTypeError("empty eps1 list")
    return values


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="distortlab", description=__doc__.splitlines()[0])
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("config", type=Path)
    common.add_argument("--seed", type=int, help="override the master seed")
    common.add_argument("--out", type=Path, help="output directory (default: output.dir)")
    common.add_argument("--jobs", type=int, default=1, help="worker processes")
    common.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", parents=[common], help="seeded pipeline at the configured eps1")
    run.add_argument("--verify", action="store_true", help="exit 3 on a gated bound violation")
    sweep = sub.add_parser("sweep", parents=[common], help="eps1 frontier sweep")
    sweep.add_argument("--eps1", type=_eps1_list, help="comma-separated grid (default: sweep.eps1)")
    sweep.add_argument("--verify", action="store_true", help="exit 3 on a gated bound violation")
    sub.add_parser("verify-bayes", parents=[common], help="finite-world theorem checks")
    sub.add_parser("fit-constants", parents=[common], help="fit attack constants only")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    if args.jobs < 1:
        print("error: --jobs must be >= 1", file=sys.stderr)
        return EXIT_CONFIG
    try:
        cfg = load_config(args.config)
        if args.seed is not None:
            cfg = cfg.with_seed(args.seed)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    out = (args.out if args.out is not None else Path(cfg.output.dir)) / cfg.scenario

    if args.command == "verify-bayes":
        report = verify_bayes_suite(cfg, args.jobs)
        write_csv(out / "bayes_checks.csv", report.rows, CHECK_COLUMNS, "bayes-checks")
        write_json(out / "bayes_summary.json", report.summary)
        for name, stats in report.summary["checks"].items():
            log.info("%s: %s", name, stats)
        print(f"{cfg.scenario}: {report.violations} asserted violations")
        return EXIT_VIOLATION if report.violations else EXIT_OK

    if args.command == "fit-constants":
        try:
            run = fit_constants_run(cfg, args.jobs)
        except ValueError as exc:
            print(f"error: {exc}", file=sys.stderr)
            return EXIT_VIOLATION
        write_json(out / "constants.json", run.summary["constants"])
        print(" ".join(f"{k}={v:.9g}" for k, v in run.summary["constants"].items()))
        return EXIT_OK

    if args.command == "sweep":
        try:
            run, frontier = sweep_frontier(cfg, args.eps1 or cfg.sweep.eps1, args.jobs)
        except ValueError as exc:
            print(f"config error: {exc}", file=sys.stderr)
            return EXIT_CONFIG
        write_csv(out / "frontier.csv", frontier, FRONTIER_COLUMNS, "frontier")
    else:
        run = run_scenario(cfg, args.jobs)
    write_csv(out / "metrics.csv", run.rows, METRICS_COLUMNS, "metrics")
    write_json(out / "summary.json", run.summary)
    violations = run.summary["bound_violations"]
    print(f"{cfg.scenario}: {len(run.rows)} rows, mean eps_p {run.summary['mean_eps_p']:.4f}, "
          f"{run.summary['gate_rows']} gated rows, {violations} bound violations")
    return EXIT_VIOLATION if args.verify and violations else EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
