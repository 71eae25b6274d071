"""Command-line entry point: ``windspc <subcommand> --config run.json``.

Exit statuses: 0 ok, 2 input error, 3 modeling error, 4 config error.
"""

from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import replace
from pathlib import Path

from .errors import ConfigError, InputError, WindSpcError
from .ingest import format_timestamp
from .pipeline import Pipeline, PipelineConfig, render_summary

log = logging.getLogger("windspc")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", required=True, type=Path, help="pipeline config (JSON)")
    common.add_argument("--seed", type=int, help="override the simulation seed")
    common.add_argument("--out", type=Path, help="override the output directory")
    common.add_argument("--verbose", "-v", action="store_true")

    parser = argparse.ArgumentParser(
        prog="windspc",
        description="Regression-adjusted Shewhart monitoring of wind-turbine SCADA data.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("simulate", parents=[common], help="write a synthetic dataset and its ground truth")
    sub.add_parser("ingest", parents=[common], help="parse, validate and filter the input")
    sub.add_parser("baseline", parents=[common], help="detect the in-control period")
    sub.add_parser("fit", parents=[common], help="fit a regression model per monitored variable")
    sub.add_parser("monitor", parents=[common], help="chart residuals and write alarm reports")
    sub.add_parser("report", parents=[common], help="run all steps and print a summary")
    return parser


def _load(args) -> Pipeline:
    cfg = PipelineConfig.load(args.config)
    if args.seed is not None:
        if cfg.scenario is None:
            raise ConfigError("--seed given but the config has no simulate section")
        cfg.scenario = replace(cfg.scenario, seed=args.seed)
    return Pipeline(cfg, out=args.out)


def run(args) -> int:
    pipe = _load(args)
    cmd = args.command
    if cmd == "simulate":
        print(pipe.simulate())
    elif cmd == "ingest":
        info = pipe.ingest()
        print(f"{info['records']} records ({info['rejected']} rejected), {info['running']} running")
    elif cmd == "baseline":
        _, end = pipe.baseline(write=True)
        print(format_timestamp(end))
    elif cmd == "fit":
        for var, m in pipe.fit(write=True).items():
            terms = ", ".join(t.name for t in m.terms) or "(intercept only)"
            print(f"{var}: {terms} (n={m.n})")
    elif cmd == "monitor":
        print(render_summary(pipe.monitor()))
    elif cmd == "report":
        summary = pipe.run_all()
        text = render_summary(summary)
        (pipe.out / "report.txt").write_text(text + "\n", encoding="utf-8")
        print(text)
    return 0


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return run(args)
    except WindSpcError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return exc.exit_code
    except (FileNotFoundError, UnicodeDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return InputError.exit_code


if __name__ == "__main__":
    sys.exit(main())
