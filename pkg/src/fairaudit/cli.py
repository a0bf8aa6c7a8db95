"""Command-line front end.

Subcommands: ``audit`` (one run), ``sweep`` (one run per group value),
``check-config`` (validate without running). Every config-file field has a
flag; flags override the file. Exit codes: 0 for a completed audit
whatever the verdicts, 1 only under ``--fail-on-violation`` when at least
one measure FAILs, 2 for configuration, IO, or model protocol errors.
"""

from __future__ import annotations

import argparse
import shlex
import sys
from pathlib import Path
from typing import Optional

from ._version import __version__
from .config import (
    AuditConfig,
    ConfigError,
    SweepSpec,
    dump_config,
    load_config,
    validate_config,
    with_overrides,
)
from .dataset import DatasetError, load_csv
from .dsl import DslError
from .measures import MeasureError
from .model import CsvSource, ModelError, ModelSource
from .report import (
    check_binding,
    emit_plot_data,
    emit_report,
    emit_sweep_report,
    run_audit,
    run_sweep,
)

_KNOWN_ERRORS = (ConfigError, DatasetError, DslError, MeasureError, ModelError)


def build_parser() -> argparse.ArgumentParser:
    shared = argparse.ArgumentParser(add_help=False)
    shared.add_argument("--config", metavar="PATH", help="JSON config file")
    shared.add_argument("--dataset", metavar="PATH", help="CSV dataset path")
    shared.add_argument("--epsilon", type=float, metavar="R",
                        help="fairness tolerance in (0,1), default 0.2")
    shared.add_argument("--privileged", metavar="EXPR",
                        help="predicate defining the privileged group")
    shared.add_argument("--positive", metavar="EXPR",
                        help="predicate: is this row's prediction positive")
    shared.add_argument("--truth", metavar="EXPR",
                        help="predicate: is this row's actual outcome positive")
    shared.add_argument("--score", metavar="EXPR",
                        help="score expression for the balance measures")
    shared.add_argument("--legitimate", metavar="EXPR",
                        help="parameterized predicate for conditional statistical parity")
    shared.add_argument("--legitimate-args", metavar="CSV",
                        help="comma-separated arguments for --legitimate")
    shared.add_argument("--calibration", metavar="EXPR",
                        help="parameterized predicate for equal calibration")
    shared.add_argument("--calibration-args", metavar="CSV",
                        help="comma-separated arguments for --calibration")
    shared.add_argument("--measures", metavar="LIST",
                        help="comma-separated measure ids (default: all applicable)")
    shared.add_argument("--model", metavar="CMD",
                        help="external predictor command; switches source to model mode")
    shared.add_argument("--sweep-column", metavar="NAME",
                        help="column to sweep group values over")
    shared.add_argument("--sweep-values", metavar="CSV",
                        help="comma-separated values for --sweep-column")
    shared.add_argument("--format", choices=["json", "table"], dest="format",
                        help="report format (default table)")
    shared.add_argument("--out", metavar="PATH", help="write the report here")
    shared.add_argument("--plot-out", metavar="PATH",
                        help="write sweep plot data (CSV) here")
    shared.add_argument("--fail-on-violation", action="store_true",
                        help="exit 1 when any measure FAILs")
    shared.add_argument("--dump-config", action="store_true",
                        help="print the effective config as JSON and exit")

    parser = argparse.ArgumentParser(
        prog="fairaudit",
        description="Audit tabular predictions against group-fairness measures.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    commands = parser.add_subparsers(dest="command", required=True)
    commands.add_parser("audit", parents=[shared],
                        help="run every selected measure once")
    commands.add_parser("sweep", parents=[shared],
                        help="run the audit per value of one column")
    commands.add_parser("check-config", parents=[shared],
                        help="validate the configuration and exit")
    return parser


def _split_csv(text: str) -> list[str]:
    return [item.strip() for item in text.split(",") if item.strip()]


def _coerce_arg(text: str):
    """Flag-provided predicate arguments: numeric-looking means numeric."""
    try:
        return int(text)
    except ValueError:
        pass
    try:
        return float(text)
    except ValueError:
        return text


def _config_from_args(args: argparse.Namespace) -> AuditConfig:
    if args.config is not None:
        config = load_config(args.config)
    else:
        missing = [
            flag
            for flag, value in (
                ("--privileged", args.privileged),
                ("--positive", args.positive),
                ("--truth", args.truth),
            )
            if value is None
        ]
        if missing:
            raise ConfigError(
                f"without --config these flags are required: {', '.join(missing)}"
            )
        config = AuditConfig(
            privileged=args.privileged, positive=args.positive, truth=args.truth
        )

    overrides = {}
    for field in ("dataset", "epsilon", "privileged", "positive", "truth",
                  "score", "legitimate", "calibration", "format", "out"):
        value = getattr(args, field)
        if value is not None:
            overrides[field] = value
    if args.legitimate_args is not None:
        overrides["legitimate_args"] = tuple(
            _coerce_arg(item) for item in _split_csv(args.legitimate_args)
        )
    if args.calibration_args is not None:
        overrides["calibration_args"] = tuple(
            _coerce_arg(item) for item in _split_csv(args.calibration_args)
        )
    if args.measures is not None:
        overrides["measures"] = tuple(_split_csv(args.measures))
    if args.model is not None:
        overrides["model"] = tuple(shlex.split(args.model))
        overrides["source"] = "model"
    if args.plot_out is not None:
        overrides["plot_out"] = args.plot_out
    if args.sweep_column is not None or args.sweep_values is not None:
        if args.sweep_column is None or args.sweep_values is None:
            raise ConfigError(
                "--sweep-column and --sweep-values must be given together"
            )
        overrides["sweep"] = SweepSpec(
            column=args.sweep_column, values=tuple(_split_csv(args.sweep_values))
        )
    return with_overrides(config, **overrides)


def _build_source(config: AuditConfig):
    if config.source == "model":
        assert config.model is not None  # validate_config guarantees this
        return ModelSource(
            command=config.model,
            handshake_timeout=config.handshake_timeout,
            request_timeout=config.request_timeout,
        )
    return CsvSource()


def _load_dataset(config: AuditConfig):
    if config.dataset is None:
        raise ConfigError("no dataset configured; use --dataset or the config file")
    return load_csv(config.dataset)


def _write_output(text: str, path: Optional[str]) -> None:
    if path is None:
        sys.stdout.write(text)
    else:
        try:
            Path(path).write_text(text, encoding="utf-8")
        except OSError as exc:
            raise ConfigError(f"cannot write output file {path}: {exc}") from None


def _fail_problems(config: AuditConfig) -> None:
    problems = validate_config(config)
    if problems:
        raise ConfigError("; ".join(problems))


def _cmd_check_config(config: AuditConfig, args: argparse.Namespace) -> int:
    problems = validate_config(config)
    if config.dataset is not None and not problems:
        # Cheap end-to-end wiring check: the dataset must load and every
        # predicate must bind against its header.
        dataset = load_csv(config.dataset)
        check_binding(config, dataset, model_mode=config.source == "model")
    if problems:
        for problem in problems:
            print(f"fairaudit: {problem}", file=sys.stderr)
        return 2
    if args.dump_config:
        sys.stdout.write(dump_config(config))
    else:
        print("config OK")
    return 0


def _cmd_audit(config: AuditConfig, args: argparse.Namespace) -> int:
    if args.dump_config:
        _fail_problems(config)
        sys.stdout.write(dump_config(config))
        return 0
    dataset = _load_dataset(config)
    report = run_audit(config, dataset, _build_source(config))
    _write_output(emit_report(report, config.format), config.out)
    if args.fail_on_violation and any(r.passed is False for r in report.results):
        return 1
    return 0


def _cmd_sweep(config: AuditConfig, args: argparse.Namespace) -> int:
    if args.dump_config:
        _fail_problems(config)
        sys.stdout.write(dump_config(config))
        return 0
    if config.sweep is None:
        raise ConfigError(
            "sweep needs --sweep-column/--sweep-values or a sweep in the config"
        )
    dataset = _load_dataset(config)
    entries = run_sweep(config, dataset, config.sweep, _build_source(config))
    _write_output(
        emit_sweep_report(config.sweep.column, entries, config.format), config.out
    )
    if config.plot_out is not None:
        _write_output(emit_plot_data(entries), config.plot_out)
    failed_values = [entry for entry in entries if entry.error is not None]
    if failed_values:
        for entry in failed_values:
            print(
                f"fairaudit: sweep value {entry.value!r} failed: {entry.error}",
                file=sys.stderr,
            )
        return 2
    if args.fail_on_violation and any(
        result.passed is False
        for entry in entries
        if entry.report is not None
        for result in entry.report.results
    ):
        return 1
    return 0


def main(argv: Optional[list[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        config = _config_from_args(args)
        if args.command == "check-config":
            return _cmd_check_config(config, args)
        if args.command == "audit":
            return _cmd_audit(config, args)
        return _cmd_sweep(config, args)
    except _KNOWN_ERRORS as exc:
        print(f"fairaudit: error: {exc}", file=sys.stderr)
        return 2


def entry() -> None:
    sys.exit(main(sys.argv[1:]))


if __name__ == "__main__":
    entry()
