"""Audit orchestration and reporting.

``run_audit`` evaluates every selected measure over one dataset and one
prediction source and returns an :class:`AuditReport`; ``run_sweep``
repeats the audit across the values of one column (one report per value,
failures isolated per value). Reports render as full-precision JSON with
stable keys or as a two-decimal human table; sweeps additionally export
long-format plot data (group, measure, value, passed) for external
charting tools.

A report embeds a dataset fingerprint (row count plus an order-insensitive
header hash) and the prediction-source mode, so a third party can tie the
numbers back to their inputs.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
from dataclasses import dataclass, replace
from datetime import datetime, timezone
from typing import Callable, Optional

from ._version import __version__
from .config import AuditConfig, ConfigError, SweepSpec, ensure_valid
from .dataset import Dataset, Row
from .dsl import (
    Column,
    Compare,
    PredicateExpr,
    ScoreExpr,
    StringLit,
    eval_predicate,
    eval_score,
    parse_predicate,
    parse_score,
)
from .measures import (
    ALL_MEASURES,
    SCORE_MEASURES,
    AuditContext,
    Measure,
    MeasureInputError,
    MeasureResult,
    evaluate_measure,
)
from .model import (
    CsvSource,
    ModelSource,
    PredictionSource,
    start_model,
    stringify_prediction,
)

RowFn = Callable[[Row], object]


@dataclass(frozen=True)
class ContextSummary:
    """What produced the numbers: predicates, tolerance, data identity."""

    source: str
    model_command: Optional[tuple[str, ...]]
    epsilon: float
    dataset_rows: int
    header_hash: str
    predicates: dict


@dataclass(frozen=True)
class AuditReport:
    """One full audit: a result for every selected measure, plus context."""

    context: ContextSummary
    results: tuple[MeasureResult, ...]
    timestamp: str
    version: str


@dataclass(frozen=True)
class SweepEntry:
    """One sweep value's outcome; ``error`` is set instead of ``report``
    when that value's audit failed (other values are unaffected)."""

    value: str
    report: Optional[AuditReport]
    error: Optional[str] = None


def dataset_fingerprint(dataset: Dataset) -> str:
    """Order-insensitive hash of the column names."""
    digest = hashlib.sha256("\n".join(sorted(dataset.header)).encode("utf-8"))
    return digest.hexdigest()


def selected_measures(config: AuditConfig) -> list[Measure]:
    """The measure list an audit will evaluate.

    An explicit selection is honored verbatim (inapplicable entries show
    up as undefined results, never dropped). The default is every measure
    whose requirements this config satisfies.
    """
    if config.measures is not None:
        return [Measure.from_id(measure_id) for measure_id in config.measures]
    out = []
    for measure in ALL_MEASURES:
        if measure is Measure.CONDITIONAL_STATISTICAL_PARITY and config.legitimate is None:
            continue
        if measure is Measure.EQUAL_CALIBRATION and config.calibration is None:
            continue
        if measure in SCORE_MEASURES and config.score is None:
            continue
        out.append(measure)
    return out


# ---------------------------------------------------------------------------
# Compilation: texts -> bound row functions

_MISSING = object()


def _memoized(fn: RowFn) -> RowFn:
    # Keyed by row identity: dataset rows are shared immutable objects, so
    # this only skips re-walking ASTs, it cannot change any result.
    cache: dict[int, object] = {}

    def wrapper(row: Row):
        key = id(row)
        value = cache.get(key, _MISSING)
        if value is _MISSING:
            value = fn(row)
            cache[key] = value
        return value

    return wrapper


def _bound(expr: PredicateExpr, args: tuple = ()) -> RowFn:
    return _memoized(lambda row: eval_predicate(expr, args, row))


def _bound_score(expr: ScoreExpr) -> RowFn:
    return _memoized(lambda row: eval_score(expr, row))


def check_binding(
    config: AuditConfig, dataset: Dataset, model_mode: bool
) -> None:
    """Reject predicates referencing columns their rows will not have."""
    header = frozenset(dataset.header)
    prediction_columns = frozenset({"prediction"}) if model_mode else header
    checks = [
        ("privileged", parse_predicate(config.privileged).columns(), header),
        ("positive", parse_predicate(config.positive).columns(), prediction_columns),
        ("truth", parse_predicate(config.truth).columns(), header),
    ]
    if config.score is not None:
        checks.append(("score", parse_score(config.score).columns(), prediction_columns))
    if config.legitimate is not None:
        checks.append(("legitimate", parse_predicate(config.legitimate).columns(), header))
    if config.calibration is not None:
        checks.append(("calibration", parse_predicate(config.calibration).columns(), header))

    problems = []
    for name, used, allowed in checks:
        missing = sorted(used - allowed)
        if missing:
            problems.append(
                f"field {name!r} references unknown column(s): {', '.join(missing)}"
            )
    if problems:
        if model_mode:
            problems.append(
                "note: in model mode the positive/score expressions see only "
                "the 'prediction' column"
            )
        raise ConfigError("; ".join(problems))


def _prediction_functions(
    config: AuditConfig, dataset: Dataset, source: PredictionSource
) -> tuple[RowFn, Optional[RowFn]]:
    """Build the positive test and score function for this source.

    In model mode this is where the external predictor runs: one request
    per dataset row, materialized up front, after which the engine is as
    pure as in CSV mode.
    """
    positive_expr = parse_predicate(config.positive)
    score_expr = parse_score(config.score) if config.score is not None else None

    if isinstance(source, CsvSource):
        positive_fn = _bound(positive_expr)
        score_fn = _bound_score(score_expr) if score_expr is not None else None
        return positive_fn, score_fn

    with start_model(
        source.command,
        handshake_timeout=source.handshake_timeout,
        request_timeout=source.request_timeout,
    ) as handle:
        predictions = handle.predict_rows(dataset.rows)
    outputs = {
        id(row): Row({"prediction": stringify_prediction(prediction)})
        for row, prediction in zip(dataset.rows, predictions)
    }
    positive_fn = _memoized(
        lambda row: eval_predicate(positive_expr, (), outputs[id(row)])
    )
    score_fn = None
    if score_expr is not None:
        score_fn = _memoized(lambda row: eval_score(score_expr, outputs[id(row)]))
    return positive_fn, score_fn


def _context_summary(
    config: AuditConfig, dataset: Dataset, source: PredictionSource
) -> ContextSummary:
    model_command = source.command if isinstance(source, ModelSource) else None
    return ContextSummary(
        source="model" if isinstance(source, ModelSource) else "csv",
        model_command=model_command,
        epsilon=config.epsilon,
        dataset_rows=dataset.row_count,
        header_hash=dataset_fingerprint(dataset),
        predicates={
            "privileged": config.privileged,
            "positive": config.positive,
            "truth": config.truth,
            "score": config.score,
            "legitimate": config.legitimate,
            "legitimate_args": list(config.legitimate_args),
            "calibration": config.calibration,
            "calibration_args": list(config.calibration_args),
        },
    )


def _now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def _audit_with_predictions(
    config: AuditConfig,
    dataset: Dataset,
    source: PredictionSource,
    positive_fn: RowFn,
    score_fn: Optional[RowFn],
    timestamp: Optional[str],
) -> AuditReport:
    ctx = AuditContext(
        dataset=dataset,
        privileged=_bound(parse_predicate(config.privileged)),
        positive=positive_fn,
        truth=_bound(parse_predicate(config.truth)),
        score=score_fn,
        epsilon=config.epsilon,
    )
    legitimate_fn = None
    if config.legitimate is not None:
        legitimate_fn = _bound(
            parse_predicate(config.legitimate), tuple(config.legitimate_args)
        )
    calibration_fn = None
    if config.calibration is not None:
        calibration_fn = _bound(
            parse_predicate(config.calibration), tuple(config.calibration_args)
        )
    overrides = config.measure_epsilons or {}

    results = []
    for measure in selected_measures(config):
        extra = None
        if measure is Measure.CONDITIONAL_STATISTICAL_PARITY:
            extra = legitimate_fn
        elif measure is Measure.EQUAL_CALIBRATION:
            extra = calibration_fn
        try:
            result = evaluate_measure(
                measure, ctx, extra, epsilon=overrides.get(measure.value)
            )
        except MeasureInputError as exc:
            # Explicitly selected but inapplicable: report why, never drop.
            result = MeasureResult(
                measure=measure,
                values={},
                epsilon=None,
                passed=None,
                group_sizes={},
                notes=(str(exc),),
            )
        results.append(result)

    return AuditReport(
        context=_context_summary(config, dataset, source),
        results=tuple(results),
        timestamp=timestamp if timestamp is not None else _now(),
        version=__version__,
    )


def run_audit(
    config: AuditConfig,
    dataset: Dataset,
    source: PredictionSource,
    *,
    timestamp: Optional[str] = None,
) -> AuditReport:
    """Evaluate every selected measure; deterministic given its inputs."""
    ensure_valid(config)
    model_mode = isinstance(source, ModelSource)
    check_binding(config, dataset, model_mode)
    positive_fn, score_fn = _prediction_functions(config, dataset, source)
    return _audit_with_predictions(
        config, dataset, source, positive_fn, score_fn, timestamp
    )


def privileged_text_for_value(sweep: SweepSpec, value: str) -> str:
    """The generated privileged predicate for one sweep value.

    Default direction: the value's rows are the unprivileged group."""
    op = "==" if sweep.value_is_privileged else "!="
    expr = PredicateExpr(
        root=Compare(op, Column(sweep.column), StringLit(value)), arity=0
    )
    return expr.to_text()


def run_sweep(
    config: AuditConfig,
    dataset: Dataset,
    sweep: SweepSpec,
    source: PredictionSource,
    *,
    timestamp: Optional[str] = None,
) -> list[SweepEntry]:
    """One audit per sweep value, sharing predictions where sound.

    Predictions do not depend on the privileged predicate, so CSV mode and
    default model mode query the source once for all values; with
    ``per_value_process`` a model is spawned per value. A failing value
    yields an entry with ``error`` set and does not disturb the others.
    """
    ensure_valid(config)
    if sweep.column not in dataset.header:
        raise ConfigError(
            f"sweep column {sweep.column!r} is not in the dataset header"
        )
    model_mode = isinstance(source, ModelSource)
    check_binding(config, dataset, model_mode)

    per_value = model_mode and sweep.per_value_process
    shared: Optional[tuple[RowFn, Optional[RowFn]]] = None
    if not per_value:
        shared = _prediction_functions(config, dataset, source)

    entries = []
    for value in sweep.values:
        value_config = replace(
            config,
            privileged=privileged_text_for_value(sweep, value),
            sweep=None,
            plot_out=None,
        )
        try:
            if shared is not None:
                report = _audit_with_predictions(
                    value_config, dataset, source, shared[0], shared[1], timestamp
                )
            else:
                report = run_audit(value_config, dataset, source, timestamp=timestamp)
        except Exception as exc:
            entries.append(
                SweepEntry(value=value, report=None, error=f"{type(exc).__name__}: {exc}")
            )
        else:
            entries.append(SweepEntry(value=value, report=report, error=None))
    return entries


# ---------------------------------------------------------------------------
# Rendering

_LINE_LABELS = {
    ("equalized_odds", "true_positive_difference"): "Equalized Odds (true positive)",
    ("equalized_odds", "false_positive_difference"): "Equalized Odds (false positive)",
    (
        "conditional_use_accuracy_equality",
        "positive_predictive_difference",
    ): "Conditional Use Accuracy Equality (positive predictive value)",
    (
        "conditional_use_accuracy_equality",
        "negative_predictive_difference",
    ): "Conditional Use Accuracy Equality (negative predictive value, aka true negative)",
}


def _result_to_json(result: MeasureResult) -> dict:
    return {
        "measure": result.measure.value,
        "values": dict(result.values),
        "epsilon": result.epsilon,
        "passed": result.passed,
        "group_sizes": dict(result.group_sizes),
        "notes": list(result.notes),
        "verdict": result.verdict,
    }


def report_to_json_object(report: AuditReport) -> dict:
    return {
        "version": report.version,
        "timestamp": report.timestamp,
        "context": {
            "source": report.context.source,
            "model_command": None
            if report.context.model_command is None
            else list(report.context.model_command),
            "epsilon": report.context.epsilon,
            "dataset_rows": report.context.dataset_rows,
            "header_hash": report.context.header_hash,
            "predicates": report.context.predicates,
        },
        "results": [_result_to_json(result) for result in report.results],
    }


def _table_rows(result: MeasureResult) -> list[tuple[str, str, str]]:
    name = result.measure.display_name
    if not result.values:
        return [(name, "undefined", result.verdict)]
    eps = result.epsilon
    rows = []
    if result.measure is Measure.DISPARATE_IMPACT:
        ratio = result.values["ratio"]
        return [(name, f"{ratio:.2f} >= {1.0 - eps:.2f}", result.verdict)]
    for value_name, value in result.values.items():
        label = _LINE_LABELS.get((result.measure.value, value_name), name)
        if eps is None:
            rows.append((label, f"{value:.2f} (no threshold)", result.verdict))
        else:
            verdict = "PASS" if value <= eps else "FAIL"
            rows.append((label, f"{value:.2f} <= {eps:.2f}", verdict))
    return rows


def _render_table(results) -> str:
    header = ("Measure", "Criterion", "Verdict")
    rows = [row for result in results for row in _table_rows(result)]
    widths = [
        max(len(header[i]), *(len(row[i]) for row in rows)) if rows else len(header[i])
        for i in range(3)
    ]
    lines = []

    def emit(cells):
        lines.append(
            " | ".join(cell.ljust(width) for cell, width in zip(cells, widths)).rstrip()
        )

    emit(header)
    lines.append("-+-".join("-" * width for width in widths))
    for row in rows:
        emit(row)

    notes = [
        f"  - {result.measure.value}: {note}"
        for result in results
        for note in result.notes
    ]
    if notes:
        lines.append("")
        lines.append("Notes:")
        lines.extend(notes)
    return "\n".join(lines) + "\n"


def emit_report(report: AuditReport, format: str = "table") -> str:
    """Render one audit as full-precision JSON or a two-decimal table."""
    if format == "json":
        return json.dumps(report_to_json_object(report), indent=2, sort_keys=True) + "\n"
    if format == "table":
        return _render_table(report.results)
    raise ConfigError(f"unknown report format {format!r}")


def emit_sweep_report(
    column: str, entries: list[SweepEntry], format: str = "table"
) -> str:
    """Render a sweep: one section (or JSON entry) per swept value."""
    if format == "json":
        doc = {
            "version": __version__,
            "sweep_column": column,
            "entries": [
                {
                    "value": entry.value,
                    "error": entry.error,
                    "report": None
                    if entry.report is None
                    else report_to_json_object(entry.report),
                }
                for entry in entries
            ],
        }
        return json.dumps(doc, indent=2, sort_keys=True) + "\n"
    if format != "table":
        raise ConfigError(f"unknown report format {format!r}")
    sections = []
    for entry in entries:
        title = f"== {column} = {entry.value!r} =="
        if entry.report is None:
            sections.append(f"{title}\nerror: {entry.error}\n")
        else:
            sections.append(f"{title}\n{_render_table(entry.report.results)}")
    return "\n".join(sections)


def emit_plot_data(entries: list[SweepEntry]) -> str:
    """Long-format CSV (group, measure, value, passed) from sweep results.

    Values are written in full precision so they match report JSON
    bit-for-bit. Two-line measures emit one row per line, the measure
    column qualified as ``measure_id:value_name``. Undefined measures
    without values plot nothing; balance values without a threshold plot
    with passed = "undef".
    """
    if not entries:
        raise ConfigError("no sweep results to plot")
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(["group", "measure", "value", "passed"])
    for entry in entries:
        if entry.report is None:
            continue
        for result in entry.report.results:
            multi = len(result.values) > 1
            for value_name, value in result.values.items():
                label = (
                    f"{result.measure.value}:{value_name}"
                    if multi
                    else result.measure.value
                )
                passed = "undef" if result.passed is None else str(result.passed).lower()
                writer.writerow([entry.value, label, repr(value), passed])
    return buffer.getvalue()
