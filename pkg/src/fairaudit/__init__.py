"""Group-fairness auditing of tabular predictions.

The package splits into small layers: ``dataset`` loads CSV rows, ``dsl``
parses the predicate/score expressions, ``measures`` computes the fairness
catalog over conditioned subgroups, ``model`` supplies predictions from
CSV columns or an external predictor process, ``config``/``report`` wire a
JSON config into audits, sweeps, and rendered reports, and ``cli`` is the
``fairaudit`` command.
"""

from ._version import __version__
from .config import (
    AuditConfig,
    ConfigError,
    SweepSpec,
    dump_config,
    ensure_valid,
    load_config,
    validate_config,
)
from .dataset import Dataset, DatasetError, Row, filter_rows, load_csv
from .dsl import (
    DslError,
    PredicateEvalError,
    PredicateExpr,
    PredicateParseError,
    ScoreExpr,
    eval_predicate,
    eval_score,
    parse_predicate,
    parse_score,
)
from .measures import (
    ALL_MEASURES,
    AuditContext,
    EmptyConditionError,
    Measure,
    MeasureError,
    MeasureInputError,
    MeasureResult,
    cond_expect,
    cond_prob,
    evaluate_measure,
)
from .model import (
    CsvSource,
    ModelError,
    ModelHandle,
    ModelSource,
    start_model,
)
from .report import (
    AuditReport,
    ContextSummary,
    SweepEntry,
    check_binding,
    dataset_fingerprint,
    emit_plot_data,
    emit_report,
    emit_sweep_report,
    privileged_text_for_value,
    report_to_json_object,
    run_audit,
    run_sweep,
    selected_measures,
)

__all__ = [
    "__version__",
    "AuditConfig",
    "AuditContext",
    "AuditReport",
    "ALL_MEASURES",
    "ConfigError",
    "ContextSummary",
    "CsvSource",
    "Dataset",
    "DatasetError",
    "DslError",
    "EmptyConditionError",
    "Measure",
    "MeasureError",
    "MeasureInputError",
    "MeasureResult",
    "ModelError",
    "ModelHandle",
    "ModelSource",
    "PredicateEvalError",
    "PredicateExpr",
    "PredicateParseError",
    "Row",
    "ScoreExpr",
    "SweepEntry",
    "SweepSpec",
    "check_binding",
    "cond_expect",
    "cond_prob",
    "dataset_fingerprint",
    "dump_config",
    "emit_plot_data",
    "emit_report",
    "emit_sweep_report",
    "ensure_valid",
    "eval_predicate",
    "eval_score",
    "evaluate_measure",
    "filter_rows",
    "load_config",
    "load_csv",
    "parse_predicate",
    "parse_score",
    "privileged_text_for_value",
    "report_to_json_object",
    "run_audit",
    "run_sweep",
    "selected_measures",
    "validate_config",
]
