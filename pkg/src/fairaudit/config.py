"""Audit configuration: the JSON document driving a run.

A config names the dataset, the group/outcome predicates, the tolerance,
the prediction source, and what to emit. Every field can also be set by a
command-line flag; flags override the file. ``load_config`` reports
malformed JSON with file, line, and column, and semantic problems with the
file and field name, so a bad config never turns into a stack trace.

Relative dataset paths are resolved against the config file's directory,
making configs relocatable alongside their data.
"""

from __future__ import annotations

import json
import shlex
from dataclasses import dataclass, fields, replace
from pathlib import Path
from typing import Optional, Union

from .dsl import PredicateParseError, parse_predicate, parse_score
from .measures import DEFAULT_EPSILON, Measure, MeasureInputError

ArgValue = Union[str, int, float]

SOURCE_MODES = ("csv", "model")
REPORT_FORMATS = ("table", "json")


class ConfigError(Exception):
    """A configuration file or flag set that cannot drive an audit."""


@dataclass(frozen=True)
class SweepSpec:
    """A group sweep: one audit per value of one column.

    By default a value's rows form the unprivileged group, i.e. the
    privileged predicate is ``col(column) != value``; with
    ``value_is_privileged`` the direction flips. ``per_value_process``
    makes model-mode sweeps spawn a fresh predictor per value instead of
    sharing one handle.
    """

    column: str
    values: tuple[str, ...]
    value_is_privileged: bool = False
    per_value_process: bool = False

    def __post_init__(self):
        if not self.column:
            raise ConfigError("sweep column must not be empty")
        if not self.values:
            raise ConfigError("sweep needs at least one value")
        if len(set(self.values)) != len(self.values):
            raise ConfigError("sweep values must be distinct")


@dataclass(frozen=True)
class AuditConfig:
    """Everything needed to run one audit or sweep.

    Predicate fields hold expression text, parsed on use. ``measures``
    None means "all applicable": every measure whose requirements
    (legitimate/calibration predicate, score) this config satisfies.
    """

    privileged: str
    positive: str
    truth: str
    dataset: Optional[str] = None
    epsilon: float = DEFAULT_EPSILON
    score: Optional[str] = None
    legitimate: Optional[str] = None
    legitimate_args: tuple[ArgValue, ...] = ()
    calibration: Optional[str] = None
    calibration_args: tuple[ArgValue, ...] = ()
    measures: Optional[tuple[str, ...]] = None
    source: str = "csv"
    model: Optional[tuple[str, ...]] = None
    handshake_timeout: float = 30.0
    request_timeout: float = 30.0
    measure_epsilons: Optional[dict[str, float]] = None
    sweep: Optional[SweepSpec] = None
    format: str = "table"
    out: Optional[str] = None
    plot_out: Optional[str] = None


_REQUIRED_FIELDS = ("privileged", "positive", "truth")


def _type_error(origin: str, field: str, expected: str, got: object) -> ConfigError:
    return ConfigError(f"{origin}: field {field!r} must be {expected}, got {got!r}")


def _string_field(origin: str, raw: dict, field: str) -> Optional[str]:
    value = raw.get(field)
    if value is None:
        return None
    if not isinstance(value, str):
        raise _type_error(origin, field, "a string", value)
    return value


def _number_field(origin: str, raw: dict, field: str) -> Optional[float]:
    value = raw.get(field)
    if value is None:
        return None
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise _type_error(origin, field, "a number", value)
    return float(value)


def _bool_field(origin: str, raw: dict, field: str, default: bool) -> bool:
    value = raw.get(field, default)
    if not isinstance(value, bool):
        raise _type_error(origin, field, "a boolean", value)
    return value


def _args_field(origin: str, raw: dict, field: str) -> tuple[ArgValue, ...]:
    value = raw.get(field)
    if value is None:
        return ()
    if not isinstance(value, list):
        raise _type_error(origin, field, "a list of strings or numbers", value)
    out = []
    for item in value:
        if isinstance(item, bool) or not isinstance(item, (str, int, float)):
            raise _type_error(origin, field, "a list of strings or numbers", item)
        out.append(item)
    return tuple(out)


def _string_list_field(origin: str, raw: dict, field: str) -> Optional[tuple[str, ...]]:
    value = raw.get(field)
    if value is None:
        return None
    if not isinstance(value, list) or not all(isinstance(v, str) for v in value):
        raise _type_error(origin, field, "a list of strings", value)
    return tuple(value)


def _command_field(origin: str, raw: dict, field: str) -> Optional[tuple[str, ...]]:
    value = raw.get(field)
    if value is None:
        return None
    if isinstance(value, str):
        return tuple(shlex.split(value))
    if isinstance(value, list) and all(isinstance(v, str) for v in value):
        return tuple(value)
    raise _type_error(origin, field, "a command string or list of strings", value)


_KNOWN_FIELDS = frozenset(f.name for f in fields(AuditConfig))


def config_from_mapping(raw: dict, *, origin: str, base_dir: Optional[Path] = None) -> AuditConfig:
    """Build an AuditConfig from a parsed JSON object.

    ``origin`` names the source (a file path or "<flags>") for error
    messages; ``base_dir`` anchors a relative dataset path.
    """
    unknown = sorted(set(raw) - _KNOWN_FIELDS)
    if unknown:
        raise ConfigError(
            f"{origin}: unknown config field(s): {', '.join(unknown)}; "
            f"known fields: {', '.join(sorted(_KNOWN_FIELDS))}"
        )
    for field in _REQUIRED_FIELDS:
        if not isinstance(raw.get(field), str) or not raw.get(field):
            raise ConfigError(
                f"{origin}: required field {field!r} missing or not a nonempty string"
            )

    dataset = _string_field(origin, raw, "dataset")
    if dataset is not None and base_dir is not None and not Path(dataset).is_absolute():
        dataset = str(base_dir / dataset)

    epsilon = _number_field(origin, raw, "epsilon")
    source = _string_field(origin, raw, "source") or "csv"
    if source not in SOURCE_MODES:
        raise ConfigError(
            f"{origin}: field 'source' must be one of {'/'.join(SOURCE_MODES)}, got {source!r}"
        )
    fmt = _string_field(origin, raw, "format") or "table"
    if fmt not in REPORT_FORMATS:
        raise ConfigError(
            f"{origin}: field 'format' must be one of {'/'.join(REPORT_FORMATS)}, got {fmt!r}"
        )

    measure_epsilons = None
    if raw.get("measure_epsilons") is not None:
        value = raw["measure_epsilons"]
        if not isinstance(value, dict):
            raise _type_error(origin, "measure_epsilons", "an object of measure: number", value)
        measure_epsilons = {}
        for key, eps in value.items():
            if isinstance(eps, bool) or not isinstance(eps, (int, float)):
                raise _type_error(origin, "measure_epsilons", "an object of measure: number", eps)
            measure_epsilons[key] = float(eps)

    sweep = None
    if raw.get("sweep") is not None:
        node = raw["sweep"]
        if not isinstance(node, dict):
            raise _type_error(origin, "sweep", "an object", node)
        sweep_unknown = sorted(
            set(node) - {"column", "values", "value_is_privileged", "per_value_process"}
        )
        if sweep_unknown:
            raise ConfigError(
                f"{origin}: unknown sweep field(s): {', '.join(sweep_unknown)}"
            )
        column = _string_field(origin, node, "column")
        values = _string_list_field(origin, node, "values")
        if column is None or values is None:
            raise ConfigError(f"{origin}: sweep needs 'column' and 'values'")
        try:
            sweep = SweepSpec(
                column=column,
                values=values,
                value_is_privileged=_bool_field(origin, node, "value_is_privileged", False),
                per_value_process=_bool_field(origin, node, "per_value_process", False),
            )
        except ConfigError as exc:
            raise ConfigError(f"{origin}: {exc}") from None

    handshake = _number_field(origin, raw, "handshake_timeout")
    request = _number_field(origin, raw, "request_timeout")
    return AuditConfig(
        privileged=raw["privileged"],
        positive=raw["positive"],
        truth=raw["truth"],
        dataset=dataset,
        epsilon=DEFAULT_EPSILON if epsilon is None else epsilon,
        score=_string_field(origin, raw, "score"),
        legitimate=_string_field(origin, raw, "legitimate"),
        legitimate_args=_args_field(origin, raw, "legitimate_args"),
        calibration=_string_field(origin, raw, "calibration"),
        calibration_args=_args_field(origin, raw, "calibration_args"),
        measures=_string_list_field(origin, raw, "measures"),
        source=source,
        model=_command_field(origin, raw, "model"),
        handshake_timeout=30.0 if handshake is None else handshake,
        request_timeout=30.0 if request is None else request,
        measure_epsilons=measure_epsilons,
        sweep=sweep,
        format=fmt,
        out=_string_field(origin, raw, "out"),
        plot_out=_string_field(origin, raw, "plot_out"),
    )


def load_config(path: Union[str, Path]) -> AuditConfig:
    """Read and structurally check a JSON config file."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from None
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(
            f"{path}:{exc.lineno}:{exc.colno}: invalid JSON: {exc.msg}"
        ) from None
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: config must be a JSON object")
    return config_from_mapping(raw, origin=str(path), base_dir=path.parent)


def dump_config(config: AuditConfig) -> str:
    """Render the effective config as JSON that reloads equivalently."""
    doc = {
        "privileged": config.privileged,
        "positive": config.positive,
        "truth": config.truth,
        "dataset": config.dataset,
        "epsilon": config.epsilon,
        "score": config.score,
        "legitimate": config.legitimate,
        "legitimate_args": list(config.legitimate_args),
        "calibration": config.calibration,
        "calibration_args": list(config.calibration_args),
        "measures": None if config.measures is None else list(config.measures),
        "source": config.source,
        "model": None if config.model is None else list(config.model),
        "handshake_timeout": config.handshake_timeout,
        "request_timeout": config.request_timeout,
        "measure_epsilons": config.measure_epsilons,
        "sweep": None
        if config.sweep is None
        else {
            "column": config.sweep.column,
            "values": list(config.sweep.values),
            "value_is_privileged": config.sweep.value_is_privileged,
            "per_value_process": config.sweep.per_value_process,
        },
        "format": config.format,
        "out": config.out,
        "plot_out": config.plot_out,
    }
    return json.dumps(doc, indent=2) + "\n"


def _parse_problem(field: str, text: str) -> Optional[str]:
    try:
        parse_predicate(text)
    except PredicateParseError as exc:
        return f"field {field!r}: {exc}"
    return None


def validate_config(config: AuditConfig) -> list[str]:
    """Collect every semantic problem; an empty list means runnable."""
    problems = []

    for field in ("privileged", "positive", "truth"):
        text = getattr(config, field)
        problem = _parse_problem(field, text)
        if problem:
            problems.append(problem)
            continue
        arity = parse_predicate(text).arity
        if arity:
            problems.append(
                f"field {field!r}: takes no parameters but references ${arity}"
            )

    if config.score is not None:
        try:
            parse_score(config.score)
        except PredicateParseError as exc:
            problems.append(f"field 'score': {exc}")

    for field, args_field in (
        ("legitimate", "legitimate_args"),
        ("calibration", "calibration_args"),
    ):
        text = getattr(config, field)
        args = getattr(config, args_field)
        if text is None:
            if args:
                problems.append(f"field {args_field!r}: given without {field!r}")
            continue
        problem = _parse_problem(field, text)
        if problem:
            problems.append(problem)
            continue
        arity = parse_predicate(text).arity
        if len(args) != arity:
            problems.append(
                f"field {field!r}: takes {arity} parameter(s) "
                f"but {args_field} has {len(args)}"
            )

    if not 0.0 < config.epsilon < 1.0:
        problems.append(
            f"field 'epsilon': must be strictly between 0 and 1, got {config.epsilon!r}"
        )
    for name in ("handshake_timeout", "request_timeout"):
        if getattr(config, name) <= 0:
            problems.append(f"field {name!r}: must be positive")

    if config.measures is not None:
        seen = set()
        for measure_id in config.measures:
            try:
                Measure.from_id(measure_id)
            except MeasureInputError as exc:
                problems.append(f"field 'measures': {exc}")
                continue
            if measure_id in seen:
                problems.append(f"field 'measures': duplicate entry {measure_id!r}")
            seen.add(measure_id)

    if config.measure_epsilons:
        for measure_id, eps in config.measure_epsilons.items():
            try:
                Measure.from_id(measure_id)
            except MeasureInputError as exc:
                problems.append(f"field 'measure_epsilons': {exc}")
            if not 0.0 < eps < 1.0:
                problems.append(
                    f"field 'measure_epsilons': epsilon for {measure_id!r} "
                    f"must be strictly between 0 and 1, got {eps!r}"
                )

    if config.source == "model" and config.model is None:
        problems.append("source is 'model' but no model command is configured")
    if config.source == "csv" and config.model is not None:
        problems.append(
            "source is 'csv' but a model command is configured; "
            "set source to 'model' or drop the command"
        )
    if config.plot_out is not None and config.sweep is None:
        problems.append("plot_out requires a sweep")
    return problems


def ensure_valid(config: AuditConfig) -> AuditConfig:
    """Raise ConfigError listing all problems, or hand the config back."""
    problems = validate_config(config)
    if problems:
        raise ConfigError("; ".join(problems))
    return config


def with_overrides(config: AuditConfig, **overrides) -> AuditConfig:
    """Functional update used when flags override file fields."""
    return replace(config, **overrides)
