"""Empirical group-fairness measures over a dataset.

Everything here is counting. A measure conditions the dataset on the
privileged predicate (and possibly on ground truth, on the prediction, or
on a user predicate), computes empirical probabilities or means on each
side, and compares the two sides against a tolerance epsilon.

Probabilities are ratios of exact integer counts divided in double
precision. An empty conditioning subgroup makes the measure undefined:
``passed`` becomes None and a note names the empty subgroup. It is never
reported as 0 or NaN, because "inapplicable" must not read as "passing".

Verdict rules:

* difference measures pass when the absolute difference is <= epsilon
* disparate_impact passes when the rate ratio is >= 1 - epsilon
* two-line measures (equalized_odds, conditional_use_accuracy_equality)
  pass when both lines are within epsilon
* positive_balance and negative_balance have no default verdict; a
  threshold is applied only when one is given explicitly for the measure
"""

from __future__ import annotations

import enum
from collections.abc import Callable, Mapping
from dataclasses import dataclass, field
from typing import Optional

from .dataset import Dataset, Row

RowPredicate = Callable[[Row], bool]
RowScore = Callable[[Row], float]

DEFAULT_EPSILON = 0.2


class MeasureError(Exception):
    """Base class for measure evaluation failures."""


class EmptyConditionError(MeasureError):
    """A conditioning subgroup matched zero rows."""

    def __init__(self, subgroup: str):
        super().__init__(f"subgroup {subgroup!r} matches zero rows")
        self.subgroup = subgroup


class MeasureInputError(MeasureError):
    """The context or arguments do not fit the requested measure."""


class ScoreEvaluationError(MeasureError):
    """The score expression failed on some row; carries the row index."""


class Measure(enum.Enum):
    """Identifiers for every supported fairness measure."""

    DISPARATE_IMPACT = "disparate_impact"
    DEMOGRAPHIC_PARITY = "demographic_parity"
    CONDITIONAL_STATISTICAL_PARITY = "conditional_statistical_parity"
    OVERALL_ACCURACY_EQUALITY = "overall_accuracy_equality"
    MEAN_DIFFERENCE = "mean_difference"
    EQUALIZED_ODDS = "equalized_odds"
    EQUAL_OPPORTUNITY = "equal_opportunity"
    PREDICTIVE_EQUALITY = "predictive_equality"
    CONDITIONAL_USE_ACCURACY_EQUALITY = "conditional_use_accuracy_equality"
    PREDICTIVE_PARITY = "predictive_parity"
    EQUAL_CALIBRATION = "equal_calibration"
    POSITIVE_BALANCE = "positive_balance"
    NEGATIVE_BALANCE = "negative_balance"

    @property
    def display_name(self) -> str:
        return self.value.replace("_", " ").title()

    @classmethod
    def from_id(cls, text: str) -> "Measure":
        for member in cls:
            if member.value == text:
                return member
        valid = ", ".join(m.value for m in cls)
        raise MeasureInputError(f"unknown measure {text!r}; expected one of: {valid}")


ALL_MEASURES: tuple[Measure, ...] = tuple(Measure)

# Measures whose verdict hinges on a user predicate beyond R/P/T.
EXTRA_PREDICATE_MEASURES = frozenset(
    {Measure.CONDITIONAL_STATISTICAL_PARITY, Measure.EQUAL_CALIBRATION}
)
# Measures that read the score expression.
SCORE_MEASURES = frozenset({Measure.POSITIVE_BALANCE, Measure.NEGATIVE_BALANCE})
# Measures with no default verdict; epsilon applies only when explicit.
OPEN_VERDICT_MEASURES = SCORE_MEASURES
# Measures reporting two comparison lines instead of one.
TWO_LINE_MEASURES = frozenset(
    {Measure.EQUALIZED_ODDS, Measure.CONDITIONAL_USE_ACCURACY_EQUALITY}
)


@dataclass(frozen=True)
class AuditContext:
    """Everything a measure needs: data, group split, outcomes, tolerance.

    ``privileged`` carves the dataset into the two compared groups (the
    predicate and its negation). ``positive`` tests whether a row's
    prediction is positive, ``truth`` whether its actual outcome is
    positive. ``score`` is only needed by the balance measures.
    """

    dataset: Dataset
    privileged: RowPredicate
    positive: RowPredicate
    truth: RowPredicate
    score: Optional[RowScore] = None
    epsilon: float = DEFAULT_EPSILON

    def __post_init__(self):
        _check_epsilon(self.epsilon)


@dataclass(frozen=True)
class MeasureResult:
    """Outcome of one measure evaluation.

    ``values`` maps value names to reals; it is empty when the measure is
    undefined on this data. ``epsilon`` is the threshold actually applied,
    or None when no verdict was attempted. ``passed`` is None exactly when
    the measure is undefined (empty subgroup, degenerate ratio, or a
    balance measure without an explicit threshold).
    """

    measure: Measure
    values: Mapping[str, float]
    epsilon: Optional[float]
    passed: Optional[bool]
    group_sizes: Mapping[str, int]
    notes: tuple[str, ...] = field(default=())

    @property
    def verdict(self) -> str:
        if self.passed is None:
            return "UNDEF"
        return "PASS" if self.passed else "FAIL"


def _check_epsilon(value: float) -> None:
    if not isinstance(value, (int, float)) or isinstance(value, bool):
        raise MeasureInputError(f"epsilon must be a real number, got {value!r}")
    if not 0.0 < float(value) < 1.0:
        raise MeasureInputError(
            f"epsilon must be strictly between 0 and 1, got {value!r}"
        )


# ---------------------------------------------------------------------------
# Conditional probability and expectation

def _count_where(
    dataset: Dataset, event: RowPredicate, given: RowPredicate
) -> tuple[int, int]:
    """Exact counts: (rows with event and given, rows with given)."""
    given_n = 0
    event_n = 0
    for row in dataset.rows:
        if given(row):
            given_n += 1
            if event(row):
                event_n += 1
    return event_n, given_n


def _sum_where(
    dataset: Dataset, score: RowScore, given: RowPredicate
) -> tuple[float, int]:
    """Sum of score over the given-set, with its size."""
    total = 0.0
    count = 0
    for index, row in enumerate(dataset.rows):
        if given(row):
            try:
                value = score(row)
            except Exception as exc:
                raise ScoreEvaluationError(
                    f"score failed on row {index}: {exc}"
                ) from exc
            total += value
            count += 1
    return total, count


def cond_prob(
    dataset: Dataset,
    event: RowPredicate,
    given: RowPredicate,
    *,
    label: str = "conditioning subgroup",
) -> float:
    """Empirical P[event | given] over the dataset rows.

    Raises :class:`EmptyConditionError` when the given-set is empty; an
    undefined probability is never reported as a number.
    """
    event_n, given_n = _count_where(dataset, event, given)
    if given_n == 0:
        raise EmptyConditionError(label)
    return event_n / given_n


def cond_expect(
    dataset: Dataset,
    score: RowScore,
    given: RowPredicate,
    *,
    label: str = "conditioning subgroup",
) -> float:
    """Empirical E[score | given]: the mean of score over the given-set."""
    total, count = _sum_where(dataset, score, given)
    if count == 0:
        raise EmptyConditionError(label)
    return total / count


# ---------------------------------------------------------------------------
# Measure evaluation

def _negation(pred: RowPredicate) -> RowPredicate:
    return lambda row: not pred(row)

def _conjunction(first: RowPredicate, second: RowPredicate) -> RowPredicate:
    return lambda row: first(row) and second(row)


@dataclass(frozen=True)
class _Line:
    """One two-sided comparison: P[event | S, extra] across the group split."""

    value_name: str
    event: RowPredicate
    extra: Optional[RowPredicate] = None
    extra_label: Optional[str] = None


def _line_sides(ctx: AuditContext, line: _Line) -> list[tuple[str, RowPredicate]]:
    sides = []
    for side_label, side_pred in (
        ("privileged", ctx.privileged),
        ("unprivileged", _negation(ctx.privileged)),
    ):
        if line.extra is None:
            sides.append((side_label, side_pred))
        else:
            label = f"{side_label} & {line.extra_label}"
            sides.append((label, _conjunction(side_pred, line.extra)))
    return sides


def _prob_lines(
    ctx: AuditContext, lines: list[_Line]
) -> tuple[dict[str, float], dict[str, int], list[str]]:
    """Evaluate each line as |P_privileged - P_unprivileged|.

    Returns (values, group_sizes, empty_subgroup_labels); values is left
    empty when any subgroup is empty.
    """
    sizes: dict[str, int] = {}
    empty: list[str] = []
    rates: dict[str, list[float]] = {}
    for line in lines:
        rates[line.value_name] = []
        for label, given in _line_sides(ctx, line):
            event_n, given_n = _count_where(ctx.dataset, line.event, given)
            sizes[label] = given_n
            if given_n == 0:
                empty.append(label)
            else:
                rates[line.value_name].append(event_n / given_n)
    if empty:
        return {}, sizes, empty
    values = {
        name: abs(pair[0] - pair[1]) for name, pair in rates.items()
    }
    return values, sizes, empty


def _rate_pair(
    ctx: AuditContext, line: _Line
) -> tuple[list[float], dict[str, int], list[str]]:
    """Both sides' raw rates for one line (used by the ratio measure)."""
    sizes: dict[str, int] = {}
    empty: list[str] = []
    pair: list[float] = []
    for label, given in _line_sides(ctx, line):
        event_n, given_n = _count_where(ctx.dataset, line.event, given)
        sizes[label] = given_n
        if given_n == 0:
            empty.append(label)
        else:
            pair.append(event_n / given_n)
    return pair, sizes, empty


def _expect_lines(
    ctx: AuditContext, score: RowScore, lines: list[_Line]
) -> tuple[dict[str, float], dict[str, int], list[str]]:
    """Evaluate each line as |E_privileged - E_unprivileged| of the score."""
    sizes: dict[str, int] = {}
    empty: list[str] = []
    means: dict[str, list[float]] = {}
    for line in lines:
        means[line.value_name] = []
        for label, given in _line_sides(ctx, line):
            total, count = _sum_where(ctx.dataset, score, given)
            sizes[label] = count
            if count == 0:
                empty.append(label)
            else:
                means[line.value_name].append(total / count)
    if empty:
        return {}, sizes, empty
    values = {
        name: abs(pair[0] - pair[1]) for name, pair in means.items()
    }
    return values, sizes, empty


def _undefined(
    measure: Measure,
    sizes: Mapping[str, int],
    empty: list[str],
    notes: tuple[str, ...] = (),
) -> MeasureResult:
    empty_notes = tuple(
        f"subgroup {label!r} is empty; measure undefined" for label in empty
    )
    return MeasureResult(
        measure=measure,
        values={},
        epsilon=None,
        passed=None,
        group_sizes=dict(sizes),
        notes=notes + empty_notes,
    )


_DISPARATE_IMPACT_NOTE = (
    "ratio of unprivileged to privileged positive rates; interpret with care "
    "when a positive prediction is a disadvantage"
)


def evaluate_measure(
    measure: Measure,
    ctx: AuditContext,
    extra: Optional[RowPredicate] = None,
    *,
    epsilon: Optional[float] = None,
) -> MeasureResult:
    """Evaluate one measure over the context's dataset.

    ``extra`` is the bound legitimate predicate for
    conditional_statistical_parity, or the bound calibration predicate for
    equal_calibration; it is rejected for every other measure. ``epsilon``
    overrides the context default for this one evaluation and is the only
    way the balance measures acquire a verdict.
    """
    if measure in EXTRA_PREDICATE_MEASURES:
        if extra is None:
            kind = (
                "legitimate"
                if measure is Measure.CONDITIONAL_STATISTICAL_PARITY
                else "calibration"
            )
            raise MeasureInputError(
                f"{measure.value} requires a bound {kind} predicate"
            )
    elif extra is not None:
        raise MeasureInputError(
            f"{measure.value} does not take an extra conditioning predicate"
        )
    if measure in SCORE_MEASURES and ctx.score is None:
        raise MeasureInputError(f"{measure.value} requires a score expression")
    if epsilon is not None:
        _check_epsilon(epsilon)

    eps = epsilon if epsilon is not None else ctx.epsilon
    truth = ctx.truth
    not_truth = _negation(truth)
    positive = ctx.positive
    not_positive = _negation(positive)

    tp_line = _Line("true_positive_difference", positive, truth, "actual_positive")
    fp_line = _Line("false_positive_difference", positive, not_truth, "actual_negative")
    ppv_line = _Line(
        "positive_predictive_difference", truth, positive, "predicted_positive"
    )
    npv_line = _Line(
        "negative_predictive_difference", not_truth, not_positive, "predicted_negative"
    )

    if measure is Measure.DISPARATE_IMPACT:
        pair, sizes, empty = _rate_pair(ctx, _Line("ratio", positive))
        base_notes = (_DISPARATE_IMPACT_NOTE,)
        if empty:
            return _undefined(measure, sizes, empty, base_notes)
        privileged_rate, unprivileged_rate = pair
        if privileged_rate == 0.0:
            note = "privileged positive rate is zero; ratio undefined"
            return MeasureResult(
                measure, {}, None, None, sizes, base_notes + (note,)
            )
        ratio = unprivileged_rate / privileged_rate
        return MeasureResult(
            measure, {"ratio": ratio}, eps, ratio >= 1.0 - eps, sizes, base_notes
        )

    if measure is Measure.DEMOGRAPHIC_PARITY:
        values, sizes, empty = _prob_lines(ctx, [_Line("difference", positive)])
    elif measure is Measure.CONDITIONAL_STATISTICAL_PARITY:
        line = _Line("difference", positive, extra, "legitimate")
        values, sizes, empty = _prob_lines(ctx, [line])
    elif measure is Measure.OVERALL_ACCURACY_EQUALITY:
        accurate = lambda row: positive(row) == truth(row)
        values, sizes, empty = _prob_lines(ctx, [_Line("difference", accurate)])
    elif measure is Measure.MEAN_DIFFERENCE:
        indicator = lambda row: 1.0 if positive(row) else 0.0
        line = _Line("difference", positive)
        values, sizes, empty = _expect_lines(ctx, indicator, [line])
    elif measure is Measure.EQUALIZED_ODDS:
        values, sizes, empty = _prob_lines(ctx, [tp_line, fp_line])
    elif measure is Measure.EQUAL_OPPORTUNITY:
        line = _Line("difference", tp_line.event, tp_line.extra, tp_line.extra_label)
        values, sizes, empty = _prob_lines(ctx, [line])
    elif measure is Measure.PREDICTIVE_EQUALITY:
        line = _Line("difference", fp_line.event, fp_line.extra, fp_line.extra_label)
        values, sizes, empty = _prob_lines(ctx, [line])
    elif measure is Measure.CONDITIONAL_USE_ACCURACY_EQUALITY:
        values, sizes, empty = _prob_lines(ctx, [ppv_line, npv_line])
    elif measure is Measure.PREDICTIVE_PARITY:
        line = _Line("difference", ppv_line.event, ppv_line.extra, ppv_line.extra_label)
        values, sizes, empty = _prob_lines(ctx, [line])
    elif measure is Measure.EQUAL_CALIBRATION:
        line = _Line("difference", truth, extra, "calibration")
        values, sizes, empty = _prob_lines(ctx, [line])
    elif measure is Measure.POSITIVE_BALANCE:
        assert ctx.score is not None
        line = _Line("difference", truth, truth, "actual_positive")
        values, sizes, empty = _expect_lines(ctx, ctx.score, [line])
    elif measure is Measure.NEGATIVE_BALANCE:
        assert ctx.score is not None
        line = _Line("difference", truth, not_truth, "actual_negative")
        values, sizes, empty = _expect_lines(ctx, ctx.score, [line])
    else:  # pragma: no cover - the enum is closed
        raise MeasureInputError(f"unhandled measure {measure!r}")

    if empty:
        return _undefined(measure, sizes, empty)

    notes: tuple[str, ...] = ()
    if measure in OPEN_VERDICT_MEASURES and epsilon is None:
        note = "no epsilon set for this measure; verdict left open"
        return MeasureResult(measure, values, None, None, sizes, (note,))

    if measure is Measure.CONDITIONAL_USE_ACCURACY_EQUALITY:
        flag = (
            values["positive_predictive_difference"]
            < values["negative_predictive_difference"]
        )
        notes = (
            "ordering flag (positive predictive value line < negative "
            f"predictive value line): {str(flag).lower()}",
        )

    passed = all(value <= eps for value in values.values())
    return MeasureResult(measure, values, eps, passed, sizes, notes)
