"""The predicate and score expression language.

Audit configs describe groups, outcomes, and scores as small textual
expressions evaluated per row. Two expression kinds exist:

predicates (boolean)::

    predicate  := or_expr
    or_expr    := and_expr { "or" and_expr }
    and_expr   := unary { "and" unary }
    unary      := "not" unary | "(" predicate ")" | comparison
    comparison := operand cmp operand
                | operand "in" "{" literal { "," literal } "}"
    operand    := col("NAME") | int(col("NAME")) | real(col("NAME"))
                | literal | "$" INDEX
    cmp        := "==" | "!=" | "<" | "<=" | ">" | ">="
    literal    := STRING | ["-"] NUMBER

scores (real-valued)::

    score  := term { ("+" | "-") term }
    term   := factor { ("*" | "/") factor }
    factor := "(" score ")" | int(col("NAME")) | real(col("NAME"))
            | ["-"] NUMBER

``col("x")`` reads the raw cell text; ``int(...)`` / ``real(...)`` coerce
it, failing loudly on non-numeric cells. ``$1``, ``$2``, ... are
positional parameters bound at evaluation time; the highest index used is
the expression's arity.

Comparison typing: if either side is coerced or a numeric literal, the
comparison is numeric and a string on the other side is an evaluation
error, never a silent False. Two strings compare lexicographically.
Membership ``in { ... }`` applies the same pairwise rule per element.
"""

from __future__ import annotations

import re
from collections.abc import Mapping, Sequence
from dataclasses import dataclass
from math import isfinite
from typing import Union

Literal = Union[str, int, float]

_CMP_OPS = ("==", "!=", "<=", ">=", "<", ">")


class DslError(Exception):
    """Base class for expression language failures."""


class PredicateParseError(DslError):
    """Syntax error; ``position`` is a 0-based character offset."""

    def __init__(self, message: str, position: int):
        super().__init__(f"{message} (at position {position})")
        self.position = position


class PredicateEvalError(DslError):
    """Base class for evaluation failures."""


class MissingColumnError(PredicateEvalError):
    def __init__(self, column: str):
        super().__init__(f"row has no column {column!r}")
        self.column = column


class CoercionError(PredicateEvalError):
    def __init__(self, column: str, cell: str, target: str):
        super().__init__(f"cannot coerce column {column!r} value {cell!r} to {target}")
        self.column = column
        self.cell = cell


class ComparisonTypeError(PredicateEvalError):
    def __init__(self, left: Literal, right: Literal):
        super().__init__(
            f"cannot compare string and number: {left!r} vs {right!r}"
        )


class ArityMismatchError(PredicateEvalError):
    def __init__(self, expected: int, got: int):
        super().__init__(f"predicate takes {expected} argument(s), got {got}")


# ---------------------------------------------------------------------------
# AST


@dataclass(frozen=True)
class Column:
    name: str


@dataclass(frozen=True)
class IntColumn:
    name: str


@dataclass(frozen=True)
class RealColumn:
    name: str


@dataclass(frozen=True)
class StringLit:
    value: str


@dataclass(frozen=True)
class IntLit:
    value: int


@dataclass(frozen=True)
class RealLit:
    value: float


@dataclass(frozen=True)
class Param:
    index: int


Operand = Union[Column, IntColumn, RealColumn, StringLit, IntLit, RealLit, Param]


@dataclass(frozen=True)
class Compare:
    op: str
    left: Operand
    right: Operand


@dataclass(frozen=True)
class InSet:
    operand: Operand
    elements: tuple[Union[StringLit, IntLit, RealLit], ...]


@dataclass(frozen=True)
class Not:
    operand: "PredNode"


@dataclass(frozen=True)
class And:
    left: "PredNode"
    right: "PredNode"


@dataclass(frozen=True)
class Or:
    left: "PredNode"
    right: "PredNode"


PredNode = Union[Compare, InSet, Not, And, Or]


@dataclass(frozen=True)
class Arith:
    op: str
    left: "ScoreNode"
    right: "ScoreNode"


ScoreNode = Union[IntColumn, RealColumn, IntLit, RealLit, Arith]


@dataclass(frozen=True)
class PredicateExpr:
    """A parsed predicate plus its arity (highest ``$k`` referenced)."""

    root: PredNode
    arity: int

    def to_text(self) -> str:
        return _print_pred(self.root, 1)

    def columns(self) -> frozenset[str]:
        return frozenset(_collect_columns(self.root))

    def bind(self, args: Sequence[Literal] = ()) -> "BoundPredicate":
        if len(args) != self.arity:
            raise ArityMismatchError(self.arity, len(args))
        return BoundPredicate(self, tuple(args))


@dataclass(frozen=True)
class ScoreExpr:
    """A parsed real-valued expression over one row."""

    root: ScoreNode

    def to_text(self) -> str:
        return _print_score(self.root, 1)

    def columns(self) -> frozenset[str]:
        return frozenset(_collect_columns(self.root))


@dataclass(frozen=True)
class BoundPredicate:
    """A predicate with its parameters fixed; callable on rows."""

    expr: PredicateExpr
    args: tuple[Literal, ...]

    def __call__(self, row: Mapping[str, str]) -> bool:
        return _eval_pred(self.expr.root, self.args, row)


# ---------------------------------------------------------------------------
# Tokenizer

_TOKEN_RE = re.compile(
    r"""
    (?P<ws>\s+)
  | (?P<name>[A-Za-z_][A-Za-z0-9_]*)
  | (?P<number>\d+(?:\.\d+)?(?:[eE][+-]?\d+)?)
  | (?P<param>\$\d+)
  | (?P<string>"(?:[^"\\]|\\.)*")
  | (?P<op>==|!=|<=|>=|[<>(){},+\-*/])
    """,
    re.VERBOSE,
)

_STRING_ESCAPES = {'"': '"', "\\": "\\"}


@dataclass(frozen=True)
class _Token:
    kind: str  # name | number | param | string | op | end
    text: str
    pos: int


def _tokenize(text: str) -> list[_Token]:
    tokens = []
    pos = 0
    while pos < len(text):
        match = _TOKEN_RE.match(text, pos)
        if match is None:
            raise PredicateParseError(f"unexpected character {text[pos]!r}", pos)
        kind = match.lastgroup
        assert kind is not None
        if kind != "ws":
            tokens.append(_Token(kind, match.group(), pos))
        pos = match.end()
    tokens.append(_Token("end", "", len(text)))
    return tokens


def _unescape_string(token: _Token) -> str:
    body = token.text[1:-1]
    out = []
    i = 0
    while i < len(body):
        ch = body[i]
        if ch == "\\":
            esc = body[i + 1]
            if esc not in _STRING_ESCAPES:
                raise PredicateParseError(f"unknown escape \\{esc}", token.pos + 1 + i)
            out.append(_STRING_ESCAPES[esc])
            i += 2
        else:
            out.append(ch)
            i += 1
    return "".join(out)


def _escape_string(value: str) -> str:
    return '"' + value.replace("\\", "\\\\").replace('"', '\\"') + '"'


# ---------------------------------------------------------------------------
# Parser

class _Parser:
    def __init__(self, text: str):
        self.text = text
        self.tokens = _tokenize(text)
        self.i = 0

    @property
    def current(self) -> _Token:
        return self.tokens[self.i]

    def advance(self) -> _Token:
        token = self.tokens[self.i]
        self.i += 1
        return token

    def at_op(self, *ops: str) -> bool:
        return self.current.kind == "op" and self.current.text in ops

    def at_keyword(self, word: str) -> bool:
        return self.current.kind == "name" and self.current.text == word

    def expect_op(self, op: str) -> _Token:
        if not self.at_op(op):
            raise PredicateParseError(f"expected {op!r}", self.current.pos)
        return self.advance()

    def fail(self, message: str) -> "PredicateParseError":
        return PredicateParseError(message, self.current.pos)

    # -- predicate grammar

    def predicate(self) -> PredNode:
        node = self.and_chain()
        while self.at_keyword("or"):
            self.advance()
            node = Or(node, self.and_chain())
        return node

    def and_chain(self) -> PredNode:
        node = self.unary()
        while self.at_keyword("and"):
            self.advance()
            node = And(node, self.unary())
        return node

    def unary(self) -> PredNode:
        if self.at_keyword("not"):
            self.advance()
            return Not(self.unary())
        if self.at_op("("):
            self.advance()
            node = self.predicate()
            self.expect_op(")")
            return node
        return self.comparison()

    def comparison(self) -> PredNode:
        left = self.operand()
        if self.at_keyword("in"):
            self.advance()
            self.expect_op("{")
            elements = [self.literal()]
            while self.at_op(","):
                self.advance()
                elements.append(self.literal())
            self.expect_op("}")
            return InSet(left, tuple(elements))
        if self.current.kind == "op" and self.current.text in _CMP_OPS:
            op = self.advance().text
            return Compare(op, left, self.operand())
        raise self.fail("expected a comparison operator or 'in'")

    def operand(self) -> Operand:
        token = self.current
        if token.kind == "name":
            if token.text == "col":
                return Column(self.column_name())
            if token.text in ("int", "real"):
                coerce = self.advance().text
                self.expect_op("(")
                if not self.at_keyword("col"):
                    raise self.fail(f"expected col(...) inside {coerce}(...)")
                name = self.column_name()
                self.expect_op(")")
                return IntColumn(name) if coerce == "int" else RealColumn(name)
            raise self.fail(f"unknown operator {token.text!r}")
        if token.kind == "param":
            index = int(token.text[1:])
            if index == 0:
                raise self.fail("parameter index 0 is invalid, indices start at $1")
            self.advance()
            return Param(index)
        return self.literal()

    def column_name(self) -> str:
        self.advance()  # "col"
        self.expect_op("(")
        if self.current.kind != "string":
            raise self.fail("expected a quoted column name")
        name = _unescape_string(self.advance())
        self.expect_op(")")
        return name

    def literal(self) -> Union[StringLit, IntLit, RealLit]:
        if self.current.kind == "string":
            return StringLit(_unescape_string(self.advance()))
        negative = False
        if self.at_op("-"):
            self.advance()
            negative = True
        if self.current.kind != "number":
            raise self.fail("expected a literal")
        token = self.advance()
        return _number_literal(token.text, negative, token.pos)

    # -- score grammar

    def score(self) -> ScoreNode:
        node = self.score_term()
        while self.at_op("+", "-"):
            op = self.advance().text
            node = Arith(op, node, self.score_term())
        return node

    def score_term(self) -> ScoreNode:
        node = self.score_factor()
        while self.at_op("*", "/"):
            op = self.advance().text
            node = Arith(op, node, self.score_factor())
        return node

    def score_factor(self) -> ScoreNode:
        if self.at_op("("):
            self.advance()
            node = self.score()
            self.expect_op(")")
            return node
        if self.current.kind == "name":
            operand = self.operand()
            if not isinstance(operand, (IntColumn, RealColumn)):
                raise self.fail("scores only read columns through int(...) or real(...)")
            return operand
        lit = self.literal()
        if isinstance(lit, StringLit):
            raise self.fail("string literals are not allowed in score expressions")
        return lit


def _number_literal(text: str, negative: bool, pos: int) -> Union[IntLit, RealLit]:
    if re.fullmatch(r"\d+", text):
        value = int(text)
        return IntLit(-value if negative else value)
    value = float(text)
    if not isfinite(value):
        raise PredicateParseError(f"number literal {text!r} overflows", pos)
    return RealLit(-value if negative else value)


def parse_predicate(text: str) -> PredicateExpr:
    """Parse a boolean predicate; raises :class:`PredicateParseError`."""
    parser = _Parser(text)
    root = parser.predicate()
    if parser.current.kind != "end":
        raise PredicateParseError(
            f"unexpected trailing input {parser.current.text!r}", parser.current.pos
        )
    return PredicateExpr(root=root, arity=_max_param(root))


def parse_score(text: str) -> ScoreExpr:
    """Parse a score expression; raises :class:`PredicateParseError`."""
    parser = _Parser(text)
    root = parser.score()
    if parser.current.kind != "end":
        raise PredicateParseError(
            f"unexpected trailing input {parser.current.text!r}", parser.current.pos
        )
    return ScoreExpr(root=root)


def _max_param(node: object) -> int:
    if isinstance(node, Param):
        return node.index
    if isinstance(node, Compare):
        return max(_max_param(node.left), _max_param(node.right))
    if isinstance(node, InSet):
        return _max_param(node.operand)
    if isinstance(node, Not):
        return _max_param(node.operand)
    if isinstance(node, (And, Or)):
        return max(_max_param(node.left), _max_param(node.right))
    return 0


def _collect_columns(node: object) -> list[str]:
    if isinstance(node, (Column, IntColumn, RealColumn)):
        return [node.name]
    if isinstance(node, Compare):
        return _collect_columns(node.left) + _collect_columns(node.right)
    if isinstance(node, InSet):
        return _collect_columns(node.operand)
    if isinstance(node, Not):
        return _collect_columns(node.operand)
    if isinstance(node, (And, Or, Arith)):
        return _collect_columns(node.left) + _collect_columns(node.right)
    return []


# ---------------------------------------------------------------------------
# Printing (canonical form; parse(to_text(e)) == e)

_PRED_PREC = {Or: 1, And: 2, Not: 3, Compare: 4, InSet: 4}


def _print_pred(node: PredNode, min_prec: int) -> str:
    prec = _PRED_PREC[type(node)]
    if isinstance(node, Or):
        text = f"{_print_pred(node.left, 1)} or {_print_pred(node.right, 2)}"
    elif isinstance(node, And):
        text = f"{_print_pred(node.left, 2)} and {_print_pred(node.right, 3)}"
    elif isinstance(node, Not):
        text = f"not {_print_pred(node.operand, 3)}"
    elif isinstance(node, Compare):
        text = f"{_print_operand(node.left)} {node.op} {_print_operand(node.right)}"
    else:
        elements = ", ".join(_print_operand(e) for e in node.elements)
        text = f"{_print_operand(node.operand)} in {{{elements}}}"
    if prec < min_prec:
        return f"({text})"
    return text


def _print_operand(node: Operand) -> str:
    if isinstance(node, Column):
        return f"col({_escape_string(node.name)})"
    if isinstance(node, IntColumn):
        return f"int(col({_escape_string(node.name)}))"
    if isinstance(node, RealColumn):
        return f"real(col({_escape_string(node.name)}))"
    if isinstance(node, StringLit):
        return _escape_string(node.value)
    if isinstance(node, IntLit):
        return str(node.value)
    if isinstance(node, RealLit):
        return repr(node.value)
    return f"${node.index}"


_SCORE_PREC = {Arith: 0, IntColumn: 3, RealColumn: 3, IntLit: 3, RealLit: 3}
_ADD_OPS = ("+", "-")


def _print_score(node: ScoreNode, min_prec: int) -> str:
    if isinstance(node, Arith):
        prec = 1 if node.op in _ADD_OPS else 2
        text = (
            f"{_print_score(node.left, prec)} {node.op} "
            f"{_print_score(node.right, prec + 1)}"
        )
    else:
        prec = 3
        text = _print_operand(node)
    if prec < min_prec:
        return f"({text})"
    return text


# ---------------------------------------------------------------------------
# Evaluation

def eval_predicate(
    expr: PredicateExpr, args: Sequence[Literal], row: Mapping[str, str]
) -> bool:
    """Evaluate ``expr`` with positional ``args`` on ``row``. Pure."""
    if len(args) != expr.arity:
        raise ArityMismatchError(expr.arity, len(args))
    return _eval_pred(expr.root, tuple(args), row)


def eval_score(expr: ScoreExpr, row: Mapping[str, str]) -> float:
    """Evaluate a score expression to a finite float. Pure."""
    value = float(_eval_score(expr.root, row))
    if not isfinite(value):
        raise PredicateEvalError(f"score evaluated to a non-finite value: {value!r}")
    return value


def _eval_pred(node: PredNode, args: tuple[Literal, ...], row: Mapping[str, str]) -> bool:
    if isinstance(node, Compare):
        return _compare(node.op, _eval_operand(node.left, args, row),
                        _eval_operand(node.right, args, row))
    if isinstance(node, InSet):
        value = _eval_operand(node.operand, args, row)
        return any(_compare("==", value, _eval_operand(e, args, row)) for e in node.elements)
    if isinstance(node, Not):
        return not _eval_pred(node.operand, args, row)
    if isinstance(node, And):
        return _eval_pred(node.left, args, row) and _eval_pred(node.right, args, row)
    return _eval_pred(node.left, args, row) or _eval_pred(node.right, args, row)


def _cell(row: Mapping[str, str], column: str) -> str:
    try:
        return row[column]
    except KeyError:
        raise MissingColumnError(column) from None


def _eval_operand(node: Operand, args: tuple[Literal, ...], row: Mapping[str, str]) -> Literal:
    if isinstance(node, Column):
        return _cell(row, node.name)
    if isinstance(node, IntColumn):
        cell = _cell(row, node.name)
        try:
            return int(cell)
        except ValueError:
            raise CoercionError(node.name, cell, "int") from None
    if isinstance(node, RealColumn):
        cell = _cell(row, node.name)
        try:
            value = float(cell)
        except ValueError:
            raise CoercionError(node.name, cell, "real") from None
        if not isfinite(value):
            raise CoercionError(node.name, cell, "real")
        return value
    if isinstance(node, (StringLit, IntLit, RealLit)):
        return node.value
    return args[node.index - 1]


def _compare(op: str, left: Literal, right: Literal) -> bool:
    left_is_str = isinstance(left, str)
    if left_is_str != isinstance(right, str):
        raise ComparisonTypeError(left, right)
    if op == "==":
        return left == right
    if op == "!=":
        return left != right
    if op == "<":
        return left < right
    if op == "<=":
        return left <= right
    if op == ">":
        return left > right
    return left >= right


def _eval_score(node: ScoreNode, row: Mapping[str, str]) -> float:
    if isinstance(node, Arith):
        left = _eval_score(node.left, row)
        right = _eval_score(node.right, row)
        if node.op == "+":
            return left + right
        if node.op == "-":
            return left - right
        if node.op == "*":
            return left * right
        if right == 0:
            raise PredicateEvalError("division by zero in score expression")
        return left / right
    value = _eval_operand(node, (), row)
    assert not isinstance(value, str)
    return value
