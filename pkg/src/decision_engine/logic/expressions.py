"""Expression language for facts and rule conditions.

Grammar::

    expr    := or ; or := and ("or" and)* ; and := not ("and" not)* ;
    not     := "not" not | cmp ;
    cmp     := add (("<"|"<="|">"|">="|"=="|"!="|"in") add)? ;
    add     := mul (("+"|"-") mul)* ; mul := unary (("*"|"/") unary)* ;
    unary   := "-" unary | atom ;
    atom    := NUMBER | STRING | "true" | "false" | ref | call | "(" expr ")" ;
    ref     := ("product"|"fact") "(" STRING ")" ("." IDENT)* ;
    call    := ("count"|"sum"|"min"|"max") "(" expr ("," IDENT)? ")" ;

Evaluation is strict: booleans are not numbers, arithmetic is double
precision, and any type mismatch or division by zero raises
:class:`~decision_engine.errors.EvaluationError`.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import Any, Callable, Iterator, Mapping, Union

from ..errors import (
    EvaluationError,
    ExpressionSyntaxError,
    MissingProduct,
    RuleValidationError,
    UnknownFunction,
)

FUNCTIONS = ("count", "sum", "min", "max")
COMPARISONS = ("<", "<=", ">", ">=", "==", "!=", "in")
KEYWORDS = {"and", "or", "not", "in", "true", "false", "product", "fact"}


# --------------------------------------------------------------------------
# AST


@dataclass(frozen=True)
class Literal:
    value: Any

    def __str__(self) -> str:
        if isinstance(self.value, bool):
            return "true" if self.value else "false"
        if isinstance(self.value, str):
            return _quote(self.value)
        return repr(self.value)


@dataclass(frozen=True)
class ProductRef:
    name: str
    path: tuple[str, ...] = ()

    def __str__(self) -> str:
        return f"product({_quote(self.name)})" + "".join(f".{p}" for p in self.path)


@dataclass(frozen=True)
class FactRef:
    name: str
    path: tuple[str, ...] = ()

    def __str__(self) -> str:
        return f"fact({_quote(self.name)})" + "".join(f".{p}" for p in self.path)


@dataclass(frozen=True)
class Unary:
    op: str  # "not" or "-"
    operand: "Expression"

    def __str__(self) -> str:
        sep = " " if self.op == "not" else ""
        return f"({self.op}{sep}{self.operand})"


@dataclass(frozen=True)
class Binary:
    op: str
    left: "Expression"
    right: "Expression"

    def __str__(self) -> str:
        return f"({self.left} {self.op} {self.right})"


@dataclass(frozen=True)
class Call:
    func: str
    arg: "Expression"
    field: str | None = None

    def __str__(self) -> str:
        extra = f", {self.field}" if self.field else ""
        return f"{self.func}({self.arg}{extra})"


Expression = Union[Literal, ProductRef, FactRef, Unary, Binary, Call]


def _quote(s: str) -> str:
    return '"' + s.replace("\\", "\\\\").replace('"', '\\"') + '"'


def walk(expr: Expression) -> Iterator[Expression]:
    yield expr
    if isinstance(expr, Unary):
        yield from walk(expr.operand)
    elif isinstance(expr, Binary):
        yield from walk(expr.left)
        yield from walk(expr.right)
    elif isinstance(expr, Call):
        yield from walk(expr.arg)


def product_refs(expr: Expression) -> set[str]:
    return {n.name for n in walk(expr) if isinstance(n, ProductRef)}


def fact_refs(expr: Expression) -> set[str]:
    return {n.name for n in walk(expr) if isinstance(n, FactRef)}


# --------------------------------------------------------------------------
# Tokenizer

_TOKEN_RE = re.compile(
    r"""
    (?P<ws>[ \t\r]+)
  | (?P<nl>\n)
  | (?P<number>(?:\d+\.\d*|\.\d+|\d+)(?:[eE][+-]?\d+)?)
  | (?P<string>"(?:[^"\\\n]|\\.)*"|'(?:[^'\\\n]|\\.)*')
  | (?P<ident>[A-Za-z_][A-Za-z0-9_]*)
  | (?P<op><=|>=|==|!=|[<>+\-*/(),.])
    """,
    re.VERBOSE,
)

_ESCAPES = {"n": "\n", "t": "\t", "r": "\r", "\\": "\\", '"': '"', "'": "'"}


@dataclass(frozen=True)
class Token:
    kind: str  # number, string, ident, op, eof
    text: str
    value: Any
    line: int
    column: int


def _unescape(body: str, line: int, column: int) -> str:
    out = []
    i = 0
    while i < len(body):
        ch = body[i]
        if ch == "\\":
            nxt = body[i + 1]
            if nxt not in _ESCAPES:
                raise ExpressionSyntaxError(f"unknown escape \\{nxt}", line, column + i + 1)
            out.append(_ESCAPES[nxt])
            i += 2
        else:
            out.append(ch)
            i += 1
    return "".join(out)


def tokenize(text: str) -> list[Token]:
    tokens: list[Token] = []
    pos, line, line_start = 0, 1, 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        col = pos - line_start + 1
        if m is None:
            ch = text[pos]
            if ch in "\"'":
                raise ExpressionSyntaxError("unterminated string", line, col)
            raise ExpressionSyntaxError(f"unexpected character {ch!r}", line, col)
        kind = m.lastgroup
        lexeme = m.group()
        if kind == "nl":
            line += 1
            line_start = m.end()
        elif kind == "number":
            is_float = any(c in lexeme for c in ".eE")
            tokens.append(Token("number", lexeme, float(lexeme) if is_float else int(lexeme), line, col))
        elif kind == "string":
            tokens.append(Token("string", lexeme, _unescape(lexeme[1:-1], line, col), line, col))
        elif kind in ("ident", "op"):
            tokens.append(Token(kind, lexeme, lexeme, line, col))
        pos = m.end()
    tokens.append(Token("eof", "", None, line, len(text) - line_start + 1))
    return tokens


# --------------------------------------------------------------------------
# Parser


class _Parser:
    def __init__(self, text: str) -> None:
        self.tokens = tokenize(text)
        self.i = 0

    @property
    def tok(self) -> Token:
        return self.tokens[self.i]

    def advance(self) -> Token:
        t = self.tokens[self.i]
        self.i += 1
        return t

    def at(self, kind: str, text: str | None = None) -> bool:
        t = self.tok
        return t.kind == kind and (text is None or t.text == text)

    def at_word(self, word: str) -> bool:
        return self.at("ident", word)

    def fail(self, message: str, tok: Token | None = None) -> ExpressionSyntaxError:
        t = tok or self.tok
        found = "end of input" if t.kind == "eof" else repr(t.text)
        return ExpressionSyntaxError(f"{message}, found {found}", t.line, t.column)

    def expect(self, text: str, opener: Token | None = None) -> Token:
        if self.at("op", text):
            return self.advance()
        if opener is not None and self.tok.kind == "eof":
            raise ExpressionSyntaxError(
                f"unclosed {opener.text!r}: expected {text!r} before end of input",
                opener.line,
                opener.column,
            )
        raise self.fail(f"expected {text!r}")

    def parse(self) -> Expression:
        if self.tok.kind == "eof":
            raise ExpressionSyntaxError("empty expression", 1, 1)
        expr = self.parse_or()
        if self.tok.kind != "eof":
            raise self.fail("unexpected trailing input")
        return expr

    def parse_or(self) -> Expression:
        left = self.parse_and()
        while self.at_word("or"):
            self.advance()
            left = Binary("or", left, self.parse_and())
        return left

    def parse_and(self) -> Expression:
        left = self.parse_not()
        while self.at_word("and"):
            self.advance()
            left = Binary("and", left, self.parse_not())
        return left

    def parse_not(self) -> Expression:
        if self.at_word("not"):
            self.advance()
            return Unary("not", self.parse_not())
        return self.parse_cmp()

    def parse_cmp(self) -> Expression:
        left = self.parse_add()
        t = self.tok
        if (t.kind == "op" and t.text in COMPARISONS) or self.at_word("in"):
            self.advance()
            right = self.parse_add()
            nxt = self.tok
            if (nxt.kind == "op" and nxt.text in COMPARISONS) or self.at_word("in"):
                raise self.fail("comparisons cannot be chained")
            return Binary(t.text, left, right)
        return left

    def parse_add(self) -> Expression:
        left = self.parse_mul()
        while self.tok.kind == "op" and self.tok.text in ("+", "-"):
            op = self.advance().text
            left = Binary(op, left, self.parse_mul())
        return left

    def parse_mul(self) -> Expression:
        left = self.parse_unary()
        while self.tok.kind == "op" and self.tok.text in ("*", "/"):
            op = self.advance().text
            left = Binary(op, left, self.parse_unary())
        return left

    def parse_unary(self) -> Expression:
        if self.at("op", "-"):
            self.advance()
            return Unary("-", self.parse_unary())
        return self.parse_atom()

    def parse_atom(self) -> Expression:
        t = self.tok
        if t.kind == "number":
            self.advance()
            return Literal(t.value)
        if t.kind == "string":
            self.advance()
            return Literal(t.value)
        if t.kind == "op" and t.text == "(":
            self.advance()
            inner = self.parse_or()
            self.expect(")", opener=t)
            return inner
        if t.kind == "ident":
            if t.text in ("true", "false"):
                self.advance()
                return Literal(t.text == "true")
            if t.text in ("product", "fact"):
                return self.parse_ref()
            if t.text in FUNCTIONS:
                return self.parse_call()
            if self.tokens[self.i + 1].kind == "op" and self.tokens[self.i + 1].text == "(":
                raise UnknownFunction(f"unknown function {t.text!r}", t.line, t.column)
            raise self.fail("expected a value")
        raise self.fail("expected a value")

    def parse_ref(self) -> Expression:
        kind = self.advance().text
        opener = self.expect("(")
        name_tok = self.tok
        if name_tok.kind != "string":
            raise self.fail(f"{kind}() takes a quoted name")
        self.advance()
        if not name_tok.value:
            raise ExpressionSyntaxError(f"{kind}() name is empty", name_tok.line, name_tok.column)
        self.expect(")", opener=opener)
        path = []
        while self.at("op", "."):
            self.advance()
            if self.tok.kind != "ident":
                raise self.fail("expected a field name after '.'")
            path.append(self.advance().text)
        cls = ProductRef if kind == "product" else FactRef
        return cls(name_tok.value, tuple(path))

    def parse_call(self) -> Expression:
        func = self.advance().text
        opener = self.expect("(")
        arg = self.parse_or()
        field = None
        if self.at("op", ","):
            self.advance()
            if self.tok.kind != "ident" or self.tok.text in KEYWORDS:
                raise self.fail("expected a field name")
            field = self.advance().text
        self.expect(")", opener=opener)
        return Call(func, arg, field)


def parse_expression(text: str) -> Expression:
    """Parse ``text`` into an expression tree.

    Raises :class:`ExpressionSyntaxError` (with line and column) or
    :class:`UnknownFunction`.
    """
    if not isinstance(text, str) or not text.strip():
        raise ExpressionSyntaxError("empty expression", 1, 1)
    return _Parser(text).parse()


# --------------------------------------------------------------------------
# Static typing

BOOL, NUM, STR, ANY = "bool", "number", "string", "any"


class TypeMismatch(RuleValidationError):
    pass


def infer_type(expr: Expression) -> str:
    """Abstract type of ``expr``; raises :class:`TypeMismatch` when ill-typed.

    Product references are typed ``any`` and checked again at run time.
    """
    if isinstance(expr, Literal):
        if isinstance(expr.value, bool):
            return BOOL
        if isinstance(expr.value, str):
            return STR
        return NUM
    if isinstance(expr, ProductRef):
        return ANY
    if isinstance(expr, FactRef):
        if expr.path:
            raise TypeMismatch(f"fact({expr.name!r}) is boolean and has no fields")
        return BOOL
    if isinstance(expr, Unary):
        t = infer_type(expr.operand)
        want = BOOL if expr.op == "not" else NUM
        if t not in (want, ANY):
            raise TypeMismatch(f"operator {expr.op!r} expects {want}, got {t} in {expr}")
        return want
    if isinstance(expr, Binary):
        lt, rt = infer_type(expr.left), infer_type(expr.right)
        op = expr.op
        if op in ("and", "or"):
            for t in (lt, rt):
                if t not in (BOOL, ANY):
                    raise TypeMismatch(f"operator {op!r} expects booleans, got {t} in {expr}")
            return BOOL
        if op in ("+", "-", "*", "/"):
            for t in (lt, rt):
                if t not in (NUM, ANY):
                    raise TypeMismatch(f"operator {op!r} expects numbers, got {t} in {expr}")
            return NUM
        if op in ("<", "<=", ">", ">="):
            for t in (lt, rt):
                if t == BOOL:
                    raise TypeMismatch(f"operator {op!r} cannot order booleans in {expr}")
            if ANY not in (lt, rt) and lt != rt:
                raise TypeMismatch(f"cannot compare {lt} with {rt} in {expr}")
            return BOOL
        if op in ("==", "!="):
            if ANY not in (lt, rt) and lt != rt:
                raise TypeMismatch(f"cannot compare {lt} with {rt} in {expr}")
            return BOOL
        if op == "in":
            if rt not in (ANY, STR):
                raise TypeMismatch(f"right side of 'in' must be a collection, got {rt} in {expr}")
            return BOOL
        raise TypeMismatch(f"unknown operator {op!r}")  # pragma: no cover
    if isinstance(expr, Call):
        t = infer_type(expr.arg)
        if t != ANY:
            raise TypeMismatch(f"{expr.func}() expects a list, got {t} in {expr}")
        return NUM if expr.func in ("count", "sum") else ANY
    raise TypeMismatch(f"not an expression: {expr!r}")  # pragma: no cover


# --------------------------------------------------------------------------
# Evaluation


def _is_num(v: Any) -> bool:
    return isinstance(v, (int, float)) and not isinstance(v, bool)


def _kind(v: Any) -> str:
    if isinstance(v, bool):
        return BOOL
    if _is_num(v):
        return NUM
    if isinstance(v, str):
        return STR
    if v is None:
        return "null"
    if isinstance(v, (list, tuple)):
        return "list"
    if isinstance(v, Mapping):
        return "record"
    return type(v).__name__


def _field(value: Any, name: str, where: Expression) -> Any:
    if isinstance(value, Mapping):
        if name not in value:
            raise EvaluationError(f"record has no field {name!r} in {where}")
        return value[name]
    if isinstance(value, (list, tuple)):
        return tuple(_field(item, name, where) for item in value)
    raise EvaluationError(f"cannot take field {name!r} of a {_kind(value)} in {where}")


def _finite(x: float, where: Expression) -> float:
    if not math.isfinite(x):
        raise EvaluationError(f"non-finite arithmetic result in {where}")
    return x


def _want_bool(v: Any, where: Expression) -> bool:
    if not isinstance(v, bool):
        raise EvaluationError(f"expected a boolean, got {_kind(v)} in {where}")
    return v


def _want_list(v: Any, where: Expression) -> tuple:
    if not isinstance(v, (list, tuple)):
        raise EvaluationError(f"expected a list, got {_kind(v)} in {where}")
    return tuple(v)


def _equal(a: Any, b: Any) -> bool:
    ka, kb = _kind(a), _kind(b)
    if ka != kb:
        return False
    if ka == "list":
        return len(a) == len(b) and all(_equal(x, y) for x, y in zip(a, b))
    if ka == "record":
        return a.keys() == b.keys() and all(_equal(a[k], b[k]) for k in a)
    return a == b


def _order(op: str, a: Any, b: Any, where: Expression) -> bool:
    ka, kb = _kind(a), _kind(b)
    if not (ka == kb and ka in (NUM, STR)):
        raise EvaluationError(f"cannot order {ka} and {kb} in {where}")
    if op == "<":
        return a < b
    if op == "<=":
        return a <= b
    if op == ">":
        return a > b
    return a >= b


class Evaluator:
    """Evaluates expressions against product and fact lookups."""

    def __init__(
        self,
        product: Callable[[str], Any],
        fact: Callable[[str], bool],
    ) -> None:
        self._product = product
        self._fact = fact

    def __call__(self, expr: Expression) -> Any:
        return self.eval(expr)

    def eval(self, e: Expression) -> Any:
        if isinstance(e, Literal):
            return e.value
        if isinstance(e, ProductRef):
            value = self._product(e.name)
            for name in e.path:
                value = _field(value, name, e)
            return value
        if isinstance(e, FactRef):
            return self._fact(e.name)
        if isinstance(e, Unary):
            v = self.eval(e.operand)
            if e.op == "not":
                return not _want_bool(v, e)
            if not _is_num(v):
                raise EvaluationError(f"cannot negate a {_kind(v)} in {e}")
            return -float(v)
        if isinstance(e, Binary):
            return self._binary(e)
        if isinstance(e, Call):
            return self._call(e)
        raise EvaluationError(f"not an expression: {e!r}")  # pragma: no cover

    def _binary(self, e: Binary) -> Any:
        op = e.op
        if op == "and":
            return _want_bool(self.eval(e.left), e) and _want_bool(self.eval(e.right), e)
        if op == "or":
            return _want_bool(self.eval(e.left), e) or _want_bool(self.eval(e.right), e)
        a = self.eval(e.left)
        b = self.eval(e.right)
        if op in ("+", "-", "*", "/"):
            if not (_is_num(a) and _is_num(b)):
                raise EvaluationError(f"operator {op!r} on {_kind(a)} and {_kind(b)} in {e}")
            x, y = float(a), float(b)
            if op == "+":
                return _finite(x + y, e)
            if op == "-":
                return _finite(x - y, e)
            if op == "*":
                return _finite(x * y, e)
            if y == 0.0:
                raise EvaluationError(f"division by zero in {e}")
            return _finite(x / y, e)
        if op == "==":
            return _equal(a, b)
        if op == "!=":
            return not _equal(a, b)
        if op == "in":
            if isinstance(b, (list, tuple)):
                return any(_equal(a, item) for item in b)
            if isinstance(b, Mapping):
                return isinstance(a, str) and a in b
            if isinstance(b, str):
                if not isinstance(a, str):
                    raise EvaluationError(f"'in' on a string needs a string in {e}")
                return a in b
            raise EvaluationError(f"'in' needs a list, record or string, got {_kind(b)} in {e}")
        return _order(op, a, b, e)

    def _call(self, e: Call) -> Any:
        items = _want_list(self.eval(e.arg), e)
        if e.field is not None:
            if e.func == "count":
                # records whose field is present and not null
                return sum(
                    1
                    for item in items
                    if isinstance(item, Mapping) and item.get(e.field) is not None
                )
            items = tuple(_field(item, e.field, e) if isinstance(item, Mapping) else
                          _raise_not_record(item, e) for item in items)
        if e.func == "count":
            return len(items)
        if e.func == "sum":
            total = 0.0
            for item in items:
                if not _is_num(item):
                    raise EvaluationError(f"sum() over a {_kind(item)} in {e}")
                total += float(item)
            return _finite(total, e)
        if not items:
            raise EvaluationError(f"{e.func}() of an empty list in {e}")
        kinds = {_kind(i) for i in items}
        if not (kinds == {NUM} or kinds == {STR}):
            raise EvaluationError(f"{e.func}() over mixed or unordered values in {e}")
        return min(items) if e.func == "min" else max(items)


def _raise_not_record(item: Any, where: Expression) -> Any:
    raise EvaluationError(f"expected records, got {_kind(item)} in {where}")


def evaluate(
    expr: Expression,
    products: Mapping[str, Any],
    facts: Mapping[str, bool] | None = None,
) -> Any:
    """Evaluate ``expr`` over plain mappings of product values and fact values."""
    facts = facts or {}

    def product(name: str) -> Any:
        if name not in products:
            raise MissingProduct(name)
        return products[name]

    def fact(name: str) -> bool:
        if name not in facts:
            raise EvaluationError(f"fact {name!r} has no value")
        return facts[name]

    return Evaluator(product, fact).eval(expr)
