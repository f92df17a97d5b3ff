"""Coefficient expression language.

Problem files declare drift, diffusion, generator, discount and growth
coefficients as small arithmetic expressions, e.g. ``"exp(-t)*max(u1, v1)"``.
This module parses them into an immutable syntax tree and evaluates the tree
against a variable environment whose values may be floats or numpy arrays
(evaluation broadcasts).

Precedence, tightest first: unary sign, ``^``, ``*``/``/``, ``+``/``-``.
All binary operators are left-associative, so ``-x^2`` is ``(-x)^2`` and
``2^3^2`` is ``(2^3)^2``. The full grammar lives in ``docs/problem_grammar.ebnf``.

Identifiers are ``t``, ``y``, ``x1..xn``, ``z1..zd``, ``u1..``, ``v1..``; the
bare names ``x``, ``z``, ``u`` and ``v`` are accepted as aliases for the first
component when the corresponding dimension is one.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import Callable, Mapping, Union

import numpy as np

__all__ = [
    "Expr",
    "Num",
    "Var",
    "Neg",
    "BinOp",
    "Call",
    "DslError",
    "ParseError",
    "EvalError",
    "UnboundVariableError",
    "DomainError",
    "parse",
    "evaluate",
    "free_vars",
    "to_source",
    "compile_expr",
    "FUNCTIONS",
]


class DslError(Exception):
    """Base class for expression language errors."""


class ParseError(DslError):
    """Malformed source text; ``offset`` is a byte offset into the UTF-8 source."""

    def __init__(self, message: str, offset: int, text: str = ""):
        self.message = message
        self.offset = offset
        self.text = text
        super().__init__(f"{message} at offset {offset}")


class EvalError(DslError):
    pass


class UnboundVariableError(EvalError):
    pass


class DomainError(EvalError):
    pass


# -- syntax tree -------------------------------------------------------------


@dataclass(frozen=True)
class Num:
    value: float

    def __str__(self) -> str:
        return to_source(self)


@dataclass(frozen=True)
class Var:
    name: str

    def __str__(self) -> str:
        return to_source(self)


@dataclass(frozen=True)
class Neg:
    operand: "Expr"

    def __str__(self) -> str:
        return to_source(self)


@dataclass(frozen=True)
class BinOp:
    op: str
    left: "Expr"
    right: "Expr"

    def __str__(self) -> str:
        return to_source(self)


@dataclass(frozen=True)
class Call:
    name: str
    args: tuple

    def __str__(self) -> str:
        return to_source(self)


Expr = Union[Num, Var, Neg, BinOp, Call]

# name -> (min arity, max arity or None for variadic)
FUNCTIONS: dict[str, tuple[int, int | None]] = {
    "exp": (1, 1),
    "log": (1, 1),
    "sin": (1, 1),
    "cos": (1, 1),
    "sqrt": (1, 1),
    "abs": (1, 1),
    "min": (2, None),
    "max": (2, None),
    "pow": (2, 2),
}

_VAR_RE = re.compile(r"^(t|y|[xzuv]|[xzuv][1-9][0-9]*)$")

# -- lexer -------------------------------------------------------------------

_NUMBER_RE = re.compile(r"(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?")
_IDENT_RE = re.compile(r"[A-Za-z_][A-Za-z0-9_]*")
_PUNCT = "+-*/^(),"


@dataclass(frozen=True)
class _Token:
    kind: str  # "num", "ident", "op", "eof"
    text: str
    offset: int  # byte offset


def _tokenize(text: str) -> list[_Token]:
    tokens: list[_Token] = []
    i = 0
    n = len(text)

    def byte_offset(k: int) -> int:
        return len(text[:k].encode("utf-8"))

    while i < n:
        ch = text[i]
        if ch.isspace():
            i += 1
            continue
        if ch == "−":  # typographic minus
            tokens.append(_Token("op", "-", byte_offset(i)))
            i += 1
            continue
        if ch in _PUNCT:
            tokens.append(_Token("op", ch, byte_offset(i)))
            i += 1
            continue
        m = _NUMBER_RE.match(text, i)
        if m:
            if not math.isfinite(float(m.group())):
                raise ParseError(f"numeric literal {m.group()!r} overflows", byte_offset(i), text)
            tokens.append(_Token("num", m.group(), byte_offset(i)))
            i = m.end()
            continue
        m = _IDENT_RE.match(text, i)
        if m:
            tokens.append(_Token("ident", m.group(), byte_offset(i)))
            i = m.end()
            continue
        raise ParseError(f"unexpected character {ch!r}", byte_offset(i), text)
    tokens.append(_Token("eof", "", byte_offset(n)))
    return tokens


# -- parser ------------------------------------------------------------------


class _Parser:
    def __init__(self, text: str):
        self.text = text
        self.tokens = _tokenize(text)
        self.pos = 0

    @property
    def tok(self) -> _Token:
        return self.tokens[self.pos]

    def advance(self) -> _Token:
        tok = self.tokens[self.pos]
        self.pos += 1
        return tok

    def error(self, message: str, tok: _Token | None = None) -> ParseError:
        tok = tok or self.tok
        return ParseError(message, tok.offset, self.text)

    def expect(self, op: str) -> _Token:
        if self.tok.kind == "op" and self.tok.text == op:
            return self.advance()
        found = "end of input" if self.tok.kind == "eof" else repr(self.tok.text)
        if op == ")":
            raise self.error(f"unbalanced parentheses: expected ')', found {found}")
        raise self.error(f"expected {op!r}, found {found}")

    def parse(self) -> Expr:
        node = self.expr()
        if self.tok.kind != "eof":
            if self.tok.text == ")":
                raise self.error("unbalanced parentheses: unexpected ')'")
            raise self.error(f"unexpected token {self.tok.text!r}")
        return node

    def expr(self) -> Expr:
        node = self.term()
        while self.tok.kind == "op" and self.tok.text in "+-":
            op = self.advance().text
            node = BinOp(op, node, self.term())
        return node

    def term(self) -> Expr:
        node = self.power()
        while self.tok.kind == "op" and self.tok.text in "*/":
            op = self.advance().text
            node = BinOp(op, node, self.power())
        return node

    def power(self) -> Expr:
        node = self.unary()
        while self.tok.kind == "op" and self.tok.text == "^":
            self.advance()
            node = BinOp("^", node, self.unary())
        return node

    def unary(self) -> Expr:
        if self.tok.kind == "op" and self.tok.text == "-":
            self.advance()
            return Neg(self.unary())
        if self.tok.kind == "op" and self.tok.text == "+":
            self.advance()
            return self.unary()
        return self.atom()

    def atom(self) -> Expr:
        tok = self.tok
        if tok.kind == "num":
            self.advance()
            return Num(float(tok.text))
        if tok.kind == "ident":
            self.advance()
            if self.tok.kind == "op" and self.tok.text == "(":
                return self.call(tok)
            if tok.text in FUNCTIONS:
                raise self.error(f"function {tok.text!r} used without arguments", tok)
            if not _VAR_RE.match(tok.text):
                raise self.error(f"unknown identifier {tok.text!r}", tok)
            return Var(tok.text)
        if tok.kind == "op" and tok.text == "(":
            self.advance()
            node = self.expr()
            self.expect(")")
            return node
        if tok.kind == "eof":
            raise self.error("unexpected end of input")
        if tok.text == ")":
            raise self.error("unbalanced parentheses: unexpected ')'")
        raise self.error(f"unexpected token {tok.text!r}")

    def call(self, name_tok: _Token) -> Expr:
        name = name_tok.text
        if name not in FUNCTIONS:
            raise self.error(f"unknown function {name!r}", name_tok)
        self.expect("(")
        args = [self.expr()]
        while self.tok.kind == "op" and self.tok.text == ",":
            self.advance()
            args.append(self.expr())
        self.expect(")")
        lo, hi = FUNCTIONS[name]
        if len(args) < lo or (hi is not None and len(args) > hi):
            want = str(lo) if hi == lo else (f"at least {lo}" if hi is None else f"{lo}..{hi}")
            raise self.error(f"arity mismatch: {name} takes {want} argument(s), got {len(args)}", name_tok)
        return Call(name, tuple(args))


def parse(text: str) -> Expr:
    """Parse ``text`` into an expression tree.

    Raises ParseError carrying the byte offset of the offending token.
    """
    return _Parser(text).parse()


# -- inspection --------------------------------------------------------------


def free_vars(expr: Expr) -> frozenset[str]:
    if isinstance(expr, Num):
        return frozenset()
    if isinstance(expr, Var):
        return frozenset((expr.name,))
    if isinstance(expr, Neg):
        return free_vars(expr.operand)
    if isinstance(expr, BinOp):
        return free_vars(expr.left) | free_vars(expr.right)
    out: frozenset[str] = frozenset()
    for a in expr.args:
        out |= free_vars(a)
    return out


def to_source(expr: Expr, _top: bool = True) -> str:
    """Render ``expr`` as source text that parses back to an equal tree."""
    if isinstance(expr, Num):
        return repr(float(expr.value))
    if isinstance(expr, Var):
        return expr.name
    if isinstance(expr, Neg):
        s = "-" + to_source(expr.operand, False)
        return s if _top else f"({s})"
    if isinstance(expr, BinOp):
        s = f"{to_source(expr.left, False)} {expr.op} {to_source(expr.right, False)}"
        return s if _top else f"({s})"
    return f"{expr.name}({', '.join(to_source(a) for a in expr.args)})"


# -- evaluation --------------------------------------------------------------

Value = Union[float, np.ndarray]
Compiled = Callable[[Mapping[str, Value]], Value]


def _any(mask) -> bool:
    return bool(np.any(mask))


def _div(a, b):
    if _any(np.asarray(b) == 0):
        raise DomainError("division by zero")
    return a / b


def _log(a):
    if _any(np.asarray(a) <= 0):
        raise DomainError("log of non-positive argument")
    return np.log(a)


def _sqrt(a):
    if _any(np.asarray(a) < 0):
        raise DomainError("sqrt of negative argument")
    return np.sqrt(a)


def _pow(a, b):
    a_arr = np.asarray(a, dtype=float)
    b_arr = np.asarray(b, dtype=float)
    if _any((a_arr < 0) & (b_arr != np.round(b_arr))):
        raise DomainError("negative base raised to a non-integer power")
    if _any((a_arr == 0) & (b_arr < 0)):
        raise DomainError("zero raised to a negative power")
    out = np.power(a_arr, b_arr)
    return float(out) if out.ndim == 0 else out


def _reduce(fn):
    def apply(*args):
        out = args[0]
        for a in args[1:]:
            out = fn(out, a)
        return out

    return apply


_UNARY = {
    "exp": np.exp,
    "log": _log,
    "sin": np.sin,
    "cos": np.cos,
    "sqrt": _sqrt,
    "abs": np.abs,
}
_NARY = {"min": _reduce(np.minimum), "max": _reduce(np.maximum), "pow": _pow}
_BINARY = {
    "+": lambda a, b: a + b,
    "-": lambda a, b: a - b,
    "*": lambda a, b: a * b,
    "/": _div,
    "^": _pow,
}


def compile_expr(expr: Expr) -> Compiled:
    """Turn a tree into a closure ``env -> value``; compile once, call per grid sweep."""
    if isinstance(expr, Num):
        value = float(expr.value)
        return lambda env: value
    if isinstance(expr, Var):
        name = expr.name

        def lookup(env):
            try:
                return env[name]
            except KeyError:
                raise UnboundVariableError(f"unbound variable {name!r}") from None

        return lookup
    if isinstance(expr, Neg):
        inner = compile_expr(expr.operand)
        return lambda env: -inner(env)
    if isinstance(expr, BinOp):
        fn = _BINARY[expr.op]
        left, right = compile_expr(expr.left), compile_expr(expr.right)
        return lambda env: fn(left(env), right(env))
    args = [compile_expr(a) for a in expr.args]
    if expr.name in _UNARY:
        fn1 = _UNARY[expr.name]
        (arg,) = args
        return lambda env: fn1(arg(env))
    fnn = _NARY[expr.name]
    return lambda env: fnn(*(a(env) for a in args))


def evaluate(expr: Expr | str, env: Mapping[str, Value]) -> Value:
    """Evaluate ``expr`` (a tree or source text) in ``env``.

    >>> evaluate("2*x1+1", {"x1": 3.0})
    7.0
    """
    if isinstance(expr, str):
        expr = parse(expr)
    with np.errstate(over="ignore"):
        out = compile_expr(expr)(env)
    if isinstance(out, np.ndarray):
        return out
    return float(out)
