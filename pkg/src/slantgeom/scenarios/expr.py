"""Tiny expression language for immersion components and coefficient functions.

Grammar (whitespace-insensitive)::

    expr    := term (('+' | '-') term)*
    term    := unary (('*' | '/') unary)*
    unary   := '-' unary | power
    power   := atom ('^' ['-'] INT)?
    atom    := NUMBER | SYMBOL | FUNC '(' expr ')' | '(' expr ')'

Symbols are x1..xk; functions are sin cos sqrt abs sec arccos.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import Sequence, Union

from .. import numkit as nk

FUNCTIONS = {
    "sin": nk.sin,
    "cos": nk.cos,
    "sqrt": nk.sqrt,
    "abs": nk.fabs,
    "sec": nk.sec,
    "arccos": nk.arccos,
}


class ExprError(ValueError):
    pass


class ExprSyntaxError(ExprError):
    def __init__(self, text, offset, expected):
        self.text = text
        self.offset = offset
        self.expected = expected
        found = repr(text[offset]) if offset < len(text) else "end of input"
        super().__init__(f"syntax error at offset {offset}: expected {expected}, found {found}")


class UnknownSymbolError(ExprError):
    def __init__(self, name, valid):
        self.name = name
        self.valid = list(valid)
        super().__init__(f"unknown symbol {name!r}; valid names: {', '.join(self.valid) or '(none)'}")


@dataclass(frozen=True)
class Num:
    value: float


@dataclass(frozen=True)
class Sym:
    index: int  # 1-based


@dataclass(frozen=True)
class Neg:
    arg: "Expr"


@dataclass(frozen=True)
class BinOp:
    op: str
    left: "Expr"
    right: "Expr"


@dataclass(frozen=True)
class Pow:
    base: "Expr"
    exponent: int


@dataclass(frozen=True)
class Call:
    func: str
    arg: "Expr"


Expr = Union[Num, Sym, Neg, BinOp, Pow, Call]

_TOKEN = re.compile(
    r"\s*(?:(?P<num>(?:\d+\.\d*|\.\d+|\d+)(?:[eE][+-]?\d+)?)|(?P<name>[A-Za-z_][A-Za-z_0-9]*)|(?P<op>[-+*/^()]))"
)


@dataclass(frozen=True)
class _Tok:
    kind: str
    text: str
    offset: int


def _tokenize(text: str) -> list[_Tok]:
    toks = []
    pos = 0
    n = len(text)
    while pos < n:
        if text[pos].isspace():
            pos += 1
            continue
        m = _TOKEN.match(text, pos)
        if not m or m.end() == pos:
            raise ExprSyntaxError(text, pos, "number, symbol, operator or parenthesis")
        kind = m.lastgroup
        toks.append(_Tok(kind, m.group(kind), m.start(kind)))
        pos = m.end()
    toks.append(_Tok("end", "", len(text.rstrip()) if text.strip() else len(text)))
    return toks


class _Parser:
    def __init__(self, text, nparams):
        self.text = text
        self.toks = _tokenize(text)
        self.i = 0
        self.nparams = nparams

    @property
    def tok(self):
        return self.toks[self.i]

    def fail(self, expected):
        off = self.tok.offset if self.tok.kind != "end" else len(self.text)
        raise ExprSyntaxError(self.text, off, expected)

    def eat(self, text):
        if self.tok.kind == "op" and self.tok.text == text:
            self.i += 1
            return True
        return False

    def parse(self):
        e = self.expr()
        if self.tok.kind != "end":
            self.fail("operator or end of input")
        return e

    def expr(self):
        e = self.term()
        while self.tok.kind == "op" and self.tok.text in "+-":
            op = self.tok.text
            self.i += 1
            e = BinOp(op, e, self.term())
        return e

    def term(self):
        e = self.unary()
        while self.tok.kind == "op" and self.tok.text in "*/":
            op = self.tok.text
            self.i += 1
            e = BinOp(op, e, self.unary())
        return e

    def unary(self):
        if self.eat("-"):
            return Neg(self.unary())
        return self.power()

    def power(self):
        base = self.atom()
        if self.eat("^"):
            sign = -1 if self.eat("-") else 1
            if self.tok.kind != "num" or not self.tok.text.isdigit():
                self.fail("integer exponent")
            n = sign * int(self.tok.text)
            self.i += 1
            return Pow(base, n)
        return base

    def atom(self):
        t = self.tok
        if t.kind == "num":
            self.i += 1
            return Num(float(t.text))
        if t.kind == "name":
            self.i += 1
            if t.text in FUNCTIONS:
                if not self.eat("("):
                    self.fail("'(' after function name")
                arg = self.expr()
                if not self.eat(")"):
                    self.fail("')'")
                return Call(t.text, arg)
            m = re.fullmatch(r"x([1-9]\d*)", t.text)
            if not m or (self.nparams is not None and int(m.group(1)) > self.nparams):
                syms = [f"x{i}" for i in range(1, self.nparams + 1)] if self.nparams else ["x1", "x2", "..."]
                raise UnknownSymbolError(t.text, syms + sorted(FUNCTIONS))
            return Sym(int(m.group(1)))
        if self.eat("("):
            e = self.expr()
            if not self.eat(")"):
                self.fail("')'")
            return e
        self.fail("number, symbol, function or '('")


def parse_expr(text: str, nparams: int | None = None) -> Expr:
    """Parse ``text``; with ``nparams`` set, only x1..x{nparams} are accepted."""
    if not text or not text.strip():
        raise ExprSyntaxError(text or "", 0, "expression")
    return _Parser(text, nparams).parse()


# -- printing -----------------------------------------------------------------------

_PREC = {"+": 1, "-": 1, "*": 2, "/": 2}


def _prec(e) -> int:
    if isinstance(e, BinOp):
        return _PREC[e.op]
    if isinstance(e, Neg):
        return 3
    if isinstance(e, Pow):
        return 4
    if isinstance(e, Num) and (e.value < 0 or math.copysign(1.0, e.value) < 0):
        return 3
    return 5


def _num_text(v: float) -> str:
    if v == int(v) and abs(v) < 1e16:
        return str(int(v)) if not (v == 0 and math.copysign(1.0, v) < 0) else "-0"
    return repr(v)


def to_text(e: Expr) -> str:
    """Inverse of :func:`parse_expr` up to whitespace and redundant parentheses."""
    if isinstance(e, Num):
        return _num_text(e.value)
    if isinstance(e, Sym):
        return f"x{e.index}"
    if isinstance(e, Call):
        return f"{e.func}({to_text(e.arg)})"
    if isinstance(e, Neg):
        inner = to_text(e.arg)
        return "-" + (inner if _prec(e.arg) >= 3 else f"({inner})")
    if isinstance(e, Pow):
        inner = to_text(e.base)
        return (inner if _prec(e.base) >= 5 else f"({inner})") + f"^{e.exponent}"
    p = _PREC[e.op]
    left = to_text(e.left)
    if _prec(e.left) < p:
        left = f"({left})"
    right = to_text(e.right)
    # left associative: a right operand of equal precedence needs parentheses
    if _prec(e.right) <= p:
        right = f"({right})"
    return f"{left} {e.op} {right}"


# -- evaluation -----------------------------------------------------------------------


def evaluate(e: Expr, x: Sequence):
    """Evaluate on reals or jets."""
    if isinstance(e, Num):
        return e.value
    if isinstance(e, Sym):
        if e.index > len(x):
            raise UnknownSymbolError(f"x{e.index}", [f"x{i}" for i in range(1, len(x) + 1)])
        return x[e.index - 1]
    if isinstance(e, Neg):
        return -evaluate(e.arg, x)
    if isinstance(e, Pow):
        b = evaluate(e.base, x)
        if isinstance(b, nk.Jet2):
            return b ** e.exponent
        return float(b) ** e.exponent
    if isinstance(e, Call):
        return FUNCTIONS[e.func](evaluate(e.arg, x))
    a, b = evaluate(e.left, x), evaluate(e.right, x)
    if e.op == "+":
        return a + b
    if e.op == "-":
        return a - b
    if e.op == "*":
        return a * b
    if not isinstance(b, nk.Jet2) and float(b) == 0.0:
        raise nk.EvaluationDomainError("division by zero")
    return a / b


def max_symbol(e: Expr) -> int:
    if isinstance(e, Sym):
        return e.index
    if isinstance(e, Num):
        return 0
    if isinstance(e, (Neg, Call)):
        return max_symbol(e.arg)
    if isinstance(e, Pow):
        return max_symbol(e.base)
    return max(max_symbol(e.left), max_symbol(e.right))


def compile_expr(e: Expr):
    """Callable x ↦ value for use as a scalar field."""
    return lambda x: evaluate(e, x)
