"""A small arithmetic expression language for user-defined coefficients.

Grammar (EBNF)::

    expr    = term , { ("+" | "-") , term } ;
    term    = unary , { ("*" | "/") , unary } ;
    unary   = "-" , unary | power ;
    power   = primary , [ "^" , unary ] ;          (* right associative *)
    primary = number | variable | call | "(" , expr , ")" ;
    call    = name , "(" , expr , { "," , expr } , ")" ;
    variable = "x" , digit , { digit } ;            (* x1 .. xn *)
    number  = digits , [ "." , [ digits ] ] , [ exponent ]
            | "." , digits , [ exponent ] ;
    exponent = ( "e" | "E" ) , [ "+" | "-" ] , digits ;

Functions: ``sqrt abs exp log`` (one argument), ``min max pow`` (two).
Precedence from tightest: ``^``, unary minus, ``* /``, ``+ -``.  There is no
implicit multiplication, so ``2x1`` is a parse error.

Evaluation is real-valued and vectorised over leading axes of the state
array; leaving the real domain raises :class:`DomainError` instead of
producing NaN.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, Union

import numpy as np

from .errors import ArityError, DomainError, ParseError, UnknownFunction, UnknownVariable

__all__ = [
    "Lit", "Var", "Neg", "Bin", "Call", "Expr",
    "parse", "to_source", "evaluate", "compile_expr", "FUNCTIONS",
]


@dataclass(frozen=True)
class Lit:
    value: float

    def __post_init__(self):
        if not (math.isfinite(self.value) and self.value >= 0.0):
            raise ValueError("literals are finite and nonnegative; use Neg for negation")


@dataclass(frozen=True)
class Var:
    index: int  # 1-based


@dataclass(frozen=True)
class Neg:
    arg: "Expr"


@dataclass(frozen=True)
class Bin:
    op: str  # one of + - * / ^
    left: "Expr"
    right: "Expr"


@dataclass(frozen=True)
class Call:
    name: str
    args: tuple


Expr = Union[Lit, Var, Neg, Bin, Call]

FUNCTIONS = {"sqrt": 1, "abs": 1, "exp": 1, "log": 1, "min": 2, "max": 2, "pow": 2}


# ---------------------------------------------------------------------------
# tokenizer

_TOKEN_RE = re.compile(
    r"""
    (?P<ws>\s+)
  | (?P<num>(?:\d+(?:\.\d*)?|\.\d+)(?:[eE][+-]?\d+)?)
  | (?P<name>[A-Za-z_][A-Za-z_0-9]*)
  | (?P<op>[-+*/^(),])
    """,
    re.VERBOSE,
)


def _tokenize(source: str):
    tokens = []
    pos = 0
    while pos < len(source):
        m = _TOKEN_RE.match(source, pos)
        if m is None:
            raise ParseError(f"unexpected character {source[pos]!r}", _byte_offset(source, pos), source)
        kind = m.lastgroup
        if kind != "ws":
            tokens.append((kind, m.group(), pos))
        pos = m.end()
    tokens.append(("end", "", len(source)))
    return tokens


def _byte_offset(source: str, pos: int) -> int:
    return len(source[:pos].encode("utf-8"))


class _Parser:
    def __init__(self, source: str, n: int):
        self.source = source
        self.n = n
        self.tokens = _tokenize(source)
        self.i = 0

    def peek(self):
        return self.tokens[self.i]

    def advance(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def error(self, cls, message, pos):
        return cls(message, _byte_offset(self.source, pos), self.source)

    def expect(self, value):
        kind, text, pos = self.advance()
        if text != value or kind == "end":
            found = "end of input" if kind == "end" else repr(text)
            raise self.error(ParseError, f"expected {value!r}, found {found}", pos)

    def parse(self) -> Expr:
        node = self.expr()
        kind, text, pos = self.peek()
        if kind != "end":
            raise self.error(ParseError, f"unexpected token {text!r}", pos)
        return node

    def expr(self) -> Expr:
        node = self.term()
        while self.peek()[1] in ("+", "-") and self.peek()[0] == "op":
            op = self.advance()[1]
            node = Bin(op, node, self.term())
        return node

    def term(self) -> Expr:
        node = self.unary()
        while self.peek()[1] in ("*", "/") and self.peek()[0] == "op":
            op = self.advance()[1]
            node = Bin(op, node, self.unary())
        return node

    def unary(self) -> Expr:
        if self.peek()[:2] == ("op", "-"):
            self.advance()
            return Neg(self.unary())
        return self.power()

    def power(self) -> Expr:
        base = self.primary()
        if self.peek()[:2] == ("op", "^"):
            self.advance()
            return Bin("^", base, self.unary())
        return base

    def primary(self) -> Expr:
        kind, text, pos = self.advance()
        if kind == "num":
            # "2x1": a number glued to a name is implicit multiplication
            nxt = self.peek()
            if nxt[0] == "name" and nxt[2] == pos + len(text):
                raise self.error(ParseError, "implicit multiplication is not allowed", nxt[2])
            return Lit(float(text))
        if kind == "name":
            if self.peek()[:2] == ("op", "("):
                return self.call(text, pos)
            m = re.fullmatch(r"x([0-9]+)", text)
            if m is None:
                raise self.error(UnknownVariable, f"unknown variable {text!r}", pos)
            index = int(m.group(1))
            if not 1 <= index <= self.n:
                raise self.error(UnknownVariable, f"variable {text!r} outside x1..x{self.n}", pos)
            return Var(index)
        if text == "(":
            node = self.expr()
            self.expect(")")
            return node
        found = "end of input" if kind == "end" else repr(text)
        raise self.error(ParseError, f"expected an operand, found {found}", pos)

    def call(self, name: str, pos: int) -> Expr:
        if name not in FUNCTIONS:
            raise self.error(UnknownFunction, f"unknown function {name!r}", pos)
        self.expect("(")
        args = [self.expr()]
        while self.peek()[:2] == ("op", ","):
            self.advance()
            args.append(self.expr())
        self.expect(")")
        if len(args) != FUNCTIONS[name]:
            raise self.error(
                ArityError, f"{name} takes {FUNCTIONS[name]} argument(s), got {len(args)}", pos
            )
        return Call(name, tuple(args))


def parse(source: str, n: int) -> Expr:
    """Parse ``source`` into an expression tree over variables ``x1..xn``."""
    if not source or not source.strip():
        raise ParseError("empty expression", 0, source)
    return _Parser(source, n).parse()


# ---------------------------------------------------------------------------
# printing

_PREC = {"+": 1, "-": 1, "*": 2, "/": 2, "neg": 3, "^": 4, "atom": 5}


def _show(e: Expr) -> tuple[str, int]:
    if isinstance(e, Lit):
        v = float(e.value)
        text = str(int(v)) if v.is_integer() and v < 1e15 else repr(v)
        return text, _PREC["atom"]
    if isinstance(e, Var):
        return f"x{e.index}", _PREC["atom"]
    if isinstance(e, Call):
        return f"{e.name}({', '.join(_show(a)[0] for a in e.args)})", _PREC["atom"]
    if isinstance(e, Neg):
        s, p = _show(e.arg)
        return "-" + (s if p >= _PREC["neg"] else f"({s})"), _PREC["neg"]
    if isinstance(e, Bin):
        prec = _PREC[e.op]
        ls, lp = _show(e.left)
        rs, rp = _show(e.right)
        if e.op == "^":
            if lp <= prec:
                ls = f"({ls})"
            if rp < _PREC["neg"]:
                rs = f"({rs})"
            return f"{ls}^{rs}", prec
        if lp < prec:
            ls = f"({ls})"
        if rp <= prec:
            rs = f"({rs})"
        return f"{ls} {e.op} {rs}", prec
    raise TypeError(f"not an expression: {e!r}")


def to_source(e: Expr) -> str:
    """Canonical text of ``e``; ``parse(to_source(e))`` rebuilds the same tree."""
    return _show(e)[0]


# ---------------------------------------------------------------------------
# evaluation

def _domain(mask, message, e):
    if np.any(mask):
        raise DomainError(message, to_source(e))


def _compile(e: Expr) -> Callable[[np.ndarray], np.ndarray]:
    if isinstance(e, Lit):
        v = float(e.value)
        return lambda x: v
    if isinstance(e, Var):
        k = e.index - 1
        return lambda x: x[..., k]
    if isinstance(e, Neg):
        f = _compile(e.arg)
        return lambda x: -f(x)
    if isinstance(e, Bin):
        f, g = _compile(e.left), _compile(e.right)
        if e.op == "+":
            return lambda x: f(x) + g(x)
        if e.op == "-":
            return lambda x: f(x) - g(x)
        if e.op == "*":
            return lambda x: f(x) * g(x)
        if e.op == "/":
            def div(x):
                a, b = f(x), g(x)
                _domain(np.equal(b, 0.0), "division by zero", e)
                return a / b
            return div
        if e.op == "^":
            return _power(f, g, e)
    if isinstance(e, Call):
        fs = [_compile(a) for a in e.args]
        name = e.name
        if name == "sqrt":
            def sqrt(x):
                a = fs[0](x)
                _domain(np.less(a, 0.0), "sqrt of negative number", e)
                return np.sqrt(a)
            return sqrt
        if name == "log":
            def log(x):
                a = fs[0](x)
                _domain(np.less_equal(a, 0.0), "log of nonpositive number", e)
                return np.log(a)
            return log
        if name == "abs":
            return lambda x: np.abs(fs[0](x))
        if name == "exp":
            return lambda x: np.exp(fs[0](x))
        if name == "min":
            return lambda x: np.minimum(fs[0](x), fs[1](x))
        if name == "max":
            return lambda x: np.maximum(fs[0](x), fs[1](x))
        if name == "pow":
            return _power(fs[0], fs[1], e)
    raise TypeError(f"not an expression: {e!r}")


def _power(f, g, e):
    def power(x):
        a, b = f(x), g(x)
        a_arr, b_arr = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
        _domain((a_arr < 0.0) & (b_arr != np.round(b_arr)), "non-integer power of negative base", e)
        _domain((a_arr == 0.0) & (b_arr < 0.0), "division by zero", e)
        return np.power(a_arr, b_arr)
    return power


@lru_cache(maxsize=1024)
def compile_expr(e: Expr) -> Callable[[np.ndarray], np.ndarray]:
    """Vectorised evaluator for ``e``: maps an array ``(..., n)`` to ``(...)``.

    The result is checked for overflow; constant expressions broadcast to the
    leading shape of the input.
    """
    inner = _compile(e)

    def run(x):
        x = np.asarray(x, dtype=float)
        with np.errstate(all="ignore"):
            out = np.broadcast_to(np.asarray(inner(x), dtype=float), x.shape[:-1])
        if not np.all(np.isfinite(out)):
            raise DomainError("non-finite result", to_source(e))
        return out

    return run


def evaluate(e: Expr, x) -> float | np.ndarray:
    """Evaluate ``e`` at state ``x``; a 1-D state gives a float."""
    x = np.asarray(x, dtype=float)
    if x.ndim == 0:
        raise ValueError("state must be a vector")
    out = compile_expr(e)(x)
    return float(out) if x.ndim == 1 else np.array(out)


def max_var_index(e: Expr) -> int:
    if isinstance(e, Var):
        return e.index
    if isinstance(e, Neg):
        return max_var_index(e.arg)
    if isinstance(e, Bin):
        return max(max_var_index(e.left), max_var_index(e.right))
    if isinstance(e, Call):
        return max(max_var_index(a) for a in e.args)
    return 0
