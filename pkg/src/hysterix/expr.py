"""Scalar expression language: parsing, evaluation, symbolic differentiation.

Grammar (loosest binding first)::

    expr   := term (('+' | '-') term)*
    term   := unary (('*' | '/') unary)*
    unary  := '-' unary | power
    power  := atom ('^' INTEGER)*
    atom   := NUMBER | IDENT | IDENT '(' expr ')' | '(' expr ')'

Exponents are non-negative integer literals, so ``-x^2`` is ``-(x^2)``.
Recognised functions: sin, cos, exp, abs, sqrt and sign (the latter shows
up in derivatives of abs).
"""

from __future__ import annotations

import math
import re
from fractions import Fraction
from dataclasses import dataclass
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np

__all__ = [
    "Expr",
    "Const",
    "Var",
    "Unary",
    "Binary",
    "Pow",
    "ExprError",
    "ExprSyntaxError",
    "UnknownIdentifierError",
    "ExponentError",
    "ExprEvalError",
    "FUNCTIONS",
    "parse",
    "evaluate",
    "differentiate",
    "substitute",
    "to_string",
    "compile_exprs",
    "compile_numpy",
]

FUNCTIONS = ("sin", "cos", "exp", "abs", "sqrt", "sign")


class ExprError(ValueError):
    """Base class for expression errors."""


class ExprSyntaxError(ExprError):
    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} at offset {offset}")
        self.offset = offset


class UnknownIdentifierError(ExprError):
    def __init__(self, name: str, offset: int):
        super().__init__(f"unknown identifier {name!r} at offset {offset}")
        self.name = name
        self.offset = offset


class ExponentError(ExprError):
    def __init__(self, token: str, offset: int):
        super().__init__(
            f"exponent must be a non-negative integer literal, got {token!r} at offset {offset}"
        )
        self.offset = offset


class ExprEvalError(ExprError, ArithmeticError):
    """Raised for division by zero, sqrt of a negative, overflow or unbound variables."""


# --------------------------------------------------------------------------- AST


class Expr:
    """Base AST node. Nodes are immutable and hashable."""

    __slots__ = ()

    def free_vars(self) -> frozenset[str]:
        raise NotImplementedError

    def __str__(self) -> str:
        return to_string(self)

    def __call__(self, **ctx: float) -> float:
        return evaluate(self, ctx)


@dataclass(frozen=True, slots=True)
class Const(Expr):
    value: float

    def free_vars(self):
        return frozenset()


@dataclass(frozen=True, slots=True)
class Var(Expr):
    name: str

    def free_vars(self):
        return frozenset((self.name,))


@dataclass(frozen=True, slots=True)
class Unary(Expr):
    op: str  # "neg" or one of FUNCTIONS
    arg: Expr

    def free_vars(self):
        return self.arg.free_vars()


@dataclass(frozen=True, slots=True)
class Binary(Expr):
    op: str  # + - * /
    left: Expr
    right: Expr

    def free_vars(self):
        return self.left.free_vars() | self.right.free_vars()


@dataclass(frozen=True, slots=True)
class Pow(Expr):
    base: Expr
    exponent: int

    def __post_init__(self):
        if not isinstance(self.exponent, int) or self.exponent < 0:
            raise ExponentError(repr(self.exponent), -1)

    def free_vars(self):
        return self.base.free_vars()


ZERO = Const(0.0)
ONE = Const(1.0)


# ---------------------------------------------------------------- smart constructors
# Light folding only, so derivatives stay readable; correctness never relies on it.


def _is_const(e: Expr, v: float | None = None) -> bool:
    return isinstance(e, Const) and (v is None or e.value == v)


def add(a: Expr, b: Expr) -> Expr:
    if _is_const(a, 0.0):
        return b
    if _is_const(b, 0.0):
        return a
    return Binary("+", a, b)


def sub(a: Expr, b: Expr) -> Expr:
    if _is_const(b, 0.0):
        return a
    if _is_const(a, 0.0):
        return neg(b)
    return Binary("-", a, b)


def mul(a: Expr, b: Expr) -> Expr:
    if _is_const(a, 0.0) or _is_const(b, 0.0):
        return ZERO
    if _is_const(a, 1.0):
        return b
    if _is_const(b, 1.0):
        return a
    return Binary("*", a, b)


def div(a: Expr, b: Expr) -> Expr:
    if _is_const(a, 0.0) and not _is_const(b, 0.0):
        return ZERO
    if _is_const(b, 1.0):
        return a
    return Binary("/", a, b)


def neg(a: Expr) -> Expr:
    if _is_const(a, 0.0):
        return ZERO
    return Unary("neg", a)


def power(a: Expr, n: int) -> Expr:
    if n == 0:
        return ONE
    if n == 1:
        return a
    return Pow(a, n)


# ------------------------------------------------------------------------ parsing

_TOKEN_RE = re.compile(
    r"""
    (?P<ws>\s+)
  | (?P<num>(?:\d+\.\d*|\.\d+|\d+)(?:[eE][+-]?\d+)?)
  | (?P<ident>[A-Za-z_][A-Za-z0-9_]*)
  | (?P<op>[-+*/^(),])
    """,
    re.VERBOSE,
)


def _tokenize(text: str):
    pos = 0
    tokens = []
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if m is None:
            raise ExprSyntaxError(f"unexpected character {text[pos]!r}", _byte_offset(text, pos))
        kind = m.lastgroup
        if kind != "ws":
            tokens.append((kind, m.group(), _byte_offset(text, pos)))
        pos = m.end()
    tokens.append(("end", "", _byte_offset(text, len(text))))
    return tokens


def _byte_offset(text: str, pos: int) -> int:
    return len(text[:pos].encode("utf-8"))


class _Parser:
    def __init__(self, text: str, allowed: frozenset[str] | None):
        self.tokens = _tokenize(text)
        self.i = 0
        self.allowed = allowed

    def peek(self):
        return self.tokens[self.i]

    def take(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def expect(self, value: str):
        kind, text, off = self.take()
        if text != value or kind == "end":
            found = "end of input" if kind == "end" else repr(text)
            raise ExprSyntaxError(f"expected {value!r}, found {found}", off)

    def parse(self) -> Expr:
        e = self.expr()
        kind, text, off = self.peek()
        if kind != "end":
            raise ExprSyntaxError(f"unexpected token {text!r}", off)
        return e

    def expr(self) -> Expr:
        e = self.term()
        while self.peek()[1] in ("+", "-") and self.peek()[0] == "op":
            op = self.take()[1]
            e = Binary(op, e, self.term())
        return e

    def term(self) -> Expr:
        e = self.unary()
        while self.peek()[1] in ("*", "/") and self.peek()[0] == "op":
            op = self.take()[1]
            e = Binary(op, e, self.unary())
        return e

    def unary(self) -> Expr:
        kind, text, _ = self.peek()
        if kind == "op" and text == "-":
            self.take()
            return Unary("neg", self.unary())
        if kind == "op" and text == "+":
            self.take()
            return self.unary()
        return self.power()

    def power(self) -> Expr:
        e = self.atom()
        while self.peek()[0] == "op" and self.peek()[1] == "^":
            self.take()
            kind, text, off = self.take()
            if kind != "num" or not text.isdigit():
                if kind == "end":
                    raise ExprSyntaxError("expected exponent, found end of input", off)
                raise ExponentError(text, off)
            e = Pow(e, int(text))
        return e

    def atom(self) -> Expr:
        kind, text, off = self.take()
        if kind == "num":
            return Const(float(text))
        if kind == "ident":
            if self.peek()[1] == "(" and self.peek()[0] == "op":
                if text not in FUNCTIONS:
                    raise UnknownIdentifierError(text, off)
                self.take()
                arg = self.expr()
                self.expect(")")
                return Unary(text, arg)
            if text in FUNCTIONS:
                raise ExprSyntaxError(f"function {text!r} requires an argument", off)
            if self.allowed is not None and text not in self.allowed:
                raise UnknownIdentifierError(text, off)
            return Var(text)
        if kind == "op" and text == "(":
            e = self.expr()
            self.expect(")")
            return e
        if kind == "end":
            raise ExprSyntaxError("unexpected end of input", off)
        raise ExprSyntaxError(f"unexpected token {text!r}", off)


def parse(text: str, vars: Iterable[str] | None = None) -> Expr:
    """Parse ``text`` into an AST whose free variables are drawn from ``vars``.

    Passing ``vars=None`` accepts any identifier.
    """
    if not isinstance(text, str) or not text.strip():
        raise ExprSyntaxError("empty expression", 0)
    allowed = None if vars is None else frozenset(vars)
    return _Parser(text, allowed).parse()


# ----------------------------------------------------------------------- printing


def to_string(e: Expr) -> str:
    """Fully parenthesised rendering; ``parse(to_string(e))`` evaluates bit-identically."""
    if isinstance(e, Const):
        v = e.value
        if not math.isfinite(v):
            raise ExprError(f"cannot print non-finite constant {v}")
        s = repr(abs(v))
        return f"(-{s})" if math.copysign(1.0, v) < 0 else s
    if isinstance(e, Var):
        return e.name
    if isinstance(e, Unary):
        if e.op == "neg":
            return f"(-{to_string(e.arg)})"
        return f"{e.op}({to_string(e.arg)})"
    if isinstance(e, Binary):
        return f"({to_string(e.left)} {e.op} {to_string(e.right)})"
    if isinstance(e, Pow):
        return f"{_atomic(e.base)}^{e.exponent}"
    raise TypeError(f"not an expression node: {e!r}")


def _atomic(e: Expr) -> str:
    # every rendering is already atomic: binaries and negations carry their own
    # parentheses and powers chain left-associatively
    return to_string(e)


# --------------------------------------------------------------------- evaluation


def _sign(v):
    return (v > 0) - (v < 0)


def _checked_sqrt(v):
    if v < 0:
        raise ExprEvalError(f"sqrt of negative value {v}")
    return math.sqrt(v)


_UNARY_FUNCS: dict[str, Callable] = {
    "sin": math.sin,
    "cos": math.cos,
    "exp": math.exp,
    "abs": abs,
    "sqrt": _checked_sqrt,
    "sign": _sign,
}


def evaluate(e: Expr, ctx: Mapping[str, float], exact: bool = False):
    """Tree-walking evaluator.

    Arithmetic nodes use the operators of whatever number type ``ctx`` holds.
    With ``exact=True`` every constant is lifted to the
    :class:`fractions.Fraction` equal to its binary value, so polynomial
    expressions on Fraction inputs evaluate without rounding. Transcendental
    nodes always go through :mod:`math`.
    """
    try:
        return _eval(e, ctx, Fraction if exact else None)
    except ZeroDivisionError as exc:
        raise ExprEvalError("division by zero") from exc
    except OverflowError as exc:
        raise ExprEvalError(str(exc)) from exc


def _eval(e, ctx, lift=None):
    if isinstance(e, Const):
        return e.value if lift is None else lift(e.value)
    if isinstance(e, Var):
        try:
            return ctx[e.name]
        except KeyError:
            raise ExprEvalError(f"unbound variable {e.name!r}") from None
    if isinstance(e, Binary):
        a = _eval(e.left, ctx, lift)
        b = _eval(e.right, ctx, lift)
        op = e.op
        if op == "+":
            return a + b
        if op == "-":
            return a - b
        if op == "*":
            return a * b
        return a / b
    if isinstance(e, Pow):
        return _eval(e.base, ctx, lift) ** e.exponent
    if isinstance(e, Unary):
        a = _eval(e.arg, ctx, lift)
        if e.op == "neg":
            return -a
        return _UNARY_FUNCS[e.op](a)
    raise TypeError(f"not an expression node: {e!r}")


# ------------------------------------------------------------------ differentiation


def differentiate(e: Expr, var: str) -> Expr:
    """Symbolic partial derivative of ``e`` with respect to ``var``.

    ``abs`` uses the subgradient ``sign(s)`` with ``sign(0) = 0``; the result is
    therefore only exact away from the kink.
    """
    if var not in e.free_vars():
        return ZERO
    return _d(e, var)


def _d(e: Expr, v: str) -> Expr:
    if isinstance(e, Const):
        return ZERO
    if isinstance(e, Var):
        return ONE if e.name == v else ZERO
    if v not in e.free_vars():
        return ZERO
    if isinstance(e, Binary):
        a, b = e.left, e.right
        da, db = _d(a, v), _d(b, v)
        if e.op == "+":
            return add(da, db)
        if e.op == "-":
            return sub(da, db)
        if e.op == "*":
            return add(mul(da, b), mul(a, db))
        # quotient rule, split so a constant denominator stays simple
        if _is_const(db, 0.0):
            return div(da, b)
        return div(sub(mul(da, b), mul(a, db)), power(b, 2))
    if isinstance(e, Pow):
        n = e.exponent
        if n == 0:
            return ZERO
        return mul(mul(Const(float(n)), power(e.base, n - 1)), _d(e.base, v))
    if isinstance(e, Unary):
        s = e.arg
        ds = _d(s, v)
        op = e.op
        if op == "neg":
            return neg(ds)
        if op == "sin":
            outer = Unary("cos", s)
        elif op == "cos":
            outer = neg(Unary("sin", s))
        elif op == "exp":
            outer = e
        elif op == "abs":
            outer = Unary("sign", s)
        elif op == "sqrt":
            return div(ds, mul(Const(2.0), e))
        elif op == "sign":
            return ZERO
        else:
            raise TypeError(f"unknown unary op {op!r}")
        return mul(outer, ds)
    raise TypeError(f"not an expression node: {e!r}")


def gradient(e: Expr, vars: Sequence[str]) -> tuple[Expr, ...]:
    return tuple(differentiate(e, v) for v in vars)


# ---------------------------------------------------------------- substitution


def substitute(e: Expr, mapping: Mapping[str, Expr | float]) -> Expr:
    """Replace variables by expressions (numbers are wrapped as constants)."""
    m = {k: (v if isinstance(v, Expr) else Const(float(v))) for k, v in mapping.items()}
    return _subst(e, m)


def _subst(e, m):
    if isinstance(e, Var):
        return m.get(e.name, e)
    if isinstance(e, Const):
        return e
    if isinstance(e, Unary):
        return Unary(e.op, _subst(e.arg, m))
    if isinstance(e, Binary):
        return Binary(e.op, _subst(e.left, m), _subst(e.right, m))
    if isinstance(e, Pow):
        return Pow(_subst(e.base, m), e.exponent)
    raise TypeError(f"not an expression node: {e!r}")


# ------------------------------------------------------------------- compilation
# Expressions are turned into Python source over positional arguments. The emitted
# operations mirror ``evaluate`` one-to-one, so results agree bit for bit.


def _src(e: Expr, names: Mapping[str, str], fn: Mapping[str, str]) -> str:
    if isinstance(e, Const):
        return f"({e.value!r})"
    if isinstance(e, Var):
        try:
            return names[e.name]
        except KeyError:
            raise ExprEvalError(f"unbound variable {e.name!r}") from None
    if isinstance(e, Binary):
        return f"({_src(e.left, names, fn)} {e.op} {_src(e.right, names, fn)})"
    if isinstance(e, Pow):
        return f"({_src(e.base, names, fn)} ** {e.exponent})"
    if isinstance(e, Unary):
        if e.op == "neg":
            return f"(-{_src(e.arg, names, fn)})"
        return f"{fn[e.op]}({_src(e.arg, names, fn)})"
    raise TypeError(f"not an expression node: {e!r}")


_MATH_NS = {
    "_sin": math.sin,
    "_cos": math.cos,
    "_exp": math.exp,
    "_abs": abs,
    "_sqrt": _checked_sqrt,
    "_sign": _sign,
}
_MATH_FN = {k[1:]: k for k in _MATH_NS}


def compile_exprs(exprs: Sequence[Expr], args: Sequence[str]) -> Callable[..., tuple]:
    """Compile several expressions into one scalar function ``f(*args) -> tuple``."""
    names = {a: f"_a{i}" for i, a in enumerate(args)}
    body = ", ".join(_src(e, names, _MATH_FN) for e in exprs)
    params = ", ".join(names[a] for a in args)
    src = f"def _compiled({params}):\n    return ({body},)\n"
    ns = dict(_MATH_NS)
    exec(src, ns)
    raw = ns["_compiled"]

    def compiled(*values):
        try:
            return raw(*values)
        except ZeroDivisionError as exc:
            raise ExprEvalError("division by zero") from exc
        except OverflowError as exc:
            raise ExprEvalError(str(exc)) from exc

    compiled.source = src
    return compiled


_NP_NS = {
    "_sin": np.sin,
    "_cos": np.cos,
    "_exp": np.exp,
    "_abs": np.abs,
    "_sqrt": np.sqrt,
    "_sign": np.sign,
}


def compile_numpy(e: Expr, args: Sequence[str]) -> Callable[..., np.ndarray]:
    """Vectorised evaluator for sampling.

    Domain errors produce ``nan``/``inf`` instead of raising; callers decide
    how to treat them.
    """
    names = {a: f"_a{i}" for i, a in enumerate(args)}
    params = ", ".join(names[a] for a in args)
    src = f"def _compiled({params}):\n    return {_src(e, names, _MATH_FN)}\n"
    ns = dict(_NP_NS)
    exec(src, ns)
    raw = ns["_compiled"]

    def compiled(*values):
        shape = np.broadcast(*values).shape if values else ()
        with np.errstate(all="ignore"):
            out = raw(*[np.asarray(v, dtype=float) for v in values])
        return np.broadcast_to(np.asarray(out, dtype=float), shape).copy()

    return compiled
