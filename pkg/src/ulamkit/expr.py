"""Expression language over the time variable ``t``.

Coefficient functions are written as small formulas such as
``"1 - 2*t/(1+t^2)"`` or ``"2/sqrt(pi)*exp(-t^2)"``.  This module parses
them into an immutable tree, prints them back, evaluates them (scalar or
numpy-vectorised, always complex) and differentiates them symbolically.

Grammar::

    expr    := term (('+' | '-') term)*
    term    := unary (('*' | '/') unary)*
    unary   := '-' unary | power
    power   := primary ('^' unary)?
    primary := number | 'pi' | 'i' | 't' | ident '(' expr ')' | '(' expr ')'

``^`` binds tighter than unary minus, so ``-t^2`` is ``-(t^2)``, and it is
right-associative (``2^3^2 == 2^(3^2)``).
"""

from __future__ import annotations

import cmath
import math
import re
from dataclasses import dataclass
from functools import cached_property
from typing import Callable, Union

import numpy as np
from scipy import special

__all__ = [
    "Expr", "Num", "Const", "Var", "BinOp", "Neg", "Call",
    "ExprError", "ExprSyntaxError", "UnknownIdentifierError",
    "ExprDomainError", "NonDifferentiableError",
    "FUNCTIONS", "parse", "evaluate", "differentiate", "to_string",
]


class ExprError(ValueError):
    """Base class for expression errors."""


class ExprSyntaxError(ExprError):
    def __init__(self, message: str, offset: int, expected: str):
        super().__init__(f"{message} at byte {offset} (expected {expected})")
        self.offset = offset
        self.expected = expected


class UnknownIdentifierError(ExprError):
    def __init__(self, name: str, offset: int):
        super().__init__(f"unknown identifier {name!r} at byte {offset}")
        self.name = name
        self.offset = offset


class ExprDomainError(ExprError, ArithmeticError):
    """Raised when evaluation hits a pole or leaves a function's domain."""

    def __init__(self, subtree: "Expr", t):
        super().__init__(f"non-finite value of {to_string(subtree)!r} at t={t!r}")
        self.subtree = subtree
        self.t = t


class NonDifferentiableError(ExprError):
    def __init__(self, subtree: "Expr"):
        super().__init__(f"cannot differentiate non-analytic node {to_string(subtree)!r}")
        self.subtree = subtree


# ---------------------------------------------------------------------------
# Tree
# ---------------------------------------------------------------------------

class Expr:
    """Base node.  Nodes are frozen dataclasses, so ``==`` is structural."""

    def __str__(self) -> str:
        return to_string(self)

    def __call__(self, t):
        return evaluate(self, t)

    @cached_property
    def has_var(self) -> bool:
        return any(c.has_var for c in _children(self)) or isinstance(self, Var)

    @cached_property
    def vectorized(self) -> Callable:
        """Compiled ``t -> complex ndarray`` (broadcast to ``np.shape(t)``)."""
        return _compile(self, vector=True)

    @cached_property
    def scalar(self) -> Callable[[float], complex]:
        """Compiled ``t -> complex`` using :mod:`cmath`; fast for ODE right-hand sides."""
        return _compile(self, vector=False)


@dataclass(frozen=True, eq=True)
class Num(Expr):
    value: float


@dataclass(frozen=True, eq=True)
class Const(Expr):
    name: str  # "pi" or "i"


@dataclass(frozen=True, eq=True)
class Var(Expr):
    pass


@dataclass(frozen=True, eq=True)
class BinOp(Expr):
    op: str  # one of + - * / ^
    left: Expr
    right: Expr


@dataclass(frozen=True, eq=True)
class Neg(Expr):
    operand: Expr


@dataclass(frozen=True, eq=True)
class Call(Expr):
    fn: str
    arg: Expr


def _children(e: Expr) -> tuple[Expr, ...]:
    if isinstance(e, BinOp):
        return (e.left, e.right)
    if isinstance(e, Neg):
        return (e.operand,)
    if isinstance(e, Call):
        return (e.arg,)
    return ()


# (numpy implementation, cmath implementation)
def _cot(z):
    return 1.0 / np.tan(z)


def _sec(z):
    return 1.0 / np.cos(z)


def _csc(z):
    return 1.0 / np.sin(z)


FUNCTIONS: dict[str, tuple[Callable, Callable]] = {
    "sin": (np.sin, cmath.sin),
    "cos": (np.cos, cmath.cos),
    "tan": (np.tan, cmath.tan),
    "cot": (_cot, lambda z: 1.0 / cmath.tan(z)),
    "sec": (_sec, lambda z: 1.0 / cmath.cos(z)),
    "csc": (_csc, lambda z: 1.0 / cmath.sin(z)),
    "exp": (np.exp, cmath.exp),
    "ln": (np.log, cmath.log),
    "sqrt": (np.sqrt, cmath.sqrt),
    "atan": (np.arctan, cmath.atan),
    "erf": (special.erf, lambda z: complex(special.erf(z))),
    "erfc": (special.erfc, lambda z: complex(special.erfc(z))),
    "abs": (np.abs, lambda z: complex(abs(z))),
    "re": (np.real, lambda z: complex(z.real)),
    "im": (np.imag, lambda z: complex(z.imag)),
}
NON_ANALYTIC = frozenset({"abs", "re", "im"})


# ---------------------------------------------------------------------------
# Parsing
# ---------------------------------------------------------------------------

_TOKEN = re.compile(
    r"\s*(?:(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)|(?P<ident>[A-Za-z_]\w*)|(?P<op>[-+*/^()]))"
)


class _Parser:
    def __init__(self, source: str):
        self.src = source
        self.data = source.encode("utf-8")
        self.tokens: list[tuple[str, str, int]] = []
        pos = 0
        while pos < len(source):
            if source[pos:].strip() == "":
                break
            m = _TOKEN.match(source, pos)
            if m is None or m.end() == pos:
                start = pos + len(source[pos:]) - len(source[pos:].lstrip())
                raise ExprSyntaxError(f"unexpected character {source[start]!r}",
                                      self._byte(start), "number, identifier, operator or parenthesis")
            kind = m.lastgroup
            self.tokens.append((kind, m.group(kind), self._byte(m.start(kind))))
            pos = m.end()
        self.i = 0

    def _byte(self, char_index: int) -> int:
        return len(self.src[:char_index].encode("utf-8"))

    def peek(self):
        return self.tokens[self.i] if self.i < len(self.tokens) else ("eof", "", len(self.data))

    def take(self):
        tok = self.peek()
        self.i += 1
        return tok

    def expect(self, text: str):
        kind, val, off = self.take()
        if val != text or kind != "op":
            got = "end of input" if kind == "eof" else repr(val)
            raise ExprSyntaxError(f"unexpected {got}", off, repr(text))

    def parse(self) -> Expr:
        if not self.tokens:
            raise ExprSyntaxError("empty expression", 0, "an expression")
        e = self.expr()
        kind, val, off = self.peek()
        if kind != "eof":
            raise ExprSyntaxError(f"unexpected {val!r}", off, "operator or end of input")
        return e

    def expr(self) -> Expr:
        e = self.term()
        while self.peek()[1] in ("+", "-") and self.peek()[0] == "op":
            op = self.take()[1]
            e = BinOp(op, e, self.term())
        return e

    def term(self) -> Expr:
        e = self.unary()
        while self.peek()[1] in ("*", "/") and self.peek()[0] == "op":
            op = self.take()[1]
            e = BinOp(op, e, self.unary())
        return e

    def unary(self) -> Expr:
        if self.peek()[:2] == ("op", "-"):
            self.take()
            return Neg(self.unary())
        return self.power()

    def power(self) -> Expr:
        base = self.primary()
        if self.peek()[:2] == ("op", "^"):
            self.take()
            return BinOp("^", base, self.unary())
        return base

    def primary(self) -> Expr:
        kind, val, off = self.take()
        if kind == "num":
            return Num(float(val))
        if kind == "ident":
            if val == "t":
                return Var()
            if val in ("pi", "i"):
                return Const(val)
            if val in FUNCTIONS:
                self.expect("(")
                arg = self.expr()
                self.expect(")")
                return Call(val, arg)
            raise UnknownIdentifierError(val, off)
        if (kind, val) == ("op", "("):
            e = self.expr()
            self.expect(")")
            return e
        got = "end of input" if kind == "eof" else repr(val)
        raise ExprSyntaxError(f"unexpected {got}", off, "number, 't', 'pi', 'i', function or '('")


def parse(source: str) -> Expr:
    """Parse ``source`` into an expression tree."""
    return _Parser(source).parse()


def as_expr(value: Union[str, Expr, float, int, complex]) -> Expr:
    if isinstance(value, Expr):
        return value
    if isinstance(value, str):
        return parse(value)
    if isinstance(value, complex):
        re_part, im_part = as_expr(value.real), as_expr(value.imag)
        if value.imag == 0:
            return re_part
        return _simplify(BinOp("+", re_part, BinOp("*", im_part, Const("i"))))
    v = float(value)
    return Neg(Num(-v)) if v < 0 or (v == 0 and math.copysign(1, v) < 0) else Num(v)


# ---------------------------------------------------------------------------
# Printing
# ---------------------------------------------------------------------------

_PREC = {"+": 1, "-": 1, "*": 2, "/": 2, "neg": 3, "^": 4, "atom": 5}


def _prec(e: Expr) -> int:
    if isinstance(e, BinOp):
        return _PREC[e.op]
    if isinstance(e, Neg):
        return _PREC["neg"]
    return _PREC["atom"]


def _fmt_num(v: float) -> str:
    if v.is_integer() and abs(v) < 1e15:
        return str(int(v))
    return repr(v)


def to_string(e: Expr) -> str:
    """Render with the minimum parentheses needed to parse back to ``e``."""
    if isinstance(e, Num):
        return _fmt_num(e.value)
    if isinstance(e, Const):
        return e.name
    if isinstance(e, Var):
        return "t"
    if isinstance(e, Call):
        return f"{e.fn}({to_string(e.arg)})"
    if isinstance(e, Neg):
        inner = to_string(e.operand)
        return "-" + (f"({inner})" if _prec(e.operand) < _PREC["neg"] else inner)
    p = _PREC[e.op]
    left, right = to_string(e.left), to_string(e.right)
    if e.op == "^":
        left_paren = _prec(e.left) <= p
        right_paren = _prec(e.right) < _PREC["neg"]
    else:
        left_paren = _prec(e.left) < p
        right_paren = _prec(e.right) <= p
    if left_paren:
        left = f"({left})"
    if right_paren:
        right = f"({right})"
    return f"{left}{e.op}{right}"


# ---------------------------------------------------------------------------
# Evaluation
# ---------------------------------------------------------------------------

def _source(e: Expr) -> str:
    if isinstance(e, Num):
        return repr(complex(e.value))
    if isinstance(e, Const):
        return "1j" if e.name == "i" else repr(complex(math.pi))
    if isinstance(e, Var):
        return "t"
    if isinstance(e, Neg):
        return f"(-{_source(e.operand)})"
    if isinstance(e, Call):
        return f"F_{e.fn}({_source(e.arg)})"
    op = "**" if e.op == "^" else e.op
    return f"({_source(e.left)} {op} {_source(e.right)})"


def _compile(e: Expr, vector: bool) -> Callable:
    slot = 0 if vector else 1
    namespace = {f"F_{name}": impls[slot] for name, impls in FUNCTIONS.items()}
    body = eval(f"lambda t: {_source(e)}", namespace)  # noqa: S307 - source built from the tree only

    if vector:
        def fn(t):
            t_arr = np.asarray(t, dtype=float)
            with np.errstate(all="ignore"):
                out = np.asarray(body(t_arr.astype(complex)), dtype=complex)
            out = np.broadcast_to(out, t_arr.shape).copy() if out.shape != t_arr.shape else out
            if not cmath.isfinite(out.sum()) and not np.all(np.isfinite(out)):
                bad = np.flatnonzero(~np.isfinite(out.ravel()))[0]
                t_bad = float(t_arr.ravel()[bad])
                raise ExprDomainError(_locate(e, t_bad), t_bad)
            return out
    else:
        def fn(t):
            try:
                out = complex(body(complex(t)))
            except (ZeroDivisionError, ValueError, OverflowError):
                raise ExprDomainError(_locate(e, float(t)), float(t)) from None
            if not cmath.isfinite(out):
                raise ExprDomainError(_locate(e, float(t)), float(t))
            return out
    return fn


def _eval_node(e: Expr, t: complex) -> complex:
    if isinstance(e, Num):
        return complex(e.value)
    if isinstance(e, Const):
        return 1j if e.name == "i" else complex(math.pi)
    if isinstance(e, Var):
        return t
    if isinstance(e, Neg):
        return -_eval_node(e.operand, t)
    if isinstance(e, Call):
        with np.errstate(all="ignore"):
            return complex(FUNCTIONS[e.fn][0](np.complex128(_eval_node(e.arg, t))))
    a, b = _eval_node(e.left, t), _eval_node(e.right, t)
    with np.errstate(all="ignore"):
        a, b = np.complex128(a), np.complex128(b)
        if e.op == "+":
            return complex(a + b)
        if e.op == "-":
            return complex(a - b)
        if e.op == "*":
            return complex(a * b)
        if e.op == "/":
            return complex(a / b) if b != 0 else complex(np.inf)
        return complex(a ** b)


def _locate(e: Expr, t: float) -> Expr:
    """Smallest subtree whose value is non-finite although its children are finite."""
    for child in _children(e):
        if not cmath.isfinite(_eval_node(child, complex(t))):
            return _locate(child, t)
    return e


def evaluate(e: Expr, t):
    """Evaluate at a real scalar (returns ``complex``) or an array of times."""
    if np.ndim(t) == 0:
        return e.scalar(float(t))
    return e.vectorized(t)


# ---------------------------------------------------------------------------
# Differentiation
# ---------------------------------------------------------------------------

ZERO, ONE, TWO = Num(0.0), Num(1.0), Num(2.0)


def _is_num(e: Expr, v: float | None = None) -> bool:
    return isinstance(e, Num) and (v is None or e.value == v)


def _num(v: float) -> Expr:
    return Num(v) if v >= 0 else Neg(Num(-v))


def _const_value(e: Expr) -> float | None:
    if isinstance(e, Num):
        return e.value
    if isinstance(e, Neg) and isinstance(e.operand, Num):
        return -e.operand.value
    return None


def _simplify(e: Expr) -> Expr:
    """Light algebraic clean-up: identities and folding of real literals."""
    if isinstance(e, Neg):
        inner = _simplify(e.operand)
        if _is_num(inner, 0.0):
            return ZERO
        if isinstance(inner, Neg):
            return inner.operand
        return Neg(inner)
    if isinstance(e, Call):
        return Call(e.fn, _simplify(e.arg))
    if not isinstance(e, BinOp):
        return e
    a, b, op = _simplify(e.left), _simplify(e.right), e.op
    ca, cb = _const_value(a), _const_value(b)
    if ca is not None and cb is not None and op != "^":
        v = {"+": ca + cb, "-": ca - cb, "*": ca * cb}.get(op)
        if op == "/" and cb != 0 and (ca / cb) * cb == ca:
            v = ca / cb
        if v is not None:
            return _num(v)
    if op == "+":
        if ca == 0:
            return b
        if cb == 0:
            return a
        if isinstance(b, Neg):
            return _simplify(BinOp("-", a, b.operand))
    elif op == "-":
        if cb == 0:
            return a
        if ca == 0:
            return _simplify(Neg(b))
        if isinstance(b, Neg):
            return BinOp("+", a, b.operand)
    elif op == "*":
        if ca == 0 or cb == 0:
            return ZERO
        if ca == 1:
            return b
        if cb == 1:
            return a
        if ca == -1:
            return _simplify(Neg(b))
        if cb == -1:
            return _simplify(Neg(a))
        if isinstance(a, Neg):
            return _simplify(Neg(BinOp("*", a.operand, b)))
        if cb is not None and ca is None:
            return _simplify(BinOp("*", b, a))
    elif op == "/":
        if ca == 0:
            return ZERO
        if cb == 1:
            return a
        if isinstance(a, Neg):
            return _simplify(Neg(BinOp("/", a.operand, b)))
    elif op == "^":
        if cb == 1:
            return a
        if cb == 0:
            return ONE
    return BinOp(op, a, b)


def _d(e: Expr) -> Expr:
    if not e.has_var:
        return ZERO
    if isinstance(e, Var):
        return ONE
    if isinstance(e, Neg):
        return Neg(_d(e.operand))
    if isinstance(e, BinOp):
        u, v = e.left, e.right
        du, dv = _d(u), _d(v)
        if e.op in "+-":
            return BinOp(e.op, du, dv)
        if e.op == "*":
            return BinOp("+", BinOp("*", du, v), BinOp("*", u, dv))
        if e.op == "/":
            if not v.has_var:
                return BinOp("/", du, v)
            return BinOp("/", BinOp("-", BinOp("*", du, v), BinOp("*", u, dv)), BinOp("^", v, TWO))
        # power
        if not v.has_var:
            c = _const_value(v)
            exponent = _num(c - 1) if c is not None else BinOp("-", v, ONE)
            return BinOp("*", BinOp("*", v, BinOp("^", u, exponent)), du)
        if not u.has_var:
            return BinOp("*", BinOp("*", e, Call("ln", u)), dv)
        return BinOp("*", e, BinOp("+", BinOp("*", dv, Call("ln", u)), BinOp("/", BinOp("*", v, du), u)))
    assert isinstance(e, Call)
    if e.fn in NON_ANALYTIC:
        raise NonDifferentiableError(e)
    u, du = e.arg, _d(e.arg)
    gaussian = BinOp("*", BinOp("/", TWO, Call("sqrt", Const("pi"))), Call("exp", Neg(BinOp("^", u, TWO))))
    outer = {
        "sin": lambda: Call("cos", u),
        "cos": lambda: Neg(Call("sin", u)),
        "tan": lambda: BinOp("^", Call("sec", u), TWO),
        "cot": lambda: Neg(BinOp("^", Call("csc", u), TWO)),
        "sec": lambda: BinOp("*", Call("sec", u), Call("tan", u)),
        "csc": lambda: Neg(BinOp("*", Call("csc", u), Call("cot", u))),
        "exp": lambda: Call("exp", u),
        "erf": lambda: gaussian,
        "erfc": lambda: Neg(gaussian),
    }
    if e.fn == "ln":
        return BinOp("/", du, u)
    if e.fn == "sqrt":
        return BinOp("/", du, BinOp("*", TWO, Call("sqrt", u)))
    if e.fn == "atan":
        return BinOp("/", du, BinOp("+", ONE, BinOp("^", u, TWO)))
    return BinOp("*", outer[e.fn](), du)


def differentiate(e: Expr) -> Expr:
    """Symbolic ``d/dt``.  Raises :class:`NonDifferentiableError` on abs/re/im."""
    for node in _walk(e):
        if isinstance(node, Call) and node.fn in NON_ANALYTIC and node.has_var:
            raise NonDifferentiableError(node)
    return _simplify(_d(e))


def _walk(e: Expr):
    yield e
    for c in _children(e):
        yield from _walk(c)
