"""Coefficient expressions in one variable ``y``.

Grammar (highest binding first)::

    atom    := number | 'y' | func '(' expr ')' | '(' expr ')'
    power   := atom ('^' unary)?          # right-assoc, exponent must be constant
    unary   := '-' unary | power
    term    := unary (('*' | '/') unary)*
    expr    := term (('+' | '-') term)*

with ``func`` one of ``sqrt``, ``exp``, ``log``, ``abs``.  Expressions are
immutable dataclasses; :func:`evaluate` works on floats and numpy arrays.
"""
from __future__ import annotations

import functools
import math
import re
from dataclasses import dataclass, field
from typing import Union

import numpy as np

FUNCTIONS = ("sqrt", "exp", "log", "abs")


class DomainError(ArithmeticError):
    """Expression evaluated outside its natural domain."""

    def __init__(self, message: str, y: float):
        super().__init__(f"{message} at y={y!r}")
        self.y = y


class ExprOverflowError(OverflowError):
    def __init__(self, message: str, y: float):
        super().__init__(f"{message} at y={y!r}")
        self.y = y


@dataclass(frozen=True)
class ParseDiagnostic:
    position: int
    message: str
    expected: frozenset = field(default_factory=frozenset)


class ParseError(ValueError):
    def __init__(self, diagnostic: ParseDiagnostic, text: str):
        self.diagnostic = diagnostic
        caret = " " * diagnostic.position + "^"
        exp = ""
        if diagnostic.expected:
            exp = " (expected one of: " + ", ".join(sorted(diagnostic.expected)) + ")"
        super().__init__(f"{diagnostic.message}{exp}\n  {text}\n  {caret}")


# --------------------------------------------------------------------------- AST


class Expr:
    """Base class of expression nodes."""

    __slots__ = ()

    def __call__(self, y):
        return evaluate(self, y)

    def __str__(self):
        return to_string(self)


@dataclass(frozen=True)
class Num(Expr):
    value: float

    def __post_init__(self):
        if not math.isfinite(self.value) or self.value < 0:
            raise ValueError(f"literal must be a finite nonnegative real, got {self.value!r}")


@dataclass(frozen=True)
class Var(Expr):
    pass


@dataclass(frozen=True)
class Neg(Expr):
    arg: Expr


@dataclass(frozen=True)
class BinOp(Expr):
    left: Expr
    right: Expr
    op = "?"


@dataclass(frozen=True)
class Add(BinOp):
    op = "+"


@dataclass(frozen=True)
class Sub(BinOp):
    op = "-"


@dataclass(frozen=True)
class Mul(BinOp):
    op = "*"


@dataclass(frozen=True)
class Div(BinOp):
    op = "/"


@dataclass(frozen=True)
class Pow(Expr):
    base: Expr
    exponent: float

    def __post_init__(self):
        if not math.isfinite(self.exponent):
            raise ValueError("exponent must be finite")


@dataclass(frozen=True)
class Func(Expr):
    name: str
    arg: Expr

    def __post_init__(self):
        if self.name not in FUNCTIONS:
            raise ValueError(f"unknown function {self.name!r}")


def const(value: float) -> Expr:
    """Literal for any finite real; negatives become ``Neg(Num(-v))``."""
    value = float(value)
    if value < 0:
        return Neg(Num(-value))
    return Num(value + 0.0)


def const_value(e: Expr) -> float | None:
    """Value of ``e`` if it contains no variable, else None."""
    if isinstance(e, Num):
        return e.value
    if isinstance(e, Var):
        return None
    if isinstance(e, Neg):
        v = const_value(e.arg)
        return None if v is None else -v
    if isinstance(e, BinOp):
        a, b = const_value(e.left), const_value(e.right)
        if a is None or b is None:
            return None
        try:
            return float(_APPLY[e.op](a, b))
        except ZeroDivisionError:
            return None
    if isinstance(e, Pow):
        a = const_value(e.base)
        if a is None:
            return None
        try:
            v = a ** e.exponent
        except (ZeroDivisionError, OverflowError):
            return None
        return v if isinstance(v, float) and math.isfinite(v) else None
    if isinstance(e, Func):
        a = const_value(e.arg)
        if a is None:
            return None
        try:
            return float(evaluate(e, 0.0))
        except (DomainError, ExprOverflowError):
            return None
    raise TypeError(e)


_APPLY = {
    "+": lambda a, b: a + b,
    "-": lambda a, b: a - b,
    "*": lambda a, b: a * b,
    "/": lambda a, b: a / b,
}

# ------------------------------------------------------------------------ parser

_TOKEN = re.compile(
    r"\s*(?:(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)|(?P<name>[A-Za-z_]\w*)|(?P<op>[-+*/^()]))"
)


def _tokenize(text: str):
    tokens = []
    pos = 0
    while pos < len(text):
        if text[pos:].strip() == "":
            break
        m = _TOKEN.match(text, pos)
        if m is None or m.end() == pos:
            start = pos + (len(text[pos:]) - len(text[pos:].lstrip()))
            raise ParseError(ParseDiagnostic(start, f"unexpected character {text[start]!r}"), text)
        kind = m.lastgroup
        start = m.start(kind)
        tokens.append((kind, m.group(kind), start))
        pos = m.end()
    tokens.append(("end", "", len(text)))
    return tokens


class _Parser:
    def __init__(self, text: str):
        self.text = text
        self.tokens = _tokenize(text)
        self.i = 0

    def peek(self):
        return self.tokens[self.i]

    def advance(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def fail(self, message, expected=(), pos=None):
        if pos is None:
            pos = self.peek()[2]
        raise ParseError(ParseDiagnostic(pos, message, frozenset(expected)), self.text)

    def expect(self, value):
        kind, val, pos = self.peek()
        if val != value or kind not in ("op",):
            self.fail(f"expected {value!r}", {value})
        return self.advance()

    def parse(self) -> Expr:
        e = self.expr()
        kind, val, pos = self.peek()
        if kind != "end":
            if val == ")":
                self.fail("unbalanced ')'", {"end of input"})
            self.fail(f"unexpected token {val!r}", {"+", "-", "*", "/", "^", "end of input"})
        return e

    def expr(self) -> Expr:
        e = self.term()
        while self.peek()[1] in ("+", "-") and self.peek()[0] == "op":
            op = self.advance()[1]
            rhs = self.term()
            e = Add(e, rhs) if op == "+" else Sub(e, rhs)
        return e

    def term(self) -> Expr:
        e = self.unary()
        while self.peek()[1] in ("*", "/") and self.peek()[0] == "op":
            op = self.advance()[1]
            rhs = self.unary()
            e = Mul(e, rhs) if op == "*" else Div(e, rhs)
        return e

    def unary(self) -> Expr:
        if self.peek()[0] == "op" and self.peek()[1] == "-":
            self.advance()
            return Neg(self.unary())
        return self.power()

    def power(self) -> Expr:
        base = self.atom()
        if self.peek()[0] == "op" and self.peek()[1] == "^":
            self.advance()
            pos = self.peek()[2]
            expo = self.unary()
            value = const_value(expo)
            if value is None:
                self.fail("exponent must be a constant", pos=pos)
            return Pow(base, value)
        return base

    def atom(self) -> Expr:
        kind, val, pos = self.peek()
        if kind == "num":
            self.advance()
            return Num(float(val))
        if kind == "name":
            self.advance()
            if val == "y":
                return Var()
            if val in FUNCTIONS:
                self.expect("(")
                arg = self.expr()
                if self.peek()[1] != ")":
                    self.fail("unbalanced '('", {")"})
                self.advance()
                return Func(val, arg)
            self.fail(f"unknown identifier {val!r}", {"y", *FUNCTIONS}, pos=pos)
        if kind == "op" and val == "(":
            self.advance()
            e = self.expr()
            if self.peek()[1] != ")":
                self.fail("unbalanced '('", {")"})
            self.advance()
            return e
        if kind == "end":
            self.fail("unexpected end of input", {"number", "y", "(", "-", *FUNCTIONS})
        self.fail(f"unexpected token {val!r}", {"number", "y", "(", "-", *FUNCTIONS})


def parse(text: str) -> Expr:
    """Parse ``text``; raises :class:`ParseError` carrying a :class:`ParseDiagnostic`."""
    return _Parser(text).parse()


# ----------------------------------------------------------------------- printer

_PREC = {Add: 1, Sub: 1, Mul: 2, Div: 2}


def _fmt_number(v: float) -> str:
    if v.is_integer() and abs(v) < 1e16:
        return str(int(v))
    return repr(v)


def _prec(e: Expr) -> int:
    if isinstance(e, BinOp):
        return _PREC[type(e)]
    if isinstance(e, Neg):
        return 3
    if isinstance(e, Pow):
        return 4
    return 5


def to_string(e: Expr) -> str:
    """Render ``e`` with the minimal parentheses needed for an exact re-parse."""
    if isinstance(e, Num):
        return _fmt_number(e.value)
    if isinstance(e, Var):
        return "y"
    if isinstance(e, Func):
        return f"{e.name}({to_string(e.arg)})"
    if isinstance(e, Neg):
        inner = to_string(e.arg)
        if _prec(e.arg) < 3:
            inner = f"({inner})"
        return "-" + inner
    if isinstance(e, Pow):
        base = to_string(e.base)
        if _prec(e.base) < 5:
            base = f"({base})"
        expo = _fmt_number(e.exponent)
        if e.exponent < 0:
            expo = f"({expo})"
        return f"{base}^{expo}"
    if isinstance(e, BinOp):
        p = _PREC[type(e)]
        left = to_string(e.left)
        if _prec(e.left) < p:
            left = f"({left})"
        right = to_string(e.right)
        if _prec(e.right) <= p:
            right = f"({right})"
        if p == 1:
            return f"{left} {e.op} {right}"
        return f"{left}{e.op}{right}"
    raise TypeError(e)


# -------------------------------------------------------------------- evaluation

Number = Union[float, np.ndarray]


def _first_bad(mask, y) -> float:
    if np.ndim(mask) == 0:
        return float(np.asarray(y).reshape(-1)[0]) if np.ndim(y) else float(y)
    yb = np.broadcast_to(y, mask.shape)
    return float(yb[mask].reshape(-1)[0])


def _eval(e: Expr, y):
    if isinstance(e, Num):
        return e.value
    if isinstance(e, Var):
        return y
    if isinstance(e, Neg):
        return -_eval(e.arg, y)
    if isinstance(e, BinOp):
        a = _eval(e.left, y)
        b = _eval(e.right, y)
        if isinstance(e, Add):
            r = a + b
        elif isinstance(e, Sub):
            r = a - b
        elif isinstance(e, Mul):
            r = a * b
        else:
            bad = np.asarray(b) == 0
            if np.any(bad):
                raise DomainError("division by zero", _first_bad(bad, y))
            r = np.divide(a, b)
        return _check_overflow(r, a, b, y=y)
    if isinstance(e, Pow):
        a = _eval(e.base, y)
        p = e.exponent
        aa = np.asarray(a)
        if p < 0 and np.any(aa == 0):
            raise DomainError("negative power of zero", _first_bad(aa == 0, y))
        if not float(p).is_integer() and np.any(aa < 0):
            raise DomainError("fractional power of a negative number", _first_bad(aa < 0, y))
        r = np.power(a, p)
        return _check_overflow(r, a, y=y)
    if isinstance(e, Func):
        a = _eval(e.arg, y)
        aa = np.asarray(a)
        if e.name == "sqrt":
            if np.any(aa < 0):
                raise DomainError("sqrt of a negative number", _first_bad(aa < 0, y))
            return np.sqrt(a)
        if e.name == "log":
            if np.any(aa <= 0):
                raise DomainError("log of a nonpositive number", _first_bad(aa <= 0, y))
            return np.log(a)
        if e.name == "exp":
            return _check_overflow(np.exp(a), a, y=y)
        return np.abs(a)
    raise TypeError(e)


def _check_overflow(r, *operands, y):
    rr = np.asarray(r)
    if not np.all(np.isfinite(rr)):
        finite_in = np.ones(rr.shape, dtype=bool)
        for op in operands:
            finite_in &= np.isfinite(np.broadcast_to(np.asarray(op), rr.shape))
        bad = ~np.isfinite(rr) & finite_in
        if np.any(bad):
            raise ExprOverflowError("floating-point overflow", _first_bad(bad, y))
    return r


def evaluate(e: Expr, y: Number) -> Number:
    """Evaluate ``e`` at ``y`` (float or array).

    Raises :class:`DomainError` outside the natural domain and
    :class:`ExprOverflowError` on overflow; never returns NaN silently.
    """
    scalar = np.ndim(y) == 0
    yv = float(y) if scalar else np.asarray(y, dtype=float)
    with np.errstate(all="ignore"):
        r = _eval(e, yv)
    if scalar:
        return float(r)
    return np.broadcast_to(np.asarray(r, dtype=float), np.shape(yv)).copy()


def _source(e: Expr, mod: str) -> str:
    if isinstance(e, Num):
        return repr(e.value)
    if isinstance(e, Var):
        return "y"
    if isinstance(e, Neg):
        return f"(-{_source(e.arg, mod)})"
    if isinstance(e, BinOp):
        return f"({_source(e.left, mod)} {e.op} {_source(e.right, mod)})"
    if isinstance(e, Pow):
        fn = "pow" if mod == "math" else "power"
        return f"{mod}.{fn}({_source(e.base, mod)}, {e.exponent!r})"
    if isinstance(e, Func):
        name = "fabs" if (e.name == "abs" and mod == "math") else e.name
        return f"{mod}.{name}({_source(e.arg, mod)})"
    raise TypeError(e)


@functools.lru_cache(maxsize=256)
def lambdify(e: Expr, scalar: bool = True):
    """Compile ``e`` to a plain Python function of ``y``.

    The scalar form uses :mod:`math` and is much faster than :func:`evaluate`
    inside tight loops, but reports domain problems as the builtin
    ``ValueError`` / ``ZeroDivisionError`` / ``OverflowError`` rather than
    with the offending ``y``.  The array form uses numpy and does no checks.
    """
    mod = "math" if scalar else "np"
    code = compile(f"lambda y: {_source(e, mod)}", f"<expr {to_string(e)}>", "eval")
    return eval(code, {"math": math, "np": np})  # noqa: S307 - source built from a typed AST


# ---------------------------------------------------------------- simplification


def _is_const(e: Expr, value: float | None = None) -> bool:
    v = const_value(e)
    return v is not None and (value is None or v == value)


def _split_product(e: Expr):
    """Flatten a product into (coefficient, [(base, exponent), ...])."""
    if isinstance(e, Neg):
        c, fs = _split_product(e.arg)
        return -c, fs
    if isinstance(e, Mul):
        c1, f1 = _split_product(e.left)
        c2, f2 = _split_product(e.right)
        return c1 * c2, f1 + f2
    v = const_value(e)
    if v is not None:
        return v, []
    if isinstance(e, Pow):
        return _split_power(e.base, e.exponent, e)
    if isinstance(e, Func) and e.name == "sqrt":
        return _split_power(e.arg, 0.5, e)
    return 1.0, [(e, 1.0)]


def _nonneg(e: Expr) -> bool:
    if isinstance(e, (Var, Num)):
        return True
    if isinstance(e, Func):
        return e.name in ("sqrt", "exp", "abs")
    if isinstance(e, Pow):
        return e.exponent % 2 == 0 or _nonneg(e.base)
    return False


def _split_power(base: Expr, q: float, whole: Expr):
    c, fs = _split_product(base)
    # (b^p)^q = b^(pq) only where it cannot flip a sign
    safe = c > 0 and all(
        float(q).is_integer() or not float(p).is_integer() or _nonneg(b) for b, p in fs
    )
    if not safe:
        return 1.0, [(whole, 1.0)]
    return c ** q, [(b, p * q) for b, p in fs]


def _join_product(coef: float, factors) -> Expr:
    merged: list[list] = []
    for base, p in factors:
        for item in merged:
            if item[0] == base:
                item[1] += p
                break
        else:
            merged.append([base, p])
    parts = []
    for base, p in merged:
        if p == 0:
            continue
        if p == 1:
            parts.append(base)
        elif p == 0.5:
            parts.append(Func("sqrt", base))
        else:
            parts.append(Pow(base, p))
    if coef == 0:
        return Num(0.0)
    if not parts:
        return const(coef)
    body = parts[0]
    for f in parts[1:]:
        body = Mul(body, f)
    if coef == 1:
        return body
    if coef == -1:
        return Neg(body)
    if coef < 0:
        return Neg(Mul(Num(-coef), body))
    return Mul(Num(coef), body)


def simplify(e: Expr) -> Expr:
    """Constant folding plus collection of powers inside products.

    ``sqrt(u)*sqrt(u)`` becomes ``u`` and ``y*y^0.5`` becomes ``y^1.5``;
    sums are left in their original order.
    """
    v = const_value(e)
    if v is not None:
        return const(v)
    if isinstance(e, Var):
        return e
    if isinstance(e, Neg):
        a = simplify(e.arg)
        if isinstance(a, Neg):
            return a.arg
        return simplify_product(Neg(a))
    if isinstance(e, (Add, Sub)):
        a, b = simplify(e.left), simplify(e.right)
        if _is_const(b, 0.0):
            return a
        if _is_const(a, 0.0):
            return b if isinstance(e, Add) else simplify(Neg(b))
        if isinstance(b, Neg):
            return Sub(a, b.arg) if isinstance(e, Add) else Add(a, b.arg)
        return type(e)(a, b)
    if isinstance(e, Mul):
        return simplify_product(Mul(simplify(e.left), simplify(e.right)))
    if isinstance(e, Div):
        a, b = simplify(e.left), simplify(e.right)
        bv = const_value(b)
        if bv is not None and bv != 0:
            return simplify_product(Mul(const(1.0 / bv), a))
        if _is_const(a, 0.0):
            return Num(0.0)
        return Div(a, b)
    if isinstance(e, Pow):
        if e.exponent == 0:
            return Num(1.0)
        return simplify_product(Pow(simplify(e.base), e.exponent))
    if isinstance(e, Func):
        a = simplify(e.arg)
        if e.name == "sqrt":
            return simplify_product(Func("sqrt", a))
        if e.name == "log" and isinstance(a, Func) and a.name == "exp":
            return a.arg
        return Func(e.name, a)
    raise TypeError(e)


def simplify_product(e: Expr) -> Expr:
    coef, factors = _split_product(e)
    return _join_product(coef, factors)


# --------------------------------------------------------------- differentiation


def _d(e: Expr) -> Expr:
    if isinstance(e, Num):
        return Num(0.0)
    if isinstance(e, Var):
        return Num(1.0)
    if isinstance(e, Neg):
        return Neg(_d(e.arg))
    if isinstance(e, Add):
        return Add(_d(e.left), _d(e.right))
    if isinstance(e, Sub):
        return Sub(_d(e.left), _d(e.right))
    if isinstance(e, Mul):
        return Add(Mul(_d(e.left), e.right), Mul(e.left, _d(e.right)))
    if isinstance(e, Div):
        return Div(Sub(Mul(_d(e.left), e.right), Mul(e.left, _d(e.right))), Pow(e.right, 2.0))
    if isinstance(e, Pow):
        p = e.exponent
        if p == 0:
            return Num(0.0)
        inner = Num(1.0) if p == 1 else Pow(e.base, p - 1.0)
        return Mul(Mul(const(p), inner), _d(e.base))
    if isinstance(e, Func):
        u, du = e.arg, _d(e.arg)
        if e.name == "sqrt":
            return Div(du, Mul(Num(2.0), e))
        if e.name == "exp":
            return Mul(e, du)
        if e.name == "log":
            return Div(du, u)
        return Mul(du, Div(u, e))
    raise TypeError(e)


def differentiate(e: Expr) -> Expr:
    """Symbolic d/dy, simplified."""
    return simplify(_d(simplify(e)))


def contains_abs(e: Expr) -> list[Expr]:
    """Arguments of every ``abs(...)`` occurring in ``e``."""
    out = []
    stack = [e]
    while stack:
        n = stack.pop()
        if isinstance(n, Func):
            if n.name == "abs":
                out.append(n.arg)
            stack.append(n.arg)
        elif isinstance(n, BinOp):
            stack += [n.left, n.right]
        elif isinstance(n, Neg):
            stack.append(n.arg)
        elif isinstance(n, Pow):
            stack.append(n.base)
    return out


def as_expr(e) -> Expr:
    """Accept an :class:`Expr`, an expression string or a number."""
    if isinstance(e, Expr):
        return e
    if isinstance(e, (int, float)):
        return const(float(e))
    return parse(str(e))
