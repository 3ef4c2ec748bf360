"""Differentiable scalar expression trees over named variables.

Expressions are immutable, reference variables by name, and evaluate
against an environment mapping names to numbers.  Evaluation is generic in
the number type: plain floats, numpy arrays (vectorized over samples), and
the dual-number types from :mod:`causalbias.autodiff` all work, which is
how the same tree serves forward evaluation, batched sampling and
derivative computations.

Step-function nodes (``Indicator``) carry derivative zero everywhere: they
are constant almost everywhere, and the built-in models never route the
treatment variable through an indicator argument.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterator, Mapping, Union

import numpy as np

from .errors import DomainError

Number = Union[float, np.ndarray]

__all__ = [
    "Expr",
    "Const",
    "Var",
    "Add",
    "Sub",
    "Mul",
    "Div",
    "Neg",
    "Exp",
    "Log",
    "Sqrt",
    "Pow",
    "Sigmoid",
    "Indicator",
    "exp",
    "log",
    "sqrt",
    "sigmoid",
    "ind_ge",
    "ind_lt",
    "ind_range",
    "expr_to_json",
    "expr_from_json",
]


def _coerce(x) -> "Expr":
    if isinstance(x, Expr):
        return x
    if isinstance(x, (int, float)):
        return Const(float(x))
    raise TypeError(f"cannot use {type(x).__name__} as an expression")


@dataclass(frozen=True)
class Expr:
    """Base node. Subclasses form the closed set of supported operations."""

    def __add__(self, other):
        return Add(self, _coerce(other))

    def __radd__(self, other):
        return Add(_coerce(other), self)

    def __sub__(self, other):
        return Sub(self, _coerce(other))

    def __rsub__(self, other):
        return Sub(_coerce(other), self)

    def __mul__(self, other):
        return Mul(self, _coerce(other))

    def __rmul__(self, other):
        return Mul(_coerce(other), self)

    def __truediv__(self, other):
        return Div(self, _coerce(other))

    def __rtruediv__(self, other):
        return Div(_coerce(other), self)

    def __pow__(self, other):
        return Pow(self, _coerce(other))

    def __rpow__(self, other):
        return Pow(_coerce(other), self)

    def __neg__(self):
        return Neg(self)

    def children(self) -> tuple["Expr", ...]:
        return ()

    def variables(self) -> frozenset[str]:
        """All variable names referenced anywhere in the tree."""
        out: set[str] = set()
        stack: list[Expr] = [self]
        while stack:
            node = stack.pop()
            if isinstance(node, Var):
                out.add(node.name)
            else:
                stack.extend(node.children())
        return frozenset(out)

    def walk(self) -> Iterator["Expr"]:
        stack: list[Expr] = [self]
        while stack:
            node = stack.pop()
            yield node
            stack.extend(node.children())

    def evaluate(self, env: Mapping[str, object]):
        return evaluate(self, env)


@dataclass(frozen=True)
class Const(Expr):
    value: float


@dataclass(frozen=True)
class Var(Expr):
    name: str


@dataclass(frozen=True)
class Add(Expr):
    left: Expr
    right: Expr

    def children(self):
        return (self.left, self.right)


@dataclass(frozen=True)
class Sub(Expr):
    left: Expr
    right: Expr

    def children(self):
        return (self.left, self.right)


@dataclass(frozen=True)
class Mul(Expr):
    left: Expr
    right: Expr

    def children(self):
        return (self.left, self.right)


@dataclass(frozen=True)
class Div(Expr):
    left: Expr
    right: Expr

    def children(self):
        return (self.left, self.right)


@dataclass(frozen=True)
class Neg(Expr):
    child: Expr

    def children(self):
        return (self.child,)


@dataclass(frozen=True)
class Exp(Expr):
    child: Expr

    def children(self):
        return (self.child,)


@dataclass(frozen=True)
class Log(Expr):
    child: Expr

    def children(self):
        return (self.child,)


@dataclass(frozen=True)
class Sqrt(Expr):
    child: Expr

    def children(self):
        return (self.child,)


@dataclass(frozen=True)
class Pow(Expr):
    base: Expr
    exponent: Expr

    def children(self):
        return (self.base, self.exponent)


@dataclass(frozen=True)
class Sigmoid(Expr):
    child: Expr

    def children(self):
        return (self.child,)


@dataclass(frozen=True)
class Indicator(Expr):
    """Step function of the child value; derivative is 0 everywhere.

    kind "ge": 1 if child >= lo; "lt": 1 if child < hi;
    kind "range": 1 if lo <= child < hi.
    """

    child: Expr
    kind: str  # "ge" | "lt" | "range"
    lo: float | None = None
    hi: float | None = None

    def __post_init__(self):
        if self.kind not in ("ge", "lt", "range"):
            raise ValueError(f"unknown indicator kind {self.kind!r}")
        if self.kind in ("ge", "range") and self.lo is None:
            raise ValueError("indicator needs a lower threshold")
        if self.kind in ("lt", "range") and self.hi is None:
            raise ValueError("indicator needs an upper threshold")

    def children(self):
        return (self.child,)


# -- convenience constructors used when writing models by hand --------------


def exp(x) -> Expr:
    return Exp(_coerce(x))


def log(x) -> Expr:
    return Log(_coerce(x))


def sqrt(x) -> Expr:
    return Sqrt(_coerce(x))


def sigmoid(x) -> Expr:
    return Sigmoid(_coerce(x))


def ind_ge(x, threshold: float) -> Expr:
    return Indicator(_coerce(x), "ge", lo=float(threshold))


def ind_lt(x, threshold: float) -> Expr:
    return Indicator(_coerce(x), "lt", hi=float(threshold))


def ind_range(x, lo: float, hi: float) -> Expr:
    return Indicator(_coerce(x), "range", lo=float(lo), hi=float(hi))


# -- numeric kernels ---------------------------------------------------------
#
# Dual-number types implement .exp()/.log()/... themselves; everything else
# goes through numpy.  Domain checks run on the plain value in both cases.


def _plain(x) -> Number:
    return x.val if hasattr(x, "val") else x


def _exp(x):
    return x.exp() if hasattr(x, "exp") else np.exp(x)


def _log(x):
    v = _plain(x)
    if np.any(np.asarray(v) <= 0.0):
        raise DomainError("log of a non-positive value")
    return x.log() if hasattr(x, "log") else np.log(x)


def _sqrt(x):
    v = _plain(x)
    if np.any(np.asarray(v) < 0.0):
        raise DomainError("sqrt of a negative value")
    return x.sqrt() if hasattr(x, "sqrt") else np.sqrt(x)


def _sigmoid_np(v):
    out = np.empty_like(v, dtype=float) if isinstance(v, np.ndarray) else None
    if out is None:
        return 1.0 / (1.0 + math.exp(-v)) if v >= 0 else math.exp(v) / (1.0 + math.exp(v))
    pos = v >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-v[pos]))
    ev = np.exp(v[~pos])
    out[~pos] = ev / (1.0 + ev)
    return out


def _sigmoid(x):
    return x.sigmoid() if hasattr(x, "sigmoid") else _sigmoid_np(x)


def _div(a, b):
    if np.any(np.asarray(_plain(b)) == 0.0):
        raise DomainError("division by zero")
    return a / b


def _pow(base, expo_node: Expr, base_val, expo_val):
    # Constant exponents use the power rule (integer exponents admit negative
    # bases); everything else goes through exp(e*log(b)) and needs b > 0.
    if isinstance(expo_node, Const):
        e = expo_node.value
        if float(e).is_integer():
            return base_val ** int(e)
        if np.any(np.asarray(_plain(base_val)) < 0.0):
            raise DomainError("fractional power of a negative value")
        return base_val**e
    return _exp(_mul_generic(expo_val, _log(base_val)))


def _mul_generic(a, b):
    return a * b


def _indicator_raw(v, kind: str, lo, hi):
    if kind == "ge":
        raw = v >= lo
    elif kind == "lt":
        raw = v < hi
    else:
        raw = (v >= lo) & (v < hi)
    if isinstance(raw, np.ndarray):
        return raw.astype(float)
    return float(raw)


def evaluate(node: Expr, env: Mapping[str, object]):
    """Evaluate ``node`` against ``env`` (variable name -> number-like)."""
    if isinstance(node, Const):
        return node.value
    if isinstance(node, Var):
        try:
            return env[node.name]
        except KeyError:
            from .errors import UnknownVariable

            raise UnknownVariable(f"no value for variable {node.name!r}") from None
    if isinstance(node, Add):
        return evaluate(node.left, env) + evaluate(node.right, env)
    if isinstance(node, Sub):
        return evaluate(node.left, env) - evaluate(node.right, env)
    if isinstance(node, Mul):
        return evaluate(node.left, env) * evaluate(node.right, env)
    if isinstance(node, Div):
        return _div(evaluate(node.left, env), evaluate(node.right, env))
    if isinstance(node, Neg):
        return -evaluate(node.child, env)
    if isinstance(node, Exp):
        return _exp(evaluate(node.child, env))
    if isinstance(node, Log):
        return _log(evaluate(node.child, env))
    if isinstance(node, Sqrt):
        return _sqrt(evaluate(node.child, env))
    if isinstance(node, Sigmoid):
        return _sigmoid(evaluate(node.child, env))
    if isinstance(node, Pow):
        bv = evaluate(node.base, env)
        ev = evaluate(node.exponent, env)
        return _pow(node.base, node.exponent, bv, ev)
    if isinstance(node, Indicator):
        cv = evaluate(node.child, env)
        raw = _indicator_raw(_plain(cv), node.kind, node.lo, node.hi)
        if hasattr(cv, "constant_like"):
            return cv.constant_like(raw)
        return raw
    raise TypeError(f"unknown expression node {type(node).__name__}")


# -- JSON (prefix-notation) serialization ------------------------------------

_BINARY = {"add": Add, "sub": Sub, "mul": Mul, "div": Div}
_UNARY = {"neg": Neg, "exp": Exp, "log": Log, "sqrt": Sqrt, "sigmoid": Sigmoid}


def expr_to_json(node: Expr) -> list:
    """Prefix-notation JSON form, e.g. ``["add", ["var", "A"], ["const", 1.0]]``."""
    if isinstance(node, Const):
        return ["const", node.value]
    if isinstance(node, Var):
        return ["var", node.name]
    for name, cls in _BINARY.items():
        if isinstance(node, cls):
            return [name, expr_to_json(node.left), expr_to_json(node.right)]
    for name, cls in _UNARY.items():
        if isinstance(node, cls):
            return [name, expr_to_json(node.child)]
    if isinstance(node, Pow):
        return ["pow", expr_to_json(node.base), expr_to_json(node.exponent)]
    if isinstance(node, Indicator):
        if node.kind == "ge":
            return ["ind_ge", expr_to_json(node.child), node.lo]
        if node.kind == "lt":
            return ["ind_lt", expr_to_json(node.child), node.hi]
        return ["ind_range", expr_to_json(node.child), node.lo, node.hi]
    raise TypeError(f"unknown expression node {type(node).__name__}")


def expr_from_json(data) -> Expr:
    if not isinstance(data, (list, tuple)) or not data:
        raise ValueError(f"malformed expression JSON: {data!r}")
    op = data[0]
    if op == "const":
        return Const(float(data[1]))
    if op == "var":
        return Var(str(data[1]))
    if op in _BINARY:
        return _BINARY[op](expr_from_json(data[1]), expr_from_json(data[2]))
    if op in _UNARY:
        return _UNARY[op](expr_from_json(data[1]))
    if op == "pow":
        return Pow(expr_from_json(data[1]), expr_from_json(data[2]))
    if op == "ind_ge":
        return Indicator(expr_from_json(data[1]), "ge", lo=float(data[2]))
    if op == "ind_lt":
        return Indicator(expr_from_json(data[1]), "lt", hi=float(data[2]))
    if op == "ind_range":
        return Indicator(expr_from_json(data[1]), "range", lo=float(data[2]), hi=float(data[3]))
    raise ValueError(f"unknown expression operator {op!r}")
