"""Forward-mode differentiation and structural-equation inversion.

Two number types drive everything:

``Dual``
    value plus a stack of first-order tangents, one row per seed direction.
    Values may be scalars or 1-d sample batches; tangents broadcast over the
    batch axis, so one evaluation of an expression tree yields derivatives
    for every sample at once.  All duals taking part in one evaluation must
    share the same number of seed directions.

``SecondOrder``
    scalar value, gradient vector and Hessian matrix, propagated jointly in
    a single pass (used for curvature at posterior modes).

Latent dimensions in the supported models are small (<= 8), so forward
mode is both simpler and exact; there is deliberately no tape.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Mapping, Sequence

import numpy as np

from .errors import NoRoot, NonFiniteEntry, NotInvertible
from .expr import (
    Add,
    Const,
    Div,
    Exp,
    Expr,
    Log,
    Mul,
    Neg,
    Pow,
    Sigmoid,
    Sub,
    Var,
    evaluate,
)

__all__ = [
    "Dual",
    "SecondOrder",
    "gradient",
    "hessian",
    "plan_inversion",
    "InversionPlan",
    "solve_noise",
    "invert_in_noise",
]


def _sigmoid_val(v):
    v = np.asarray(v, dtype=float)
    out = np.empty_like(v)
    pos = v >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-v[pos]))
    ev = np.exp(v[~pos])
    out[~pos] = ev / (1.0 + ev)
    return float(out) if out.ndim == 0 else out


class Dual:
    """First-order forward-mode number: value plus tangent rows.

    ``tan`` is either None (identically-zero tangents, the common case for
    constants) or an array of shape ``(n_seeds,) + shape(val)``.
    """

    __slots__ = ("val", "tan")

    # keep numpy from absorbing duals into object arrays; binary ops then
    # fall back to the __r*__ methods below
    __array_ufunc__ = None

    def __init__(self, val, tan=None):
        self.val = val
        self.tan = tan

    @staticmethod
    def seed(val, index: int, n_seeds: int) -> "Dual":
        """A value whose derivative is 1 along seed direction ``index``."""
        arr = np.asarray(val, dtype=float)
        tan = np.zeros((n_seeds,) + arr.shape)
        tan[index] = 1.0
        return Dual(arr if arr.ndim else float(arr), tan)

    def constant_like(self, values) -> "Dual":
        return Dual(values, None)

    def tangent(self, index: int):
        if self.tan is None:
            return np.zeros(np.shape(self.val))
        return self.tan[index]

    def _lift(self, other) -> "Dual":
        return other if isinstance(other, Dual) else Dual(other, None)

    def __add__(self, other):
        o = self._lift(other)
        if self.tan is None:
            t = o.tan
        elif o.tan is None:
            t = self.tan
        else:
            t = self.tan + o.tan
        return Dual(self.val + o.val, t)

    __radd__ = __add__

    def __sub__(self, other):
        o = self._lift(other)
        if self.tan is None:
            t = None if o.tan is None else -o.tan
        elif o.tan is None:
            t = self.tan
        else:
            t = self.tan - o.tan
        return Dual(self.val - o.val, t)

    def __rsub__(self, other):
        return self._lift(other).__sub__(self)

    def __mul__(self, other):
        o = self._lift(other)
        if self.tan is None and o.tan is None:
            t = None
        elif self.tan is None:
            t = o.tan * self.val
        elif o.tan is None:
            t = self.tan * o.val
        else:
            t = self.tan * o.val + o.tan * self.val
        return Dual(self.val * o.val, t)

    __rmul__ = __mul__

    def __truediv__(self, other):
        o = self._lift(other)
        inv = 1.0 / o.val
        val = self.val * inv
        if self.tan is None and o.tan is None:
            t = None
        elif o.tan is None:
            t = self.tan * inv
        elif self.tan is None:
            t = -o.tan * (val * inv)
        else:
            t = self.tan * inv - o.tan * (val * inv)
        return Dual(val, t)

    def __rtruediv__(self, other):
        return self._lift(other).__truediv__(self)

    def __neg__(self):
        return Dual(-self.val, None if self.tan is None else -self.tan)

    def __pow__(self, e):
        if isinstance(e, Dual):
            return (e * self.log()).exp()
        val = self.val**e
        if self.tan is None:
            return Dual(val, None)
        return Dual(val, self.tan * (e * self.val ** (e - 1)))

    def _chain(self, val, dval):
        return Dual(val, None if self.tan is None else self.tan * dval)

    def exp(self):
        v = np.exp(self.val)
        return self._chain(v, v)

    def log(self):
        return self._chain(np.log(self.val), 1.0 / self.val)

    def sqrt(self):
        v = np.sqrt(self.val)
        return self._chain(v, 0.5 / v)

    def sigmoid(self):
        s = _sigmoid_val(self.val)
        return self._chain(s, s * (1.0 - s))


class SecondOrder:
    """Forward-over-forward scalar: value, gradient and Hessian together."""

    __slots__ = ("val", "g", "h")

    __array_ufunc__ = None

    def __init__(self, val: float, g=None, h=None):
        self.val = float(val)
        self.g = g
        self.h = h

    @staticmethod
    def seed(val: float, index: int, dim: int) -> "SecondOrder":
        g = np.zeros(dim)
        g[index] = 1.0
        return SecondOrder(val, g, None)

    def constant_like(self, values) -> "SecondOrder":
        return SecondOrder(float(values), None, None)

    def _lift(self, other) -> "SecondOrder":
        return other if isinstance(other, SecondOrder) else SecondOrder(float(other), None, None)

    @staticmethod
    def _add(a, b):
        if a is None:
            return b
        if b is None:
            return a
        return a + b

    @staticmethod
    def _scale(a, s):
        return None if a is None else a * s

    @staticmethod
    def _sym_outer(a, b):
        if a is None or b is None:
            return None
        o = np.outer(a, b)
        return o + o.T

    def __add__(self, other):
        o = self._lift(other)
        return SecondOrder(self.val + o.val, self._add(self.g, o.g), self._add(self.h, o.h))

    __radd__ = __add__

    def __sub__(self, other):
        o = self._lift(other)
        return SecondOrder(
            self.val - o.val,
            self._add(self.g, self._scale(o.g, -1.0)),
            self._add(self.h, self._scale(o.h, -1.0)),
        )

    def __rsub__(self, other):
        return self._lift(other).__sub__(self)

    def __mul__(self, other):
        o = self._lift(other)
        g = self._add(self._scale(self.g, o.val), self._scale(o.g, self.val))
        h = self._add(
            self._add(self._scale(self.h, o.val), self._scale(o.h, self.val)),
            self._sym_outer(self.g, o.g),
        )
        return SecondOrder(self.val * o.val, g, h)

    __rmul__ = __mul__

    def _compose(self, f, df, d2f):
        g = self._scale(self.g, df)
        h = self._add(
            self._scale(self.h, df),
            None if self.g is None else np.outer(self.g, self.g) * d2f,
        )
        return SecondOrder(f, g, h)

    def __truediv__(self, other):
        o = self._lift(other)
        return self * o._compose(1.0 / o.val, -1.0 / o.val**2, 2.0 / o.val**3)

    def __rtruediv__(self, other):
        return self._lift(other).__truediv__(self)

    def __neg__(self):
        return SecondOrder(-self.val, self._scale(self.g, -1.0), self._scale(self.h, -1.0))

    def __pow__(self, e):
        if isinstance(e, SecondOrder):
            return (e * self.log()).exp()
        v = self.val
        return self._compose(v**e, e * v ** (e - 1), e * (e - 1) * v ** (e - 2))

    def exp(self):
        v = math.exp(self.val)
        return self._compose(v, v, v)

    def log(self):
        v = self.val
        return self._compose(math.log(v), 1.0 / v, -1.0 / v**2)

    def sqrt(self):
        v = math.sqrt(self.val)
        return self._compose(v, 0.5 / v, -0.25 / v**3)

    def sigmoid(self):
        s = _sigmoid_val(self.val)
        ds = s * (1.0 - s)
        return self._compose(s, ds, ds * (1.0 - 2.0 * s))


def _as_callable(f) -> Callable[[Mapping[str, object]], object]:
    if isinstance(f, Expr):
        return lambda env: evaluate(f, env)
    return f


def gradient(f, point: Mapping[str, float], wrt: Sequence[str]) -> np.ndarray:
    """Exact forward-mode gradient of ``f`` at ``point`` along ``wrt``.

    ``f`` is an :class:`~causalbias.expr.Expr` or a callable taking an
    environment of dual numbers.  Names in ``point`` not listed in ``wrt``
    are held constant.
    """
    fn = _as_callable(f)
    k = len(wrt)
    index = {name: i for i, name in enumerate(wrt)}
    for name in wrt:
        if name not in point:
            raise KeyError(f"point has no value for {name!r}")
    env = {
        name: Dual.seed(float(v), index[name], k) if name in index else Dual(float(v), None)
        for name, v in point.items()
    }
    out = fn(env)
    if not isinstance(out, Dual) or out.tan is None:
        return np.zeros(k)
    return np.asarray(out.tan, dtype=float).reshape(k)


def hessian(f, point: Mapping[str, float], wrt: Sequence[str]) -> np.ndarray:
    """Symmetric Hessian of scalar ``f`` at ``point`` along ``wrt``.

    One forward-over-forward pass; symmetry is enforced by averaging with
    the transpose before returning.
    """
    fn = _as_callable(f)
    d = len(wrt)
    index = {name: i for i, name in enumerate(wrt)}
    env = {
        name: SecondOrder.seed(float(v), index[name], d)
        if name in index
        else SecondOrder(float(v), None, None)
        for name, v in point.items()
    }
    out = fn(env)
    if not isinstance(out, SecondOrder) or out.h is None:
        return np.zeros((d, d))
    h = np.asarray(out.h, dtype=float)
    if not np.all(np.isfinite(h)):
        raise NonFiniteEntry("Hessian has non-finite entries")
    return 0.5 * (h + h.T)


# -- inversion of a structural equation in its own noise ---------------------

AFFINE = "affine"
LINKED = "linked"
ABSENT = "absent"
NONLINEAR = "nonlinear"


def _shape_in(node: Expr, noise: str) -> str:
    """How ``node`` depends on ``noise``: absent, affine, or nonlinear."""
    if isinstance(node, Const):
        return ABSENT
    if isinstance(node, Var):
        return AFFINE if node.name == noise else ABSENT
    if isinstance(node, (Add, Sub)):
        a = _shape_in(node.left, noise)
        b = _shape_in(node.right, noise)
        if NONLINEAR in (a, b):
            return NONLINEAR
        return AFFINE if AFFINE in (a, b) else ABSENT
    if isinstance(node, Neg):
        return _shape_in(node.child, noise)
    if isinstance(node, Mul):
        a = _shape_in(node.left, noise)
        b = _shape_in(node.right, noise)
        if a == ABSENT:
            return b
        if b == ABSENT:
            return a
        return NONLINEAR
    if isinstance(node, Div):
        if _shape_in(node.right, noise) == ABSENT:
            return _shape_in(node.left, noise)
        return NONLINEAR
    if isinstance(node, Pow):
        if _shape_in(node.base, noise) == ABSENT and _shape_in(node.exponent, noise) == ABSENT:
            return ABSENT
        return NONLINEAR
    # remaining unary wrappers (exp/log/sqrt/sigmoid/indicator)
    child = node.children()[0]
    return ABSENT if _shape_in(child, noise) == ABSENT else NONLINEAR


@dataclass(frozen=True)
class InversionPlan:
    """Cached solve strategy for one structural equation in its own noise."""

    kind: str  # AFFINE | LINKED | NONLINEAR
    link: str | None = None  # for LINKED: "sigmoid" | "exp" | "log"
    inner: Expr | None = None  # for LINKED: the affine argument of the link


_LINK_CLASSES = {Sigmoid: "sigmoid", Exp: "exp", Log: "log"}


def plan_inversion(expression: Expr, noise: str) -> InversionPlan:
    shape = _shape_in(expression, noise)
    if shape == ABSENT:
        raise NotInvertible(f"noise {noise!r} does not appear in the equation")
    if shape == AFFINE:
        return InversionPlan(AFFINE)
    for cls, name in _LINK_CLASSES.items():
        if isinstance(expression, cls):
            child = expression.children()[0]
            if _shape_in(child, noise) == AFFINE:
                return InversionPlan(LINKED, link=name, inner=child)
    return InversionPlan(NONLINEAR)


def _affine_parts(expression: Expr, noise: str, env: Mapping[str, object]):
    """Intercept and slope of an expression known to be affine in ``noise``.

    Two evaluations with the noise pinned to 0 and 1 keep the arithmetic in
    whatever number type the environment carries, so tangents flow through.
    """
    at0 = dict(env)
    at0[noise] = 0.0
    f0 = evaluate(expression, at0)
    at1 = dict(env)
    at1[noise] = 1.0
    f1 = evaluate(expression, at1)
    return f0, f1 - f0


def _pullback(link: str, target):
    """Inverse link applied to a target value; NoRoot outside the range."""
    t = np.asarray(target, dtype=float)
    if link == "sigmoid":
        if np.any(t <= 0.0) or np.any(t >= 1.0):
            raise NoRoot("sigmoid-valued equation: target outside (0, 1)")
        return np.log(t) - np.log1p(-t)
    if link == "exp":
        if np.any(t <= 0.0):
            raise NoRoot("exp-valued equation: target must be positive")
        return np.log(t)
    return np.exp(t)  # log link


def _link_derivative(link: str, target):
    """d(link)/d(argument) expressed through the target value alone."""
    if link == "sigmoid":
        return target * (1.0 - target)
    if link == "exp":
        return target
    return np.exp(-target) if not isinstance(target, Dual) else (-target).exp()


_PROBE_POINTS = 32


def _newton_solve(expression: Expr, noise: str, target: float, env: Mapping[str, float]):
    """Safeguarded Newton with bracket expansion and bisection polish."""

    def f(u: float) -> float:
        local = dict(env)
        local[noise] = u
        return float(evaluate(expression, local))

    def df(u: float) -> float:
        local = dict(env)
        local[noise] = Dual(u, np.ones((1,)))
        out = evaluate(expression, local)
        return float(out.tangent(0)) if isinstance(out, Dual) else 0.0

    lo = hi = 0.0
    flo = fhi = f(0.0) - target
    width = 1.0
    while flo * fhi > 0.0:
        lo, hi = -width, width
        flo, fhi = f(lo) - target, f(hi) - target
        width *= 2.0
        if width > 2e6:
            raise NoRoot(f"no bracket for target {target} within |u| <= 1e6")
    probes = np.linspace(lo if lo < hi else -1.0, hi if lo < hi else 1.0, _PROBE_POINTS)
    signs = np.sign([df(u) for u in probes])
    if np.any(signs == 0.0) or signs.min() != signs.max():
        raise NotInvertible(f"equation is not strictly monotone in {noise!r}")

    u = 0.5 * (lo + hi)
    for _ in range(200):
        fu = f(u) - target
        if fu == 0.0:
            break
        if fu * flo > 0.0:
            lo, flo = u, fu
        else:
            hi, fhi = u, fu
        d = df(u)
        candidate = u - fu / d if d != 0.0 else 0.5 * (lo + hi)
        if not (min(lo, hi) < candidate < max(lo, hi)):
            candidate = 0.5 * (lo + hi)
        if abs(candidate - u) <= 1e-12 * max(1.0, abs(u)) and abs(fu) <= 1e-10:
            u = candidate
            break
        u = candidate
    residual = f(u) - target
    if abs(residual) > 1e-10:
        raise NoRoot(f"inversion residual {residual:.3e} above tolerance 1e-10")
    slope = df(u)
    return u, slope


def solve_noise(expression: Expr, noise: str, target, env: Mapping[str, object], plan: InversionPlan):
    """Solve f(parents, u) = target for u; also return df/du at the solution.

    Affine and link-wrapped-affine equations are solved in closed form, and
    the arithmetic runs on whatever number type ``env``/``target`` carry,
    so derivative seeds propagate through the solve.  Nonlinear equations
    use scalar safeguarded Newton-bisection on plain values (batched by
    looping; duals are not supported there).
    """
    if plan.kind == AFFINE:
        intercept, slope = _affine_parts(expression, noise, env)
        z = target
    elif plan.kind == LINKED:
        intercept, slope = _affine_parts(plan.inner, noise, env)
        plain = target.val if isinstance(target, Dual) else target
        z = _pullback(plan.link, plain)
        if isinstance(target, Dual) and target.tan is not None:
            dz = 1.0 / np.asarray(_link_derivative(plan.link, plain), dtype=float)
            z = Dual(z, target.tan * dz)
        elif isinstance(target, Dual):
            z = Dual(z, None)
    else:
        if isinstance(target, Dual) and target.tan is not None or any(
            isinstance(v, Dual) and v.tan is not None for v in env.values()
        ):
            raise NotInvertible(
                "equation is nonlinear in its noise: the analytic solve needed "
                "to propagate derivatives is unavailable"
            )
        plain_env = {k: (v.val if isinstance(v, Dual) else v) for k, v in env.items()}
        t = np.asarray(target.val if isinstance(target, Dual) else target, dtype=float)
        if t.ndim == 0:
            return _newton_solve(expression, noise, float(t), plain_env)
        u = np.empty(t.shape)
        dfdu = np.empty(t.shape)
        for i in np.ndindex(t.shape):
            local = {
                k: (float(np.asarray(v)[i]) if np.ndim(v) else float(v))
                for k, v in plain_env.items()
            }
            u[i], dfdu[i] = _newton_solve(expression, noise, float(t[i]), local)
        return u, dfdu

    slope_plain = slope.val if isinstance(slope, Dual) else slope
    if np.any(np.asarray(slope_plain) == 0.0):
        raise NotInvertible(f"zero slope in {noise!r}: equation not invertible here")
    u_star = (z - intercept) / slope
    if plan.kind == LINKED:
        dfdu = _link_derivative(plan.link, target) * slope
    else:
        dfdu = slope
    return u_star, dfdu


def invert_in_noise(scm, variable: str, target: float, parent_values: Mapping[str, float]) -> float:
    """Noise value that makes one structural equation hit ``target``.

    ``parent_values`` must assign every variable the equation reads.  The
    solve is analytic when the noise enters affinely (optionally through a
    single outer sigmoid/exp/log link) and falls back to safeguarded
    Newton-bisection otherwise; the forward residual is at most 1e-10.
    """
    expression = scm.expression_of(variable)
    noise = scm.noise_of(variable)
    if noise is None:
        raise NotInvertible(f"{variable!r} has no noise term of its own")
    env = {name: float(value) for name, value in parent_values.items()}
    plan = scm.inversion_plan(variable)
    u, _ = solve_noise(expression, noise, float(target), env, plan)
    return float(u)
