"""Noise distributions for exogenous variables.

Only two families are supported: the standard Gaussian and a trapezoidal
density with knots a <= b <= c <= d (linear ramp up on [a, b], flat on
[b, c], linear ramp down on [c, d], normalized to integrate to one).
Degenerate ramps (a == b or c == d) turn into vertical edges, which is how
a flat-top distribution with one square shoulder is written.

Log-density derivatives are defined piecewise and taken as 0 at the knots.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import BadParams

__all__ = ["NoiseDistribution", "StandardGaussian", "Trapezoidal", "dist_from_json"]

_LOG_SQRT_2PI = 0.5 * math.log(2.0 * math.pi)


class NoiseDistribution:
    """Interface shared by the supported noise families."""

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        raise NotImplementedError

    def log_density(self, u):
        raise NotImplementedError

    def dlog_density(self, u):
        """Derivative of the log density (piecewise where applicable)."""
        raise NotImplementedError

    def d2log_density(self, u):
        """Second derivative of the log density."""
        raise NotImplementedError

    def support(self) -> tuple[float, float]:
        return (-np.inf, np.inf)

    def to_json(self) -> dict:
        raise NotImplementedError


@dataclass(frozen=True)
class StandardGaussian(NoiseDistribution):
    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        return rng.standard_normal(n)

    def log_density(self, u):
        return -0.5 * u * u - _LOG_SQRT_2PI

    def dlog_density(self, u):
        return -u

    def d2log_density(self, u):
        return np.zeros_like(np.asarray(u, dtype=float)) - 1.0

    def to_json(self) -> dict:
        return {"kind": "standard_gaussian"}


@dataclass(frozen=True)
class Trapezoidal(NoiseDistribution):
    a: float
    b: float
    c: float
    d: float

    def __post_init__(self):
        if not (self.a <= self.b <= self.c <= self.d):
            raise BadParams(f"trapezoid knots must satisfy a <= b <= c <= d, got {self}")
        if not self.a < self.d:
            raise BadParams("trapezoid support must have positive width (a < d)")

    @property
    def height(self) -> float:
        # area = h * ((d - a) + (c - b)) / 2 = 1
        return 2.0 / ((self.d - self.a) + (self.c - self.b))

    def density(self, u):
        u = np.asarray(u, dtype=float)
        h = self.height
        out = np.zeros_like(u)
        if self.b > self.a:
            ramp = (u >= self.a) & (u < self.b)
            out[ramp] = h * (u[ramp] - self.a) / (self.b - self.a)
        flat = (u >= self.b) & (u <= self.c)
        out[flat] = h
        if self.d > self.c:
            ramp = (u > self.c) & (u <= self.d)
            out[ramp] = h * (self.d - u[ramp]) / (self.d - self.c)
        return out if out.ndim else float(out)

    def log_density(self, u):
        with np.errstate(divide="ignore"):
            out = np.log(self.density(u))
        return out

    def dlog_density(self, u):
        u = np.asarray(u, dtype=float)
        out = np.zeros_like(u)
        if self.b > self.a:
            ramp = (u > self.a) & (u < self.b)
            out[ramp] = 1.0 / (u[ramp] - self.a)
        if self.d > self.c:
            ramp = (u > self.c) & (u < self.d)
            out[ramp] = -1.0 / (self.d - u[ramp])
        return out if out.ndim else float(out)

    def d2log_density(self, u):
        u = np.asarray(u, dtype=float)
        out = np.zeros_like(u)
        if self.b > self.a:
            ramp = (u > self.a) & (u < self.b)
            out[ramp] = -1.0 / (u[ramp] - self.a) ** 2
        if self.d > self.c:
            ramp = (u > self.c) & (u < self.d)
            out[ramp] = -1.0 / (self.d - u[ramp]) ** 2
        return out if out.ndim else float(out)

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        return self.ppf(rng.random(n))

    def ppf(self, q):
        """Inverse CDF, vectorized (used for inverse-transform sampling)."""
        q = np.asarray(q, dtype=float)
        h = self.height
        area_left = 0.5 * h * (self.b - self.a)
        area_flat = h * (self.c - self.b)
        out = np.empty_like(q)
        left = q < area_left
        flat = (~left) & (q < area_left + area_flat)
        right = ~(left | flat)
        if self.b > self.a:
            out[left] = self.a + np.sqrt(2.0 * q[left] * (self.b - self.a) / h)
        else:
            out[left] = self.a
        out[flat] = self.b + (q[flat] - area_left) / h
        if self.d > self.c:
            tail = 1.0 - q[right]
            out[right] = self.d - np.sqrt(2.0 * tail * (self.d - self.c) / h)
        else:
            out[right] = self.d
        return out if out.ndim else float(out)

    def support(self) -> tuple[float, float]:
        return (self.a, self.d)

    def to_json(self) -> dict:
        return {"kind": "trapezoidal", "params": [self.a, self.b, self.c, self.d]}


def dist_from_json(data: dict) -> NoiseDistribution:
    kind = data.get("kind")
    if kind == "standard_gaussian":
        return StandardGaussian()
    if kind == "trapezoidal":
        params = data.get("params")
        if not isinstance(params, (list, tuple)) or len(params) != 4:
            raise BadParams(f"trapezoidal needs params [a, b, c, d], got {params!r}")
        return Trapezoidal(*map(float, params))
    raise BadParams(f"unknown noise distribution kind {kind!r}")
