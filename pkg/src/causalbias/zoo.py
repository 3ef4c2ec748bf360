"""Built-in models: three linear bias archetypes, a nonlinear
confounding-vs-overcontrol model, and a simulated statin/ASCVD study.

The linear models (confounding, overcontrol, selection) come with exact
closed forms for association, average partial effect and bias, which serve
as oracles for the estimators.  The ASCVD model is a nine-variable
nonlinear simulation of statin dosing: age A, pre-treatment LDL L (on log
scale), frailty F, diabetes D, risk score R, dose intensity X in (0, 1),
post-treatment LDL M, disease incidence Y and headache H.  D and H are
kept continuous in [0, 1] (they are sigmoid outputs); R is a deterministic
function of its inputs and carries no noise term of its own.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .dists import StandardGaussian, Trapezoidal
from .errors import BadParams, EmptyGroup, UnknownModel
from .expr import Var, exp, ind_ge, ind_lt, ind_range, log, sigmoid, sqrt
from .scm import Dataset, Roles, Scm, build_scm

__all__ = [
    "LinearModelParams",
    "AscvdParams",
    "builtin",
    "builtin_names",
    "closed_form",
    "ascvd_summary",
]


@dataclass(frozen=True)
class LinearModelParams:
    alpha: float = 1.0
    beta: float = 1.0
    gamma: float = 1.0
    delta: float = 1.0  # used by the lesser-evil model only

    def __post_init__(self):
        for name in ("alpha", "beta", "gamma", "delta"):
            if not np.isfinite(getattr(self, name)):
                raise BadParams(f"parameter {name} must be finite")


_ASCVD_LENGTHS = {
    "theta_l": 3,
    "theta_f": 5,
    "theta_d": 5,
    "theta_r": 7,
    "theta_x": 11,
    "theta_m": 4,
    "theta_y": 11,
    "theta_h": 4,
}


@dataclass(frozen=True)
class AscvdParams:
    theta_l: tuple = (0.005, math.log(100.0), math.log(0.18))
    theta_f: tuple = (-5.5, 0.05, -20.0, 0.001, math.log(1.1))
    theta_d: tuple = (-4.23, 0.03, -0.02, 0.0009, math.log(1.6))
    theta_r: tuple = (4.3, 3.5, -2.07, 0.05, 4.09, -1.04, 0.01)
    theta_x: tuple = (
        -30.0,
        0.273,
        1.592,
        2.461,
        -3.471,
        1.39,
        0.112,
        0.973,
        -0.046,
        0.003,
        math.log(1.7),
    )
    theta_m: tuple = (0.1, -3.5, 5.0, 0.0)
    theta_y: tuple = (
        -39.0,
        1.4,
        -math.log(110.0),
        -6.25,
        -0.75,
        -0.1,
        0.45,
        1.75,
        0.29,
        0.1,
        math.log(0.9),
    )
    theta_h: tuple = (-1.7, 0.8, 1.5, math.log(0.5))

    def __post_init__(self):
        for name, length in _ASCVD_LENGTHS.items():
            values = getattr(self, name)
            if len(values) != length:
                raise BadParams(f"{name} must have length {length}, got {len(values)}")
            if not all(np.isfinite(v) for v in values):
                raise BadParams(f"{name} must contain only finite values")


def builtin_names() -> tuple[str, ...]:
    return ("confounding", "overcontrol", "selection", "lesser-evil", "ascvd")


def builtin(name: str, params=None) -> Scm:
    """Construct a built-in model by name.

    Linear models take :class:`LinearModelParams`; the ASCVD model takes
    :class:`AscvdParams`.  Omitting ``params`` uses the defaults.
    """
    if name == "confounding":
        p = params or LinearModelParams()
        return build_scm(
            [("U_V1", StandardGaussian()), ("U_X", StandardGaussian()), ("U_Y", StandardGaussian())],
            [
                ("V1", Var("U_V1")),
                ("X", p.alpha * Var("V1") + Var("U_X")),
                ("Y", p.beta * Var("X") + p.gamma * Var("V1") + Var("U_Y")),
            ],
            Roles("X", "Y", frozenset(), frozenset({"V1"})),
        )
    if name == "overcontrol":
        p = params or LinearModelParams()
        return build_scm(
            [("U_X", StandardGaussian()), ("U_V1", StandardGaussian()), ("U_Y", StandardGaussian())],
            [
                ("X", Var("U_X")),
                ("V1", p.alpha * Var("X") + Var("U_V1")),
                ("Y", p.beta * Var("X") + p.gamma * Var("V1") + Var("U_Y")),
            ],
            Roles("X", "Y", frozenset({"V1"}), frozenset()),
        )
    if name == "selection":
        p = params or LinearModelParams()
        return build_scm(
            [("U_X", StandardGaussian()), ("U_Y", StandardGaussian()), ("U_V1", StandardGaussian())],
            [
                ("X", Var("U_X")),
                ("Y", p.alpha * Var("X") + Var("U_Y")),
                ("V1", p.beta * Var("X") + p.gamma * Var("Y") + Var("U_V1")),
            ],
            Roles("X", "Y", frozenset({"V1"}), frozenset()),
        )
    if name == "lesser-evil":
        p = params or LinearModelParams()
        return build_scm(
            [
                ("U_V1", StandardGaussian()),
                ("U_X", StandardGaussian()),
                ("U_V2", StandardGaussian()),
                ("U_Y", StandardGaussian()),
            ],
            [
                ("V1", Var("U_V1")),
                ("X", p.alpha * exp(Var("V1")) + Var("U_X")),
                ("V2", p.beta * Var("X") + p.gamma * Var("V1") ** 2 + Var("U_V2")),
                ("Y", p.delta * Var("V2") + Var("U_Y")),
            ],
            Roles("X", "Y", frozenset(), frozenset({"V1", "V2"})),
        )
    if name == "ascvd":
        return _ascvd(params or AscvdParams())
    raise UnknownModel(f"no built-in model named {name!r}; known: {builtin_names()}")


def _ascvd(p: AscvdParams) -> Scm:
    tl, tf, td, tr = p.theta_l, p.theta_f, p.theta_d, p.theta_r
    tx, tm, ty, th = p.theta_x, p.theta_m, p.theta_y, p.theta_h
    A, L, F, D, R, X, M, Y = (Var(v) for v in ("A", "L", "F", "D", "R", "X", "M", "Y"))

    exogenous = [
        ("U_A", Trapezoidal(40.0, 40.0, 60.0, 75.0)),
        ("U_L", StandardGaussian()),
        ("U_F", StandardGaussian()),
        ("U_D", StandardGaussian()),
        ("U_X", StandardGaussian()),
        ("U_M", StandardGaussian()),
        ("U_Y", StandardGaussian()),
        ("U_H", StandardGaussian()),
    ]
    endogenous = [
        ("A", Var("U_A")),
        ("L", tl[0] * A + tl[1] + math.exp(tl[2]) * Var("U_L")),
        ("F", sigmoid(tf[0] + tf[1] * (A + tf[2]) + tf[3] * A**2 + math.exp(tf[4]) * Var("U_F"))),
        (
            "D",
            sigmoid(td[0] + td[1] * L + td[2] * A + td[3] * A**2 + math.exp(td[4]) * Var("U_D")),
        ),
        (
            "R",
            sigmoid(
                tr[0]
                + tr[1] * D
                + tr[2] * log(A)
                + tr[3] * log(A) ** 2
                + tr[4] * L
                + tr[5] * log(A) * L
                + tr[6] * F
            ),
        ),
        (
            "X",
            sigmoid(
                tx[1] * ind_range(R, 0.05, 0.075)
                + tx[2] * ind_range(R, 0.075, 0.2)
                + tx[3] * ind_ge(R, 0.2)
                + tx[4]
                + tx[5] * ind_ge(D, 0.5)
                + tx[6] * L
                + tx[7] * ind_ge(L, math.log(160.0))
                + tx[8] * (A + tx[0])
                + tx[9] * (A + tx[0]) ** 2
                + math.exp(tx[10]) * Var("U_X")
            ),
        ),
        (
            "M",
            L + tm[0] + tm[1] * X * (tm[2] - L) * ind_lt(L, math.log(130.0)) + math.exp(tm[3]) * Var("U_M"),
        ),
        (
            "Y",
            sigmoid(
                ty[3]
                + ty[4] * X
                + ty[5] * M
                + ty[6] * sqrt(A + ty[0])
                + ty[7] * D
                + ty[8] * exp(1.0 + R)
                + ty[9] * (L + ty[1] * sigmoid(10.0 * (L + ty[2])) * L**2)
                + math.exp(ty[10]) * Var("U_Y")
            ),
        ),
        ("H", sigmoid(th[0] + th[1] * X + th[2] * Y + math.exp(th[3]) * Var("U_H"))),
    ]
    roles = Roles("X", "Y", frozenset({"A", "L", "F", "D"}), frozenset({"R", "M", "H"}))
    return build_scm(exogenous, endogenous, roles)


def closed_form(name: str, params: LinearModelParams | None = None) -> tuple[float, float, float]:
    """Exact (association, effect, bias) for the three linear models."""
    p = params or LinearModelParams()
    a, b, g = p.alpha, p.beta, p.gamma
    if name == "confounding":
        bias = g * a / (1.0 + a * a)
        return (b + bias, b, bias)
    if name == "overcontrol":
        return (b, b + g * a, -g * a)
    if name == "selection":
        return ((a - g * b) / (1.0 + g * g), a, -g * (b + g * a) / (1.0 + g * g))
    raise UnknownModel(f"no closed form for {name!r}; known: confounding, overcontrol, selection")


_MEAN_COLUMNS = {
    "age": "A",
    "log_pre_ldl": "L",
    "log_post_ldl": "M",
    "risk_score": "R",
    "ascvd": "Y",
}

# diabetes and headache are "whether the patient had it" shares: the
# generator keeps them continuous in [0, 1], and the summary reports the
# fraction of rows where the value crosses 1/2
_SHARE_COLUMNS = {"diabetes": "D", "headache": "H"}


def ascvd_summary(dataset: Dataset, statin_threshold: float = 0.5) -> dict[str, dict[str, float]]:
    """Per-group (dose >= threshold vs. below) sizes and covariate summaries."""
    x = dataset.column("X")
    masks = {"statin": x >= statin_threshold, "no_statin": x < statin_threshold}
    out: dict[str, dict[str, float]] = {}
    for group, mask in masks.items():
        size = int(np.sum(mask))
        if size == 0:
            raise EmptyGroup(f"group {group!r} is empty at threshold {statin_threshold}")
        row: dict[str, float] = {"size": size}
        for label, column in _MEAN_COLUMNS.items():
            row[label] = float(np.mean(dataset.column(column)[mask]))
        for label, column in _SHARE_COLUMNS.items():
            row[label] = float(np.mean(dataset.column(column)[mask] >= 0.5))
        out[group] = row
    return out
