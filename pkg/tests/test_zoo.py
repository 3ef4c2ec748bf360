import math

import numpy as np
import pytest

from causalbias.errors import BadParams, EmptyGroup, UnknownModel
from causalbias.scm import evaluate_endogenous, sample_observational
from causalbias.zoo import (
    AscvdParams,
    LinearModelParams,
    ascvd_summary,
    builtin,
    builtin_names,
    closed_form,
)


def test_builtin_names_and_unknown():
    assert set(builtin_names()) == {
        "confounding",
        "overcontrol",
        "selection",
        "lesser-evil",
        "ascvd",
    }
    with pytest.raises(UnknownModel):
        builtin("frontdoor")
    with pytest.raises(UnknownModel):
        closed_form("lesser-evil")


def test_confounding_structure():
    scm = builtin("confounding")
    assert len(scm.endogenous_names) == 3
    assert scm.roles == type(scm.roles)("X", "Y", frozenset(), frozenset({"V1"}))


def test_linear_equations_match_their_definitions():
    p = LinearModelParams(alpha=2.0, beta=-1.0, gamma=0.5)
    u = {"U_V1": 0.3, "U_X": -0.1, "U_Y": 0.8}
    vals = evaluate_endogenous(builtin("confounding", p), u)
    assert vals["X"] == pytest.approx(2.0 * 0.3 - 0.1)
    assert vals["Y"] == pytest.approx(-1.0 * vals["X"] + 0.5 * 0.3 + 0.8)

    vals = evaluate_endogenous(builtin("overcontrol", p), u)
    assert vals["V1"] == pytest.approx(2.0 * vals["X"] + 0.3)
    vals = evaluate_endogenous(builtin("selection", p), u)
    assert vals["V1"] == pytest.approx(-1.0 * vals["X"] + 0.5 * vals["Y"] + 0.3)


def test_lesser_evil_treatment_equation():
    p = LinearModelParams(alpha=5.0)
    scm = builtin("lesser-evil", p)
    u = {"U_V1": 0.4, "U_X": 0.1, "U_V2": 0.0, "U_Y": 0.0}
    vals = evaluate_endogenous(scm, u)
    assert vals["X"] == pytest.approx(5.0 * math.exp(0.4) + 0.1)
    assert vals["V2"] == pytest.approx(vals["X"] + 0.4**2)


def test_closed_forms():
    p = LinearModelParams(alpha=1.0, beta=1.0, gamma=1.0)
    assert closed_form("confounding", p) == pytest.approx((1.5, 1.0, 0.5))
    assert closed_form("selection", p) == pytest.approx((0.0, 1.0, -1.0))
    assert closed_form("overcontrol", p) == pytest.approx((1.0, 2.0, -1.0))
    for name in ("confounding", "overcontrol", "selection"):
        a, c, b = closed_form(name, LinearModelParams(gamma=0.0, alpha=1.3, beta=0.7))
        assert b == 0.0
        assert a == pytest.approx(c)


def test_ascvd_param_validation():
    with pytest.raises(BadParams):
        AscvdParams(theta_l=(1.0, 2.0))
    with pytest.raises(BadParams):
        AscvdParams(theta_h=(1.0, 2.0, float("nan"), 0.0))
    with pytest.raises(BadParams):
        LinearModelParams(alpha=float("inf"))


def test_ascvd_summary_groups():
    scm = builtin("ascvd")
    ds = sample_observational(scm, 3000, seed=7)
    summary = ascvd_summary(ds, 0.5)
    assert summary["statin"]["size"] + summary["no_statin"]["size"] == 3000
    for group in summary.values():
        for key in ("age", "diabetes", "headache", "log_pre_ldl", "log_post_ldl", "risk_score", "ascvd"):
            assert np.isfinite(group[key])
    with pytest.raises(EmptyGroup):
        ascvd_summary(ds, 0.0)  # every dose is positive: no untreated group


def test_ascvd_roles_default_to_confounder_set():
    scm = builtin("ascvd")
    assert scm.roles.observed == frozenset({"A", "L", "F", "D"})
    assert scm.roles.latent == frozenset({"R", "M", "H"})
