import json

import numpy as np
import pytest

from causalbias.errors import MediatorPresent
from causalbias.estimators import (
    association,
    association_finite_difference,
    average_partial_effect,
    bias_covariance_form,
    bias_report,
    causal_bias,
)
from causalbias.inference import importance_posterior, laplace_posterior, materialize_particles
from causalbias.zoo import LinearModelParams, builtin, closed_form

QUERY = {"confounding": {}, "overcontrol": {"V1": 0.7}, "selection": {"V1": 0.7}}


@pytest.mark.parametrize("name", ["confounding", "overcontrol", "selection"])
@pytest.mark.parametrize("alpha,beta,gamma", [(1.0, 1.0, 1.0), (-2.0, 0.5, 2.0), (0.5, -1.0, -2.0)])
def test_laplace_route_is_exact_on_linear_models(name, alpha, beta, gamma):
    params = LinearModelParams(alpha=alpha, beta=beta, gamma=gamma)
    scm = builtin(name, params)
    a_true, c_true, b_true = closed_form(name, params)
    rep = bias_report(scm, 1.0, QUERY[name], method="laplace")
    assert rep.association_A == pytest.approx(a_true, abs=1e-9)
    assert rep.effect_C == pytest.approx(c_true, abs=1e-9)
    assert rep.bias_B == pytest.approx(b_true, abs=1e-9)
    assert rep.se_bias == 0.0  # quadrature route is deterministic


@pytest.mark.parametrize("name", ["confounding", "overcontrol", "selection"])
def test_importance_route_within_three_stderr(name):
    params = LinearModelParams(alpha=1.0, beta=1.0, gamma=1.0)
    scm = builtin(name, params)
    a_true, c_true, b_true = closed_form(name, params)
    rep = bias_report(scm, 1.0, QUERY[name], method="is", samples=50_000, seed=13)
    assert abs(rep.bias_B - b_true) <= 3 * rep.se_bias + 1e-12
    assert abs(rep.association_A - a_true) <= 3 * rep.se_association + 1e-12
    assert rep.effect_C == pytest.approx(c_true, abs=1e-9)  # constant integrand


def test_decomposition_identity_and_source_sums():
    scm = builtin("selection", LinearModelParams(alpha=1.3, beta=-0.4, gamma=0.8))
    rep = bias_report(scm, 0.7, {"V1": 1.1}, method="is", samples=20_000, seed=5)
    assert rep.association_A == rep.effect_C + rep.bias_B  # computed as the sum
    assert sum(rep.per_source.values()) == pytest.approx(rep.bias_B, rel=1e-12, abs=1e-15)
    assert set(rep.per_source) == {"X", "V1"}


def test_overcontrol_bias_is_attributed_to_the_mediator():
    scm = builtin("overcontrol", LinearModelParams(alpha=1.5, beta=1.0, gamma=-0.7))
    rep = bias_report(scm, 1.0, {"V1": 0.3}, method="laplace")
    assert rep.per_source["X"] == pytest.approx(0.0, abs=1e-12)
    assert rep.per_source["V1"] == pytest.approx(0.7 * 1.5, abs=1e-9)


def test_confounding_bias_is_attributed_to_the_treatment():
    scm = builtin("confounding", LinearModelParams(alpha=2.0, beta=0.3, gamma=1.0))
    rep = bias_report(scm, -0.4, {}, method="laplace")
    assert rep.per_source["X"] == pytest.approx(2.0 / 5.0, abs=1e-9)


def test_spec_ops_share_posterior_particles():
    scm = builtin("confounding")
    post = laplace_posterior(scm, 1.0, {})
    comp = materialize_particles(scm, 1.0, {}, post)
    effect, se_c = average_partial_effect(scm, 1.0, {}, comp)
    bias, per_source, se_b = causal_bias(scm, 1.0, {}, comp)
    assoc, se_a = association(scm, 1.0, {}, comp)
    assert assoc == pytest.approx(effect + bias, abs=1e-15)
    assert effect == pytest.approx(1.0, abs=1e-9)
    assert bias == pytest.approx(0.5, abs=1e-9)
    assert per_source == {"X": pytest.approx(0.5, abs=1e-9)}


def test_covariance_form_matches_closed_forms():
    for name, o in (("confounding", {}), ("selection", {"V1": 0.7})):
        params = LinearModelParams(alpha=1.0, beta=1.0, gamma=1.0)
        scm = builtin(name, params)
        post = laplace_posterior(scm, 1.0, o)
        b7, se7 = bias_covariance_form(scm, 1.0, o, post)
        assert b7 == pytest.approx(closed_form(name, params)[2], abs=1e-9)


def test_covariance_form_agrees_with_per_source_route():
    scm = builtin("confounding", LinearModelParams(alpha=1.4, beta=0.6, gamma=-0.9))
    post = importance_posterior(scm, 1.0, {}, n=40_000, seed=17)
    comp = materialize_particles(scm, 1.0, {}, post)
    b7, se7 = bias_covariance_form(scm, 1.0, {}, comp)
    b8, _, se8 = causal_bias(scm, 1.0, {}, comp)
    assert abs(b7 - b8) <= 3 * np.hypot(se7, se8) + 1e-12


def test_covariance_form_zero_on_identifiable_backdoor():
    # backdoor layout: confounding model with the confounder observed
    from causalbias.dists import StandardGaussian
    from causalbias.expr import Var
    from causalbias.scm import Roles, build_scm

    scm = build_scm(
        [("U_V1", StandardGaussian()), ("U_X", StandardGaussian()), ("U_Y", StandardGaussian())],
        [
            ("V1", Var("U_V1")),
            ("X", Var("V1") + Var("U_X")),
            ("Y", Var("X") + Var("V1") + Var("U_Y")),
        ],
        Roles("X", "Y", observed=frozenset({"V1"})),
    )
    post = laplace_posterior(scm, 1.0, {"V1": 0.4})
    b7, se7 = bias_covariance_form(scm, 1.0, {"V1": 0.4}, post)
    assert abs(b7) <= max(1e-9, 3 * se7)
    rep = bias_report(scm, 1.0, {"V1": 0.4}, method="laplace")
    assert abs(rep.bias_B) <= 1e-9


def test_covariance_form_rejects_observed_mediator():
    scm = builtin("overcontrol")
    post = laplace_posterior(scm, 1.0, {"V1": 0.7})
    with pytest.raises(MediatorPresent):
        bias_covariance_form(scm, 1.0, {"V1": 0.7}, post)
    # active mediation: the dose-response term requires pre-LDL below log(130)
    ascvd = builtin("ascvd")
    data_row = {"A": 55.0, "L": 4.7, "F": 0.3, "D": 0.08, "M": 4.2}
    post = importance_posterior(ascvd, 0.3, data_row, n=2000, seed=1)
    with pytest.raises(MediatorPresent):
        bias_covariance_form(ascvd, 0.3, data_row, post)


def test_identifiable_configuration_has_negligible_bias():
    scm = builtin("lesser-evil", LinearModelParams(alpha=5.0))
    rep = bias_report(scm, 3.0, {"V1": 0.2}, method="laplace")
    assert abs(rep.bias_B) <= max(1e-8, 3 * rep.se_bias)


def test_association_finite_difference_matches_on_linear_models():
    for name in ("confounding", "overcontrol", "selection"):
        params = LinearModelParams(alpha=1.0, beta=1.0, gamma=1.0)
        scm = builtin(name, params)
        a_true = closed_form(name, params)[0]
        a_fd, se_fd = association_finite_difference(
            scm, 1.0, QUERY[name], method="laplace", h=1e-4
        )
        assert a_fd == pytest.approx(a_true, abs=1e-6)


def test_report_serialization_round_trip():
    scm = builtin("selection")
    rep = bias_report(scm, 1.0, {"V1": 0.7}, method="is", samples=5000, seed=3)
    doc = json.loads(json.dumps(rep.to_json()))
    assert doc["effect_C"] == rep.effect_C
    assert doc["std_errors"]["bias_B"] == rep.se_bias
    assert doc["diagnostics"]["method"] == "importance_sampling"

    header = rep.csv_header().split(",")
    row = rep.csv_row().split(",")
    assert len(header) == len(row)
    parsed = dict(zip(header, row))
    assert float(parsed["B"]) == rep.bias_B  # 17 significant digits round-trip
    assert float(parsed["src:V1"]) == rep.per_source["V1"]
    assert parsed["method"] == "importance_sampling"


def test_quadrature_reports_deterministic_repeatability():
    scm = builtin("confounding")
    rep1 = bias_report(scm, 1.0, {}, method="laplace")
    rep2 = bias_report(scm, 1.0, {}, method="laplace")
    assert rep1.csv_row() == rep2.csv_row()
