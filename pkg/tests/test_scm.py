import math

import numpy as np
import pytest

from causalbias.autodiff import Dual
from causalbias.dists import StandardGaussian
from causalbias.errors import (
    CycleDetected,
    MissingNoiseTerm,
    RoleConflict,
    UnknownVariable,
)
from causalbias.expr import Var
from causalbias.scm import (
    Dataset,
    Roles,
    build_scm,
    evaluate_endogenous,
    partial_evaluate,
    sample_observational,
    scm_from_json,
    scm_to_json,
)
from causalbias.zoo import LinearModelParams, builtin


def gaussians(*names):
    return [(n, StandardGaussian()) for n in names]


def test_build_confounding_topological_order():
    scm = builtin("confounding")
    assert scm.endogenous_names == ("V1", "X", "Y")
    assert scm.roles.treatment == "X"
    assert scm.roles.outcome == "Y"
    assert scm.roles.latent == frozenset({"V1"})


def test_declaration_order_does_not_matter():
    defs = [
        ("Y", Var("X") + Var("V1") + Var("U_Y")),
        ("X", Var("V1") + Var("U_X")),
        ("V1", Var("U_V1")),
    ]
    scm = build_scm(gaussians("U_V1", "U_X", "U_Y"), defs, Roles("X", "Y"))
    assert scm.endogenous_names == ("V1", "X", "Y")
    u = {"U_V1": 1.0, "U_X": 0.5, "U_Y": 0.0}
    reference = builtin("confounding")
    assert evaluate_endogenous(scm, u) == evaluate_endogenous(reference, u)


def test_self_reference_is_a_cycle():
    with pytest.raises(CycleDetected):
        build_scm(
            gaussians("U_X", "U_Y"),
            [("X", Var("U_X")), ("Y", Var("Y") + Var("U_Y"))],
            Roles("X", "Y"),
        )


def test_two_variable_cycle():
    with pytest.raises(CycleDetected):
        build_scm(
            gaussians("U_A", "U_B", "U_X", "U_Y"),
            [
                ("X", Var("U_X")),
                ("Y", Var("U_Y")),
                ("A", Var("B") + Var("U_A")),
                ("B", Var("A") + Var("U_B")),
            ],
            Roles("X", "Y"),
        )


def test_unknown_reference_rejected():
    with pytest.raises(UnknownVariable):
        build_scm(gaussians("U_X", "U_Y"), [("X", Var("U_X")), ("Y", Var("Z") + Var("U_Y"))], Roles("X", "Y"))


def test_noise_usage_rules():
    # declared but unused noise
    with pytest.raises(MissingNoiseTerm):
        build_scm(
            gaussians("U_X", "U_Y", "U_Z"),
            [("X", Var("U_X")), ("Y", Var("X") + Var("U_Y"))],
            Roles("X", "Y"),
        )
    # one noise shared by two equations
    with pytest.raises(MissingNoiseTerm):
        build_scm(
            gaussians("U_X", "U_Y"),
            [("X", Var("U_X")), ("Y", Var("U_X") + Var("U_Y"))],
            Roles("X", "Y"),
        )
    # noise appearing twice in its own equation
    with pytest.raises(MissingNoiseTerm):
        build_scm(
            gaussians("U_X", "U_Y"),
            [("X", Var("U_X") + Var("U_X")), ("Y", Var("X") + Var("U_Y"))],
            Roles("X", "Y"),
        )


def test_role_conflicts():
    defs = [("X", Var("U_X")), ("Y", Var("X") + Var("U_Y"))]
    with pytest.raises(RoleConflict):
        build_scm(gaussians("U_X", "U_Y"), defs, Roles("X", "X"))
    with pytest.raises(RoleConflict):
        build_scm(gaussians("U_X", "U_Y"), defs, Roles("X", "Y", observed=frozenset({"Y"})))
    with pytest.raises(UnknownVariable):
        build_scm(gaussians("U_X", "U_Y"), defs, Roles("X", "W"))
    with pytest.raises(RoleConflict):
        build_scm(
            gaussians("U_X", "U_Y"), defs, Roles("X", "Y", latent=frozenset({"X"}))
        )


def test_forward_evaluation_examples():
    scm = builtin("confounding")
    zero = evaluate_endogenous(scm, {"U_V1": 0.0, "U_X": 0.0, "U_Y": 0.0})
    assert zero == {"V1": 0.0, "X": 0.0, "Y": 0.0}
    vals = evaluate_endogenous(scm, {"U_V1": 1.0, "U_X": 0.5, "U_Y": 0.0})
    assert vals == {"V1": 1.0, "X": 1.5, "Y": 2.5}


def test_ascvd_structure_and_hand_value():
    scm = builtin("ascvd")
    assert scm.endogenous_names == ("A", "L", "F", "D", "R", "X", "M", "Y", "H")
    assert len(scm.exogenous_names) == 8
    assert scm.noise_of("R") is None  # risk score is deterministic given its inputs
    u = {name: 0.0 for name in scm.exogenous_names}
    u["U_A"] = 55.0
    vals = evaluate_endogenous(scm, u)
    assert vals["L"] == pytest.approx(0.005 * 55 + math.log(100.0), abs=1e-12)
    assert all(np.isfinite(v) for v in vals.values())


def test_ascvd_finite_at_noise_means():
    scm = builtin("ascvd")
    # trapezoid mean for the age noise, standard-normal mean elsewhere
    u = {name: 0.0 for name in scm.exogenous_names}
    u["U_A"] = 2975.0 / 55.0
    vals = evaluate_endogenous(scm, u)
    assert all(np.isfinite(v) for v in vals.values())


def test_partial_evaluation_severs_equations():
    # five-variable chain/collider layout mirroring the running example
    scm = build_scm(
        gaussians("U_V1", "U_V2", "U_V3", "U_V4", "U_V5"),
        [
            ("V1", Var("U_V1")),
            ("V2", Var("V1") + Var("U_V2")),
            ("V3", Var("V2") + Var("U_V3")),
            ("V4", Var("V1") + Var("V2") + Var("V3") + Var("U_V4")),
            ("V5", Var("V2") + Var("V4") + Var("U_V5")),
        ],
        Roles("V2", "V4", observed=frozenset({"V3", "V5"})),
    )
    fixed = {"V2": 1.5, "V3": 0.25}
    residual = partial_evaluate(scm, fixed)
    u = {"U_V1": 0.3, "U_V2": 9.9, "U_V3": 9.9, "U_V4": 0.1, "U_V5": 0.2}
    out = residual.evaluate(u)
    assert set(out) == {"V1", "V4", "V5"}
    # severed: the noise of fixed variables no longer reaches anything
    assert out["V4"] == pytest.approx(0.3 + 1.5 + 0.25 + 0.1)
    assert out["V5"] == pytest.approx(1.5 + out["V4"] + 0.2)

    # derivative of the V5 residual with respect to U_V3 vanishes once V3 is pinned
    env = {name: Dual(value, None) for name, value in u.items()}
    env["U_V3"] = Dual.seed(u["U_V3"], 0, 1)
    dual_out = residual.evaluate(env)
    assert float(dual_out["V5"].tangent(0)) == 0.0
    assert float(dual_out["V4"].tangent(0)) == 0.0


def test_partial_evaluation_empty_fixed_matches_forward():
    scm = builtin("lesser-evil")
    u = {"U_V1": 0.4, "U_X": -0.2, "U_V2": 1.0, "U_Y": 0.3}
    assert partial_evaluate(scm, {}).evaluate(u) == evaluate_endogenous(scm, u)


def test_partial_evaluation_consistency_with_forward(rng):
    scm = builtin("lesser-evil")
    for _ in range(20):
        u = {name: float(rng.standard_normal()) for name in scm.exogenous_names}
        full = evaluate_endogenous(scm, u)
        fixed = {"X": full["X"], "V2": full["V2"]}
        residual = partial_evaluate(scm, fixed).evaluate(u)
        for name, value in residual.items():
            assert value == pytest.approx(full[name], abs=1e-12)


def test_partial_evaluate_unknown_variable():
    with pytest.raises(UnknownVariable):
        partial_evaluate(builtin("confounding"), {"W": 1.0})


def test_sampling_is_deterministic_and_consistent():
    scm = builtin("confounding")
    a = sample_observational(scm, 1000, seed=9)
    b = sample_observational(scm, 1000, seed=9)
    assert np.array_equal(a.data, b.data)
    c = sample_observational(scm, 1000, seed=10)
    assert not np.array_equal(a.data, c.data)

    single = sample_observational(scm, 1, seed=3)
    assert single.n == 1
    # a single row is reproducible through the forward map on some noise;
    # check internal consistency: Y = X + V1-contribution + noise is linear
    v1, x, y = (float(single.column(n)[0]) for n in ("V1", "X", "Y"))
    u_x = x - v1
    u_y = y - x - v1
    rebuilt = evaluate_endogenous(scm, {"U_V1": v1, "U_X": u_x, "U_Y": u_y})
    assert rebuilt["Y"] == pytest.approx(y, abs=1e-12)


def test_sampling_thread_count_does_not_change_results(monkeypatch):
    scm = builtin("ascvd")
    monkeypatch.delenv("CAUSALBIAS_THREADS", raising=False)
    base = sample_observational(scm, 70_000, seed=4)  # spans multiple chunks
    monkeypatch.setenv("CAUSALBIAS_THREADS", "2")
    threaded = sample_observational(scm, 70_000, seed=4)
    assert np.array_equal(base.data, threaded.data)


def test_dataset_csv_round_trip(tmp_path):
    scm = builtin("lesser-evil", LinearModelParams(alpha=5.0))
    ds = sample_observational(scm, 128, seed=77)
    path = tmp_path / "draws.csv"
    ds.to_csv(path)
    back = Dataset.from_csv(path)
    assert back.columns == ds.columns
    assert np.array_equal(back.data, ds.data)  # 17 significant digits: lossless


def test_model_json_round_trip():
    for name in ("confounding", "overcontrol", "selection", "lesser-evil", "ascvd"):
        scm = builtin(name)
        doc = scm_to_json(scm)
        back = scm_from_json(doc)
        assert back.endogenous_names == scm.endogenous_names
        assert back.roles == scm.roles
        rng = np.random.default_rng(1)
        u = {n: float(rng.uniform(45, 70)) if n == "U_A" else float(rng.standard_normal())
             for n in scm.exogenous_names}
        assert evaluate_endogenous(back, u) == evaluate_endogenous(scm, u)
