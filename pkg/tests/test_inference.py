import math

import numpy as np
import pytest

from causalbias.errors import (
    DegenerateWeightsWarning,
    NonConvergence,
    NotInvertible,
    UnknownVariable,
)
from causalbias.inference import (
    Conditioner,
    InferenceOptions,
    compose_full_posterior,
    importance_posterior,
    laplace_posterior,
    map_estimate,
    materialize_particles,
)
from causalbias.scm import evaluate_endogenous, sample_observational
from causalbias.zoo import LinearModelParams, builtin


def test_map_of_conditioned_confounding_model():
    # closed form: the latent confounder's mode is alpha*x/(1+alpha^2)
    for alpha, x in ((1.0, 1.0), (2.0, -0.7), (0.5, 3.0)):
        scm = builtin("confounding", LinearModelParams(alpha=alpha))
        res = map_estimate(scm, x, {})
        assert res.values["U_V1"] == pytest.approx(alpha * x / (1 + alpha**2), abs=1e-9)
        assert res.values["U_Y"] == pytest.approx(0.0, abs=1e-9)
        assert res.converged


def test_map_with_unconstrained_latents_sits_at_prior_mode():
    # the treatment has its own noise only; remaining latents are untouched
    scm = builtin("overcontrol")
    res = map_estimate(scm, 0.7, {})
    assert res.values["U_V1"] == pytest.approx(0.0, abs=1e-12)
    assert res.values["U_Y"] == pytest.approx(0.0, abs=1e-12)


def test_map_matches_grid_search_oracle():
    # nonlinear model, V2 unobserved: profile the single coupled latent on a grid
    scm = builtin("lesser-evil")
    res = map_estimate(scm, 1.0, {})
    grid = np.arange(-6.0, 6.0 + 1e-12, 1e-4)
    objective = -0.5 * grid**2 - 0.5 * (1.0 - np.exp(grid)) ** 2
    best = grid[np.argmax(objective)]
    assert res.values["U_V1"] == pytest.approx(best, abs=1e-3)
    assert res.values["U_V2"] == pytest.approx(0.0, abs=1e-9)
    assert res.values["U_Y"] == pytest.approx(0.0, abs=1e-9)


def test_map_nonconvergence_is_reported():
    scm = builtin("lesser-evil", LinearModelParams(alpha=5.0))
    with pytest.raises(NonConvergence):
        map_estimate(scm, 17.0, {}, InferenceOptions(max_iter=1))


def test_laplace_matches_conditioned_gaussian_closed_form():
    # conditioning the confounding model on x: mean alpha*x/(1+a^2), var 1/(1+a^2)
    for alpha in (0.5, 1.0, 2.0):
        scm = builtin("confounding", LinearModelParams(alpha=alpha))
        post = laplace_posterior(scm, 1.0, {})
        i = post.latent_order.index("U_V1")
        j = post.latent_order.index("U_Y")
        assert post.mean[i] == pytest.approx(alpha / (1 + alpha**2), abs=1e-9)
        assert post.covariance[i, i] == pytest.approx(1 / (1 + alpha**2), abs=1e-9)
        assert post.mean[j] == pytest.approx(0.0, abs=1e-9)
        assert post.covariance[j, j] == pytest.approx(1.0, abs=1e-9)
        assert post.covariance[i, j] == pytest.approx(0.0, abs=1e-9)


def test_laplace_matches_selection_posterior_closed_form():
    # conditioned on (x, v1): E[U_Y] = g/(1+g^2)(v1-(b+g*a)x), var 1/(1+g^2)
    a, b, g = 1.3, -0.8, 1.7
    x, v1 = 0.9, 2.0
    scm = builtin("selection", LinearModelParams(alpha=a, beta=b, gamma=g))
    post = laplace_posterior(scm, x, {"V1": v1})
    assert post.latent_order == ("U_Y",)
    assert post.mean[0] == pytest.approx(g / (1 + g * g) * (v1 - (b + g * a) * x), abs=1e-9)
    assert post.covariance[0, 0] == pytest.approx(1 / (1 + g * g), abs=1e-9)


def test_laplace_of_unconstrained_latents_is_standard_normal():
    scm = builtin("overcontrol")
    post = laplace_posterior(scm, 0.7, {})
    assert np.allclose(post.mean, 0.0, atol=1e-9)
    assert np.allclose(post.covariance, np.eye(2), atol=1e-9)


def test_laplace_covariance_matches_finite_difference_hessian():
    scm = builtin("lesser-evil", LinearModelParams(alpha=5.0))
    cond = Conditioner(scm, 1.0, {"V2": 2.0})
    post = laplace_posterior(scm, 1.0, {"V2": 2.0})
    u0 = np.array(post.mean)
    d = len(u0)
    eps = 1e-5
    fd = np.zeros((d, d))
    for j in range(d):
        e = np.zeros(d)
        e[j] = eps
        _, gp = cond._value_and_grad(u0 + e)
        _, gm = cond._value_and_grad(u0 - e)
        fd[:, j] = (gp - gm) / (2 * eps)
    cov_fd = np.linalg.inv(-0.5 * (fd + fd.T))
    assert np.allclose(post.covariance, cov_fd, rtol=1e-4, atol=1e-8)


def test_importance_posterior_mean_matches_closed_form():
    scm = builtin("confounding")
    post = importance_posterior(scm, 1.0, {}, n=100_000, seed=12)
    i = post.latent_order.index("U_V1")
    mean = float(np.sum(post.weights * post.points[:, i]) / np.sum(post.weights))
    assert abs(mean - 0.5) < 0.01
    assert post.n_eff <= post.n
    assert np.sum(post.weights) == pytest.approx(post.n, abs=1e-9 * post.n)
    assert np.all(post.weights >= 0)


def test_importance_error_shrinks_at_root_n_rate():
    scm = builtin("confounding")
    i = None
    estimates = {1000: [], 2000: []}
    for rep in range(50):
        for n in (1000, 2000):
            post = importance_posterior(scm, 1.0, {}, n=n, seed=5000 + rep)
            if i is None:
                i = post.latent_order.index("U_V1")
            estimates[n].append(
                float(np.sum(post.weights * post.points[:, i]) / np.sum(post.weights))
            )
    ratio = np.std(estimates[1000]) / np.std(estimates[2000])
    assert math.sqrt(2) * 0.8 <= ratio <= math.sqrt(2) * 1.2


def test_degenerate_weights_warn():
    scm = builtin("confounding")
    with pytest.warns(DegenerateWeightsWarning):
        importance_posterior(scm, 60.0, {}, n=40, seed=2)


def test_compose_pins_treatment_noise():
    # with the confounder's draw u, the treatment noise must be x - alpha*u
    alpha, x = 1.0, 1.0
    scm = builtin("confounding", LinearModelParams(alpha=alpha))
    draws = np.random.default_rng(0).standard_normal((64, 2))
    comp = compose_full_posterior(scm, draws, x, {})
    i = comp.latent_order.index("U_V1")
    assert np.allclose(comp.noise["U_X"], x - alpha * draws[:, i], atol=1e-12)
    # latent draws pass through untouched
    for k, name in enumerate(comp.latent_order):
        assert np.array_equal(comp.noise[name], draws[:, k])


def test_compose_round_trip_reproduces_conditioning():
    scm = builtin("ascvd")
    data = sample_observational(scm, 5, seed=21)
    row = data.row_assignment(0)
    observed = {k: row[k] for k in ("A", "L", "F", "D")}
    post = importance_posterior(scm, row["X"], observed, n=256, seed=3)
    comp = materialize_particles(scm, row["X"], observed, post)
    for sample in list(comp.samples())[:16]:
        values = evaluate_endogenous(scm, sample.assignment)
        assert values["X"] == pytest.approx(row["X"], abs=1e-9)
        for name, v in observed.items():
            assert values[name] == pytest.approx(v, abs=1e-9)


def test_quadrature_materialization_is_deterministic_and_weighted():
    scm = builtin("confounding")
    post = laplace_posterior(scm, 1.0, {})
    comp1 = materialize_particles(scm, 1.0, {}, post)
    comp2 = materialize_particles(scm, 1.0, {}, post)
    assert comp1.quadrature
    assert np.array_equal(comp1.weights, comp2.weights)
    assert np.array_equal(comp1.noise["U_V1"], comp2.noise["U_V1"])
    assert np.sum(comp1.weights) == pytest.approx(comp1.n, rel=1e-12)
    # quadrature means reproduce the Gaussian moments near-exactly
    w = comp1.weights
    u = comp1.noise["U_V1"]
    assert np.sum(w * u) / np.sum(w) == pytest.approx(0.5, abs=1e-12)
    var = np.sum(w * (u - 0.5) ** 2) / np.sum(w)
    assert var == pytest.approx(0.5, abs=1e-10)


def test_sampled_materialization_beyond_quadrature_dim():
    scm = builtin("ascvd")
    observed = {"A": 55.0}  # six Gaussian latents remain: above the quadrature cap
    post = laplace_posterior(scm, 0.3, observed)
    assert post.dim == 6
    opts = InferenceOptions(laplace_draws=500, seed=9)
    comp = materialize_particles(scm, 0.3, observed, post, opts)
    assert not comp.quadrature
    assert comp.n == 500
    again = materialize_particles(scm, 0.3, observed, post, opts)
    assert np.array_equal(comp.noise["U_Y"], again.noise["U_Y"])


def test_laplace_reports_nonsmooth_age_mode_honestly():
    # leaving age latent puts the posterior mode on a knot of its trapezoid
    # prior, where no point has a vanishing gradient: the mode search must
    # say so rather than return a bogus Gaussian
    scm = builtin("ascvd")
    with pytest.raises(NonConvergence):
        laplace_posterior(scm, 0.3, {})


def test_posterior_predictive_matches_quadrature_oracle():
    """Clinical model, headache observed: the importance-sampling posterior
    predictive mean of the outcome must match a deterministic prior-grid
    quadrature oracle whose likelihood is hand-transcribed."""
    scm = builtin("ascvd")
    data = sample_observational(scm, 3, seed=33)
    row = data.row_assignment(1)
    observed = {k: row[k] for k in ("A", "L", "F", "D", "H")}
    x = row["X"]

    post = importance_posterior(scm, x, observed, n=100_000, seed=8)
    comp = materialize_particles(scm, x, observed, post)
    cond = Conditioner(scm, x, observed)
    y_vals = np.empty(comp.n)
    for start in range(0, comp.n, 32768):
        stop = min(start + 32768, comp.n)
        latent_env = {u: comp.noise[u][start:stop] for u in comp.latent_order}
        env, _, _ = cond.forward(latent_env)
        y_vals[start:stop] = env["Y"]
    is_mean = float(np.sum(comp.weights * y_vals) / np.sum(comp.weights))
    se = float(
        np.sqrt(np.sum(comp.weights * (y_vals - is_mean) ** 2) / np.sum(comp.weights) / comp.n_eff)
    )

    # oracle: tensor Gauss-Hermite over the two latent priors (U_M, U_Y) with a
    # hand-coded headache likelihood; only the forward map is shared plumbing
    assert set(comp.latent_order) == {"U_M", "U_Y"}
    nodes, wts = np.polynomial.hermite_e.hermegauss(80)
    wts = wts / wts.sum()
    um, uy = np.meshgrid(nodes, nodes, indexing="ij")
    wgrid = np.outer(wts, wts).reshape(-1)
    um = um.reshape(-1)
    uy = uy.reshape(-1)
    full = {name: np.full(um.shape, row[name]) for name in ("A", "L", "F", "D", "R")}
    full["X"] = np.full(um.shape, x)
    m_val = (
        full["L"]
        + 0.1
        - 3.5 * full["X"] * (5.0 - full["L"]) * (full["L"] < math.log(130.0))
        + um
    )
    y_arg = (
        -6.25
        - 0.75 * full["X"]
        - 0.1 * m_val
        + 0.45 * np.sqrt(full["A"] - 39.0)
        + 1.75 * full["D"]
        + 0.29 * np.exp(1.0 + full["R"])
        + 0.1 * (full["L"] + 1.4 / (1 + np.exp(-10 * (full["L"] - math.log(110.0)) )) * full["L"] ** 2)
        + 0.9 * uy
    )
    y_val = 1.0 / (1.0 + np.exp(-y_arg))
    h = row["H"]
    u_h = (math.log(h / (1 - h)) - (-1.7 + 0.8 * x + 1.5 * y_val)) / 0.5
    lik = np.exp(-0.5 * u_h**2) / (h * (1 - h) * 0.5)
    oracle = float(np.sum(wgrid * lik * y_val) / np.sum(wgrid * lik))
    assert abs(is_mean - oracle) <= 3 * se + 1e-6


def test_conditioning_validation():
    scm = builtin("confounding")
    with pytest.raises(UnknownVariable):
        Conditioner(scm, 1.0, {"W": 1.0})
    with pytest.raises(ValueError):
        Conditioner(scm, 1.0, {"Y": 1.0})
    ascvd = builtin("ascvd")
    with pytest.raises(NotInvertible):
        Conditioner(ascvd, 0.3, {"R": 0.05})  # deterministic variable


def test_diagnostics_payload():
    scm = builtin("confounding")
    post = importance_posterior(scm, 1.0, {}, n=500, seed=7)
    assert post.diagnostics["method"] == "importance_sampling"
    assert post.diagnostics["n"] == 500
    assert post.diagnostics["seed"] == 7
    assert post.diagnostics["n_eff"] == pytest.approx(post.n_eff)
    lap = laplace_posterior(scm, 1.0, {})
    assert lap.diagnostics["method"] == "laplace"
    assert lap.diagnostics["grad_norm"] <= 1e-8
    assert lap.diagnostics["iterations"] >= 1
