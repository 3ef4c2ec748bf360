"""Monte Carlo estimators for association, average partial effect and bias.

Every estimator integrates over composed posterior particles (full noise
assignments with weights).  Two severed forward passes per particle batch
supply all derivatives:

* pass A pins only the treatment and differentiates the outcome with
  respect to the treatment value and each conditioned variable's noise;
* pass B pins the treatment and every observed variable and evaluates each
  conditioned equation locally, differentiating it with respect to the
  treatment value and its own noise.

The bias estimator is the per-source decomposition

    B = - sum over conditioned V of
        E[ (dY/du_V + (Y_x - E Y_x) dlogp(u_V)) * (df_V/du_V)^-1
           * d/dx (f_V - v) ]

whose summands attribute bias to the treatment (confounding-type) and to
each observed variable (overcontrol/selection-type); the reported bias is
exactly the sum of the per-source contributions.  An independent
covariance-form estimator (bias as the weighted covariance of the pinned
outcome with the treatment-score of the joint density) is available for
queries without observed mediators, and association can additionally be
cross-checked by finite-differencing the conditional outcome mean.

Standard errors use the weighted delta method with the effective sample
size; deterministic quadrature particles report a standard error of zero.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from .autodiff import Dual, solve_noise
from .errors import JointDensityUnavailable, MediatorPresent
from .expr import evaluate
from .graphs import causal_exogenous_set
from .inference import (
    ComposedParticles,
    Conditioner,
    InferenceOptions,
    importance_posterior,
    laplace_posterior,
    materialize_particles,
)
from .scm import Scm

__all__ = [
    "BiasReport",
    "average_partial_effect",
    "causal_bias",
    "bias_covariance_form",
    "association",
    "association_finite_difference",
    "bias_report",
]

_CHUNK = 32768


def _wmean(w: np.ndarray, t: np.ndarray) -> float:
    return float(np.sum(w * t) / np.sum(w))


def _wse(w: np.ndarray, t: np.ndarray, n_eff: float, quadrature: bool) -> float:
    if quadrature or n_eff <= 0:
        return 0.0
    m = _wmean(w, t)
    var = float(np.sum(w * (t - m) ** 2) / np.sum(w))
    return float(np.sqrt(max(var, 0.0) / n_eff))


def _one_hot(row: int, k: int, shape: tuple[int, ...]) -> np.ndarray:
    tan = np.zeros((k,) + shape)
    tan[row] = 1.0
    return tan


@dataclass(frozen=True)
class _Components:
    """Per-particle arrays shared by the estimators (one query)."""

    sources: tuple[str, ...]
    fy: np.ndarray  # outcome with treatment pinned
    dfy_dx: np.ndarray  # d outcome / d treatment value
    dfy_du: np.ndarray  # (n_sources, n) outcome sensitivity to source noise
    local_dx: np.ndarray  # (n_sources, n) d f_V^{x,o} / dx
    local_du: np.ndarray  # (n_sources, n) d f_V^{x,o} / d own noise
    dlogp: np.ndarray  # (n_sources, n) prior score at the pinned noise


def _compute_components(scm: Scm, comp: ComposedParticles) -> _Components:
    treatment = scm.roles.treatment
    outcome = scm.roles.outcome
    sources = tuple(
        v for v in scm.endogenous_names if v == treatment or v in comp.o
    )
    k = 1 + len(sources)  # seed 0: treatment value; seeds 1..: source noises
    n = comp.n
    fy = np.empty(n)
    dfy_dx = np.empty(n)
    dfy_du = np.empty((len(sources), n))
    local_dx = np.empty((len(sources), n))
    local_du = np.empty((len(sources), n))

    seed_of_noise = {scm.noise_of(s): 1 + i for i, s in enumerate(sources)}

    def feed(name: str, shape: tuple[int, ...]):
        if name == treatment:
            return Dual(comp.x, _one_hot(0, k, (1,)))
        return float(comp.o[name])

    for start in range(0, n, _CHUNK):
        stop = min(start + _CHUNK, n)
        shape = (stop - start,)
        noise_env = {}
        for u, arr in comp.noise.items():
            block = arr[start:stop]
            row = seed_of_noise.get(u)
            noise_env[u] = Dual(block, _one_hot(row, k, shape)) if row is not None else block

        # pass A: only the treatment pinned
        env = dict(noise_env)
        for name, expression in scm.endogenous:
            if name == treatment:
                env[name] = feed(name, shape)
            else:
                env[name] = evaluate(expression, env)
        out = env[outcome]
        if isinstance(out, Dual):
            fy[start:stop] = np.broadcast_to(out.val, shape)
            dfy_dx[start:stop] = np.broadcast_to(out.tangent(0), shape)
            for i in range(len(sources)):
                dfy_du[i, start:stop] = np.broadcast_to(out.tangent(1 + i), shape)
        else:
            fy[start:stop] = np.broadcast_to(out, shape)
            dfy_dx[start:stop] = 0.0
            dfy_du[:, start:stop] = 0.0

        # pass B: treatment and all observed pinned; evaluate local equations
        env = dict(noise_env)
        for name, expression in scm.endogenous:
            if name in sources:
                local = evaluate(expression, env)
                i = sources.index(name)
                if isinstance(local, Dual):
                    local_dx[i, start:stop] = np.broadcast_to(local.tangent(0), shape)
                    local_du[i, start:stop] = np.broadcast_to(local.tangent(1 + i), shape)
                else:
                    local_dx[i, start:stop] = 0.0
                    local_du[i, start:stop] = 0.0
                env[name] = feed(name, shape)
            else:
                env[name] = evaluate(expression, env)

    dlogp = np.empty((len(sources), n))
    for i, s in enumerate(sources):
        u = scm.noise_of(s)
        dlogp[i] = scm.dist_of(u).dlog_density(comp.noise[u])

    return _Components(sources, fy, dfy_dx, dfy_du, local_dx, local_du, dlogp)


def _as_particles(scm, x, o, posterior, opts) -> ComposedParticles:
    return materialize_particles(scm, float(x), o, posterior, opts)


def average_partial_effect(
    scm: Scm, x: float, o: Mapping[str, float], posterior, opts: InferenceOptions | None = None
) -> tuple[float, float]:
    """Posterior-weighted mean of the outcome's treatment derivative."""
    comp = _as_particles(scm, x, o, posterior, opts)
    c = _compute_components(scm, comp)
    return (
        _wmean(comp.weights, c.dfy_dx),
        _wse(comp.weights, c.dfy_dx, comp.n_eff, comp.quadrature),
    )


def _bias_arrays(c: _Components, comp: ComposedParticles, treatment: str):
    """Per-source contribution arrays, their weighted means, and the total."""
    w = comp.weights
    y_x = _wmean(w, c.fy)
    centered = c.fy - y_x
    per_source: dict[str, float] = {}
    arrays: dict[str, np.ndarray] = {}
    total = np.zeros(comp.n)
    for i, s in enumerate(c.sources):
        own_shift = 1.0 if s == treatment else 0.0
        integrand = (
            (c.dfy_du[i] + centered * c.dlogp[i])
            / c.local_du[i]
            * (c.local_dx[i] - own_shift)
        )
        contribution = -integrand
        arrays[s] = contribution
        per_source[s] = _wmean(w, contribution)
        total = total + contribution
    return per_source, arrays, total


def causal_bias(
    scm: Scm, x: float, o: Mapping[str, float], posterior, opts: InferenceOptions | None = None
) -> tuple[float, dict[str, float], float]:
    """Two-pass per-source bias estimate: (bias, contributions, stderr).

    Pass one fixes the potential-outcome mean on the particle set; pass two
    accumulates each source's contribution on the same particles, so an
    identifiable query cancels to zero up to floating-point dust.
    """
    comp = _as_particles(scm, x, o, posterior, opts)
    c = _compute_components(scm, comp)
    per_source, _, total = _bias_arrays(c, comp, scm.roles.treatment)
    bias = float(sum(per_source.values()))
    se = _wse(comp.weights, total, comp.n_eff, comp.quadrature)
    return bias, per_source, se


def association(
    scm: Scm, x: float, o: Mapping[str, float], posterior, opts: InferenceOptions | None = None
) -> tuple[float, float]:
    """Association = effect + bias, with a joint delta-method stderr."""
    comp = _as_particles(scm, x, o, posterior, opts)
    c = _compute_components(scm, comp)
    per_source, _, total = _bias_arrays(c, comp, scm.roles.treatment)
    effect = _wmean(comp.weights, c.dfy_dx)
    bias = float(sum(per_source.values()))
    se = _wse(comp.weights, c.dfy_dx + total, comp.n_eff, comp.quadrature)
    return effect + bias, se


def bias_covariance_form(
    scm: Scm, x: float, o: Mapping[str, float], posterior, opts: InferenceOptions | None = None
) -> tuple[float, float]:
    """Bias as weighted covariance of the pinned outcome and the treatment
    score of the joint density over (driving noise, treatment, observed).

    Only valid when no observed variable sits on a directed path from the
    treatment into the rest of the conditioned system: such a mediator puts
    a treatment-dependent point mass into the joint density and the score
    does not exist (MediatorPresent); the per-source estimator handles that
    case instead.
    """
    comp = _as_particles(scm, x, o, posterior, opts)
    c = _compute_components(scm, comp)
    graph = scm.graph()
    treatment, outcome = scm.roles.treatment, scm.roles.outcome
    driving = causal_exogenous_set(graph, treatment, outcome, frozenset(comp.o))

    score = np.empty(comp.n)
    for start in range(0, comp.n, _CHUNK):
        stop = min(start + _CHUNK, comp.n)
        shape = (stop - start,)
        env: dict[str, object] = {}
        for u in driving:
            env[u] = comp.noise[u][start:stop]
        acc = Dual(np.zeros(shape), None)
        for name, expression in scm.endogenous:
            own = scm.noise_of(name)
            if name == treatment:
                target = Dual(comp.x, _one_hot(0, 1, (1,)))
                u_star, dfdu = _score_factor(scm, name, expression, env, target)
                acc = acc + _loglik_dual(scm.dist_of(own), u_star) - _log_abs_dual(dfdu)
                env[name] = target
            elif name in comp.o:
                if own in driving:
                    local = _eval_available(scm, name, expression, env)
                    if local is _UNAVAILABLE:
                        raise JointDensityUnavailable(
                            f"observed {name!r} has latent inputs outside the driving "
                            "noise set; its point-mass factor cannot be analyzed"
                        )
                    if isinstance(local, Dual) and local.tan is not None:
                        if np.max(np.abs(local.tangent(0))) > 1e-12:
                            raise MediatorPresent(
                                f"observed {name!r} depends on the treatment: the joint "
                                "density carries a treatment-dependent point mass"
                            )
                    env[name] = float(comp.o[name])
                else:
                    target = float(comp.o[name])
                    u_star, dfdu = _score_factor(scm, name, expression, env, target)
                    acc = acc + _loglik_dual(scm.dist_of(own), u_star) - _log_abs_dual(dfdu)
                    env[name] = target
            else:
                if own is not None and own not in driving:
                    env[name] = _UNAVAILABLE
                    continue
                env[name] = _eval_available(scm, name, expression, env)
        score[start:stop] = np.broadcast_to(acc.tangent(0), shape)

    w = comp.weights
    fbar = _wmean(w, c.fy)
    gbar = _wmean(w, score)
    product = (c.fy - fbar) * (score - gbar)
    bias = _wmean(w, product)
    se = _wse(w, product, comp.n_eff, comp.quadrature)
    return bias, se


class _Unavailable:
    def __repr__(self):
        return "<unavailable>"


_UNAVAILABLE = _Unavailable()


def _eval_available(scm, name, expression, env):
    needed = expression.variables()
    if any(env.get(v) is _UNAVAILABLE for v in needed):
        return _UNAVAILABLE
    if any(v not in env for v in needed):
        return _UNAVAILABLE
    return evaluate(expression, env)


def _score_factor(scm, name, expression, env, target):
    needed = expression.variables() - {scm.noise_of(name)}
    if any(env.get(v, _UNAVAILABLE) is _UNAVAILABLE for v in needed):
        raise JointDensityUnavailable(
            f"conditioned variable {name!r} has latent inputs outside the driving "
            "noise set; the joint density cannot be evaluated in closed form"
        )
    plan = scm.inversion_plan(name)
    return solve_noise(expression, scm.noise_of(name), target, env, plan)


def _loglik_dual(dist, u):
    if isinstance(u, Dual):
        val = dist.log_density(u.val)
        tan = None if u.tan is None else u.tan * dist.dlog_density(u.val)
        return Dual(val, tan)
    return Dual(np.asarray(dist.log_density(u), dtype=float), None)


def _log_abs_dual(x):
    if isinstance(x, Dual):
        return Dual(np.log(np.abs(x.val)), None if x.tan is None else x.tan / x.val)
    return Dual(np.log(np.abs(np.asarray(x, dtype=float))), None)


def association_finite_difference(
    scm: Scm,
    x: float,
    o: Mapping[str, float],
    method: str = "laplace",
    samples: int = 100_000,
    seed: int = 0,
    h: float = 1e-4,
    opts: InferenceOptions | None = None,
) -> tuple[float, float]:
    """Independent association check: central finite difference of the
    conditional outcome mean, each side re-inferred from scratch (common
    seeds on the sampling route)."""
    opts = opts or InferenceOptions()

    def conditional_mean(xq: float) -> tuple[float, float]:
        if method == "laplace":
            post = laplace_posterior(scm, xq, o, opts)
        elif method == "is":
            post = importance_posterior(scm, xq, o, samples, seed)
        else:
            raise ValueError(f"unknown method {method!r}")
        comp = materialize_particles(scm, xq, o, post, opts)
        cond = Conditioner(scm, xq, o)
        values = np.empty(comp.n)
        for start in range(0, comp.n, _CHUNK):
            stop = min(start + _CHUNK, comp.n)
            latent_env = {u: comp.noise[u][start:stop] for u in comp.latent_order}
            env, _, _ = cond.forward(latent_env)
            values[start:stop] = np.broadcast_to(env[scm.roles.outcome], (stop - start,))
        return (
            _wmean(comp.weights, values),
            _wse(comp.weights, values, comp.n_eff, comp.quadrature),
        )

    hi, se_hi = conditional_mean(x + h)
    lo, se_lo = conditional_mean(x - h)
    return (hi - lo) / (2.0 * h), float(np.hypot(se_hi, se_lo) / (2.0 * h))


@dataclass(frozen=True)
class BiasReport:
    """Estimates for one (treatment value, observation) query."""

    x: float
    observed: dict[str, float]
    association_A: float
    effect_C: float
    bias_B: float
    per_source: dict[str, float]
    se_association: float
    se_effect: float
    se_bias: float
    per_source_se: dict[str, float]
    n_used: int
    n_eff: float
    method: str
    seed: int | None
    diagnostics: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        return {
            "x": self.x,
            "observed": self.observed,
            "association_A": self.association_A,
            "effect_C": self.effect_C,
            "bias_B": self.bias_B,
            "per_source": self.per_source,
            "std_errors": {
                "association_A": self.se_association,
                "effect_C": self.se_effect,
                "bias_B": self.se_bias,
                "per_source": self.per_source_se,
            },
            "n_used": self.n_used,
            "n_eff": self.n_eff,
            "method": self.method,
            "seed": self.seed,
            "diagnostics": self.diagnostics,
        }

    def csv_header(self) -> str:
        src = ",".join(f"src:{s}" for s in self.per_source)
        return f"x,A,C,B,{src},se_A,se_C,se_B,n,n_eff,method,seed"

    def csv_row(self) -> str:
        def g(v: float) -> str:
            return format(v, ".17g")

        src = ",".join(g(v) for v in self.per_source.values())
        seed = "" if self.seed is None else str(self.seed)
        return (
            f"{g(self.x)},{g(self.association_A)},{g(self.effect_C)},{g(self.bias_B)},"
            f"{src},{g(self.se_association)},{g(self.se_effect)},{g(self.se_bias)},"
            f"{self.n_used},{g(self.n_eff)},{self.method},{seed}"
        )


def bias_report(
    scm: Scm,
    x: float,
    o: Mapping[str, float],
    method: str = "laplace",
    samples: int = 100_000,
    seed: int = 0,
    opts: InferenceOptions | None = None,
    posterior=None,
) -> BiasReport:
    """Full query: association, effect, bias and per-source decomposition.

    All quantities are computed on one shared particle set, so the reported
    association is exactly effect + bias and the per-source contributions
    sum exactly to the bias.
    """
    opts = opts or InferenceOptions(seed=seed, laplace_draws=samples)
    if posterior is None:
        if method == "laplace":
            posterior = laplace_posterior(scm, x, o, opts)
        elif method == "is":
            posterior = importance_posterior(scm, x, o, samples, seed)
        else:
            raise ValueError(f"unknown method {method!r}; use 'laplace' or 'is'")
    comp = _as_particles(scm, x, o, posterior, opts)
    c = _compute_components(scm, comp)
    w = comp.weights
    per_source, arrays, total = _bias_arrays(c, comp, scm.roles.treatment)
    effect = _wmean(w, c.dfy_dx)
    bias = float(sum(per_source.values()))
    method_name = comp.diagnostics.get("method") or (
        "laplace" if method == "laplace" else "importance_sampling"
    )
    return BiasReport(
        x=float(x),
        observed={k: float(v) for k, v in o.items()},
        association_A=effect + bias,
        effect_C=effect,
        bias_B=bias,
        per_source=per_source,
        se_association=_wse(w, c.dfy_dx + total, comp.n_eff, comp.quadrature),
        se_effect=_wse(w, c.dfy_dx, comp.n_eff, comp.quadrature),
        se_bias=_wse(w, total, comp.n_eff, comp.quadrature),
        per_source_se={
            s: _wse(w, arrays[s], comp.n_eff, comp.quadrature) for s in c.sources
        },
        n_used=comp.n,
        n_eff=comp.n_eff,
        method=method_name,
        seed=seed if method == "is" else comp.diagnostics.get("seed"),
        diagnostics=dict(comp.diagnostics),
    )
