"""Posterior inference over latent exogenous noise given (treatment, observations).

Conditioning on the treatment value x and observed values o pins the noise
terms of the conditioned variables: walking the model in topological order,
each conditioned equation is inverted in its own noise, while unconditioned
variables evaluate forward from latent noise.  The latent posterior
p(U_latent | x, o) is approximated either by

* a Laplace Gaussian at the posterior mode (adaptive-moment gradient ascent
  with a curvature polish, then the negated inverse Hessian), or
* a weighted particle set from importance sampling with the prior as the
  proposal, so unnormalized weights reduce to the likelihood of (x, o).

Either approximation is then *composed* into full noise particles: every
particle is augmented with the deterministically inverted noise values of
the conditioned variables, so downstream estimators integrate over complete
noise assignments.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Iterator, Mapping

import numpy as np

from .autodiff import Dual, SecondOrder, solve_noise
from .errors import (
    DegenerateWeightsWarning,
    NonConvergence,
    NotInvertible,
    NotPositiveDefinite,
    UnknownVariable,
)
from .expr import evaluate
from .scm import Scm

__all__ = [
    "InferenceOptions",
    "MapResult",
    "LaplacePosterior",
    "ParticlePosterior",
    "ComposedParticles",
    "FullPosteriorSample",
    "map_estimate",
    "laplace_posterior",
    "importance_posterior",
    "compose_full_posterior",
    "materialize_particles",
]

_CHUNK = 32768


@dataclass(frozen=True)
class InferenceOptions:
    """Knobs for posterior approximation; defaults work on all built-ins."""

    step: float = 0.05
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    tol: float = 1e-8  # sup-norm gradient target for the mode search
    max_iter: int = 10_000
    init: Mapping[str, float] | None = None
    gh_max_dim: int = 4  # quadrature for Laplace up to this latent dimension
    gh_budget: int = 10_000  # total quadrature points across all dimensions
    laplace_draws: int = 10_000  # fallback sample count beyond gh_max_dim
    seed: int = 0


def _logdensity(dist, u):
    """Distribution log-density lifted to whatever number type ``u`` is."""
    if isinstance(u, Dual):
        val = dist.log_density(u.val)
        if u.tan is None:
            return Dual(val, None)
        return Dual(val, u.tan * dist.dlog_density(u.val))
    if isinstance(u, SecondOrder):
        return u._compose(
            float(dist.log_density(u.val)),
            float(dist.dlog_density(u.val)),
            float(dist.d2log_density(u.val)),
        )
    return dist.log_density(u)


def _log_abs(x):
    if isinstance(x, Dual):
        val = np.log(np.abs(x.val))
        return Dual(val, None if x.tan is None else x.tan / x.val)
    if isinstance(x, SecondOrder):
        return x._compose(math.log(abs(x.val)), 1.0 / x.val, -1.0 / x.val**2)
    return np.log(np.abs(x))


class Conditioner:
    """Shared machinery for one conditioning query (x, o) on a model."""

    def __init__(self, scm: Scm, x: float, o: Mapping[str, float]):
        self.scm = scm
        roles = scm.roles
        unknown = set(o) - set(scm.endogenous_names)
        if unknown:
            raise UnknownVariable(f"observed values for unknown variables {sorted(unknown)}")
        if roles.treatment in o or roles.outcome in o:
            raise ValueError("treatment and outcome cannot appear among the observations")
        self.x = float(x)
        self.o = {k: float(v) for k, v in o.items()}
        self.conditioned = tuple(
            v for v in scm.endogenous_names if v == roles.treatment or v in self.o
        )
        for v in self.conditioned:
            if scm.noise_of(v) is None:
                raise NotInvertible(
                    f"cannot condition on {v!r}: it has no noise term to invert"
                )
        self.latent_order = tuple(
            scm.noise_of(v)
            for v in scm.endogenous_names
            if v not in self.conditioned and scm.noise_of(v) is not None
        )
        self._latent_dists = {u: scm.dist_of(u) for u in self.latent_order}

    def fixed_value(self, variable: str) -> float:
        return self.x if variable == self.scm.roles.treatment else self.o[variable]

    @property
    def dim(self) -> int:
        return len(self.latent_order)

    def forward(self, latent_env: Mapping[str, object], targets: Mapping[str, object] | None = None):
        """Severed forward pass: conditioned variables pinned, rest computed.

        Returns (endogenous env, noise solutions u*, equation slopes df/du
        for each conditioned variable).  Works on plain arrays and duals.
        ``targets`` overrides pinned values (e.g. to push derivative seeds
        through the treatment slot).
        """
        scm = self.scm
        env: dict[str, object] = dict(latent_env)
        ustars: dict[str, object] = {}
        slopes: dict[str, object] = {}
        for name, expression in scm.endogenous:
            if name in self.conditioned:
                if targets is not None and name in targets:
                    target = targets[name]
                else:
                    target = self.fixed_value(name)
                noise = scm.noise_of(name)
                plan = scm.inversion_plan(name)
                u_star, dfdu = solve_noise(expression, noise, target, env, plan)
                ustars[name] = u_star
                slopes[name] = dfdu
                env[name] = target
            else:
                env[name] = evaluate(expression, env)
        return env, ustars, slopes

    def log_joint(self, latent_env: Mapping[str, object], treatment_value=None):
        """log p(u_latent, x, o): latent priors plus conditioned likelihood.

        ``treatment_value`` overrides the pinned treatment (used to push
        derivative seeds through the treatment slot).
        """
        targets = None
        if treatment_value is not None:
            targets = {self.scm.roles.treatment: treatment_value}
        env, ustars, slopes = self.forward(latent_env, targets)
        total = 0.0
        for u in self.latent_order:
            total = total + _logdensity(self._latent_dists[u], latent_env[u])
        for v in self.conditioned:
            dist = self.scm.dist_of(self.scm.noise_of(v))
            total = total + _logdensity(dist, ustars[v]) - _log_abs(slopes[v])
        return total

    # -- mode search -----------------------------------------------------------

    def _bounds(self):
        lo = np.full(self.dim, -np.inf)
        hi = np.full(self.dim, np.inf)
        for i, u in enumerate(self.latent_order):
            a, b = self._latent_dists[u].support()
            if np.isfinite(a) or np.isfinite(b):
                margin = 1e-9 * (b - a)
                lo[i], hi[i] = a + margin, b - margin
        return lo, hi

    def _initial(self, opts: InferenceOptions) -> np.ndarray:
        u0 = np.zeros(self.dim)
        for i, u in enumerate(self.latent_order):
            a, b = self._latent_dists[u].support()
            if np.isfinite(a) and np.isfinite(b):
                u0[i] = 0.5 * (a + b)
        if opts.init:
            for i, u in enumerate(self.latent_order):
                if u in opts.init:
                    u0[i] = float(opts.init[u])
        return u0

    def _value_and_grad(self, u_vec: np.ndarray):
        d = self.dim
        env = {
            name: Dual.seed(u_vec[i], i, d) for i, name in enumerate(self.latent_order)
        }
        out = self.log_joint(env)
        if not isinstance(out, Dual) or out.tan is None:
            return float(out if not isinstance(out, Dual) else out.val), np.zeros(d)
        return float(out.val), np.asarray(out.tan, dtype=float).reshape(d)

    def _hessian_at(self, u_vec: np.ndarray) -> np.ndarray:
        d = self.dim
        env = {
            name: SecondOrder.seed(float(u_vec[i]), i, d)
            for i, name in enumerate(self.latent_order)
        }
        out = self.log_joint(env)
        h = out.h if isinstance(out, SecondOrder) and out.h is not None else np.zeros((d, d))
        h = np.asarray(h, dtype=float)
        return 0.5 * (h + h.T)

    def _adaptive_phase(self, u, lo, hi, opts: InferenceOptions, budget: int):
        """Adaptive-moment ascent until the gradient is small or stalls."""
        d = self.dim
        m = np.zeros(d)
        v = np.zeros(d)
        iterations = 0
        best_ginf = np.inf
        stall = 0
        step = opts.step
        switch_tol = max(1e-3, opts.tol)
        value, grad = self._value_and_grad(u)
        for t in range(1, budget + 1):
            ginf = float(np.max(np.abs(grad)))
            if ginf <= switch_tol:
                break
            if ginf < 0.7 * best_ginf:
                best_ginf, stall = ginf, 0
            else:
                stall += 1
                if stall >= 50:  # plateau: shrink the step to keep contracting
                    step *= 0.5
                    stall = 0
            iterations = t
            m = opts.beta1 * m + (1.0 - opts.beta1) * grad
            v = opts.beta2 * v + (1.0 - opts.beta2) * grad * grad
            mhat = m / (1.0 - opts.beta1**t)
            vhat = v / (1.0 - opts.beta2**t)
            u = np.clip(u + step * mhat / (np.sqrt(vhat) + opts.eps), lo, hi)
            value, grad = self._value_and_grad(u)
            if step < 1e-14:
                break
        return u, value, grad, iterations

    def _polish_phase(self, u, value, grad, lo, hi, opts: InferenceOptions, budget: int):
        """Guarded Newton steps; exact on log-quadratic posteriors."""
        polish_tol = min(opts.tol, 1e-11)
        iterations = 0
        for _ in range(min(64, budget)):
            ginf = float(np.max(np.abs(grad)))
            if ginf <= polish_tol:
                break
            iterations += 1
            h = self._hessian_at(u)
            try:
                delta = np.linalg.solve(h, -grad)
            except np.linalg.LinAlgError:
                delta = grad  # fall back to plain ascent
            scale = 1.0
            improved = False
            for _ in range(40):
                candidate = np.clip(u + scale * delta, lo, hi)
                cval, cgrad = self._value_and_grad(candidate)
                if cval >= value or float(np.max(np.abs(cgrad))) < ginf:
                    u, value, grad = candidate, cval, cgrad
                    improved = True
                    break
                scale *= 0.5
            if not improved:
                break
        return u, value, grad, iterations

    def map_search(self, opts: InferenceOptions) -> "MapResult":
        """Adaptive-moment ascent, then a curvature polish.

        The adaptive phase alone plateaus near the mode (its effective step
        does not vanish), so once progress stalls or the gradient is small
        the search switches to guarded Newton steps.  A stationary point
        with non-negative curvature in some direction is not a mode: the
        search deterministically escapes along the most positive curvature
        eigenvector and resumes (the all-zero initialization can sit on
        exactly such a saddle).
        """
        d = self.dim
        if d == 0:
            return MapResult({}, 0, 0.0, True)
        lo, hi = self._bounds()
        u = np.clip(self._initial(opts), lo, hi)
        iterations = 0
        value = grad = None
        escape = 0.25
        for _ in range(6):
            remaining = opts.max_iter - iterations
            u, value, grad, it1 = self._adaptive_phase(u, lo, hi, opts, max(0, remaining - 64))
            iterations += it1
            remaining = opts.max_iter - iterations
            u, value, grad, it2 = self._polish_phase(u, value, grad, lo, hi, opts, remaining)
            iterations += it2
            ginf = float(np.max(np.abs(grad)))
            if ginf > opts.tol or iterations >= opts.max_iter:
                break  # genuinely stuck or out of budget; report below
            h = self._hessian_at(u)
            eigvals, eigvecs = np.linalg.eigh(h)
            if eigvals[-1] < -1e-10 * max(1.0, float(-eigvals[0])):
                break  # strict curvature cap in every direction: a mode
            direction = eigvecs[:, -1]
            up = np.clip(u + escape * direction, lo, hi)
            down = np.clip(u - escape * direction, lo, hi)
            vu, gu = self._value_and_grad(up)
            vd, gd = self._value_and_grad(down)
            u, value, grad = (up, vu, gu) if vu >= vd else (down, vd, gd)
            escape *= 2.0
            iterations += 1

        ginf = float(np.max(np.abs(grad)))
        if ginf > opts.tol:
            raise NonConvergence(
                f"mode search stopped at grad sup-norm {ginf:.3e} > {opts.tol:.1e} "
                f"after {iterations} iterations"
            )
        values = {name: float(u[i]) for i, name in enumerate(self.latent_order)}
        return MapResult(values, iterations, ginf, True)

    # -- batched composition and likelihood -------------------------------------

    def compose(self, points: np.ndarray, weights=None, quadrature=False, diagnostics=None):
        points = np.asarray(points, dtype=float)
        if self.dim == 0:
            n = 1 if weights is None else len(np.atleast_1d(weights))
            points = np.zeros((n, 0))
        else:
            points = points.reshape(-1, self.dim)
            n = points.shape[0]
        if weights is None:
            weights = np.ones(n)
        weights = np.atleast_1d(np.asarray(weights, dtype=float))
        if len(weights) != n:
            raise ValueError("weights length does not match the number of draws")
        noise: dict[str, np.ndarray] = {}
        for i, u in enumerate(self.latent_order):
            noise[u] = points[:, i].copy()
        latent_env = {u: noise[u] for u in self.latent_order}
        _, ustars, _ = self.forward(latent_env)
        for v in self.conditioned:
            noise[self.scm.noise_of(v)] = np.broadcast_to(
                np.asarray(ustars[v], dtype=float), (n,)
            ).copy()
        sw = float(np.sum(weights))
        sw2 = float(np.sum(np.asarray(weights) ** 2))
        n_eff = sw * sw / sw2 if sw2 > 0 else 0.0
        return ComposedParticles(
            scm=self.scm,
            x=self.x,
            o=dict(self.o),
            noise=noise,
            weights=np.asarray(weights, dtype=float),
            latent_order=self.latent_order,
            n_eff=n_eff,
            quadrature=quadrature,
            diagnostics=diagnostics or {},
        )

    def log_likelihood(self, points: np.ndarray) -> np.ndarray:
        """log p(x, o | u_latent) for each latent draw (row)."""
        points = np.atleast_2d(np.asarray(points, dtype=float))
        n = points.shape[0]
        out = np.zeros(n)
        for start in range(0, n, _CHUNK):
            block = points[start : start + _CHUNK]
            latent_env = {
                u: block[:, i].copy() for i, u in enumerate(self.latent_order)
            }
            _, ustars, slopes = self.forward(latent_env)
            acc = np.zeros(block.shape[0])
            for v in self.conditioned:
                dist = self.scm.dist_of(self.scm.noise_of(v))
                u_star = np.broadcast_to(np.asarray(ustars[v], dtype=float), acc.shape)
                slope = np.broadcast_to(np.asarray(slopes[v], dtype=float), acc.shape)
                with np.errstate(divide="ignore"):
                    acc = acc + dist.log_density(u_star) - np.log(np.abs(slope))
            out[start : start + _CHUNK] = acc
        return out


@dataclass(frozen=True)
class MapResult:
    values: dict[str, float]
    iterations: int
    grad_norm: float
    converged: bool


@dataclass(frozen=True)
class LaplacePosterior:
    """Gaussian posterior approximation over the latent noise vector."""

    mean: np.ndarray
    covariance: np.ndarray
    latent_order: tuple[str, ...]
    diagnostics: dict = field(default_factory=dict)

    @property
    def dim(self) -> int:
        return len(self.latent_order)


@dataclass(frozen=True)
class ParticlePosterior:
    """Weighted latent particles; weights are scaled to sum to the count."""

    points: np.ndarray
    weights: np.ndarray
    latent_order: tuple[str, ...]
    n_eff: float
    diagnostics: dict = field(default_factory=dict)

    @property
    def n(self) -> int:
        return self.points.shape[0]


@dataclass(frozen=True)
class FullPosteriorSample:
    assignment: dict[str, float]
    weight: float


@dataclass(frozen=True)
class ComposedParticles:
    """Full noise particles: latent draws plus inverted conditioned noise."""

    scm: Scm
    x: float
    o: dict[str, float]
    noise: dict[str, np.ndarray]
    weights: np.ndarray
    latent_order: tuple[str, ...]
    n_eff: float
    quadrature: bool
    diagnostics: dict

    @property
    def n(self) -> int:
        return len(self.weights)

    def samples(self) -> Iterator[FullPosteriorSample]:
        names = list(self.noise)
        for i in range(self.n):
            yield FullPosteriorSample(
                {name: float(self.noise[name][i]) for name in names},
                float(self.weights[i]),
            )


def map_estimate(
    scm: Scm, x: float, o: Mapping[str, float], opts: InferenceOptions | None = None
) -> MapResult:
    """Posterior mode of the latent noise given treatment x and observations o.

    Deterministic given the initialization; raises NonConvergence when the
    gradient sup-norm is still above tolerance at the iteration cap.
    """
    opts = opts or InferenceOptions()
    return Conditioner(scm, x, o).map_search(opts)


def laplace_posterior(
    scm: Scm, x: float, o: Mapping[str, float], opts: InferenceOptions | None = None
) -> LaplacePosterior:
    """Gaussian approximation: mode and negated inverse curvature."""
    opts = opts or InferenceOptions()
    cond = Conditioner(scm, x, o)
    result = cond.map_search(opts)
    d = cond.dim
    mode = np.array([result.values[u] for u in cond.latent_order], dtype=float)
    h = cond._hessian_at(mode) if d else np.zeros((0, 0))
    neg = -h
    if d:
        try:
            np.linalg.cholesky(neg)
        except np.linalg.LinAlgError:
            raise NotPositiveDefinite(
                "negated curvature at the mode is not positive-definite; "
                "the posterior has no well-defined Gaussian approximation here"
            ) from None
        cov = np.linalg.inv(neg)
        cov = 0.5 * (cov + cov.T)
    else:
        cov = np.zeros((0, 0))
    diagnostics = {
        "method": "laplace",
        "iterations": result.iterations,
        "grad_norm": result.grad_norm,
        "n": None,
        "n_eff": None,
        "seed": None,
    }
    return LaplacePosterior(mode, cov, cond.latent_order, diagnostics)


def importance_posterior(
    scm: Scm, x: float, o: Mapping[str, float], n: int, seed: int
) -> ParticlePosterior:
    """Prior-proposal importance sampling of the latent posterior.

    With the prior as proposal the unnormalized weight of a draw is the
    likelihood of (x, o); weights are rescaled to sum to n and the
    effective sample size (sum w)^2 / sum w^2 is reported.  A collapse to
    n_eff < 10 raises a DegenerateWeightsWarning but is not fatal.
    """
    if n < 1:
        raise ValueError("need n >= 1 particles")
    cond = Conditioner(scm, x, o)
    d = cond.dim
    points = np.empty((n, d))
    starts = list(range(0, n, _CHUNK))
    seeds = np.random.SeedSequence(seed).spawn(len(starts))
    for k, start in enumerate(starts):
        rng = np.random.Generator(np.random.PCG64(seeds[k]))
        size = min(_CHUNK, n - start)
        for i, u in enumerate(cond.latent_order):
            points[start : start + size, i] = scm.dist_of(u).sample(rng, size)
    logw = cond.log_likelihood(points)
    top = float(np.max(logw)) if n else 0.0
    if not np.isfinite(top):
        raise NotInvertible("all importance weights vanished: (x, o) has zero likelihood")
    w = np.exp(logw - top)
    sw = float(np.sum(w))
    sw2 = float(np.sum(w * w))
    n_eff = sw * sw / sw2 if sw2 > 0 else 0.0
    weights = w * (n / sw)
    if n_eff < 10.0:
        warnings.warn(
            f"importance weights are degenerate: n_eff = {n_eff:.2f} of n = {n}",
            DegenerateWeightsWarning,
            stacklevel=2,
        )
    diagnostics = {
        "method": "importance_sampling",
        "iterations": None,
        "grad_norm": None,
        "n": n,
        "n_eff": n_eff,
        "seed": seed,
    }
    return ParticlePosterior(points, weights, cond.latent_order, n_eff, diagnostics)


def compose_full_posterior(
    scm: Scm,
    latent_draws: np.ndarray,
    x: float,
    o: Mapping[str, float],
    weights: np.ndarray | None = None,
) -> ComposedParticles:
    """Augment latent draws with the pinned noise of conditioned variables.

    Each draw is completed in topological order: the noise of the treatment
    and of every observed variable is set to the unique value reproducing
    the conditioning, so forward-evaluating a composed assignment returns
    exactly (x, o).
    """
    cond = Conditioner(scm, x, o)
    return cond.compose(np.asarray(latent_draws, dtype=float), weights=weights)


def _gauss_hermite(dim: int, budget: int) -> tuple[np.ndarray, np.ndarray]:
    """Tensor-product Gauss-Hermite rule for a standard normal in ``dim``."""
    m = max(3, min(64, int(round(budget ** (1.0 / dim)))))
    nodes, wts = np.polynomial.hermite_e.hermegauss(m)
    wts = wts / wts.sum()
    grids = np.meshgrid(*([nodes] * dim), indexing="ij")
    z = np.column_stack([g.reshape(-1) for g in grids])
    w = np.ones(z.shape[0])
    stride = np.meshgrid(*([wts] * dim), indexing="ij")
    for g in stride:
        w = w * g.reshape(-1)
    return z, w


def materialize_particles(
    scm: Scm,
    x: float,
    o: Mapping[str, float],
    posterior,
    opts: InferenceOptions | None = None,
) -> ComposedParticles:
    """Turn any posterior form into composed full-noise particles.

    Laplace posteriors become deterministic Gauss-Hermite quadrature points
    up to ``gh_max_dim`` latent dimensions (exact for polynomial integrands,
    which makes linear-Gaussian queries exact); beyond that they are sampled
    with ``laplace_draws`` Gaussian draws.  Particle posteriors pass through.
    """
    opts = opts or InferenceOptions()
    if isinstance(posterior, ComposedParticles):
        return posterior
    cond = Conditioner(scm, x, o)
    if isinstance(posterior, ParticlePosterior):
        return cond.compose(
            posterior.points,
            weights=posterior.weights,
            quadrature=False,
            diagnostics=dict(posterior.diagnostics),
        )
    if isinstance(posterior, LaplacePosterior):
        d = posterior.dim
        diagnostics = dict(posterior.diagnostics)
        if d == 0:
            return cond.compose(np.zeros((1, 0)), weights=np.ones(1), quadrature=True,
                                diagnostics=diagnostics)
        if d <= opts.gh_max_dim:
            z, w = _gauss_hermite(d, opts.gh_budget)
            chol = np.linalg.cholesky(posterior.covariance)
            points = posterior.mean + z @ chol.T
            weights = w * len(w)
            diagnostics.update({"n": len(w), "n_eff": float(len(w)), "quadrature": True})
            return cond.compose(points, weights=weights, quadrature=True,
                                diagnostics=diagnostics)
        rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(opts.seed)))
        z = rng.standard_normal((opts.laplace_draws, d))
        chol = np.linalg.cholesky(posterior.covariance)
        points = posterior.mean + z @ chol.T
        diagnostics.update({"n": opts.laplace_draws, "n_eff": float(opts.laplace_draws)})
        return cond.compose(points, weights=None, quadrature=False, diagnostics=diagnostics)
    raise TypeError(f"unsupported posterior object {type(posterior).__name__}")
