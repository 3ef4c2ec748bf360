"""Canonical structural causal models over scalar expressions.

An :class:`Scm` couples exogenous noise declarations with one structural
expression per endogenous variable and a role assignment (treatment,
outcome, observed, latent).  Models are validated and topologically
ordered at build time and immutable afterwards, so they are safe to share
across threads.

Each exogenous noise must feed exactly one endogenous equation and appear
exactly once in it; an endogenous variable may also be fully deterministic
(no noise term of its own), in which case it can never be conditioned on
or used as the treatment in bias queries.
"""

from __future__ import annotations

import json
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from . import autodiff
from .dists import NoiseDistribution, dist_from_json
from .errors import (
    CycleDetected,
    ModelError,
    MissingNoiseTerm,
    RoleConflict,
    UnknownVariable,
)
from .expr import Expr, Var, expr_from_json, expr_to_json, evaluate

__all__ = [
    "Roles",
    "Scm",
    "build_scm",
    "evaluate_endogenous",
    "partial_evaluate",
    "PartialEvaluation",
    "Dataset",
    "sample_observational",
    "scm_to_json",
    "scm_from_json",
    "load_scm",
    "save_scm",
]

_SAMPLE_CHUNK = 65536


@dataclass(frozen=True)
class Roles:
    treatment: str
    outcome: str
    observed: frozenset[str] = frozenset()
    latent: frozenset[str] = frozenset()


class Scm:
    """Validated structural causal model; construct via :func:`build_scm`."""

    def __init__(self, exogenous, endogenous, roles, noise_owner, parents):
        self.exogenous: tuple[tuple[str, NoiseDistribution], ...] = tuple(exogenous)
        self.endogenous: tuple[tuple[str, Expr], ...] = tuple(endogenous)
        self.roles: Roles = roles
        self._dist = dict(self.exogenous)
        self._expr = dict(self.endogenous)
        self._noise_owner = dict(noise_owner)  # noise name -> endogenous name
        self._own_noise = {v: u for u, v in noise_owner.items()}
        self._parents = {v: tuple(ps) for v, ps in parents.items()}
        self._plans: dict[str, autodiff.InversionPlan] = {}

    # -- introspection ---------------------------------------------------------

    @property
    def endogenous_names(self) -> tuple[str, ...]:
        return tuple(name for name, _ in self.endogenous)

    @property
    def exogenous_names(self) -> tuple[str, ...]:
        return tuple(name for name, _ in self.exogenous)

    def expression_of(self, variable: str) -> Expr:
        try:
            return self._expr[variable]
        except KeyError:
            raise UnknownVariable(f"unknown endogenous variable {variable!r}") from None

    def dist_of(self, noise: str) -> NoiseDistribution:
        try:
            return self._dist[noise]
        except KeyError:
            raise UnknownVariable(f"unknown exogenous variable {noise!r}") from None

    def noise_of(self, variable: str) -> str | None:
        """Name of the variable's own noise term, or None if deterministic."""
        if variable not in self._expr:
            raise UnknownVariable(f"unknown endogenous variable {variable!r}")
        return self._own_noise.get(variable)

    def owner_of(self, noise: str) -> str:
        try:
            return self._noise_owner[noise]
        except KeyError:
            raise UnknownVariable(f"unknown exogenous variable {noise!r}") from None

    def parents_of(self, variable: str) -> tuple[str, ...]:
        """Endogenous parents (noise terms excluded), in declaration order."""
        if variable not in self._expr:
            raise UnknownVariable(f"unknown endogenous variable {variable!r}")
        return self._parents[variable]

    def inversion_plan(self, variable: str) -> autodiff.InversionPlan:
        plan = self._plans.get(variable)
        if plan is None:
            noise = self.noise_of(variable)
            if noise is None:
                from .errors import NotInvertible

                raise NotInvertible(f"{variable!r} has no noise term of its own")
            plan = autodiff.plan_inversion(self._expr[variable], noise)
            self._plans[variable] = plan
        return plan

    def graph(self):
        from .graphs import CausalGraph

        edges = []
        for v in self.endogenous_names:
            for p in self._parents[v]:
                edges.append((p, v))
        noise_for = {v: self._own_noise.get(v) for v in self.endogenous_names}
        return CausalGraph.build(self.endogenous_names, edges, noise_for=noise_for)

    # -- evaluation --------------------------------------------------------------

    def evaluate(self, u: Mapping[str, object]) -> dict[str, object]:
        """Forward pass in topological order from a full noise assignment."""
        missing = [name for name in self.exogenous_names if name not in u]
        if missing:
            raise UnknownVariable(f"noise assignment missing {missing}")
        env: dict[str, object] = {name: u[name] for name in self.exogenous_names}
        out: dict[str, object] = {}
        for name, expression in self.endogenous:
            value = evaluate(expression, env)
            env[name] = value
            out[name] = value
        return out


def _count_var(expression: Expr, name: str) -> int:
    return sum(1 for node in expression.walk() if isinstance(node, Var) and node.name == name)


def _toposort(names: Sequence[str], deps: Mapping[str, set[str]]) -> list[str]:
    """Kahn's algorithm with declaration order as the deterministic tie-break."""
    order: list[str] = []
    remaining = {v: set(d) for v, d in deps.items()}
    ready = [v for v in names if not remaining[v]]
    used = set(ready)
    while ready:
        v = ready.pop(0)
        order.append(v)
        newly = []
        for w in names:
            if w in used:
                continue
            remaining[w].discard(v)
            if not remaining[w]:
                newly.append(w)
                used.add(w)
        ready.extend(newly)
    if len(order) != len(names):
        stuck = sorted(set(names) - set(order))
        raise CycleDetected(f"cyclic dependency among {stuck}")
    return order


def build_scm(
    exogenous: Sequence[tuple[str, NoiseDistribution]],
    endogenous: Sequence[tuple[str, Expr]],
    roles: Roles,
) -> Scm:
    """Validate definitions and return a topologically ordered model.

    Raises CycleDetected, UnknownVariable, MissingNoiseTerm or RoleConflict
    when the definitions break the model contract.
    """
    exo_names = [name for name, _ in exogenous]
    endo_names = [name for name, _ in endogenous]
    all_names = exo_names + endo_names
    if len(set(all_names)) != len(all_names):
        dupes = sorted({n for n in all_names if all_names.count(n) > 1})
        raise ModelError(f"duplicate variable names {dupes}")

    exo_set = set(exo_names)
    endo_set = set(endo_names)
    exprs = dict(endogenous)

    deps: dict[str, set[str]] = {}
    parents: dict[str, list[str]] = {}
    noise_owner: dict[str, str] = {}
    for name, expression in endogenous:
        refs = expression.variables()
        unknown = refs - exo_set - endo_set
        if unknown:
            raise UnknownVariable(f"{name!r} references undeclared {sorted(unknown)}")
        if name in refs:
            raise CycleDetected(f"{name!r} references itself")
        noises = sorted(refs & exo_set)
        if len(noises) > 1:
            raise MissingNoiseTerm(
                f"{name!r} references several noise terms {noises}; each equation owns at most one"
            )
        for u in noises:
            if u in noise_owner:
                raise MissingNoiseTerm(
                    f"noise {u!r} is shared by {noise_owner[u]!r} and {name!r}"
                )
            if _count_var(expression, u) != 1:
                raise MissingNoiseTerm(f"noise {u!r} must appear exactly once in {name!r}")
            noise_owner[u] = name
        endo_refs = refs & endo_set
        deps[name] = set(endo_refs)
        parents[name] = sorted(endo_refs)

    unused = sorted(exo_set - set(noise_owner))
    if unused:
        raise MissingNoiseTerm(f"declared noises {unused} are not used by any equation")

    order = _toposort(endo_names, deps)
    ordered_endo = [(name, exprs[name]) for name in order]

    # role validation: {treatment} | {outcome} | observed | latent partitions V
    t, y = roles.treatment, roles.outcome
    for name in (t, y):
        if name not in endo_set:
            raise UnknownVariable(f"role refers to unknown variable {name!r}")
    if t == y:
        raise RoleConflict("treatment and outcome must differ")
    observed = frozenset(roles.observed)
    if not observed <= endo_set:
        raise UnknownVariable(f"observed set has unknown names {sorted(observed - endo_set)}")
    if y in observed or t in observed:
        raise RoleConflict("treatment and outcome cannot be in the observed set")
    complement = frozenset(endo_set - {t, y} - observed)
    latent = frozenset(roles.latent) if roles.latent else complement
    if latent != complement:
        raise RoleConflict(
            f"latent set must be exactly the non-role remainder {sorted(complement)}"
        )
    final_roles = Roles(t, y, observed, latent)

    return Scm(tuple(exogenous), tuple(ordered_endo), final_roles, noise_owner, parents)


def evaluate_endogenous(scm: Scm, u: Mapping[str, float]) -> dict[str, float]:
    """Deterministic forward pass; repeated calls are bitwise identical."""
    return scm.evaluate(u)


class PartialEvaluation:
    """Residual evaluator with a subset of endogenous variables pinned.

    Every occurrence of a pinned variable is replaced by its value and its
    structural equation is severed, so the pinned variables' noise terms no
    longer influence anything downstream.
    """

    def __init__(self, scm: Scm, fixed: Mapping[str, float]):
        unknown = set(fixed) - set(scm.endogenous_names)
        if unknown:
            raise UnknownVariable(f"cannot fix unknown variables {sorted(unknown)}")
        self.scm = scm
        self.fixed = dict(fixed)

    def evaluate(self, u: Mapping[str, object]) -> dict[str, object]:
        """Values of the non-fixed endogenous variables given noise inputs.

        Only the noise terms still feeding the residual system are read
        from ``u``; extra entries are ignored.  An entry in ``u`` for a
        pinned variable re-pins it for this call (its equation stays
        severed), which is how derivative seeds are pushed through a
        pinned slot.
        """
        env: dict[str, object] = dict(self.fixed)
        env.update(u)
        out: dict[str, object] = {}
        for name, expression in self.scm.endogenous:
            if name in self.fixed:
                continue
            value = evaluate(expression, env)
            env[name] = value
            out[name] = value
        return out

    def __call__(self, u: Mapping[str, object]) -> dict[str, object]:
        return self.evaluate(u)


def partial_evaluate(scm: Scm, fixed: Mapping[str, float]) -> PartialEvaluation:
    """Residual evaluator with variables in ``fixed`` pinned to values."""
    return PartialEvaluation(scm, fixed)


@dataclass(frozen=True)
class Dataset:
    """Column-named sample matrix (rows = draws, columns = variables)."""

    columns: tuple[str, ...]
    data: np.ndarray

    def __post_init__(self):
        if self.data.ndim != 2 or self.data.shape[1] != len(self.columns):
            raise ValueError("data shape does not match column names")

    @property
    def n(self) -> int:
        return self.data.shape[0]

    def column(self, name: str) -> np.ndarray:
        try:
            return self.data[:, self.columns.index(name)]
        except ValueError:
            raise UnknownVariable(f"dataset has no column {name!r}") from None

    def row_assignment(self, i: int) -> dict[str, float]:
        return {name: float(self.data[i, j]) for j, name in enumerate(self.columns)}

    def to_csv(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(",".join(self.columns) + "\n")
            for row in self.data:
                fh.write(",".join(format(v, ".17g") for v in row) + "\n")

    @staticmethod
    def from_csv(path) -> "Dataset":
        with open(path, "r", encoding="utf-8") as fh:
            header = fh.readline().strip().split(",")
            data = np.loadtxt(fh, delimiter=",", ndmin=2)
        return Dataset(tuple(header), data)


def worker_count() -> int:
    env = os.environ.get("CAUSALBIAS_THREADS", "").strip()
    if env:
        return max(1, int(env))
    return 1


def sample_observational(scm: Scm, n: int, seed: int) -> Dataset:
    """n i.i.d. joint draws of all endogenous variables.

    Rows are generated in fixed-size chunks with RNG substreams spawned
    from (seed, chunk index), so results are a pure function of
    (scm, n, seed) regardless of worker count; chunk results are assembled
    in index order.
    """
    if n < 1:
        raise ValueError("need n >= 1 samples")
    names = scm.endogenous_names
    exo = scm.exogenous
    starts = list(range(0, n, _SAMPLE_CHUNK))
    seeds = np.random.SeedSequence(seed).spawn(len(starts))

    def draw(chunk_index: int) -> np.ndarray:
        rng = np.random.Generator(np.random.PCG64(seeds[chunk_index]))
        size = min(_SAMPLE_CHUNK, n - starts[chunk_index])
        u = {name: dist.sample(rng, size) for name, dist in exo}
        values = scm.evaluate(u)
        return np.column_stack([values[name] for name in names])

    workers = worker_count()
    if workers > 1 and len(starts) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            blocks = list(pool.map(draw, range(len(starts))))
    else:
        blocks = [draw(i) for i in range(len(starts))]
    return Dataset(names, np.vstack(blocks))


# -- JSON model files ---------------------------------------------------------


def scm_to_json(scm: Scm) -> dict:
    return {
        "exogenous": [{"name": name, "dist": dist.to_json()} for name, dist in scm.exogenous],
        "endogenous": [
            {"name": name, "expr": expr_to_json(expression)}
            for name, expression in scm.endogenous
        ],
        "roles": {
            "treatment": scm.roles.treatment,
            "outcome": scm.roles.outcome,
            "observed": sorted(scm.roles.observed),
            "latent": sorted(scm.roles.latent),
        },
    }


def scm_from_json(data: dict) -> Scm:
    try:
        exogenous = [(e["name"], dist_from_json(e["dist"])) for e in data["exogenous"]]
        endogenous = [(e["name"], expr_from_json(e["expr"])) for e in data["endogenous"]]
        roles_raw = data["roles"]
        roles = Roles(
            treatment=roles_raw["treatment"],
            outcome=roles_raw["outcome"],
            observed=frozenset(roles_raw.get("observed", [])),
            latent=frozenset(roles_raw.get("latent", [])),
        )
    except (KeyError, TypeError) as err:
        raise ModelError(f"malformed model document: {err}") from err
    return build_scm(exogenous, endogenous, roles)


def save_scm(scm: Scm, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(scm_to_json(scm), fh, indent=2)
        fh.write("\n")


def load_scm(path) -> Scm:
    with open(path, "r", encoding="utf-8") as fh:
        return scm_from_json(json.load(fh))
