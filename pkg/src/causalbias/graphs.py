"""Graphical reasoning over causal DAGs with explicit noise nodes.

A :class:`CausalGraph` carries the endogenous DAG together with one
exogenous noise node per stochastic variable (noise nodes have in-degree 0
and out-degree 1).  On top of it live:

* ``d_separated`` - reachability-based d-separation (Bayes-ball style),
* ``causal_exogenous_set`` - the noise terms that drive the outcome's
  randomness once treatment and pre-treatment observations are held fixed,
* ``identifiable_by_adjustment`` - the noise-wise independence criterion
  deciding identifiability by covariate adjustment,
* ``adjustment_criterion`` - an independent, path-enumeration check of the
  classic two-part adjustment condition; both routes are computed and
  their agreement is recorded on every verdict.

The treatment's own noise is never counted into the causal exogenous set:
holding the treatment fixed, its private noise carries no information about
the outcome that is not mediated by the treatment's other parents, and those
parents' noise terms are accounted for separately.  Likewise the first part
of the adjustment criterion scans variables on causal paths *after* the
treatment; conditioning on an off-path child of the treatment is harmless.
Exhaustive enumeration over small DAGs (see the acceptance suite) confirms
the two routes agree under these conventions.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

from .errors import CycleDetected, UnknownVariable

__all__ = [
    "CausalGraph",
    "d_separated",
    "find_open_path",
    "causal_exogenous_set",
    "identifiable_by_adjustment",
    "adjustment_criterion",
    "Violation",
    "IdentifiabilityVerdict",
]

ENDOGENOUS = "endogenous"
EXOGENOUS = "exogenous"


class CausalGraph:
    """Immutable DAG over endogenous variables plus their noise nodes."""

    def __init__(self, kind, parents, children, noise_for):
        self._kind: dict[str, str] = kind
        self._pa: dict[str, frozenset[str]] = parents
        self._ch: dict[str, frozenset[str]] = children
        self._noise_for: dict[str, str | None] = noise_for
        self._owner = {u: v for v, u in noise_for.items() if u is not None}
        self._an_cache: dict[str, frozenset[str]] = {}
        self._de_cache: dict[str, frozenset[str]] = {}

    @staticmethod
    def build(
        endogenous: Sequence[str],
        edges: Iterable[tuple[str, str]],
        noise_for: Mapping[str, str | None] | None = None,
    ) -> "CausalGraph":
        """Assemble and validate a graph.

        ``edges`` are endogenous-to-endogenous arcs.  ``noise_for`` maps each
        endogenous variable to its noise node name (or None for a purely
        deterministic variable); by default every variable gets ``U_<name>``.
        """
        endo = list(endogenous)
        if len(set(endo)) != len(endo):
            raise ValueError("duplicate endogenous names")
        if noise_for is None:
            noise_for = {v: f"U_{v}" for v in endo}
        else:
            noise_for = {v: noise_for.get(v) for v in endo}
        kind = {v: ENDOGENOUS for v in endo}
        for v, u in noise_for.items():
            if u is None:
                continue
            if u in kind:
                raise ValueError(f"noise name {u!r} collides with another node")
            kind[u] = EXOGENOUS
        pa: dict[str, set[str]] = {node: set() for node in kind}
        ch: dict[str, set[str]] = {node: set() for node in kind}
        for a, b in edges:
            for name in (a, b):
                if name not in kind:
                    raise UnknownVariable(f"edge endpoint {name!r} is not a declared node")
            if kind[a] == EXOGENOUS or kind[b] == EXOGENOUS:
                raise ValueError("noise nodes are attached via noise_for, not edges")
            pa[b].add(a)
            ch[a].add(b)
        for v, u in noise_for.items():
            if u is not None:
                pa[v].add(u)
                ch[u].add(v)
        graph = CausalGraph(
            kind,
            {n: frozenset(s) for n, s in pa.items()},
            {n: frozenset(s) for n, s in ch.items()},
            dict(noise_for),
        )
        graph._check_acyclic(endo)
        return graph

    def _check_acyclic(self, endo: Sequence[str]) -> None:
        seen: dict[str, int] = {}  # 1 = on stack, 2 = done

        def visit(v: str, trail: list[str]) -> None:
            state = seen.get(v)
            if state == 1:
                cycle = trail[trail.index(v):] + [v]
                raise CycleDetected(f"cycle {' -> '.join(cycle)}")
            if state == 2:
                return
            seen[v] = 1
            trail.append(v)
            for w in sorted(self._ch[v]):
                visit(w, trail)
            trail.pop()
            seen[v] = 2

        for v in endo:
            visit(v, [])

    # -- basic structure ---------------------------------------------------------

    @property
    def nodes(self) -> tuple[str, ...]:
        return tuple(sorted(self._kind))

    @property
    def endogenous_nodes(self) -> tuple[str, ...]:
        return tuple(sorted(v for v, k in self._kind.items() if k == ENDOGENOUS))

    @property
    def exogenous_nodes(self) -> tuple[str, ...]:
        return tuple(sorted(v for v, k in self._kind.items() if k == EXOGENOUS))

    def is_exogenous(self, node: str) -> bool:
        return self._require(node) == EXOGENOUS

    def noise_of(self, variable: str) -> str | None:
        if variable not in self._noise_for:
            raise UnknownVariable(f"unknown endogenous variable {variable!r}")
        return self._noise_for[variable]

    def owner_of(self, noise: str) -> str:
        if noise not in self._owner:
            raise UnknownVariable(f"unknown noise node {noise!r}")
        return self._owner[noise]

    def _require(self, node: str) -> str:
        try:
            return self._kind[node]
        except KeyError:
            raise UnknownVariable(f"unknown node {node!r}") from None

    def parents(self, node: str) -> frozenset[str]:
        self._require(node)
        return self._pa[node]

    def children(self, node: str) -> frozenset[str]:
        self._require(node)
        return self._ch[node]

    def ancestors(self, node: str) -> frozenset[str]:
        """Strict ancestors in the full graph (noise nodes included)."""
        self._require(node)
        cached = self._an_cache.get(node)
        if cached is None:
            out: set[str] = set()
            stack = list(self._pa[node])
            while stack:
                v = stack.pop()
                if v not in out:
                    out.add(v)
                    stack.extend(self._pa[v])
            cached = frozenset(out)
            self._an_cache[node] = cached
        return cached

    def descendants(self, node: str) -> frozenset[str]:
        """Strict descendants (always endogenous: noise nodes have no parents)."""
        self._require(node)
        cached = self._de_cache.get(node)
        if cached is None:
            out: set[str] = set()
            stack = list(self._ch[node])
            while stack:
                v = stack.pop()
                if v not in out:
                    out.add(v)
                    stack.extend(self._ch[v])
            cached = frozenset(out)
            self._de_cache[node] = cached
        return cached


def _validate_query(g: CausalGraph, a: str, b: str, given: Iterable[str]) -> frozenset[str]:
    for node in (a, b):
        g._require(node)
    given = frozenset(given)
    for node in given:
        g._require(node)
    if a == b:
        raise ValueError("d-separation needs two distinct nodes")
    if a in given or b in given:
        raise ValueError("conditioning set must exclude the query nodes")
    return given


def _reachable(g: CausalGraph, source: str, given: frozenset[str]) -> set[str]:
    """Nodes d-connected to ``source`` given ``given`` (Bayes-ball sweep)."""
    closure = set(given)
    for node in given:
        closure.update(g.ancestors(node))
    reachable: set[str] = set()
    # direction "up" = arrived from a child, "down" = arrived from a parent
    queue: list[tuple[str, str]] = [(source, "up")]
    visited: set[tuple[str, str]] = set()
    while queue:
        node, direction = queue.pop()
        if (node, direction) in visited:
            continue
        visited.add((node, direction))
        if direction == "up":
            if node not in given:
                reachable.add(node)
                for p in g.parents(node):
                    queue.append((p, "up"))
                for c in g.children(node):
                    queue.append((c, "down"))
        else:
            if node not in given:
                reachable.add(node)
                for c in g.children(node):
                    queue.append((c, "down"))
            if node in closure:
                for p in g.parents(node):
                    queue.append((p, "up"))
    return reachable


def d_separated(g: CausalGraph, a: str, b: str, given: Iterable[str] = ()) -> bool:
    """True iff every path between ``a`` and ``b`` is blocked given ``given``."""
    given = _validate_query(g, a, b, given)
    return b not in _reachable(g, a, given)


def find_open_path(
    g: CausalGraph, a: str, b: str, given: Iterable[str] = ()
) -> tuple[str, ...] | None:
    """Lexicographically first unblocked path between ``a`` and ``b``, if any.

    Search order is deterministic (neighbors visited in sorted name order),
    so violation witnesses are stable across runs.
    """
    given = _validate_query(g, a, b, given)

    def open_triple(prev: str, cur: str, nxt: str) -> bool:
        collider = prev in g.parents(cur) and nxt in g.parents(cur)
        if collider:
            return cur in given or bool(g.descendants(cur) & given)
        return cur not in given

    def extend(path: list[str], on_path: set[str]) -> tuple[str, ...] | None:
        cur = path[-1]
        for nxt in sorted(g.parents(cur) | g.children(cur)):
            if nxt in on_path:
                continue
            if len(path) >= 2 and not open_triple(path[-2], cur, nxt):
                continue
            if nxt == b:
                return tuple(path) + (b,)
            path.append(nxt)
            on_path.add(nxt)
            found = extend(path, on_path)
            if found:
                return found
            on_path.discard(nxt)
            path.pop()
        return None

    return extend([a], {a})


def _role_check(g: CausalGraph, x: str, y: str, observed: Iterable[str]) -> frozenset[str]:
    for node in (x, y):
        if g.is_exogenous(node):
            raise ValueError(f"{node!r} is a noise node; roles must be endogenous")
    if x == y:
        raise ValueError("treatment and outcome must differ")
    observed = frozenset(observed)
    for node in observed:
        g._require(node)
    if x in observed or y in observed:
        raise ValueError("observed set cannot contain treatment or outcome")
    return observed


def causal_exogenous_set(
    g: CausalGraph, x: str, y: str, observed: Iterable[str] = ()
) -> frozenset[str]:
    """Noise nodes that still randomize the outcome after conditioning.

    These are the noise ancestors of ``y`` (excluding the treatment's own
    noise) that remain d-connected to ``y`` given the treatment and the
    observed non-descendants of the treatment.
    """
    observed = _role_check(g, x, y, observed)
    pre_treatment = observed - g.descendants(x)
    cond = frozenset({x}) | pre_treatment
    candidates = {u for u in g.ancestors(y) if g.is_exogenous(u)}
    own = g.noise_of(x)
    if own is not None:
        candidates.discard(own)
    reached = _reachable(g, y, cond)
    return frozenset(u for u in candidates if u in reached)


@dataclass(frozen=True)
class Violation:
    noise: str
    reason: str  # always "dependent-given-O"
    witness_path: tuple[str, ...]


@dataclass(frozen=True)
class IdentifiabilityVerdict:
    identifiable: bool
    causal_exogenous_set: frozenset[str]
    violating_noise: tuple[Violation, ...]
    adjustment_criterion_agrees: bool

    def to_json(self) -> dict:
        return {
            "identifiable": self.identifiable,
            "causal_exogenous_set": sorted(self.causal_exogenous_set),
            "violations": [
                {"noise": v.noise, "witness_path": " -> ".join(v.witness_path)}
                for v in self.violating_noise
            ],
            "adjustment_criterion_agrees": self.adjustment_criterion_agrees,
        }


def identifiable_by_adjustment(
    g: CausalGraph, x: str, y: str, observed: Iterable[str] = ()
) -> IdentifiabilityVerdict:
    """Decide identifiability by covariate adjustment on the noise route.

    The verdict is positive iff every member of the causal exogenous set is
    d-separated from the treatment given the observed variables.  The
    independent path-based adjustment criterion is evaluated alongside and
    its agreement recorded.
    """
    observed = _role_check(g, x, y, observed)
    ucs = causal_exogenous_set(g, x, y, observed)
    reached = _reachable(g, x, observed)
    violations = []
    for noise in sorted(ucs):
        if noise in reached:
            witness = find_open_path(g, noise, x, observed) or (noise, "?", x)
            violations.append(Violation(noise, "dependent-given-O", tuple(witness)))
    identifiable = not violations
    agrees = adjustment_criterion(g, x, y, observed) == identifiable
    return IdentifiabilityVerdict(identifiable, ucs, tuple(violations), agrees)


def adjustment_criterion(
    g: CausalGraph, x: str, y: str, observed: Iterable[str] = ()
) -> bool:
    """Two-part adjustment condition, checked by explicit path enumeration.

    (i)  no observed variable is on, or descends from a variable on, a
         directed path from treatment to outcome (the treatment itself is
         not counted: conditioning on its off-path children is harmless);
    (ii) the observed set blocks every non-directed path from treatment
         to outcome.
    """
    observed = _role_check(g, x, y, observed)

    on_causal_path = {
        v for v in g.descendants(x) if v == y or y in g.descendants(v)
    }
    forbidden = set(on_causal_path)
    for v in on_causal_path:
        forbidden |= g.descendants(v)
    if observed & forbidden:
        return False

    def collider_open(cur: str) -> bool:
        return cur in observed or bool(g.descendants(cur) & observed)

    def blocked_noncausal_only(path: list[str], causal: bool) -> bool:
        """DFS over open simple paths; False once an open non-causal path hits y."""
        cur = path[-1]
        neighbors = (g.parents(cur) | g.children(cur)) - {
            u for u in g.parents(cur) if g.is_exogenous(u)
        }
        for nxt in neighbors:
            if nxt in path:
                continue
            step_forward = nxt in g.children(cur)
            if len(path) >= 2:
                prev = path[-2]
                is_collider = prev in g.parents(cur) and nxt in g.parents(cur)
                if is_collider:
                    if not collider_open(cur):
                        continue
                elif cur in observed:
                    continue
            if nxt == y:
                if not (causal and step_forward):
                    return False
                continue
            if not blocked_noncausal_only(path + [nxt], causal and step_forward):
                return False
        return True

    return blocked_noncausal_only([x], True)
