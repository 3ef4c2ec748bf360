"""Shared test oracles, deliberately independent of the production paths.

The d-separation oracle enumerates simple paths and applies the blocking
rules directly; the production code uses reachability sweeps.  Gradient
checks use central finite differences.
"""

from __future__ import annotations

import itertools

import numpy as np
import pytest

from causalbias.graphs import CausalGraph


def brute_force_d_separated(g: CausalGraph, a: str, b: str, given) -> bool:
    """Path-enumeration d-separation oracle (exponential, tiny graphs only)."""
    given = frozenset(given)

    def neighbors(v):
        return g.parents(v) | g.children(v)

    def blocked(path) -> bool:
        for i in range(1, len(path) - 1):
            prev, cur, nxt = path[i - 1], path[i], path[i + 1]
            collider = prev in g.parents(cur) and nxt in g.parents(cur)
            if collider:
                if cur not in given and not (g.descendants(cur) & given):
                    return True
            elif cur in given:
                return True
        return False

    stack = [[a]]
    while stack:
        path = stack.pop()
        for nxt in neighbors(path[-1]):
            if nxt in path:
                continue
            if nxt == b:
                if not blocked(path + [b]):
                    return False
                continue
            stack.append(path + [nxt])
    return True


def brute_force_causal_exogenous_set(g: CausalGraph, x: str, y: str, observed) -> frozenset:
    """Direct evaluation of the driving-noise definition via the path oracle."""
    observed = frozenset(observed)
    pre = observed - g.descendants(x)
    cond = {x} | pre
    out = set()
    for u in g.ancestors(y):
        if not g.is_exogenous(u) or u == g.noise_of(x):
            continue
        if not brute_force_d_separated(g, u, y, cond):
            out.add(u)
    return frozenset(out)


def central_difference(fn, point: dict, name: str, h: float = 1e-5) -> float:
    hi = dict(point)
    lo = dict(point)
    hi[name] = point[name] + h
    lo[name] = point[name] - h
    return (fn(hi) - fn(lo)) / (2.0 * h)


def random_dag(rng: np.random.Generator, n: int, p_edge: float = 0.4):
    """Random labeled DAG as an edge list over V1..Vn (topological labels shuffled)."""
    names = [f"V{i+1}" for i in range(n)]
    order = list(rng.permutation(n))
    edges = []
    for i, j in itertools.combinations(range(n), 2):
        if rng.random() < p_edge:
            a, b = order[i], order[j]
            edges.append((names[a], names[b]))
    return names, edges


@pytest.fixture(scope="session")
def rng():
    return np.random.default_rng(20240817)
