"""Bitmask kernel for exhaustive identifiability sweeps over small DAGs.

Graphs are encoded as parent bitmasks over endogenous node indices
``0..n-1``; the noise node of variable ``i`` is index ``n+i`` (every
variable owns a noise here: the sweep instantiates canonical models).
``verdict_pair`` evaluates, for one (graph, treatment, outcome, observed)
configuration, both identifiability routes:

* the noise-wise d-separation criterion (Bayes-ball reachability), and
* the two-part adjustment criterion (open-path depth-first search),

with the same conventions as :mod:`causalbias.graphs`; parity between this
kernel and the readable implementations is covered by tests.

A Cython twin (:mod:`causalbias._graphcore`) is selected at import when the
compiled extension is available; this module is the pure-Python fallback
and the reference for the compiled kernel's semantics.  Because all labeled
configurations are relabelings of ascending-edge configurations and both
criteria are invariant under relabeling, sweeping ascending-edge DAGs with
all role placements covers every case.
"""

from __future__ import annotations

_UP = 0
_DOWN = 1


def _closures(n: int, pa: list[int]) -> tuple[list[int], list[int]]:
    """Strict ancestor and descendant bitmasks for every endogenous node."""
    an = [0] * n
    for i in range(n):
        acc = 0
        frontier = pa[i]
        while frontier:
            acc |= frontier
            nxt = 0
            m = frontier
            while m:
                b = m & (-m)
                m ^= b
                nxt |= pa[b.bit_length() - 1]
            frontier = nxt & ~acc
        an[i] = acc
    de = [0] * n
    for i in range(n):
        for j in range(n):
            if (an[j] >> i) & 1:
                de[i] |= 1 << j
    return an, de


def _reach(n: int, pa: list[int], ch: list[int], src: int, cond: int) -> int:
    """Bitmask of nodes d-connected to ``src`` given ``cond`` (endo bits).

    Operates on the full 2n-node graph; noise node ``n+i`` has the single
    child ``i`` and no parents.
    """
    closure = cond
    frontier = cond
    while frontier:
        nxt = 0
        m = frontier
        while m:
            b = m & (-m)
            m ^= b
            v = b.bit_length() - 1
            if v < n:
                nxt |= pa[v] | (1 << (n + v))
        frontier = nxt & ~closure
        closure |= nxt
    visited_up = 0
    visited_down = 0
    reach = 0
    stack = [(src, _UP)]
    while stack:
        v, d = stack.pop()
        bit = 1 << v
        if d == _UP:
            if visited_up & bit:
                continue
            visited_up |= bit
            if not (cond & bit):
                reach |= bit
                if v < n:
                    m = pa[v] | (1 << (n + v))
                    while m:
                        b = m & (-m)
                        m ^= b
                        stack.append((b.bit_length() - 1, _UP))
                    m = ch[v]
                else:
                    m = 1 << (v - n)
                while m:
                    b = m & (-m)
                    m ^= b
                    stack.append((b.bit_length() - 1, _DOWN))
        else:
            if visited_down & bit:
                continue
            visited_down |= bit
            if not (cond & bit):
                reach |= bit
                m = ch[v] if v < n else (1 << (v - n))
                while m:
                    b = m & (-m)
                    m ^= b
                    stack.append((b.bit_length() - 1, _DOWN))
            if closure & bit and v < n:
                m = pa[v] | (1 << (n + v))
                while m:
                    b = m & (-m)
                    m ^= b
                    stack.append((b.bit_length() - 1, _UP))
    return reach


def _noncausal_all_blocked(
    n: int, pa: list[int], ch: list[int], de: list[int], x: int, y: int, omask: int
) -> bool:
    """False iff an open non-directed path from x reaches y given omask."""

    def rec(cur: int, prev: int, visited: int, causal: bool) -> bool:
        m = (pa[cur] | ch[cur]) & ~visited
        while m:
            b = m & (-m)
            m ^= b
            nxt = b.bit_length() - 1
            step_forward = bool((ch[cur] >> nxt) & 1)
            if prev >= 0:
                collider = bool((pa[cur] >> prev) & 1) and bool((pa[cur] >> nxt) & 1)
                if collider:
                    if not (((1 << cur) | de[cur]) & omask):
                        continue
                elif (omask >> cur) & 1:
                    continue
            if nxt == y:
                if not (causal and step_forward):
                    return False
                continue
            if not rec(nxt, cur, visited | b, causal and step_forward):
                return False
        return True

    return rec(x, -1, 1 << x, True)


def _py_verdict_pair(n: int, pa: list[int], x: int, y: int, omask: int) -> tuple[bool, bool]:
    """(noise-route identifiable, adjustment criterion) for one configuration."""
    ch = [0] * n
    for j in range(n):
        m = pa[j]
        while m:
            b = m & (-m)
            m ^= b
            ch[b.bit_length() - 1] |= 1 << j
    an, de = _closures(n, pa)

    obar = omask & ~de[x]
    cond = (1 << x) | obar
    ry = _reach(n, pa, ch, y, cond)
    candidates = (an[y] | (1 << y)) & ~(1 << x)
    ucs_noise = 0
    m = candidates
    while m:
        b = m & (-m)
        m ^= b
        i = b.bit_length() - 1
        if (ry >> (n + i)) & 1:
            ucs_noise |= 1 << (n + i)
    rx = _reach(n, pa, ch, x, omask)
    thm_route = (ucs_noise & rx) == 0

    on_path = 0
    if (de[x] >> y) & 1:
        for v in range(n):
            if (de[x] >> v) & 1 and (v == y or (de[v] >> y) & 1):
                on_path |= 1 << v
    forbidden = on_path
    m = on_path
    while m:
        b = m & (-m)
        m ^= b
        forbidden |= de[b.bit_length() - 1]
    adj_route = not (omask & forbidden) and _noncausal_all_blocked(n, pa, ch, de, x, y, omask)
    return thm_route, adj_route


def _py_sweep_graph(n: int, pa: list[int]) -> tuple[int, int, list[tuple[int, int, int]]]:
    """All (x, y, observed-subset) role placements on one graph.

    Returns (configurations checked, disagreements, disagreeing roles).
    """
    configs = 0
    disagreements = 0
    bad: list[tuple[int, int, int]] = []
    full = (1 << n) - 1
    for x in range(n):
        for y in range(n):
            if y == x:
                continue
            rest = full & ~(1 << x) & ~(1 << y)
            sub = 0
            while True:
                thm, adj = _py_verdict_pair(n, pa, x, y, sub)
                configs += 1
                if thm != adj:
                    disagreements += 1
                    if len(bad) < 16:
                        bad.append((x, y, sub))
                sub = (sub - rest) & rest
                if sub == 0:
                    break
    return configs, disagreements, bad


def _py_enumerate_equivalence(n: int) -> tuple[int, int, list[tuple[int, int, int, int]]]:
    """Sweep all ascending-edge DAGs on ``n`` nodes with all role placements.

    Returns (configurations, disagreements, up to 16 counterexamples as
    (graph index, x, y, observed mask)).
    """
    pairs = [(i, j) for i in range(n) for j in range(i + 1, n)]
    n_graphs = 1 << len(pairs)
    total = 0
    disagreements = 0
    examples: list[tuple[int, int, int, int]] = []
    for gmask in range(n_graphs):
        pa = [0] * n
        m = gmask
        while m:
            b = m & (-m)
            m ^= b
            i, j = pairs[b.bit_length() - 1]
            pa[j] |= 1 << i
        configs, n_bad, cases = _py_sweep_graph(n, pa)
        total += configs
        disagreements += n_bad
        for x, y, sub in cases:
            if len(examples) < 16:
                examples.append((gmask, x, y, sub))
    return total, disagreements, examples


# -- compiled twin selection ---------------------------------------------------

try:  # pragma: no cover - exercised indirectly
    from . import _graphcore as _compiled
except ImportError:  # pragma: no cover
    _compiled = None

HAS_COMPILED_KERNEL = _compiled is not None

python_verdict_pair = _py_verdict_pair
python_sweep_graph = _py_sweep_graph
python_enumerate_equivalence = _py_enumerate_equivalence

if _compiled is not None:
    verdict_pair = _compiled.verdict_pair
    sweep_graph = _compiled.sweep_graph
    enumerate_equivalence = _compiled.enumerate_equivalence
else:
    verdict_pair = _py_verdict_pair
    sweep_graph = _py_sweep_graph
    enumerate_equivalence = _py_enumerate_equivalence
