# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled twin of :mod:`causalbias.graph_kernel`.

Same encoding and semantics as the pure-Python kernel; kept line-for-line
comparable so parity tests stay meaningful.  Node masks fit 32 endogenous
plus noise bits in a 64-bit word (the sweeps use n <= 5).
"""

ctypedef unsigned long long mask_t

cdef int _MAXN = 16


cdef int _bit_index(mask_t b) noexcept:
    cdef int i = 0
    while b > 1:
        b >>= 1
        i += 1
    return i


cdef void _closures(int n, mask_t *pa, mask_t *an, mask_t *de) noexcept:
    cdef int i, j
    cdef mask_t acc, frontier, nxt, m, b
    for i in range(n):
        acc = 0
        frontier = pa[i]
        while frontier:
            acc |= frontier
            nxt = 0
            m = frontier
            while m:
                b = m & (~m + 1)
                m ^= b
                nxt |= pa[_bit_index(b)]
            frontier = nxt & ~acc
        an[i] = acc
    for i in range(n):
        de[i] = 0
        for j in range(n):
            if (an[j] >> i) & 1:
                de[i] |= (<mask_t>1) << j
    return


cdef mask_t _reach(int n, mask_t *pa, mask_t *ch, int src, mask_t cond) noexcept:
    cdef mask_t closure = cond
    cdef mask_t frontier = cond
    cdef mask_t nxt, m, b, bit, reach = 0
    cdef mask_t visited_up = 0, visited_down = 0
    cdef int v, d, top
    cdef int stack_node[512]
    cdef int stack_dir[512]
    while frontier:
        nxt = 0
        m = frontier
        while m:
            b = m & (~m + 1)
            m ^= b
            v = _bit_index(b)
            if v < n:
                nxt |= pa[v] | ((<mask_t>1) << (n + v))
        frontier = nxt & ~closure
        closure |= nxt
    top = 0
    stack_node[top] = src
    stack_dir[top] = 0  # up
    top += 1
    while top > 0:
        top -= 1
        v = stack_node[top]
        d = stack_dir[top]
        bit = (<mask_t>1) << v
        if d == 0:
            if visited_up & bit:
                continue
            visited_up |= bit
            if not (cond & bit):
                reach |= bit
                if v < n:
                    m = pa[v] | ((<mask_t>1) << (n + v))
                    while m:
                        b = m & (~m + 1)
                        m ^= b
                        stack_node[top] = _bit_index(b)
                        stack_dir[top] = 0
                        top += 1
                    m = ch[v]
                else:
                    m = (<mask_t>1) << (v - n)
                while m:
                    b = m & (~m + 1)
                    m ^= b
                    stack_node[top] = _bit_index(b)
                    stack_dir[top] = 1
                    top += 1
        else:
            if visited_down & bit:
                continue
            visited_down |= bit
            if not (cond & bit):
                reach |= bit
                if v < n:
                    m = ch[v]
                else:
                    m = (<mask_t>1) << (v - n)
                while m:
                    b = m & (~m + 1)
                    m ^= b
                    stack_node[top] = _bit_index(b)
                    stack_dir[top] = 1
                    top += 1
            if (closure & bit) and v < n:
                m = pa[v] | ((<mask_t>1) << (n + v))
                while m:
                    b = m & (~m + 1)
                    m ^= b
                    stack_node[top] = _bit_index(b)
                    stack_dir[top] = 0
                    top += 1
    return reach


cdef bint _noncausal_rec(
    int n, mask_t *pa, mask_t *ch, mask_t *de,
    int cur, int prev, mask_t visited, bint causal, int y, mask_t omask
) noexcept:
    cdef mask_t m = (pa[cur] | ch[cur]) & ~visited
    cdef mask_t b
    cdef int nxt
    cdef bint step_forward, collider
    while m:
        b = m & (~m + 1)
        m ^= b
        nxt = _bit_index(b)
        step_forward = (ch[cur] >> nxt) & 1
        if prev >= 0:
            collider = ((pa[cur] >> prev) & 1) and ((pa[cur] >> nxt) & 1)
            if collider:
                if not ((((<mask_t>1) << cur) | de[cur]) & omask):
                    continue
            elif (omask >> cur) & 1:
                continue
        if nxt == y:
            if not (causal and step_forward):
                return False
            continue
        if not _noncausal_rec(n, pa, ch, de, nxt, cur, visited | b, causal and step_forward, y, omask):
            return False
    return True


cdef void _children(int n, mask_t *pa, mask_t *ch) noexcept:
    cdef int j
    cdef mask_t m, b
    for j in range(n):
        ch[j] = 0
    for j in range(n):
        m = pa[j]
        while m:
            b = m & (~m + 1)
            m ^= b
            ch[_bit_index(b)] |= (<mask_t>1) << j


cdef (bint, bint) _verdict_pair(int n, mask_t *pa, int x, int y, mask_t omask) noexcept:
    cdef mask_t ch[16]
    cdef mask_t an[16]
    cdef mask_t de[16]
    cdef mask_t obar, cond, ry, rx, candidates, ucs_noise, m, b
    cdef mask_t on_path, forbidden
    cdef int i, v
    cdef bint thm_route, adj_route
    _children(n, pa, ch)
    _closures(n, pa, an, de)

    obar = omask & ~de[x]
    cond = ((<mask_t>1) << x) | obar
    ry = _reach(n, pa, ch, y, cond)
    candidates = (an[y] | ((<mask_t>1) << y)) & ~((<mask_t>1) << x)
    ucs_noise = 0
    m = candidates
    while m:
        b = m & (~m + 1)
        m ^= b
        i = _bit_index(b)
        if (ry >> (n + i)) & 1:
            ucs_noise |= (<mask_t>1) << (n + i)
    rx = _reach(n, pa, ch, x, omask)
    thm_route = (ucs_noise & rx) == 0

    on_path = 0
    if (de[x] >> y) & 1:
        for v in range(n):
            if (de[x] >> v) & 1 and (v == y or (de[v] >> y) & 1):
                on_path |= (<mask_t>1) << v
    forbidden = on_path
    m = on_path
    while m:
        b = m & (~m + 1)
        m ^= b
        forbidden |= de[_bit_index(b)]
    if omask & forbidden:
        adj_route = False
    else:
        adj_route = _noncausal_rec(n, pa, ch, de, x, -1, ((<mask_t>1) << x), True, y, omask)
    return thm_route, adj_route


def verdict_pair(int n, pa_list, int x, int y, unsigned long long omask):
    """(noise-route identifiable, adjustment criterion) for one configuration."""
    cdef mask_t pa[16]
    cdef int i
    if n > _MAXN:
        raise ValueError("kernel supports at most 16 endogenous nodes")
    for i in range(n):
        pa[i] = pa_list[i]
    cdef (bint, bint) out = _verdict_pair(n, pa, x, y, omask)
    return bool(out[0]), bool(out[1])


def sweep_graph(int n, pa_list):
    """All (x, y, observed-subset) role placements on one graph."""
    cdef mask_t pa[16]
    cdef int i, x, y
    cdef mask_t full, rest, sub
    cdef long configs = 0, disagreements = 0
    cdef (bint, bint) out
    if n > _MAXN:
        raise ValueError("kernel supports at most 16 endogenous nodes")
    for i in range(n):
        pa[i] = pa_list[i]
    bad = []
    full = ((<mask_t>1) << n) - 1
    for x in range(n):
        for y in range(n):
            if y == x:
                continue
            rest = full & ~((<mask_t>1) << x) & ~((<mask_t>1) << y)
            sub = 0
            while True:
                out = _verdict_pair(n, pa, x, y, sub)
                configs += 1
                if out[0] != out[1]:
                    disagreements += 1
                    if len(bad) < 16:
                        bad.append((x, y, int(sub)))
                sub = (sub - rest) & rest
                if sub == 0:
                    break
    return configs, disagreements, bad


def enumerate_equivalence(int n):
    """Sweep all ascending-edge DAGs on n nodes with all role placements."""
    cdef int n_pairs = n * (n - 1) // 2
    cdef long n_graphs = (<long>1) << n_pairs
    cdef long gmask, total = 0, disagreements = 0
    cdef mask_t pa[16]
    cdef int i, j, k, x, y
    cdef mask_t full, rest, sub, mm, bb
    cdef (bint, bint) out
    pairs_i = []
    pairs_j = []
    for i in range(n):
        for j in range(i + 1, n):
            pairs_i.append(i)
            pairs_j.append(j)
    cdef int pi[128]
    cdef int pj[128]
    for k in range(n_pairs):
        pi[k] = pairs_i[k]
        pj[k] = pairs_j[k]
    examples = []
    full = ((<mask_t>1) << n) - 1
    for gmask in range(n_graphs):
        for i in range(n):
            pa[i] = 0
        for k in range(n_pairs):
            if (gmask >> k) & 1:
                pa[pj[k]] |= (<mask_t>1) << pi[k]
        for x in range(n):
            for y in range(n):
                if y == x:
                    continue
                rest = full & ~((<mask_t>1) << x) & ~((<mask_t>1) << y)
                sub = 0
                while True:
                    out = _verdict_pair(n, pa, x, y, sub)
                    total += 1
                    if out[0] != out[1]:
                        disagreements += 1
                        if len(examples) < 16:
                            examples.append((int(gmask), x, y, int(sub)))
                    sub = (sub - rest) & rest
                    if sub == 0:
                        break
    return total, disagreements, examples
