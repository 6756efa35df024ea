"""Compiled kernels for the rank and distance based baseline statistics."""

import math

import numpy as np
from numba import njit

_jit = njit(cache=True, nogil=True)


@_jit
def g2(counts, total):
    """Likelihood-ratio statistic ``2 sum O log(O/E)`` of an r x c table.

    ``counts`` is a 2-D integer array whose entries sum to ``total``;
    zero cells contribute nothing.
    """
    nr, nc = counts.shape
    if total <= 0:
        return 0.0
    rows = np.zeros(nr)
    cols = np.zeros(nc)
    for i in range(nr):
        for j in range(nc):
            rows[i] += counts[i, j]
            cols[j] += counts[i, j]
    s = 0.0
    for i in range(nr):
        for j in range(nc):
            o = counts[i, j]
            if o > 0:
                s += o * math.log(o * total / (rows[i] * cols[j]))
    return 2.0 * s


@_jit
def g2_2x2(n11, n1_, n_1, total):
    """G^2 of the 2x2 table with cell ``n11`` and margins ``n1_``, ``n_1``."""
    t = np.empty((2, 2), dtype=np.int64)
    t[0, 0] = n11
    t[0, 1] = n1_ - n11
    t[1, 0] = n_1 - n11
    t[1, 1] = total - n1_ - n_1 + n11
    return g2(t, total)


# ---------------------------------------------------------------------------
# HHG
# ---------------------------------------------------------------------------

@_jit
def _bit_add(tree, i):
    i += 1
    while i < tree.shape[0]:
        tree[i] += 1
        i += i & (-i)


@_jit
def _bit_sum(tree, i):
    """Number of inserted ranks ``<= i``."""
    s = 0
    i += 1
    while i > 0:
        s += tree[i]
        i -= i & (-i)
    return s


@_jit
def hhg_tables(d1, d2):
    """2x2 table counts for every ordered reference pair ``(i, i')``.

    Returns ``(n11, nA, nB)`` as ``n x n`` arrays where, over the points
    ``k`` not in ``{i, i'}``, ``A`` is ``d1[i, k] <= d1[i, i']`` and ``B`` is
    ``d2[i, k] <= d2[i, i']``.  Cost ``O(n^2 log n)``.
    """
    n = d1.shape[0]
    n11 = np.zeros((n, n), dtype=np.int64)
    na = np.zeros((n, n), dtype=np.int64)
    nb = np.zeros((n, n), dtype=np.int64)
    m = n - 1
    others = np.empty(m, dtype=np.int64)
    a = np.empty(m)
    b = np.empty(m)
    brank = np.empty(m, dtype=np.int64)
    tree = np.zeros(m + 1, dtype=np.int64)
    for i in range(n):
        c = 0
        for k in range(n):
            if k != i:
                others[c] = k
                a[c] = d1[i, k]
                b[c] = d2[i, k]
                c += 1
        # brank[t] = #{u : b[u] <= b[t]} - 1, a rank that puts ties together
        bs = np.sort(b)
        for t in range(m):
            brank[t] = np.searchsorted(bs, b[t], side="right") - 1
        order = np.argsort(a, kind="mergesort")
        tree[:] = 0
        p = 0
        while p < m:
            q = p
            while q + 1 < m and a[order[q + 1]] == a[order[p]]:
                q += 1
            for t in range(p, q + 1):
                _bit_add(tree, brank[order[t]])
            cnt_a = q + 1
            for t in range(p, q + 1):
                u = order[t]
                ip = others[u]
                # every count includes i' itself
                n11[i, ip] = _bit_sum(tree, brank[u]) - 1
                na[i, ip] = cnt_a - 1
                nb[i, ip] = brank[u]
            p = q + 1
    return n11, na, nb


@_jit
def hhg_sum(n11, na, nb):
    n = n11.shape[0]
    s = 0.0
    for i in range(n):
        for ip in range(n):
            if ip != i:
                s += g2_2x2(n11[i, ip], na[i, ip], nb[i, ip], n - 2)
    return s


@_jit
def hhg_from_distances(d1, d2):
    n11, na, nb = hhg_tables(d1, d2)
    return hhg_sum(n11, na, nb)


@_jit
def hhg_permuted(d1, d2, perms):
    """HHG statistic for each row of ``perms`` applied to group 2."""
    out = np.empty(perms.shape[0])
    n = d1.shape[0]
    dp = np.empty_like(d2)
    for p in range(perms.shape[0]):
        pi = perms[p]
        for i in range(n):
            for j in range(n):
                dp[i, j] = d2[pi[i], pi[j]]
        out[p] = hhg_from_distances(d1, dp)
    return out


# ---------------------------------------------------------------------------
# DDP, m = 3
# ---------------------------------------------------------------------------

@_jit
def rank_grid(r1, r2):
    """``C[a, b] = #{k : r1[k] < a, r2[k] < b}`` for 0-based ranks."""
    n = r1.shape[0]
    c = np.zeros((n + 1, n + 1), dtype=np.int64)
    for k in range(n):
        c[r1[k] + 1, r2[k] + 1] += 1
    for a in range(1, n + 1):
        for b in range(1, n + 1):
            c[a, b] += c[a - 1, b] + c[a, b - 1] - c[a - 1, b - 1]
    return c


@_jit
def _box(c, lo1, hi1, lo2, hi2):
    """Points with ``lo1 <= r1 < hi1`` and ``lo2 <= r2 < hi2``."""
    if hi1 <= lo1 or hi2 <= lo2:
        return 0
    return c[hi1, hi2] - c[lo1, hi2] - c[hi1, lo2] + c[lo1, lo2]


@_jit
def ddp3_from_ranks(r1, r2):
    """Sum of 3x3 G^2 statistics over all unordered reference pairs.

    ``r1``, ``r2`` are tie-free 0-based ranks.  The two references split each
    axis at their own ranks; they sit on the boundaries, so the open
    intervals hold exactly the other ``n - 2`` points.
    """
    n = r1.shape[0]
    c = rank_grid(r1, r2)
    t = np.empty((3, 3), dtype=np.int64)
    e1 = np.empty(4, dtype=np.int64)
    e2 = np.empty(4, dtype=np.int64)
    s = 0.0
    for p in range(n):
        for q in range(p + 1, n):
            a1 = min(r1[p], r1[q])
            b1 = max(r1[p], r1[q])
            a2 = min(r2[p], r2[q])
            b2 = max(r2[p], r2[q])
            # interval u on axis j covers ranks [e[u], e[u+1] - 1) after
            # skipping the reference rank itself
            e1[0] = 0
            e1[1] = a1
            e1[2] = b1
            e1[3] = n
            e2[0] = 0
            e2[1] = a2
            e2[2] = b2
            e2[3] = n
            for u in range(3):
                lo1 = e1[u] + (1 if u > 0 else 0)
                for v in range(3):
                    lo2 = e2[v] + (1 if v > 0 else 0)
                    t[u, v] = _box(c, lo1, e1[u + 1], lo2, e2[v + 1])
            s += g2(t, n - 2)
    return s


@_jit
def ddp3_permuted(r1, r2, perms):
    out = np.empty(perms.shape[0])
    rp = np.empty_like(r2)
    for p in range(perms.shape[0]):
        for i in range(r2.shape[0]):
            rp[i] = r2[perms[p, i]]
        out[p] = ddp3_from_ranks(r1, rp)
    return out


# ---------------------------------------------------------------------------
# MIC
# ---------------------------------------------------------------------------

@_jit
def equipartition(order, values, nbins):
    """Bin index per point, splitting the sorted points into ``nbins`` runs
    of (nearly) equal size without separating tied values."""
    n = order.shape[0]
    out = np.empty(n, dtype=np.int64)
    p = 0
    while p < n:
        q = p
        while q + 1 < n and values[order[q + 1]] == values[order[p]]:
            q += 1
        b = (p * nbins) // n
        for t in range(p, q + 1):
            out[order[t]] = b
        p = q + 1
    return out


@_jit
def _entropy_counts(cnt, total):
    h = 0.0
    for v in cnt:
        if v > 0:
            h -= v / total * math.log(v / total)
    return h


@_jit
def bin_cost(pref, s, t, nf):
    """``sum_f n_f log(n_bin / n_f)`` for the free-axis bin of sorted points
    ``s..t-1``; ``pref[i, f]`` counts fixed bin ``f`` among the first ``i``."""
    nb = t - s
    c = 0.0
    for f in range(nf):
        v = pref[t, f] - pref[s, f]
        if v > 0:
            c += v * math.log(nb / v)
    return c


@_jit
def optimize_free_axis(free_order, free_values, fixed_bins, nf, cmax):
    """Best mutual information for every free-axis bin count ``1..cmax``.

    Exhaustive dynamic program over the cut positions between distinct free
    values, given the fixed-axis partition.  Returns ``mi[c]`` for partitions
    into at most ``c`` bins (``mi[0]`` unused).
    """
    n = free_order.shape[0]
    pref = np.zeros((n + 1, nf), dtype=np.int64)
    for i in range(n):
        for f in range(nf):
            pref[i + 1, f] = pref[i, f]
        pref[i + 1, fixed_bins[free_order[i]]] += 1
    # admissible boundaries: 0, n and positions between distinct values
    ok = np.zeros(n + 1, dtype=np.bool_)
    ok[0] = True
    ok[n] = True
    for i in range(1, n):
        if free_values[free_order[i]] != free_values[free_order[i - 1]]:
            ok[i] = True
    tot = np.zeros(nf)
    for f in range(nf):
        tot[f] = pref[n, f]
    h_fixed = _entropy_counts(tot, float(n))
    inf = np.inf
    best = np.full((cmax + 1, n + 1), inf)
    best[0, 0] = 0.0
    for c in range(1, cmax + 1):
        for t in range(1, n + 1):
            if not ok[t]:
                continue
            for s in range(t):
                if not ok[s] or best[c - 1, s] == inf:
                    continue
                v = best[c - 1, s] + bin_cost(pref, s, t, nf)
                if v < best[c, t]:
                    best[c, t] = v
    mi = np.zeros(cmax + 1)
    run = inf
    for c in range(1, cmax + 1):
        run = min(run, best[c, n])
        mi[c] = h_fixed - run / n
    return mi


@_jit
def mic_core(x, y, budget):
    """MIC with grid budget ``f * c <= budget``: for each smaller count ``f``
    one axis is equipartitioned into ``f`` bins and the other optimized with
    up to ``c >= f`` bins, both orientations."""
    n = x.shape[0]
    ox = np.argsort(x, kind="mergesort")
    oy = np.argsort(y, kind="mergesort")
    best = 0.0
    f = 2
    while f * f <= budget:
        cmax = int(math.floor(budget / f + 1e-12))
        for orient in range(2):
            if orient == 0:
                fixed = equipartition(oy, y, f)
                mi = optimize_free_axis(ox, x, fixed, f, cmax)
            else:
                fixed = equipartition(ox, x, f)
                mi = optimize_free_axis(oy, y, fixed, f, cmax)
            for c in range(f, cmax + 1):
                m = mi[c] / math.log(f)
                if m > best:
                    best = m
        f += 1
    return min(best, 1.0)


@_jit
def mic_permuted(x, y, budget, perms):
    out = np.empty(perms.shape[0])
    yp = np.empty_like(y)
    for p in range(perms.shape[0]):
        for i in range(y.shape[0]):
            yp[i] = y[perms[p, i]]
        out[p] = mic_core(x, yp, budget)
    return out
