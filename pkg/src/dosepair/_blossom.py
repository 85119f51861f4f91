"""Dense minimum-weight perfect matching on general graphs.

Primal-dual blossom algorithm, O(n^3), operating on an integer weight
matrix.  The kernel solves MAXIMUM-weight matching; the driver below
converts minimum-distance perfect matching into that form by the shift
w = K - d with K chosen so that higher cardinality always dominates.
Edges with weight 0 in the kernel matrix do not exist.

All kernel state lives in preallocated arrays so numba can compile the
whole solve.  Node ids are 1-based; ids 1..n are vertices, ids n+1..2n
are blossom slots (st[b] == 0 marks a free slot).  The matrix slot
(x, y) caches the minimum-slack real edge between groups x and y as a
pair of real endpoints (eu, ev); for real x, y it is the edge (x, y)
itself.  Dual feasibility uses doubled weights so every dual update
stays integral.
"""

from __future__ import annotations

import numpy as np
from numba import njit

__all__ = ["solve_int_matching", "min_weight_perfect_matching", "MatchingInfeasibleError"]

_INF = np.int64(1) << np.int64(62)


class MatchingInfeasibleError(RuntimeError):
    """No perfect matching exists over the finite-distance edges."""


@njit(cache=True, inline="always")
def _ed(lab, w, eu, ev, x, y):
    # slack (doubled scale) of the cached best edge between groups x and y
    a = eu[x, y]
    b = ev[x, y]
    return lab[a] + lab[b] - np.int64(2) * w[a, b]


@njit(cache=True)
def _update_slack(lab, w, eu, ev, slack, u, x):
    if slack[x] == 0 or _ed(lab, w, eu, ev, u, x) < _ed(lab, w, eu, ev, slack[x], x):
        slack[x] = u


@njit(cache=True)
def _set_slack(lab, w, eu, ev, slack, st, S, x, nv):
    slack[x] = 0
    for u in range(1, nv + 1):
        if eu[u, x] != 0 and st[u] != x and S[st[u]] == 0:
            _update_slack(lab, w, eu, ev, slack, u, x)


@njit(cache=True)
def _q_push(q, qt, dfs, x, flw, fln, nv):
    # enqueue every real vertex contained in node x
    top = 0
    dfs[top] = x
    top += 1
    while top > 0:
        top -= 1
        y = dfs[top]
        if y <= nv:
            q[qt] = y
            qt += 1
        else:
            for i in range(fln[y]):
                dfs[top] = flw[y, i]
                top += 1
    return qt


@njit(cache=True)
def _set_st(st, flw, fln, dfs, x, b, nv):
    top = 0
    dfs[top] = x
    top += 1
    while top > 0:
        top -= 1
        y = dfs[top]
        st[y] = b
        if y > nv:
            for i in range(fln[y]):
                dfs[top] = flw[y, i]
                top += 1


@njit(cache=True)
def _get_pr(flw, fln, b, xr):
    # index of xr in b's cycle, reorienting the cycle if needed so the
    # index is even (an even alternating path from the base)
    pr = 0
    for i in range(fln[b]):
        if flw[b, i] == xr:
            pr = i
            break
    if pr % 2 == 1:
        i = 1
        j = fln[b] - 1
        while i < j:
            t = flw[b, i]
            flw[b, i] = flw[b, j]
            flw[b, j] = t
            i += 1
            j -= 1
        return fln[b] - pr
    return pr


@njit(cache=True)
def _set_match(match, eu, ev, flw, fln, flfrom, tstack, rotbuf, u0, v0, nv):
    # iterative version of the recursive blossom re-matching
    top = 0
    tstack[top, 0] = u0
    tstack[top, 1] = v0
    top += 1
    while top > 0:
        top -= 1
        u = tstack[top, 0]
        v = tstack[top, 1]
        match[u] = ev[u, v]
        if u > nv:
            xr = flfrom[u, eu[u, v]]
            pr = _get_pr(flw, fln, u, xr)
            for i in range(pr):
                tstack[top, 0] = flw[u, i]
                tstack[top, 1] = flw[u, i ^ 1]
                top += 1
            tstack[top, 0] = xr
            tstack[top, 1] = v
            top += 1
            if pr > 0:
                L = fln[u]
                for i in range(pr):
                    rotbuf[i] = flw[u, i]
                for i in range(L - pr):
                    flw[u, i] = flw[u, i + pr]
                for i in range(pr):
                    flw[u, L - pr + i] = rotbuf[i]


@njit(cache=True)
def _augment(match, st, pa, eu, ev, flw, fln, flfrom, tstack, rotbuf, u, v, nv):
    while True:
        xnv = st[match[u]]
        _set_match(match, eu, ev, flw, fln, flfrom, tstack, rotbuf, u, v, nv)
        if xnv == 0:
            return
        _set_match(match, eu, ev, flw, fln, flfrom, tstack, rotbuf, xnv, st[pa[xnv]], nv)
        u = st[pa[xnv]]
        v = xnv


@njit(cache=True)
def _get_lca(st, match, pa, vis, u, v, tmark):
    while u != 0 or v != 0:
        if u != 0:
            if vis[u] == tmark:
                return u
            vis[u] = tmark
            u = st[match[u]]
            if u != 0:
                u = st[pa[u]]
        t = u
        u = v
        v = t
    return 0


@njit(cache=True)
def _add_blossom(w, lab, match, slack, st, pa, S, eu, ev, flw, fln, flfrom,
                 q, qt, dfs, u, lca, v, nv, n_x):
    b = nv + 1
    while b <= n_x and st[b] != 0:
        b += 1
    if b > n_x:
        n_x = b
    lab[b] = 0
    S[b] = 0
    match[b] = match[lca]
    fln[b] = 0
    flw[b, 0] = lca
    fln[b] = 1
    x = u
    while x != lca:
        flw[b, fln[b]] = x
        fln[b] += 1
        y = st[match[x]]
        flw[b, fln[b]] = y
        fln[b] += 1
        qt = _q_push(q, qt, dfs, y, flw, fln, nv)
        x = st[pa[y]]
    i = 1
    j = fln[b] - 1
    while i < j:
        t = flw[b, i]
        flw[b, i] = flw[b, j]
        flw[b, j] = t
        i += 1
        j -= 1
    x = v
    while x != lca:
        flw[b, fln[b]] = x
        fln[b] += 1
        y = st[match[x]]
        flw[b, fln[b]] = y
        fln[b] += 1
        qt = _q_push(q, qt, dfs, y, flw, fln, nv)
        x = st[pa[y]]
    _set_st(st, flw, fln, dfs, b, b, nv)
    for x2 in range(1, n_x + 1):
        eu[b, x2] = 0
        ev[b, x2] = 0
        eu[x2, b] = 0
        ev[x2, b] = 0
    for x2 in range(1, nv + 1):
        flfrom[b, x2] = 0
    for ii in range(fln[b]):
        xs = flw[b, ii]
        for x2 in range(1, n_x + 1):
            if eu[xs, x2] != 0 and (eu[b, x2] == 0 or
                                    _ed(lab, w, eu, ev, xs, x2) < _ed(lab, w, eu, ev, b, x2)):
                eu[b, x2] = eu[xs, x2]
                ev[b, x2] = ev[xs, x2]
                eu[x2, b] = eu[x2, xs]
                ev[x2, b] = ev[x2, xs]
        for x2 in range(1, nv + 1):
            if flfrom[xs, x2] != 0:
                flfrom[b, x2] = xs
    _set_slack(lab, w, eu, ev, slack, st, S, b, nv)
    return n_x, qt


@njit(cache=True)
def _expand_blossom(w, lab, match, slack, st, pa, S, eu, ev, flw, fln, flfrom,
                    q, qt, dfs, b, nv):
    for i in range(fln[b]):
        _set_st(st, flw, fln, dfs, flw[b, i], flw[b, i], nv)
    xr = flfrom[b, eu[b, pa[b]]]
    pr = _get_pr(flw, fln, b, xr)
    i = 0
    while i < pr:
        xs = flw[b, i]
        xns = flw[b, i + 1]
        pa[xs] = eu[xns, xs]
        S[xs] = 1
        S[xns] = 0
        slack[xs] = 0
        _set_slack(lab, w, eu, ev, slack, st, S, xns, nv)
        qt = _q_push(q, qt, dfs, xns, flw, fln, nv)
        i += 2
    S[xr] = 1
    pa[xr] = pa[b]
    for i in range(pr + 1, fln[b]):
        xs = flw[b, i]
        S[xs] = -1
        _set_slack(lab, w, eu, ev, slack, st, S, xs, nv)
    st[b] = 0
    return qt


@njit(cache=True)
def _on_found_edge(w, lab, match, slack, st, pa, S, vis, eu, ev, flw, fln, flfrom,
                   q, qt, dfs, tstack, rotbuf, a, bb, nv, n_x, tmark):
    # (a, bb) are the real endpoints of a tight edge
    u = st[a]
    v = st[bb]
    aug = 0
    if S[v] == -1:
        pa[v] = a
        S[v] = 1
        nu = st[match[v]]
        slack[v] = 0
        slack[nu] = 0
        S[nu] = 0
        qt = _q_push(q, qt, dfs, nu, flw, fln, nv)
    elif S[v] == 0:
        tmark += 1
        lca = _get_lca(st, match, pa, vis, u, v, tmark)
        if lca == 0:
            _augment(match, st, pa, eu, ev, flw, fln, flfrom, tstack, rotbuf, u, v, nv)
            _augment(match, st, pa, eu, ev, flw, fln, flfrom, tstack, rotbuf, v, u, nv)
            aug = 1
        else:
            n_x, qt = _add_blossom(w, lab, match, slack, st, pa, S, eu, ev, flw, fln,
                                   flfrom, q, qt, dfs, u, lca, v, nv, n_x)
    return aug, n_x, qt, tmark


@njit(cache=True)
def _phase(w, lab, match, slack, st, pa, S, vis, eu, ev, flw, fln, flfrom,
           q, dfs, tstack, rotbuf, nv, n_x, tmark):
    for x in range(1, n_x + 1):
        S[x] = -1
        slack[x] = 0
    qh = 0
    qt = 0
    for x in range(1, n_x + 1):
        if st[x] == x and match[x] == 0:
            pa[x] = 0
            S[x] = 0
            qt = _q_push(q, qt, dfs, x, flw, fln, nv)
    if qt == 0:
        return 0, n_x, tmark
    while True:
        while qh < qt:
            u = q[qh]
            qh += 1
            if S[st[u]] == 1:
                continue
            su = st[u]
            lu = lab[u]
            for v in range(1, nv + 1):
                if w[u, v] > 0 and su != st[v]:
                    cand = lu + lab[v] - np.int64(2) * w[u, v]
                    if cand == 0:
                        aug, n_x, qt, tmark = _on_found_edge(
                            w, lab, match, slack, st, pa, S, vis, eu, ev, flw, fln,
                            flfrom, q, qt, dfs, tstack, rotbuf, u, v, nv, n_x, tmark)
                        if aug == 1:
                            return 1, n_x, tmark
                        su = st[u]
                        lu = lab[u]
                    else:
                        x = st[v]
                        if slack[x] == 0 or cand < _ed(lab, w, eu, ev, slack[x], x):
                            slack[x] = u
        d = _INF
        for b in range(nv + 1, n_x + 1):
            if st[b] == b and S[b] == 1:
                half = lab[b] // np.int64(2)
                if half < d:
                    d = half
        for x in range(1, n_x + 1):
            if st[x] == x and slack[x] != 0:
                if S[x] == -1:
                    e = _ed(lab, w, eu, ev, slack[x], x)
                    if e < d:
                        d = e
                elif S[x] == 0:
                    e = _ed(lab, w, eu, ev, slack[x], x) // np.int64(2)
                    if e < d:
                        d = e
        for u in range(1, nv + 1):
            if S[st[u]] == 0 and lab[u] <= d:
                return 0, n_x, tmark
        for u in range(1, nv + 1):
            if S[st[u]] == 0:
                lab[u] -= d
            elif S[st[u]] == 1:
                lab[u] += d
        for b in range(nv + 1, n_x + 1):
            if st[b] == b:
                if S[b] == 0:
                    lab[b] += np.int64(2) * d
                elif S[b] == 1:
                    lab[b] -= np.int64(2) * d
        qh = 0
        qt = 0
        for x in range(1, n_x + 1):
            if (st[x] == x and slack[x] != 0 and st[slack[x]] != x
                    and _ed(lab, w, eu, ev, slack[x], x) == 0):
                aug, n_x, qt, tmark = _on_found_edge(
                    w, lab, match, slack, st, pa, S, vis, eu, ev, flw, fln, flfrom,
                    q, qt, dfs, tstack, rotbuf, eu[slack[x], x], ev[slack[x], x],
                    nv, n_x, tmark)
                if aug == 1:
                    return 1, n_x, tmark
        for b in range(nv + 1, n_x + 1):
            if st[b] == b and S[b] == 1 and lab[b] == 0:
                qt = _expand_blossom(w, lab, match, slack, st, pa, S, eu, ev, flw,
                                     fln, flfrom, q, qt, dfs, b, nv)


@njit(cache=True)
def _kernel(nv, w):
    cap = 2 * nv + 1
    lab = np.zeros(cap, np.int64)
    match = np.zeros(cap, np.int32)
    slack = np.zeros(cap, np.int32)
    st = np.zeros(cap, np.int32)
    pa = np.zeros(cap, np.int32)
    S = np.full(cap, np.int8(-1))
    vis = np.zeros(cap, np.int64)
    eu = np.zeros((cap, cap), np.int32)
    ev = np.zeros((cap, cap), np.int32)
    flw = np.zeros((cap, nv + 2), np.int32)
    fln = np.zeros(cap, np.int32)
    flfrom = np.zeros((cap, nv + 1), np.int32)
    q = np.zeros(64 * cap + 64, np.int32)
    dfs = np.zeros(4 * cap + 16, np.int32)
    tstack = np.zeros((4 * cap + 16, 2), np.int32)
    rotbuf = np.zeros(nv + 2, np.int32)

    n_x = nv
    w_max = np.int64(0)
    for u in range(1, nv + 1):
        st[u] = u
        flfrom[u, u] = u
        for v in range(1, nv + 1):
            if w[u, v] > w_max:
                w_max = w[u, v]
            if u != v and w[u, v] > 0:
                eu[u, v] = u
                ev[u, v] = v
    for u in range(1, nv + 1):
        lab[u] = w_max
    tmark = np.int64(0)
    while True:
        aug, n_x, tmark = _phase(w, lab, match, slack, st, pa, S, vis, eu, ev,
                                 flw, fln, flfrom, q, dfs, tstack, rotbuf,
                                 nv, n_x, tmark)
        if aug == 0:
            break
    return match[: nv + 1]


def solve_int_matching(w_int: np.ndarray) -> np.ndarray:
    """Maximum-weight matching for a 1-based int64 weight matrix.

    ``w_int`` has shape (n+1, n+1); entry 0 rows/cols are padding, weight
    0 means no edge.  Returns ``match`` with ``match[u]`` the partner of
    vertex u (0 if unmatched).
    """
    nv = w_int.shape[0] - 1
    if nv <= 0:
        return np.zeros(1, np.int32)
    return _kernel(nv, np.ascontiguousarray(w_int, dtype=np.int64))


def _scale_to_int(d: np.ndarray) -> tuple[np.ndarray, np.int64]:
    """Round distances to int64 on a 2^40 grid (identity for integer inputs)."""
    finite = d[np.isfinite(d)]
    max_f = float(finite.max()) if finite.size else 0.0
    if max_f <= 0.0:
        di = np.zeros_like(d, dtype=np.int64)
    elif np.all(finite == np.floor(finite)) and max_f <= float(1 << 40):
        di = np.where(np.isfinite(d), d, 0.0).astype(np.int64)
    else:
        scale = (float(1 << 40) - 1.0) / max_f
        di = np.rint(np.where(np.isfinite(d), d, 0.0) * scale).astype(np.int64)
    max_i = np.int64(max(int(di.max()), 1))
    return di, max_i


def _solve_from_ints(di: np.ndarray, fin: np.ndarray,
                     max_i: np.int64) -> list[tuple[int, int]]:
    """Perfect matching minimizing integer distances ``di`` over edges ``fin``.

    Non-edges enter the kernel with a small positive sentinel weight so a
    maximum-cardinality matching is always produced; any sentinel edge in
    the result proves infeasibility and raises.
    """
    n = di.shape[0]
    half = n // 2
    sent = np.int64((half + 2)) * max_i + np.int64(7)
    big = sent + max_i + np.int64(1)
    w = np.zeros((n + 1, n + 1), np.int64)
    w[1:, 1:] = np.where(fin, big - di, big - sent)
    np.fill_diagonal(w, 0)
    match = solve_int_matching(w)
    pairs: list[tuple[int, int]] = []
    for u in range(1, n + 1):
        mu = int(match[u])
        if mu == 0:
            raise MatchingInfeasibleError("no perfect matching over finite distances")
        if mu > u:
            if not fin[u - 1, mu - 1]:
                raise MatchingInfeasibleError("no perfect matching over finite distances")
            pairs.append((u - 1, mu - 1))
    pairs.sort()
    return pairs


def min_weight_perfect_matching(d: np.ndarray) -> list[tuple[int, int]]:
    """Minimum-total-distance perfect matching of a symmetric matrix.

    ``d`` is (n, n), entries nonnegative floats or +inf (excluded edge).
    Returns the pair list as 0-based index tuples (i, j), i < j, sorted.
    Raises MatchingInfeasibleError if no perfect matching exists over the
    finite entries (n odd counts as infeasible).
    """
    n = d.shape[0]
    if n == 0:
        return []
    if n % 2 == 1:
        raise MatchingInfeasibleError("odd number of nodes; no perfect matching")
    di, max_i = _scale_to_int(d)
    fin = np.isfinite(d)
    return _solve_from_ints(di, fin, max_i)
