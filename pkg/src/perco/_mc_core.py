"""Compiled inner loops for the torus simulation.

Kernel codes: 0 sphere, 1 cube, 2 Gaussian, 3 coordinate Cauchy,
4 tabulated product profile, 5 tabulated radial profile.
"""

from __future__ import annotations

import numpy as np
from numba import njit

SPHERE, CUBE, GAUSS, CAUCHY, PRODUCT, RADIAL = range(6)

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_PAIR = np.uint64(0xD6E8FEB86659FD93)


@njit(inline="always")
def _mix(z):
    z = z + _GOLDEN
    z = (z ^ (z >> np.uint64(30))) * _M1
    z = (z ^ (z >> np.uint64(27))) * _M2
    return z ^ (z >> np.uint64(31))


@njit(inline="always")
def pair_uniform(key, i, j):
    """Uniform in [0, 1) fixed by (key, i, j) with i < j."""
    z = _mix(key ^ _mix(np.uint64(i) * _PAIR + np.uint64(j)))
    return float(z >> np.uint64(11)) * (1.0 / 9007199254740992.0)


@njit(inline="always")
def _interp(tab, x0, h, t):
    u = (t - x0) / h
    if u < 0.0 or u > tab.size - 1:
        return 0.0
    i = int(u)
    if i >= tab.size - 1:
        return tab[tab.size - 1]
    f = u - i
    return tab[i] * (1.0 - f) + tab[i + 1] * f


@njit(inline="always")
def phi(code, par, tab, dx):
    d = dx.size
    if code == CUBE:
        for k in range(d):
            if abs(dx[k]) > par[0]:
                return 0.0
        return 1.0
    s = 0.0
    for k in range(d):
        s += dx[k] * dx[k]
    if code == SPHERE:
        return 1.0 if s <= par[0] else 0.0
    if code == GAUSS:
        return np.exp(par[0] - s / (2.0 * par[1] * par[1]))
    if code == CAUCHY:
        v = np.exp(par[0])
        for k in range(d):
            t = dx[k] / par[1]
            v /= 1.0 + t * t
        return v
    if code == PRODUCT:
        v = 1.0
        for k in range(d):
            v *= _interp(tab, par[0], par[1], dx[k])
        return v
    return _interp(tab, 0.0, par[1], np.sqrt(s))


@njit(inline="always")
def _min_image(pos, i, j, L, dx):
    half = 0.5 * L
    for k in range(dx.size):
        t = pos[j, k] - pos[i, k]
        if t > half:
            t -= L
        elif t < -half:
            t += L
        dx[k] = t


@njit
def find(parent, off, i, acc):
    """Root of i; acc receives the unwrapped displacement from the root to i."""
    d = acc.size
    for k in range(d):
        acc[k] = 0.0
    r = i
    while parent[r] != r:
        for k in range(d):
            acc[k] += off[r, k]
        r = parent[r]
    # path compression, keeping offsets relative to the new parent (the root)
    cur = i
    rem = acc.copy()
    while parent[cur] != r and cur != r:
        nxt = parent[cur]
        for k in range(d):
            t = off[cur, k]
            off[cur, k] = rem[k]
            rem[k] -= t
        parent[cur] = r
        cur = nxt
    return r


@njit
def _link(parent, off, size, i, j, dx, L, ai, aj):
    """Add edge i -> j with displacement dx; True if it closes a winding cycle."""
    ri = find(parent, off, i, ai)
    rj = find(parent, off, j, aj)
    d = dx.size
    if ri == rj:
        for k in range(d):
            if abs(ai[k] + dx[k] - aj[k]) > 0.5 * L:
                return True
        return False
    # pos(rj) - pos(ri) = ai + dx - aj
    if size[ri] >= size[rj]:
        parent[rj] = ri
        for k in range(d):
            off[rj, k] = ai[k] + dx[k] - aj[k]
        size[ri] += size[rj]
    else:
        parent[ri] = rj
        for k in range(d):
            off[ri, k] = aj[k] - dx[k] - ai[k]
        size[rj] += size[ri]
    return False


@njit(inline="always")
def _within(pos, i, j, L, cut):
    """Minimum-image L-infinity distance of rows i and j is at most cut."""
    half = 0.5 * L
    for k in range(pos.shape[1]):
        t = pos[j, k] - pos[i, k]
        if t > half:
            t -= L
        elif t < -half:
            t += L
        if abs(t) > cut:
            return False
    return True


@njit
def _accept(pos, i, j, L, code, par, tab, key, dx, li, lj):
    """Edge coin for a candidate pair; li, lj are the labels that key the coin."""
    _min_image(pos, i, j, L, dx)
    p = phi(code, par, tab, dx)
    if p <= 0.0:
        return False
    if p >= 1.0:
        return True
    if li < lj:
        return pair_uniform(key, li, lj) < p
    return pair_uniform(key, lj, li) < p


@njit(nogil=True, cache=True)
def _cluster_sorted(pos, labels, L, code, par, tab, cut, key, m, lin, counts, parent, off, size):
    n, d = pos.shape
    for i in range(n):
        parent[i] = i
        size[i] = 1
        for k in range(d):
            off[i, k] = 0.0
    dx = np.empty(d)
    ai = np.empty(d)
    aj = np.empty(d)
    wrapped = False
    if m < 2:
        for i in range(n):
            for j in range(i + 1, n):
                if _within(pos, i, j, L, cut) and _accept(pos, i, j, L, code, par, tab, key, dx, labels[i], labels[j]):
                    if _link(parent, off, size, i, j, dx, L, ai, aj):
                        wrapped = True
        return wrapped
    s = L / m
    delta = np.empty(d, dtype=np.int64)
    for i in range(n):
        # per coordinate, the neighbouring cell on the side of the point's half-cell
        mult = 1
        for k in range(d):
            t = pos[i, k] / s
            c = int(t)
            if c >= m:
                c = m - 1
            if t - c >= 0.5:
                nc = c + 1 if c + 1 < m else 0
            else:
                nc = c - 1 if c > 0 else m - 1
            delta[k] = (nc - c) * mult
            mult *= m
        idx = lin[i]
        gray = 0
        # Gray-code walk over the 2^d cells: one coordinate flips per step
        for step in range(1 << d):
            if step > 0:
                bit = 0
                while not (step >> bit) & 1:
                    bit += 1
                if (gray >> bit) & 1:
                    idx -= delta[bit]
                else:
                    idx += delta[bit]
                gray ^= 1 << bit
            lo = counts[idx]
            if lo <= i:
                lo = i + 1
            for j in range(lo, counts[idx + 1]):
                if _within(pos, i, j, L, cut) and _accept(pos, i, j, L, code, par, tab, key, dx, labels[i], labels[j]):
                    if _link(parent, off, size, i, j, dx, L, ai, aj):
                        wrapped = True
    return wrapped


@njit(nogil=True, cache=True)
def _cell_index(pos, L, m):
    n, d = pos.shape
    s = L / m
    lin = np.empty(n, dtype=np.int64)
    for i in range(n):
        idx = 0
        mult = 1
        for k in range(d):
            c = int(pos[i, k] / s)
            if c >= m:
                c = m - 1
            idx += c * mult
            mult *= m
        lin[i] = idx
    return lin


def build_clusters(pos, L, code, par, tab, cut, key, m):
    """Clusters of one sample. Returns (wrapped, roots, sizes) in the input order.

    m >= 2 uses a cell list of m^d cells of side L/m >= 2*cut, visiting for
    each point the 2^d cells on the side of its own half-cell; otherwise
    all pairs are tested. Edge coins are keyed by input row numbers.
    """
    n, d = pos.shape
    if m >= 2:
        lin = _cell_index(pos, L, m)
        order = np.argsort(lin, kind="stable")
        lin = lin[order]
        counts = np.zeros(m**d + 1, dtype=np.int64)
        np.add.at(counts, lin + 1, 1)
        counts = np.cumsum(counts)
    else:
        order = np.arange(n)
        lin = np.zeros(n, dtype=np.int64)
        counts = np.zeros(2, dtype=np.int64)
    spos = np.ascontiguousarray(pos[order])
    parent = np.empty(n, dtype=np.int64)
    size = np.empty(n, dtype=np.int64)
    off = np.empty((n, d))
    wrapped = _cluster_sorted(spos, order, L, code, par, tab, cut, key, m, lin, counts, parent, off, size)
    sroots = all_roots(parent, off)
    roots = np.empty(n, dtype=np.int64)
    roots[order] = order[sroots]
    sizes = np.zeros(n, dtype=np.int64)
    is_root = sroots == np.arange(n)
    sizes[order[is_root]] = size[is_root]
    return bool(wrapped), roots, sizes


@njit(nogil=True, cache=True)
def all_roots(parent, off):
    n, d = off.shape
    acc = np.empty(d)
    out = np.empty(n, dtype=np.int64)
    for i in range(n):
        out[i] = find(parent, off, i, acc)
    return out


@njit(nogil=True, cache=True)
def marked_connected(pos, roots, L, code, par, tab, cut, key, a, b, ia, ib):
    """Whether two extra points a and b (indices ia < ib in the coin hash) are joined.

    Either directly, or through base points adjacent to a and to b that
    share a cluster.
    """
    n, d = pos.shape
    dx = np.empty(d)
    half = 0.5 * L
    for k in range(d):
        t = b[k] - a[k]
        if t > half:
            t -= L
        elif t < -half:
            t += L
        dx[k] = t
    direct = True
    for k in range(d):
        if abs(dx[k]) > cut:
            direct = False
    if direct:
        p = phi(code, par, tab, dx)
        if p >= 1.0 or (p > 0.0 and pair_uniform(key, ia, ib) < p):
            return True
    if n == 0:
        return False
    mark = np.zeros(n, dtype=np.bool_)
    for side in range(2):
        c = a if side == 0 else b
        ic = ia if side == 0 else ib
        for j in range(n):
            ok = True
            for k in range(d):
                t = pos[j, k] - c[k]
                if t > half:
                    t -= L
                elif t < -half:
                    t += L
                if abs(t) > cut:
                    ok = False
                    break
                dx[k] = t
            if not ok:
                continue
            p = phi(code, par, tab, dx)
            if p <= 0.0:
                continue
            if p < 1.0 and pair_uniform(key, j, ic) >= p:
                continue
            r = roots[j]
            if side == 0:
                mark[r] = True
            elif mark[r]:
                return True
    return False
