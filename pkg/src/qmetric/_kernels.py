"""Compiled triple-scan kernels.

Every structural constant here is an exact maximum over all triples of a
finite table, which is cubic in the number of points. These loops are
compiled with numba so the exhaustive scans stay usable at n ~ 1000.
"""

import numpy as np
from numba import njit


@njit(cache=True)
def triple_ratio_max(dist):
    """max over x != z and all y of dist[x, z] / max(dist[x, y], dist[y, z]).

    Returns (K, x, y, z) with K clamped below at 1; the witness indices are
    (-1, -1, -1) when no triple exceeds 1.
    """
    n = dist.shape[0]
    best = 1.0
    bx, by, bz = -1, -1, -1
    for x in range(n):
        for z in range(x + 1, n):
            dxz = dist[x, z]
            # a triple can only beat `best` when max(dxy, dyz) < dxz / best
            cut = dxz / best
            for y in range(n):
                m = dist[x, y]
                b = dist[y, z]
                if b > m:
                    m = b
                if m < cut and m > 0.0:
                    r = dxz / m
                    if r > best:
                        best = r
                        bx, by, bz = x, y, z
                        cut = dxz / best
    return best, bx, by, bz


@njit(cache=True)
def fourpoint_delta(prod):
    """max over (x, y, z) of min(prod[x, z], prod[z, y]) - prod[x, y].

    `prod` is a symmetric Gromov-product table at a fixed base point. The
    result is the smallest delta for which the four-point condition holds at
    that base; it is never negative because z = x gives zero.
    """
    n = prod.shape[0]
    best = 0.0
    bx, by, bz = -1, -1, -1
    order = np.empty(n, dtype=np.int64)
    for x in range(n):
        order[:] = np.argsort(-prod[x])
        for y in range(x, n):
            pxy = prod[x, y]
            for k in range(n):
                z = order[k]
                pxz = prod[x, z]
                # sorted descending: nothing further can beat best
                if pxz - pxy <= best:
                    break
                m = pxz
                if prod[z, y] < m:
                    m = prod[z, y]
                if m - pxy > best:
                    best = m - pxy
                    bx, by, bz = x, y, z
    return best, bx, by, bz


@njit(cache=True)
def three_point_best(d1, d2):
    """Smallest lambda over triples with min pair >= diam / lambda on both sides."""
    n = d1.shape[0]
    diam1 = 0.0
    diam2 = 0.0
    for i in range(n):
        for j in range(n):
            if d1[i, j] > diam1:
                diam1 = d1[i, j]
            if d2[i, j] > diam2:
                diam2 = d2[i, j]
    best = np.inf
    bi, bj, bk = -1, -1, -1
    for i in range(n):
        for j in range(i + 1, n):
            a1 = d1[i, j]
            a2 = d2[i, j]
            for k in range(j + 1, n):
                m1 = min(a1, d1[i, k], d1[j, k])
                m2 = min(a2, d2[i, k], d2[j, k])
                if m1 <= 0.0 or m2 <= 0.0:
                    continue
                lam = max(diam1 / m1, diam2 / m2)
                if lam < best:
                    best = lam
                    bi, bj, bk = i, j, k
    return best, bi, bj, bk


@njit(cache=True)
def pair_union_measure(dist, mass):
    """mu(B(x, d(x, y)) u B(y, d(x, y))) for every pair, open balls."""
    n = dist.shape[0]
    out = np.zeros((n, n))
    for x in range(n):
        for y in range(x + 1, n):
            r = dist[x, y]
            s = 0.0
            for z in range(n):
                if dist[x, z] < r or dist[y, z] < r:
                    s += mass[z]
            out[x, y] = s
            out[y, x] = s
    return out


@njit(cache=True)
def max_cross_triple(dist):
    """Largest ratio of the two biggest pair products over all 4-point sets."""
    n = dist.shape[0]
    best = 1.0
    wit = np.full(4, -1, dtype=np.int64)
    for a in range(n):
        for b in range(a + 1, n):
            for c in range(b + 1, n):
                for d in range(c + 1, n):
                    p1 = dist[a, b] * dist[c, d]
                    p2 = dist[a, c] * dist[b, d]
                    p3 = dist[a, d] * dist[b, c]
                    hi = max(p1, p2, p3)
                    lo = min(p1, p2, p3)
                    mid = p1 + p2 + p3 - hi - lo
                    if mid > 0.0 and hi / mid > best:
                        best = hi / mid
                        wit[0], wit[1], wit[2], wit[3] = a, b, c, d
    return best, wit
