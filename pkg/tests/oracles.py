"""Slow, independent reference implementations used only by the tests.

None of these import the package modules they check; they work from plain
Python sets, loops and scipy's LDL^T factorization.
"""
from __future__ import annotations

import itertools
import math

import numpy as np
from scipy.linalg import ldl

MASK32 = 0xFFFFFFFF


def philox4x32_ref(ctr, key, rounds=10):
    """Scalar Philox4x32 straight from the Random123 description."""
    c = list(ctr)
    k0, k1 = key
    for r in range(rounds):
        if r:
            k0 = (k0 + 0x9E3779B9) & MASK32
            k1 = (k1 + 0xBB67AE85) & MASK32
        p0 = 0xD2511F53 * c[0]
        p1 = 0xCD9E8D57 * c[2]
        hi0, lo0 = p0 >> 32, p0 & MASK32
        hi1, lo1 = p1 >> 32, p1 & MASK32
        c = [hi1 ^ c[1] ^ k0, lo1, hi0 ^ c[3] ^ k1, lo0]
    return tuple(c)


def box_ref(center, side):
    """Lattice points of the closed sup-norm box, by scanning a generous range."""
    lo = [math.floor(c - side / 2) - 1 for c in center]
    hi = [math.ceil(c + side / 2) + 1 for c in center]
    pts = []
    for y in itertools.product(*[range(a, b + 1) for a, b in zip(lo, hi)]):
        if all(abs(yi - ci) <= side / 2 + 1e-12 for yi, ci in zip(y, center)):
            pts.append(y)
    return sorted(pts)


def neighbours(y):
    for i in range(len(y)):
        for s in (-1, 1):
            z = list(y)
            z[i] += s
            yield tuple(z)


def boundary_ref(phi, theta):
    phi, theta = set(map(tuple, phi)), set(map(tuple, theta))
    edges = sorted((u, v) for u in phi for v in neighbours(u) if v in theta and v not in phi)
    ext = sorted({v for _, v in edges})
    inn = sorted({u for u, _ in edges})
    return edges, ext, inn


def supdist(a, b):
    return max(abs(x - y) for x, y in zip(a, b))


def interior_ref(phi, theta, t):
    phi, theta = set(map(tuple, phi)), set(map(tuple, theta))
    rest = theta - phi
    ft = math.floor(t)
    out = []
    for y in phi:
        d = min((supdist(y, z) for z in rest), default=math.inf)
        if d > ft:
            out.append(y)
    return sorted(out)


def count_below(H, x):
    """Number of eigenvalues of symmetric H strictly below x (Sylvester inertia of H - x)."""
    n = H.shape[0]
    _, D, _ = ldl(H - x * np.eye(n), lower=True)
    neg, i = 0, 0
    while i < n:
        if i + 1 < n and D[i + 1, i] != 0:
            neg += int((np.linalg.eigvalsh(D[i:i + 2, i:i + 2]) < 0).sum())
            i += 2
        else:
            neg += int(D[i, i] < 0)
            i += 1
    return neg


def max_disjoint_brute(centers, threshold):
    """Largest subset of points with pairwise sup-distance >= threshold, by enumeration."""
    n = len(centers)
    best = 0
    for r in range(n, 0, -1):
        for sub in itertools.combinations(range(n), r):
            if all(supdist(centers[i], centers[j]) >= threshold for i, j in itertools.combinations(sub, 2)):
                return r
    return best


def real_boxes_disjoint(a, b, side):
    """Closed real boxes of the given side intersect iff every coordinate interval overlaps."""
    return any(abs(x - y) > side for x, y in zip(a, b))


def h_ref(E, A, t):
    s = (t - E) / A
    return 1 - s * s if -1 < s < 1 else 0.0


def hamiltonian_ref(sites, V):
    sites = [tuple(s) for s in sites]
    n = len(sites)
    pos = {s: i for i, s in enumerate(sites)}
    H = [[0.0] * n for _ in range(n)]
    for i, s in enumerate(sites):
        H[i][i] = float(V[i])
        for z in neighbours(s):
            j = pos.get(z)
            if j is not None:
                H[i][j] = -1.0
    return np.array(H)
