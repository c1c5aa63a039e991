"""Counter-based random numbers keyed by (seed, sample index, lattice site).

The disorder value at a site must not depend on which region it was drawn for,
nor on the order in which samples are processed.  A Philox4x32-10 block cipher
(Salmon et al., Random123) gives exactly that: every (key, counter) pair maps
to an independent 128-bit block, and the whole thing vectorizes over numpy
uint64 arrays.  numpy ships a Philox bit generator, but only as a sequential
stream, which would force one generator object per site.
"""
from __future__ import annotations

import numpy as np

_M0 = np.uint64(0xD2511F53)
_M1 = np.uint64(0xCD9E8D57)
_W0 = 0x9E3779B9
_W1 = 0xBB67AE85
_MASK32 = np.uint64(0xFFFFFFFF)
_SHIFT32 = np.uint64(32)

MAX_DIM = 3


def philox4x32(counter, key, rounds: int = 10):
    """Philox4x32 block function.

    Parameters
    ----------
    counter : sequence of four uint32-valued arrays (broadcastable)
    key : pair of uint32 ints
    rounds : number of rounds, 10 is the standard choice

    Returns
    -------
    tuple of four uint64 arrays holding 32-bit words
    """
    c0, c1, c2, c3 = (np.asarray(c, dtype=np.uint64) & _MASK32 for c in counter)
    k0, k1 = int(key[0]) & 0xFFFFFFFF, int(key[1]) & 0xFFFFFFFF
    for r in range(rounds):
        if r:
            k0 = (k0 + _W0) & 0xFFFFFFFF
            k1 = (k1 + _W1) & 0xFFFFFFFF
        p0 = _M0 * c0
        p1 = _M1 * c2
        hi0, lo0 = p0 >> _SHIFT32, p0 & _MASK32
        hi1, lo1 = p1 >> _SHIFT32, p1 & _MASK32
        c0, c1, c2, c3 = (
            hi1 ^ c1 ^ np.uint64(k0),
            lo1,
            hi0 ^ c3 ^ np.uint64(k1),
            lo0,
        )
    return c0, c1, c2, c3


def _words_to_unit(hi, lo):
    # 53 random bits -> [0, 1)
    bits = ((hi << _SHIFT32) | lo) >> np.uint64(11)
    return bits.astype(np.float64) * (1.0 / 9007199254740992.0)


def site_uniforms(sites, seed: int, index) -> np.ndarray:
    """Uniform [0, 1) variates for each (sample index, site).

    ``sites`` is an (n, d) integer array with d <= 3.  ``index`` may be a
    scalar or a 1-d array of sample indices; in the latter case the result has
    shape (len(index), n).  The value for a given (seed, index, site) triple
    never depends on the other sites or indices requested.
    """
    sites = np.asarray(sites, dtype=np.int64)
    if sites.ndim != 2:
        raise ValueError("sites must be an (n, d) array")
    n, d = sites.shape
    if d > MAX_DIM:
        raise ValueError(f"counter layout supports d <= {MAX_DIM}, got {d}")
    if seed < 0 or seed >= 2**64:
        raise ValueError("seed must be in [0, 2**64)")
    idx = np.asarray(index, dtype=np.int64)
    if np.any(idx < 0) or np.any(idx >= 2**32):
        raise ValueError("sample index must be in [0, 2**32)")
    words = [np.zeros(n, dtype=np.uint64) for _ in range(MAX_DIM)]
    for j in range(d):
        # two's complement wrap keeps negative coordinates distinct
        words[j] = sites[:, j].astype(np.uint64) & _MASK32
    if idx.ndim == 0:
        c3 = np.full(n, idx, dtype=np.uint64)
        c = (words[0], words[1], words[2], c3)
    else:
        c3 = idx.astype(np.uint64)[:, None]
        c = (words[0][None, :], words[1][None, :], words[2][None, :], c3)
        c = tuple(np.broadcast_to(w, (idx.size, n)) for w in c)
    key = (seed & 0xFFFFFFFF, (seed >> 32) & 0xFFFFFFFF)
    r0, r1, _, _ = philox4x32(c, key)
    return _words_to_unit(r0, r1)
