"""Numba kernels for elimination over F_p.

Kept separate so that the pure-Python modules import quickly and the JIT
cache lives in one place.
"""

import numba as nb
import numpy as np


@nb.njit(cache=True, nogil=True)
def pack_bits(a):
    """Pack a 0/1 ``uint8`` matrix into rows of little-endian ``uint64`` words."""
    n, m = a.shape
    w = (m + 63) // 64
    out = np.zeros((n, max(w, 1)), np.uint64)
    for i in range(n):
        for j in range(m):
            if a[i, j] & 1:
                out[i, j >> 6] |= np.uint64(1) << np.uint64(j & 63)
    return out


@nb.njit(cache=True, nogil=True)
def rank_packed(words, ncols):
    """Rank over F_2 of bit-packed rows; ``words`` is overwritten."""
    n, w = words.shape
    rank = 0
    for col in range(ncols):
        if rank == n:
            break
        word = col >> 6
        bit = np.uint64(1) << np.uint64(col & 63)
        piv = -1
        for i in range(rank, n):
            if words[i, word] & bit:
                piv = i
                break
        if piv < 0:
            continue
        if piv != rank:
            for k in range(word, w):
                tmp = words[piv, k]
                words[piv, k] = words[rank, k]
                words[rank, k] = tmp
        for i in range(piv + 1, n):
            if words[i, word] & bit:
                for k in range(word, w):
                    words[i, k] ^= words[rank, k]
        rank += 1
    return rank


@nb.njit(cache=True, nogil=True)
def _inverse(a, p):
    # extended Euclid; a is nonzero mod p
    t, new_t = 0, 1
    r, new_r = p, a
    while new_r != 0:
        q = r // new_r
        t, new_t = new_t, t - q * new_t
        r, new_r = new_r, r - q * new_r
    return t % p


@nb.njit(cache=True, nogil=True)
def rref_mod_p(a, p, reduce_above):
    """Gauss-Jordan elimination mod ``p`` in place on an int64 matrix.

    With ``reduce_above=False`` only the entries below each pivot are
    cleared (enough for the rank); otherwise the result is the reduced
    row-echelon form. Returns the number of pivots.
    """
    n, m = a.shape
    rank = 0
    for col in range(m):
        if rank == n:
            break
        piv = -1
        for i in range(rank, n):
            if a[i, col] != 0:
                piv = i
                break
        if piv < 0:
            continue
        if piv != rank:
            for k in range(col, m):
                tmp = a[piv, k]
                a[piv, k] = a[rank, k]
                a[rank, k] = tmp
        inv = _inverse(a[rank, col], p)
        if inv != 1:
            for k in range(col, m):
                a[rank, k] = (a[rank, k] * inv) % p
        start = 0 if reduce_above else rank + 1
        for i in range(start, n):
            if i == rank:
                continue
            f = a[i, col]
            if f != 0:
                for k in range(col, m):
                    a[i, k] = (a[i, k] - f * a[rank, k]) % p
        rank += 1
    return rank
