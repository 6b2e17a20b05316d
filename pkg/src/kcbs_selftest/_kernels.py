"""Integer-coded rewrite kernels.

Words over the alphabet {projector 1..n, unitary letter, its adjoint} are stored
as int64 rows padded with -1.  The rewrite loop below is the single hot path of
the package: the moment-matrix assembly canonicalizes every pairwise product of
index words (36,864 products at the working level) and the property suites push
tens of thousands of random words through it.

Both a numba-compiled and a pure-Python/numpy implementation are provided.  The
compiled path is used when numba imports cleanly; setting the environment
variable ``KCBS_SELFTEST_NO_NUMBA=1`` forces the fallback.  Both paths run the
same code, so results are bit-identical.
"""

from __future__ import annotations

import os

import numpy as np

IDENT = 100
PHAT = 101
PHAT_ADJ = 102

try:
    from numba import njit

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - exercised only without numba installed
    HAVE_NUMBA = False

    def njit(*args, **kwargs):
        def wrap(func):
            return func

        return wrap


def _env_disables_numba() -> bool:
    return os.environ.get("KCBS_SELFTEST_NO_NUMBA", "").strip().lower() in (
        "1",
        "true",
        "yes",
    )


USE_NUMBA = HAVE_NUMBA and not _env_disables_numba()


def _canon_into(codes, length, n, out):
    """Rewrite one word into canonical form using a stack automaton.

    Rules: drop identity letters, collapse repeated projectors, kill words
    containing a cycle-adjacent projector pair, cancel unitary/adjoint pairs.
    Returns the canonical length, or -1 if the word rewrites to zero.  ``out``
    must have room for ``length`` letters.
    """
    top = 0
    for pos in range(length):
        x = codes[pos]
        if x == IDENT:
            continue
        if top == 0:
            out[top] = x
            top += 1
            continue
        t = out[top - 1]
        if t <= n and x <= n:
            if t == x:
                continue  # idempotent projector
            d = t - x
            if d < 0:
                d = -d
            if d == 1 or d == n - 1:
                return -1  # exclusive (cycle-adjacent) pair annihilates
            out[top] = x
            top += 1
        elif (t == PHAT and x == PHAT_ADJ) or (t == PHAT_ADJ and x == PHAT):
            top -= 1  # unitary cancellation
        else:
            out[top] = x
            top += 1
    return top


def _canon_batch(codes, lengths, n, out, out_len):
    for row in range(codes.shape[0]):
        out_len[row] = _canon_into(codes[row], lengths[row], n, out[row])


def _pair_products(codes, lengths, n, out, out_len):
    """Canonicalize adjoint(w_i) * w_j for every index pair (i, j).

    Output row i * M + j holds the canonical product.  Length -1 marks zero.
    """
    m, width = codes.shape
    buf = np.empty(2 * width, dtype=np.int64)
    for i in range(m):
        li = lengths[i]
        for j in range(m):
            lj = lengths[j]
            k = 0
            for p in range(li - 1, -1, -1):  # reversed left word, letters starred
                c = codes[i, p]
                if c == PHAT:
                    c = PHAT_ADJ
                elif c == PHAT_ADJ:
                    c = PHAT
                buf[k] = c
                k += 1
            for p in range(lj):
                buf[k] = codes[j, p]
                k += 1
            row = i * m + j
            out_len[row] = _canon_into(buf, k, n, out[row])


def _sandwich_products(left, left_len, mid, mid_len, right, right_len, n, out, out_len):
    """Canonicalize adjoint(left_i) * mid_k * right_j for all (i, k, j) triples.

    Used by the localizing block: rows are ordered i-major, then k, then j.
    """
    mi = left.shape[0]
    mk = mid.shape[0]
    mj = right.shape[0]
    width = out.shape[1]
    buf = np.empty(width, dtype=np.int64)
    for i in range(mi):
        li = left_len[i]
        for k in range(mk):
            lk = mid_len[k]
            for j in range(mj):
                lj = right_len[j]
                t = 0
                for p in range(li - 1, -1, -1):
                    c = left[i, p]
                    if c == PHAT:
                        c = PHAT_ADJ
                    elif c == PHAT_ADJ:
                        c = PHAT
                    buf[t] = c
                    t += 1
                for p in range(lk):
                    buf[t] = mid[k, p]
                    t += 1
                for p in range(lj):
                    buf[t] = right[j, p]
                    t += 1
                row = (i * mk + k) * mj + j
                out_len[row] = _canon_into(buf, t, n, out[row])


IMPLEMENTATIONS = {"python": (_canon_into, _canon_batch, _pair_products, _sandwich_products)}

if HAVE_NUMBA:

    @njit(cache=True)
    def _canon_into_jit(codes, length, n, out):
        top = 0
        for pos in range(length):
            x = codes[pos]
            if x == IDENT:
                continue
            if top == 0:
                out[top] = x
                top += 1
                continue
            t = out[top - 1]
            if t <= n and x <= n:
                if t == x:
                    continue
                d = t - x
                if d < 0:
                    d = -d
                if d == 1 or d == n - 1:
                    return -1
                out[top] = x
                top += 1
            elif (t == PHAT and x == PHAT_ADJ) or (t == PHAT_ADJ and x == PHAT):
                top -= 1
            else:
                out[top] = x
                top += 1
        return top

    @njit(cache=True)
    def _canon_batch_jit(codes, lengths, n, out, out_len):
        for row in range(codes.shape[0]):
            out_len[row] = _canon_into_jit(codes[row], lengths[row], n, out[row])

    @njit(cache=True)
    def _pair_products_jit(codes, lengths, n, out, out_len):
        m, width = codes.shape
        buf = np.empty(2 * width, dtype=np.int64)
        for i in range(m):
            li = lengths[i]
            for j in range(m):
                lj = lengths[j]
                k = 0
                for p in range(li - 1, -1, -1):
                    c = codes[i, p]
                    if c == PHAT:
                        c = PHAT_ADJ
                    elif c == PHAT_ADJ:
                        c = PHAT
                    buf[k] = c
                    k += 1
                for p in range(lj):
                    buf[k] = codes[j, p]
                    k += 1
                row = i * m + j
                out_len[row] = _canon_into_jit(buf, k, n, out[row])

    @njit(cache=True)
    def _sandwich_products_jit(left, left_len, mid, mid_len, right, right_len, n, out, out_len):
        mi = left.shape[0]
        mk = mid.shape[0]
        mj = right.shape[0]
        width = out.shape[1]
        buf = np.empty(width, dtype=np.int64)
        for i in range(mi):
            li = left_len[i]
            for k in range(mk):
                lk = mid_len[k]
                for j in range(mj):
                    lj = right_len[j]
                    t = 0
                    for p in range(li - 1, -1, -1):
                        c = left[i, p]
                        if c == PHAT:
                            c = PHAT_ADJ
                        elif c == PHAT_ADJ:
                            c = PHAT
                        buf[t] = c
                        t += 1
                    for p in range(lk):
                        buf[t] = mid[k, p]
                        t += 1
                    for p in range(lj):
                        buf[t] = right[j, p]
                        t += 1
                    row = (i * mk + k) * mj + j
                    out_len[row] = _canon_into_jit(buf, t, n, out[row])

    IMPLEMENTATIONS["numba"] = (
        _canon_into_jit,
        _canon_batch_jit,
        _pair_products_jit,
        _sandwich_products_jit,
    )

ACTIVE = "numba" if USE_NUMBA else "python"
canon_into, canon_batch, pair_products, sandwich_products = IMPLEMENTATIONS[ACTIVE]
