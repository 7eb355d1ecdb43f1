"""Hot inner loops, jitted with numba when available.

Kernels never draw randomness themselves: they consume pre-drawn uniforms
or raw bit words supplied by the caller's Generator, which keeps every
simulation a pure function of its seed regardless of chunking or threads.
"""

from __future__ import annotations

import numpy as np

try:
    from numba import njit

    def _jit(fn):
        return njit(cache=True, nogil=True)(fn)

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - exercised only without numba
    def _jit(fn):
        return fn

    HAVE_NUMBA = False


# Kernel status codes
DONE = 0
OUT_FULL = 1
RAND_EMPTY = 2


@_jit
def climb_steps(M, uniforms, out, pos, widx, uidx):
    """Walk conditioned to hit M before 0 (up-probability (k+1)/(2k) from k).

    Writes each new position into out. Returns (pos, widx, uidx, status);
    DONE means M was reached (and written).
    """
    cap = out.shape[0]
    n_u = uniforms.shape[0]
    while True:
        if widx >= cap:
            return pos, widx, uidx, OUT_FULL
        if pos == 0:
            pos = 1
            out[widx] = 1
            widx += 1
            continue
        if uidx >= n_u:
            return pos, widx, uidx, RAND_EMPTY
        if uniforms[uidx] * (2.0 * pos) < pos + 1.0:
            pos += 1
        else:
            pos -= 1
        uidx += 1
        out[widx] = pos
        widx += 1
        if pos == M:
            return pos, widx, uidx, DONE


@_jit
def strip_steps(M, words, out, pos, widx, bidx, zeros_left):
    """Symmetric walk on [0, M] consuming one bit per step.

    At M an up-bit writes a second consecutive M (a peak marker: the
    excised excursion above M) instead of leaving the strip.  Hitting 0
    decrements zeros_left; while it stays positive the walk restarts at 1
    (reflection without consuming a bit), otherwise the kernel is DONE.
    Returns (pos, widx, bidx, zeros_left, status).
    """
    cap = out.shape[0]
    nbits = words.shape[0] * 64
    while True:
        if widx >= cap:
            return pos, widx, bidx, zeros_left, OUT_FULL
        if bidx >= nbits:
            return pos, widx, bidx, zeros_left, RAND_EMPTY
        bit = (words[bidx >> 6] >> np.uint64(bidx & 63)) & np.uint64(1)
        bidx += 1
        if pos == M:
            if bit:
                out[widx] = M  # peak marker: excursion above M, excised
            else:
                pos = M - 1
                out[widx] = pos
            widx += 1
        else:
            if bit:
                pos += 1
            else:
                pos -= 1
            out[widx] = pos
            widx += 1
            if pos == 0:
                zeros_left -= 1
                if zeros_left == 0:
                    return pos, widx, bidx, zeros_left, DONE
                if widx >= cap:
                    return pos, widx, bidx, zeros_left, OUT_FULL
                pos = 1
                out[widx] = 1
                widx += 1


@_jit
def pairs_to_ids(n, pos_a, pos_b, keep, gone):
    """Resolve uniform pair positions into stable block ids.

    At step s there are k = n - s active blocks; pos_a[s] in [0, k) and
    pos_b[s] in [0, k-1) select two distinct slots.  The merged block keeps
    the smaller id.  Fills keep/gone with 1-based ids.
    """
    active = np.empty(n, np.int64)
    for i in range(n):
        active[i] = i + 1
    k = n
    for s in range(pos_a.shape[0]):
        a = pos_a[s]
        b = pos_b[s]
        if b >= a:
            b += 1
        ia = active[a]
        ib = active[b]
        if ia < ib:
            keep[s] = ia
            gone[s] = ib
            drop = b
        else:
            keep[s] = ib
            gone[s] = ia
            drop = a
        active[drop] = active[k - 1]
        k -= 1
    return 0


@_jit
def apply_merges(keep, gone, e0, e1, sizes, alive):
    """Apply events e0..e1-1 to id-indexed block sizes and liveness."""
    for e in range(e0, e1):
        a = keep[e]
        b = gone[e]
        sizes[a] += sizes[b]
        sizes[b] = 0.0
        alive[b] = False
    return 0


@_jit
def union_merges(keep, gone, e0, e1, parent):
    """Apply events to a union-find parent table (parent[gone] = keep)."""
    for e in range(e0, e1):
        parent[gone[e]] = keep[e]
    return 0


@_jit
def find_root(parent, i):
    r = i
    while parent[r] != r:
        r = parent[r]
    while parent[i] != r:  # path compression
        nxt = parent[i]
        parent[i] = r
        i = nxt
    return r


@_jit
def jump_sizes_at_counts(n, keep, gone, want, out):
    """Block sizes (id-indexed rows) at each requested block count.

    want must be sorted descending; out has shape (len(want), n + 1).
    Row j holds the size of each block id while the chain has want[j]
    blocks (0 for absorbed ids).
    """
    sizes = np.zeros(n + 1, np.float64)
    for i in range(1, n + 1):
        sizes[i] = 1.0
    w = 0
    k = n
    if w < want.shape[0] and want[w] == k:
        for i in range(n + 1):
            out[w, i] = sizes[i]
        w += 1
    for e in range(keep.shape[0]):
        sizes[keep[e]] += sizes[gone[e]]
        sizes[gone[e]] = 0.0
        k -= 1
        if w < want.shape[0] and want[w] == k:
            for i in range(n + 1):
                out[w, i] = sizes[i]
            w += 1
            if w == want.shape[0]:
                break
    return w
