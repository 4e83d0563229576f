"""Pure-Python kernels: state enumeration, differentials, GF(2) elimination.

This module is the reference implementation; ``_ckernels`` (Cython) mirrors
its API exactly and is preferred at import time by :mod:`gridspectra.kernels`.
All states cross this boundary packed 4 bits per entry (m <= 16).
"""

from __future__ import annotations

import itertools

import numpy as np

COMPILED = False


def _marker_tables(m: int, perm) -> tuple[list[list[int]], list[list[int]]]:
    """NE[c][r] / SW[c][r]: markers of ``perm`` strictly NE / SW of point (c, r)."""
    ne = [[0] * (m + 1) for _ in range(m + 1)]
    sw = [[0] * (m + 1) for _ in range(m + 1)]
    for c in range(m + 1):
        for r in range(m + 1):
            ne[c][r] = sum(1 for mc, mr in enumerate(perm) if mc >= c and mr >= r)
            sw[c][r] = sum(1 for mc, mr in enumerate(perm) if mc < c and mr < r)
    return ne, sw


def _self_count(perm) -> int:
    m = len(perm)
    return sum(
        1 for a in range(m) for b in range(a + 1, m) if perm[a] < perm[b]
    )


def bucket_states(m, xs, os_, components, keep_maslov=None, count_only=False):
    """Enumerate all m! states, bucketed by (maslov, alex2).

    Returns ``(hist, buckets)`` where ``hist`` maps every occurring
    (maslov, alex2) pair to its state count and ``buckets`` maps the pairs
    whose maslov grading lies in ``keep_maslov`` (all, if None) to sorted
    uint64 arrays of packed states.  ``count_only`` skips bucket storage.
    """
    ne_o, sw_o = _marker_tables(m, os_)
    ne_x, sw_x = _marker_tables(m, xs)
    ioo = _self_count(os_)
    ixx_m = _self_count(xs)
    shift = m - components
    hist: dict[tuple[int, int], int] = {}
    raw: dict[tuple[int, int], list[int]] = {}
    for perm in itertools.permutations(range(m)):
        ixx = 0
        so = 0
        sx = 0
        packed = 0
        for c in range(m):
            r = perm[c]
            for cc in range(c):
                if perm[cc] < r:
                    ixx += 1
            so += ne_o[c][r] + sw_o[c][r]
            sx += ne_x[c][r] + sw_x[c][r]
            packed |= r << (4 * c)
        m_o = ixx - so + ioo + 1
        m_x = ixx - sx + ixx_m + 1
        key = (m_o, m_o - m_x - shift)
        hist[key] = hist.get(key, 0) + 1
        if count_only or (keep_maslov is not None and m_o not in keep_maslov):
            continue
        raw.setdefault(key, []).append(packed)
    buckets = {
        key: np.sort(np.array(vals, dtype=np.uint64)) for key, vals in raw.items()
    }
    return hist, buckets


def diff_columns(m, xs, os_, src_packed, block_x):
    """Boundary targets for each packed source state.

    Counts empty rectangles avoiding O (and avoiding X when ``block_x``),
    mod 2.  Returns ``(indptr, targets, dalex2)``: column j occupies
    ``targets[indptr[j]:indptr[j+1]]`` (packed states) with the parallel
    array recording ``alex2(src) - alex2(target)`` for each entry.
    """
    src_packed = np.asarray(src_packed, dtype=np.uint64)
    indptr = np.zeros(len(src_packed) + 1, dtype=np.int64)
    out_t: list[int] = []
    out_d: list[int] = []
    st = [0] * m
    for j, packed in enumerate(src_packed):
        p = int(packed)
        for c in range(m):
            st[c] = (p >> (4 * c)) & 0xF
        parity: dict[int, int] = {}
        drop: dict[int, int] = {}
        for cs in range(m):
            for ct in range(m):
                if cs == ct:
                    continue
                width = (ct - cs) % m
                r1 = st[cs]
                height = (st[ct] - r1) % m
                n_x = 0
                blocked = False
                for c in range(m):
                    if not 0 < (2 * c + 1 - 2 * cs) % (2 * m) < 2 * width:
                        continue
                    if 0 < (2 * os_[c] + 1 - 2 * r1) % (2 * m) < 2 * height:
                        blocked = True
                        break
                    if 0 < (2 * xs[c] + 1 - 2 * r1) % (2 * m) < 2 * height:
                        if block_x:
                            blocked = True
                            break
                        n_x += 1
                if blocked:
                    continue
                empty = True
                for c in range(m):
                    if c == cs or c == ct:
                        continue
                    if 0 < (c - cs) % m < width and 0 < (st[c] - r1) % m < height:
                        empty = False
                        break
                if not empty:
                    continue
                tgt = p & ~((0xF << (4 * cs)) | (0xF << (4 * ct)))
                tgt |= (st[ct] << (4 * cs)) | (st[cs] << (4 * ct))
                parity[tgt] = parity.get(tgt, 0) ^ 1
                drop[tgt] = 2 * n_x
        for tgt in sorted(parity):
            if parity[tgt]:
                out_t.append(tgt)
                out_d.append(drop[tgt])
        indptr[j + 1] = len(out_t)
    return (
        indptr,
        np.array(out_t, dtype=np.uint64),
        np.array(out_d, dtype=np.int64),
    )


def f2_membership(columns, zs, reuse_basis=None):
    """Batch GF(2) span-membership: is each z in span(columns)?

    ``columns`` and ``zs`` are iterables of iterables of row indices.
    Elimination uses lowest-index pivots.  Returns a list of bools.
    """
    basis: dict[int, frozenset[int]] = {} if reuse_basis is None else reuse_basis
    for col in columns:
        vec = frozenset(col)
        while vec:
            piv = min(vec)
            if piv in basis:
                vec = vec ^ basis[piv]
            else:
                basis[piv] = vec
                break
    answers = []
    for z in zs:
        vec = frozenset(z)
        while vec:
            piv = min(vec)
            if piv not in basis:
                break
            vec = vec ^ basis[piv]
        answers.append(not vec)
    return answers


def f2_rank(columns) -> int:
    basis: dict[int, frozenset[int]] = {}
    for col in columns:
        vec = frozenset(col)
        while vec:
            piv = min(vec)
            if piv in basis:
                vec = vec ^ basis[piv]
            else:
                basis[piv] = vec
                break
    return len(basis)
