"""The filtered tilde grid complex over F2 and its linear-algebra questions.

A :class:`FilteredComplex` holds a (possibly windowed) basis of grid states
bucketed by (maslov, alex2), plus sparse boundary columns of the full tilde
differential (empty rectangles avoiding O; X markers drop the Alexander
filtration).  Chains are frozensets of generator indices.
"""

from __future__ import annotations

import bisect
from dataclasses import dataclass, field
from typing import Iterable, Mapping, NamedTuple, Sequence

import numpy as np

from gridspectra import kernels
from gridspectra.grid import (
    Bigrading,
    GridDiagram,
    GridError,
    State,
    pack_state,
    rectangles_from,
    unpack_state,
)

F2Chain = frozenset[int]


class CapacityError(GridError):
    """Estimated state count exceeds the configured budget."""


class WindowTooNarrow(GridError):
    """A quotient question needs generators that were not materialized."""


class QuotientWindow(NamedTuple):
    """The subquotient F_hi / F_lo in doubled Alexander units (lo < hi)."""

    hi: int
    lo: int


def differential(g: GridDiagram, st: Sequence[int], block_x: bool = False) -> frozenset[State]:
    """Tilde differential of a single state, as a set of target states.

    Counts empty rectangles with no O marker; with ``block_x`` also no X
    marker (the associated-graded differential).
    """
    parity: dict[State, int] = {}
    for rect in rectangles_from(g, tuple(st)):
        if not rect.empty or rect.n_o:
            continue
        if block_x and rect.n_x:
            continue
        parity[rect.dst] = parity.get(rect.dst, 0) ^ 1
    return frozenset(y for y, p in parity.items() if p)


@dataclass
class GradedBasis:
    """Generator indexing: contiguous indices, bucketed by (maslov, alex2)."""

    m: int
    bucket_keys: list[tuple[int, int]]
    bucket_states: dict[tuple[int, int], np.ndarray]  # sorted packed uint64
    bucket_start: dict[tuple[int, int], int]
    size: int

    @classmethod
    def from_buckets(cls, m: int, buckets: Mapping[tuple[int, int], np.ndarray]) -> "GradedBasis":
        keys = sorted(buckets)
        start: dict[tuple[int, int], int] = {}
        total = 0
        for key in keys:
            start[key] = total
            total += len(buckets[key])
        return cls(m, keys, dict(buckets), start, total)

    def index_of(self, key: tuple[int, int], packed: int) -> int:
        """Global index of a packed state known to sit in bucket ``key``; -1 if absent."""
        arr = self.bucket_states.get(key)
        if arr is None:
            return -1
        pos = int(np.searchsorted(arr, np.uint64(packed)))
        if pos == len(arr) or int(arr[pos]) != packed:
            return -1
        return self.bucket_start[key] + pos

    def grading_of(self, index: int) -> Bigrading:
        key = self.key_of(index)
        return Bigrading(*key)

    def key_of(self, index: int) -> tuple[int, int]:
        pos = bisect.bisect_right(self._starts_list(), index) - 1
        return self.bucket_keys[pos]

    def _starts_list(self) -> list[int]:
        cached = getattr(self, "_starts", None)
        if cached is None:
            cached = [self.bucket_start[k] for k in self.bucket_keys]
            self._starts = cached
        return cached

    def state_of(self, index: int) -> State:
        key = self.key_of(index)
        arr = self.bucket_states[key]
        return unpack_state(int(arr[index - self.bucket_start[key]]), self.m)

    def indices_in(self, maslov: int, alex2_range: tuple[int, int]) -> list[int]:
        """Indices with the given maslov grading and alex2 in (lo, hi]."""
        lo, hi = alex2_range
        out: list[int] = []
        for key in self.bucket_keys:
            if key[0] == maslov and lo < key[1] <= hi:
                s = self.bucket_start[key]
                out.extend(range(s, s + len(self.bucket_states[key])))
        return out


@dataclass
class FilteredComplex:
    """Bigraded F2 complex with the Alexander filtration.

    ``columns[i]`` is the boundary of generator i restricted to materialized
    targets, or None when generator i's target degree was not materialized.
    """

    diagram: GridDiagram
    basis: GradedBasis
    columns: list[tuple[int, ...] | None]
    window: tuple[tuple[int, int] | None, tuple[int, int] | None]  # (maslov, alex2) ranges
    histogram: dict[tuple[int, int], int]
    alex_min: int
    alex_max: int
    reduced: bool = False

    @property
    def size(self) -> int:
        return self.basis.size

    def is_full(self) -> bool:
        return self.window == (None, None)

    def boundary(self, chain: Iterable[int]) -> F2Chain:
        out: set[int] = set()
        for i in chain:
            col = self.columns[i]
            if col is None:
                raise WindowTooNarrow(f"boundary of generator {i} not materialized")
            out.symmetric_difference_update(col)
        return frozenset(out)

    def chain_from_states(self, states: Iterable[Sequence[int]]) -> F2Chain:
        if self.reduced:
            raise GridError("state lookup is unavailable on a reduced complex")
        out = set()
        for st in states:
            st = tuple(st)
            from gridspectra.grid import bigrading  # local import to avoid cycle

            key = tuple(bigrading(self.diagram, st))
            idx = self.basis.index_of(key, pack_state(st))
            if idx < 0:
                raise WindowTooNarrow(f"state {st} not materialized")
            out.add(idx)
        return frozenset(out)

    def dump_edges(self) -> str:
        """Debug text dump: one ``src_index dst_index`` line per boundary entry."""
        lines = []
        for i, col in enumerate(self.columns):
            if col:
                lines.extend(f"{i} {j}" for j in col)
        return "\n".join(lines) + ("\n" if lines else "")


def _window_contains(window, maslov: int, alex2: int) -> bool:
    mr, ar = window
    if mr is not None and not mr[0] <= maslov <= mr[1]:
        return False
    if ar is not None and not ar[0] <= alex2 <= ar[1]:
        return False
    return True


def build_complex(
    g: GridDiagram,
    window: tuple[tuple[int, int] | None, tuple[int, int] | None] | None = None,
    max_states: int | None = 50_000_000,
) -> FilteredComplex:
    """Build the filtered tilde complex, optionally windowed by gradings.

    When windowed, boundary columns are stored for every generator whose
    maslov-one-lower bucket row is inside the window, so the window must be
    closed under one downward application of the differential wherever
    columns will be consulted.
    """
    import math

    if max_states is not None and math.factorial(g.m) > max_states:
        if window is None:
            raise CapacityError(
                f"m={g.m} needs {math.factorial(g.m)} states; cap is {max_states}"
            )
    mrange, arange = window if window is not None else (None, None)
    keep = None if mrange is None else frozenset(range(mrange[0], mrange[1] + 1))
    hist, buckets = kernels.bucket_states(g.m, g.xs, g.os, g.components, keep)
    if arange is not None:
        buckets = {k: v for k, v in buckets.items() if arange[0] <= k[1] <= arange[1]}
    if max_states is not None:
        total = sum(len(v) for v in buckets.values())
        if total > max_states:
            raise CapacityError(f"window holds {total} states; cap is {max_states}")
    basis = GradedBasis.from_buckets(g.m, buckets)
    win = (mrange, arange) if window is not None else (None, None)
    columns: list[tuple[int, ...] | None] = [None] * basis.size
    for key in basis.bucket_keys:
        m_src, a_src = key
        src = basis.bucket_states[key]
        indptr, targets, dalex2 = kernels.diff_columns(g.m, g.xs, g.os, src, False)
        start = basis.bucket_start[key]
        for j in range(len(src)):
            col = []
            ok = True
            for t in range(int(indptr[j]), int(indptr[j + 1])):
                tkey = (m_src - 1, a_src - int(dalex2[t]))
                idx = basis.index_of(tkey, int(targets[t]))
                if idx < 0:
                    if _window_contains(win, *tkey):
                        raise GridError("window-internal lookup failed")  # pragma: no cover
                    ok = False
                    continue
                col.append(idx)
            # a column is trustworthy only if every target bucket is in-window
            if ok or window is None:
                columns[start + j] = tuple(sorted(col))
            else:
                columns[start + j] = None
    alex_vals = [k[1] for k in hist]
    return FilteredComplex(
        g, basis, columns, win, hist, min(alex_vals), max(alex_vals)
    )


def graded_homology_dims(c: FilteredComplex) -> dict[tuple[int, int], int]:
    """Homology dimensions of the associated graded complex, per bigrading."""
    if not c.is_full():
        raise GridError("graded homology needs the full complex")
    g = c.diagram
    ranks: dict[tuple[int, int], int] = {}
    for key in c.basis.bucket_keys:
        src = c.basis.bucket_states[key]
        indptr, targets, dalex2 = kernels.diff_columns(g.m, g.xs, g.os, src, True)
        tkey = (key[0] - 1, key[1])
        cols = []
        for j in range(len(src)):
            col = [
                c.basis.index_of(tkey, int(targets[t]))
                for t in range(int(indptr[j]), int(indptr[j + 1]))
            ]
            if col:
                cols.append(col)
        ranks[key] = kernels.f2_rank(cols)
    dims: dict[tuple[int, int], int] = {}
    for key in c.basis.bucket_keys:
        n = len(c.basis.bucket_states[key])
        up_key = (key[0] + 1, key[1])
        dim = n - ranks.get(key, 0) - ranks.get(up_key, 0)
        if dim:
            dims[key] = dim
    return dims


def _quotient_data(c: FilteredComplex, degree: int, w: QuotientWindow):
    """Source columns and target reindexing for the induced differential on
    F_hi/F_lo in homological degree ``degree`` (targets at degree-1)."""
    if w.lo >= w.hi:
        raise GridError(f"quotient window needs lo < hi, got {w}")
    sources = c.basis.indices_in(degree, (w.lo, w.hi))
    targets = c.basis.indices_in(degree - 1, (w.lo, w.hi))
    if not c.reduced:
        for key in c.histogram:
            if key[0] in (degree, degree - 1) and w.lo < key[1] <= w.hi:
                if key not in c.basis.bucket_states and c.histogram[key]:
                    raise WindowTooNarrow(f"bucket {key} not materialized")
    tidx = {t: i for i, t in enumerate(targets)}
    cols = []
    for s in sources:
        col = c.columns[s]
        if col is None:
            raise WindowTooNarrow(f"no boundary column for generator {s}")
        cols.append(sorted(tidx[t] for t in col if t in tidx))
    return cols, tidx


def is_boundary_in_quotient(c: FilteredComplex, z: Iterable[int], w: QuotientWindow) -> bool:
    """Is the cycle z zero in H_*(F_hi / F_lo)?  Exact F2 solve.

    z is given by generator indices; entries at or below ``w.lo`` are
    quotiented away.  Callers must pass a chain whose boundary lies below
    ``w.lo`` (the §-style preconditions); this is asserted when columns are
    available.
    """
    z = frozenset(z)
    zkeys = {c.basis.key_of(i) for i in z}
    degs = {k[0] for k in zkeys}
    if len(degs) > 1:
        raise GridError("z must be homogeneous in the maslov grading")
    if not z:
        return True
    degree = next(iter(degs)) + 1
    ztrunc = [i for i in z if w.lo < c.basis.key_of(i)[1] <= w.hi]
    if any(c.basis.key_of(i)[1] > w.hi for i in z):
        raise GridError("z does not lie in F_hi")
    if not ztrunc:
        return True
    cols, tidx = _quotient_data(c, degree, w)
    zvec = sorted(tidx[i] for i in ztrunc)
    return kernels.f2_membership(cols, [zvec])[0]


@dataclass
class Reduction:
    """Result of Morse reduction: the reduced complex plus chain transport."""

    complex: FilteredComplex
    index_map: dict[int, int]  # surviving old index -> new index
    _ops: list[tuple[int, tuple[int, ...]]] = field(default_factory=list)

    def transport(self, chain: Iterable[int]) -> F2Chain:
        """Image of a chain under the homotopy equivalence to the reduced complex."""
        cur = set(chain)
        for h, dg in self._ops:
            if h in cur:
                cur.symmetric_difference_update(dg)  # dg contains h
        out = set()
        for i in cur:
            j = self.index_map.get(i)
            if j is not None:
                out.add(j)
        return frozenset(out)


def reduce_complex(c: FilteredComplex, protect: frozenset[int] = frozenset()) -> Reduction:
    """Cancel boundary entries between generators of equal alex2.

    Filtration-preserving Morse cancellation; the result is filtered chain
    homotopy equivalent to the input and quotient-membership answers are
    preserved (via :meth:`Reduction.transport`).
    """
    cols: dict[int, set[int]] = {
        i: set(col) for i, col in enumerate(c.columns) if col
    }
    rows: dict[int, set[int]] = {}
    for i, col in cols.items():
        for t in col:
            rows.setdefault(t, set()).add(i)
    # generators without stored columns still exist; only stored ones cancel
    key_of = c.basis.key_of
    removed: set[int] = set()
    ops: list[tuple[int, tuple[int, ...]]] = []
    queue = [
        (gidx, h)
        for gidx, col in cols.items()
        for h in col
        if key_of(gidx)[1] == key_of(h)[1]
    ]
    while queue:
        gidx, h = queue.pop()
        if gidx in removed or h in removed:
            continue
        if gidx in protect or h in protect:
            continue
        col_g = cols.get(gidx)
        if col_g is None or h not in col_g:
            continue
        dg = tuple(col_g)
        ops.append((h, dg))
        removed.add(gidx)
        removed.add(h)
        incoming = list(rows.get(h, ()))
        for x in incoming:
            if x == gidx or x in removed:
                continue
            col_x = cols[x]
            for t in dg:
                if t in col_x:
                    col_x.discard(t)
                    rows[t].discard(x)
                else:
                    col_x.add(t)
                    rows.setdefault(t, set()).add(x)
                    if key_of(x)[1] == key_of(t)[1] and t not in removed:
                        queue.append((x, t))
        # detach the cancelled pair
        for t in dg:
            rows.get(t, set()).discard(gidx)
        rows.pop(h, None)
        cols.pop(gidx, None)
        cols.pop(h, None)
    # rebuild a FilteredComplex over surviving generators
    survivors = [i for i in range(c.size) if i not in removed]
    new_keys: dict[tuple[int, int], list[int]] = {}
    for old in survivors:
        new_keys.setdefault(key_of(old), []).append(old)
    bucket_states = {
        k: np.arange(len(v), dtype=np.uint64) for k, v in sorted(new_keys.items())
    }
    # packed values are synthetic on a reduced complex; keep order stable
    basis = GradedBasis.from_buckets(c.basis.m, bucket_states)
    order: dict[int, int] = {}
    pos = 0
    for k in sorted(new_keys):
        for old in new_keys[k]:
            order[old] = pos
            pos += 1
    new_columns: list[tuple[int, ...] | None] = [None] * len(survivors)
    for old in survivors:
        if old in cols:
            new_columns[order[old]] = tuple(sorted(order[t] for t in cols[old] if t not in removed))
        elif c.columns[old] is not None:
            new_columns[order[old]] = ()
    remapped = {old: order[old] for old in survivors}
    reduced = FilteredComplex(
        c.diagram, basis, new_columns, c.window, c.histogram, c.alex_min, c.alex_max, reduced=True
    )
    return Reduction(reduced, remapped, ops)
