"""Spectral invariants of the filtered grid complex.

Implements the page-by-page algorithm: the class of a canonical generator
on page r vanishes iff it bounds in the subquotient F_{A+r-1}/F_{A-1}, and
its page-r differential vanishes iff its boundary bounds in
F_{A-1}/F_{A-r-1}.  Both questions reduce to exact F2 solves in two
adjacent Maslov degrees, so only three Maslov levels of the m!-element
state space are ever materialized.

A brute-force page oracle (dense GF(2) arithmetic over the full complex)
cross-validates the subquotient formulation on small grids.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from gridspectra import kernels
from gridspectra.complexes import (
    CapacityError,
    F2Chain,
    FilteredComplex,
    QuotientWindow,
    differential,
    is_boundary_in_quotient,
)
from gridspectra.grid import (
    Bigrading,
    GridDiagram,
    GridError,
    State,
    bigrading,
    pack_state,
    x_minus,
    x_plus,
)

INFINITY = math.inf

SIGNS = ("+", "-")


@dataclass(frozen=True)
class PageRecord:
    r: int
    lambda_defined: bool
    lambda_vanishes: bool
    d_r_vanishes: bool


@dataclass
class SpectralVerdict:
    """Computed n and page-by-page vanishing data for one canonical class."""

    sign: str
    base: Bigrading
    n: float  # positive integer or math.inf
    pages: list[PageRecord]
    first_vanishing_page: int | None
    saturation_page: int
    stats: dict = field(default_factory=dict)

    def lambda_defined_at(self, i: int) -> bool:
        if self.n is INFINITY:
            return True
        return i <= self.n

    def lambda_vanishes_at(self, i: int) -> bool:
        """Freeze semantics: vanishing is monotone and stabilizes at saturation."""
        if not self.lambda_defined_at(i):
            raise GridError(f"lambda_{i} undefined (n = {self.n})")
        if self.first_vanishing_page is not None:
            return i >= self.first_vanishing_page
        if i <= len(self.pages):
            return self.pages[i - 1].lambda_vanishes
        return False

    def d_r_vanishes_at(self, i: int) -> bool:
        if not self.lambda_defined_at(i):
            raise GridError(f"lambda_{i} undefined (n = {self.n})")
        if i <= len(self.pages):
            return self.pages[i - 1].d_r_vanishes
        return self.n is INFINITY

    @property
    def tilde_maslov(self) -> int:
        return self.base.maslov


def canonical_state(g: GridDiagram, sign: str) -> State:
    if sign == "+":
        return x_plus(g)
    if sign == "-":
        return x_minus(g)
    raise GridError(f"sign must be '+' or '-', got {sign!r}")


class SpectralEngine:
    """Windowed solver shared by the two signs of one grid diagram.

    Materializes the Maslov levels M(x^s)-1, M(x^s), M(x^s)+1 for the
    requested signs, bucketing all m! states by (maslov, alex2) in one
    enumeration pass.
    """

    def __init__(
        self,
        g: GridDiagram,
        signs: Sequence[str] = SIGNS,
        max_states: int | None = 50_000_000,
        use_reduce: bool = True,
        reduce_threshold: int = 200_000,
    ) -> None:
        self.g = g
        self.use_reduce = use_reduce
        self.reduce_threshold = reduce_threshold
        self.x_state: dict[str, State] = {}
        self.base: dict[str, Bigrading] = {}
        keep: set[int] = set()
        for s in signs:
            st = canonical_state(g, s)
            bg = bigrading(g, st)
            self.x_state[s] = st
            self.base[s] = bg
            keep.update((bg.maslov - 1, bg.maslov, bg.maslov + 1))
        self.hist, self.buckets = kernels.bucket_states(
            g.m, g.xs, g.os, g.components, frozenset(keep)
        )
        kept = sum(len(v) for v in self.buckets.values())
        if max_states is not None and kept > max_states:
            raise CapacityError(f"windowed complex holds {kept} states; cap {max_states}")
        self.stats = {
            "states_total": sum(self.hist.values()),
            "states_materialized": kept,
            "maslov_levels": sorted(keep),
        }
        self.alex_min = min(k[1] for k in self.hist)
        self.alex_max = max(k[1] for k in self.hist)
        self._cols_cache: dict[tuple[int, int], tuple] = {}
        self._dx: dict[str, list[tuple[int, int]]] = {}  # sign -> [(packed, alex2)]

    # -- plumbing ----------------------------------------------------------

    def width(self) -> int:
        return (self.alex_max - self.alex_min) // 2 + 1

    def saturation_page(self, sign: str) -> int:
        a2 = self.base[sign].alex2
        r_lambda = max(1, (self.alex_max - a2) // 2 + 1)
        r_d = max(1, -(-(a2 - self.alex_min) // 2))
        return max(r_lambda, r_d)

    def _columns_of(self, key: tuple[int, int]):
        cached = self._cols_cache.get(key)
        if cached is None:
            src = self.buckets.get(key)
            if src is None or not len(src):
                cached = (np.zeros(1, dtype=np.int64), np.array([], np.uint64), np.array([], np.int64))
            else:
                cached = kernels.diff_columns(self.g.m, self.g.xs, self.g.os, src, False)
            self._cols_cache[key] = cached
        return cached

    def boundary_chain(self, sign: str) -> list[tuple[int, int]]:
        """Full tilde boundary of x^sign as [(packed, alex2)] pairs."""
        got = self._dx.get(sign)
        if got is None:
            st = self.x_state[sign]
            a2 = self.base[sign].alex2
            got = []
            for y in differential(self.g, st, block_x=False):
                ya2 = bigrading(self.g, y).alex2
                if ya2 >= a2:
                    raise GridError("canonical generator is not a graded cycle")
                got.append((pack_state(y), ya2))
            self._dx[sign] = got
        return got

    def _solve(self, src_maslov: int, window: QuotientWindow, z: list[tuple[int, int]]) -> bool:
        """Is z (list of (packed, alex2) at maslov src_maslov-1) a boundary in
        the induced quotient F_hi/F_lo?"""
        lo, hi = window.lo, window.hi
        flat: dict[tuple[int, int], int] = {}
        offs: dict[int, int] = {}
        pos = 0
        tm = src_maslov - 1
        for a2 in range(lo + 2, hi + 1, 2):
            arr = self.buckets.get((tm, a2))
            if arr is None:
                if self.hist.get((tm, a2), 0):
                    raise GridError("target bucket not materialized")  # pragma: no cover
                continue
            offs[a2] = pos
            pos += len(arr)
        zvec = set()
        for packed, a2 in z:
            if a2 <= lo:
                continue
            if a2 > hi:
                raise GridError("z does not lie in F_hi")
            arr = self.buckets[(tm, a2)]
            i = int(np.searchsorted(arr, np.uint64(packed)))
            zvec.add(offs[a2] + i)
        if not zvec:
            return True
        cols: list[set] = []
        for a2 in range(lo + 2, hi + 1, 2):
            skey = (src_maslov, a2)
            src = self.buckets.get(skey)
            if src is None or not len(src):
                continue
            indptr, targets, dalex2 = self._columns_of(skey)
            for j in range(len(src)):
                col = set()
                for t in range(int(indptr[j]), int(indptr[j + 1])):
                    ta2 = a2 - int(dalex2[t])
                    if ta2 <= lo:
                        continue
                    arr = self.buckets[(tm, ta2)]
                    i = int(np.searchsorted(arr, targets[t]))
                    col.add(offs[ta2] + i)
                if col:
                    cols.append(col)
        if self.use_reduce and len(cols) > self.reduce_threshold:
            cols, zvec = _presimplify(cols, zvec)
            if not zvec:
                return True
        return kernels.f2_membership(cols, [sorted(zvec)])[0]

    # -- the two subquotient questions --------------------------------------

    def lambda_vanishes(self, sign: str, r: int) -> bool:
        base = self.base[sign]
        w = QuotientWindow(hi=base.alex2 + 2 * (r - 1), lo=base.alex2 - 2)
        z = [(pack_state(self.x_state[sign]), base.alex2)]
        return self._solve(base.maslov + 1, w, z)

    def d_r_vanishes(self, sign: str, r: int) -> bool:
        base = self.base[sign]
        dx = self.boundary_chain(sign)
        if not dx:
            return True
        w = QuotientWindow(hi=base.alex2 - 2, lo=base.alex2 - 2 * r - 2)
        return self._solve(base.maslov, w, dx)

    # -- the four-step loop --------------------------------------------------

    def verdict(self, sign: str) -> SpectralVerdict:
        base = self.base[sign]
        r_sat = self.saturation_page(sign)
        pages: list[PageRecord] = []
        n: float = INFINITY
        first_vanish: int | None = None
        r = 1
        while True:
            vanishes = self.lambda_vanishes(sign, r)
            if vanishes:
                pages.append(PageRecord(r, True, True, True))
                first_vanish = r
                break
            d_ok = self.d_r_vanishes(sign, r)
            pages.append(PageRecord(r, True, False, d_ok))
            if not d_ok:
                n = r
                break
            if r >= r_sat:
                break
            r += 1
        verdict = SpectralVerdict(
            sign=sign,
            base=base,
            n=n,
            pages=pages,
            first_vanishing_page=first_vanish,
            saturation_page=r_sat,
            stats=dict(self.stats),
        )
        _check_verdict_invariants(verdict)
        return verdict


def _presimplify(cols: list[set], z: set) -> tuple[list[set], set]:
    """Cheap fill-free eliminations: repeatedly clear singleton columns."""
    changed = True
    cols = [set(c) for c in cols]
    z = set(z)
    while changed:
        changed = False
        by_row: dict[int, list[int]] = {}
        for j, c in enumerate(cols):
            for t in c:
                by_row.setdefault(t, []).append(j)
        for j, c in enumerate(cols):
            if len(c) != 1:
                continue
            t = next(iter(c))
            for k in by_row.get(t, ()):
                if k != j:
                    cols[k].discard(t)
            if t in z:
                z.discard(t)
            c.clear()
            changed = True
    return [c for c in cols if c], z


def _check_verdict_invariants(v: SpectralVerdict) -> None:
    assert v.pages and v.pages[0].lambda_defined
    if v.first_vanishing_page is not None:
        assert v.n is INFINITY
    if v.n is not INFINITY:
        last = v.pages[-1]
        assert last.r == v.n and not last.d_r_vanishes


def lambda_vanishes(g: GridDiagram, sign: str, r: int, **kw) -> bool:
    """Does the page-r class of x^sign vanish?  (Assumes it is defined.)"""
    return SpectralEngine(g, signs=(sign,), **kw).lambda_vanishes(sign, r)


def d_r_vanishes(g: GridDiagram, sign: str, r: int, **kw) -> bool:
    """Does the page-r differential kill the class of x^sign?"""
    return SpectralEngine(g, signs=(sign,), **kw).d_r_vanishes(sign, r)


def compute_verdict(g: GridDiagram, sign: str, **kw) -> SpectralVerdict:
    return SpectralEngine(g, signs=(sign,), **kw).verdict(sign)


def compute_both_verdicts(g: GridDiagram, **kw) -> dict[str, SpectralVerdict]:
    eng = SpectralEngine(g, signs=SIGNS, **kw)
    return {s: eng.verdict(s) for s in SIGNS}


# ---------------------------------------------------------------------------
# dense GF(2) page oracle over the full complex (independent route)


def _gf2_rank(mat: np.ndarray) -> int:
    """Rank over F2; mat is (rows x cols) uint8, destroyed."""
    a = mat.copy() % 2
    rows, cols = a.shape
    rank = 0
    for c in range(cols):
        piv = None
        for r in range(rank, rows):
            if a[r, c]:
                piv = r
                break
        if piv is None:
            continue
        a[[rank, piv]] = a[[piv, rank]]
        mask = a[:, c].astype(bool)
        mask[rank] = False
        a[mask] ^= a[rank]
        rank += 1
        if rank == rows:
            break
    return rank


def _gf2_in_span(cols: np.ndarray, z: np.ndarray) -> bool:
    """Is z in the column span of cols (both uint8 mod-2)?"""
    if not z.any():
        return True
    if cols.size == 0:
        return False
    base = _gf2_rank(cols.T)
    aug = np.concatenate([cols, z.reshape(-1, 1)], axis=1)
    return _gf2_rank(aug.T) == base


@dataclass(frozen=True)
class PageOracleResult:
    r: int
    p: int  # alex2 level
    maslov: int
    dim_Zr: int
    dim_Br: int
    class_in_Zr: bool
    class_in_Br: bool


class PageOracle:
    """Brute-force Z^r/B^r computations on a full (unwindowed) complex."""

    def __init__(self, c: FilteredComplex) -> None:
        if not c.is_full():
            raise GridError("the page oracle needs the full complex")
        self.c = c
        n = c.size
        self.D = np.zeros((n, n), dtype=np.uint8)
        for j, col in enumerate(c.columns):
            for t in col or ():
                self.D[t, j] = 1
        self.maslov = np.array([c.basis.key_of(i)[0] for i in range(n)])
        self.alex2 = np.array([c.basis.key_of(i)[1] for i in range(n)])

    def _idx(self, maslov: int | None, alex2_max: int | None) -> np.ndarray:
        sel = np.ones(self.c.size, dtype=bool)
        if maslov is not None:
            sel &= self.maslov == maslov
        if alex2_max is not None:
            sel &= self.alex2 <= alex2_max
        return np.nonzero(sel)[0]

    def _vec(self, chain: Iterable[int]) -> np.ndarray:
        v = np.zeros(self.c.size, dtype=np.uint8)
        for i in chain:
            v[i] ^= 1
        return v

    def zr_dim(self, maslov: int, p2: int, r: int) -> int:
        src = self._idx(maslov, p2)
        if not len(src):
            return 0
        high = np.nonzero(self.alex2 > p2 - 2 * r)[0]
        a = self.D[np.ix_(high, src)]
        # kernel of (proj_{alex2 > p2-2r} . D) on the source space, then
        # project away F_{p-1}: rank of the kernel basis at the p2 block
        basis = _gf2_nullspace(a)
        if basis.shape[0] == 0:
            return 0
        at_p2 = self.alex2[src] == p2
        return _gf2_rank(basis[:, at_p2].copy())

    def br_dim(self, maslov: int, p2: int, r: int) -> int:
        srcs = self._idx(maslov + 1, p2 + 2 * (r - 1))
        if not len(srcs):
            return 0
        tgt = self._idx(maslov, None)
        s = self.D[np.ix_(tgt, srcs)]
        a2 = self.alex2[tgt]
        hi1 = _gf2_rank(s[a2 > p2 - 2, :].copy())
        hi2 = _gf2_rank(s[a2 > p2, :].copy())
        return hi1 - hi2

    def class_in_zr(self, chain: Iterable[int], p2: int, r: int) -> bool:
        v = self._vec(chain)
        maslov_vals = set(self.maslov[np.nonzero(v)[0]])
        if not maslov_vals:
            return True
        (d,) = maslov_vals
        # exists u in F_{p-1} at maslov d with proj_{>p2-2r}(D(v+u)) = 0
        u_idx = self._idx(d, p2 - 2)
        high = np.nonzero(self.alex2 > p2 - 2 * r)[0]
        target = (self.D @ v % 2)[high]
        cols = self.D[np.ix_(high, u_idx)]
        return _gf2_in_span(cols, target)

    def class_in_br(self, chain: Iterable[int], p2: int, r: int) -> bool:
        v = self._vec(chain)
        maslov_vals = set(self.maslov[np.nonzero(v)[0]])
        if not maslov_vals:
            return True
        (d,) = maslov_vals
        w_idx = self._idx(d + 1, p2 + 2 * (r - 1))
        u_idx = self._idx(d, p2 - 2)
        cols = np.concatenate(
            [self.D[:, w_idx], np.eye(self.c.size, dtype=np.uint8)[:, u_idx]], axis=1
        )
        return _gf2_in_span(cols, v)

    def d_r_zero(self, chain: Iterable[int], p2: int, r: int) -> bool:
        """Is d^r of the class of ``chain`` zero on page r?

        Via the boundary: d^r[x]^r = 0 iff Dx lies in D(F_{p-1}) + F_{p-r-1}.
        """
        v = self._vec(chain)
        maslov_vals = set(self.maslov[np.nonzero(v)[0]])
        if not maslov_vals:
            return True
        (d,) = maslov_vals
        dv = self.D @ v % 2
        z_idx = self._idx(d, p2 - 2)
        low_idx = self._idx(None, p2 - 2 * r - 2)
        cols = np.concatenate(
            [self.D[:, z_idx], np.eye(self.c.size, dtype=np.uint8)[:, low_idx]], axis=1
        )
        return _gf2_in_span(cols, dv)

    def query(self, chain: Iterable[int], p2: int, r: int) -> PageOracleResult:
        chain = list(chain)
        v = self._vec(chain)
        nz = np.nonzero(v)[0]
        d = int(self.maslov[nz[0]]) if len(nz) else 0
        return PageOracleResult(
            r=r,
            p=p2,
            maslov=d,
            dim_Zr=self.zr_dim(d, p2, r),
            dim_Br=self.br_dim(d, p2, r),
            class_in_Zr=self.class_in_zr(chain, p2, r),
            class_in_Br=self.class_in_br(chain, p2, r),
        )


def _gf2_nullspace(a: np.ndarray) -> np.ndarray:
    """Rows = basis vectors of the null space of ``a`` (over F2)."""
    a = a.copy() % 2
    rows, cols = a.shape
    pivots: list[int] = []
    r = 0
    for c in range(cols):
        piv = None
        for rr in range(r, rows):
            if a[rr, c]:
                piv = rr
                break
        if piv is None:
            continue
        a[[r, piv]] = a[[piv, r]]
        mask = a[:, c].astype(bool)
        mask[r] = False
        a[mask] ^= a[r]
        pivots.append(c)
        r += 1
        if r == rows:
            break
    free = [c for c in range(cols) if c not in pivots]
    basis = np.zeros((len(free), cols), dtype=np.uint8)
    for i, f in enumerate(free):
        basis[i, f] = 1
        for prow, pcol in reversed(list(enumerate(pivots))):
            s = int(a[prow, f])
            if s:
                basis[i, pcol] ^= 1
    return basis


def page_oracle(c: FilteredComplex, z: Iterable[int], p2: int, r: int) -> PageOracleResult:
    """One-shot oracle query (builds the dense machinery each call)."""
    return PageOracle(c).query(z, p2, r)


def oracle_verdict(c: FilteredComplex, sign: str) -> SpectralVerdict:
    """Verdict computed purely through the dense page oracle."""
    g = c.diagram
    st = canonical_state(g, sign)
    base = bigrading(g, st)
    oracle = PageOracle(c)
    chain = sorted(c.chain_from_states([st]))
    a_min = int(oracle.alex2.min())
    a_max = int(oracle.alex2.max())
    r_lambda = max(1, (a_max - base.alex2) // 2 + 1)
    r_d = max(1, -(-(base.alex2 - a_min) // 2))
    r_sat = max(r_lambda, r_d)
    pages: list[PageRecord] = []
    n: float = INFINITY
    first = None
    r = 1
    while True:
        vanishes = oracle.class_in_br(chain, base.alex2, r)
        if vanishes:
            pages.append(PageRecord(r, True, True, True))
            first = r
            break
        d_ok = oracle.d_r_zero(chain, base.alex2, r)
        pages.append(PageRecord(r, True, False, d_ok))
        if not d_ok:
            n = r
            break
        if r >= r_sat:
            break
        r += 1
    return SpectralVerdict(sign, base, n, pages, first, r_sat)


# ---------------------------------------------------------------------------
# cobordism obstruction (four-bullet test + classical bookkeeping)


@dataclass(frozen=True)
class ObstructionReport:
    obstructed: bool
    bullet: str | None
    details: dict
    classical: dict

    def summary(self) -> str:
        if self.obstructed:
            return f"OBSTRUCTED ({self.bullet})"
        return "NO_OBSTRUCTION"


def _tb_rot_from_verdicts(vp: SpectralVerdict, vm: SpectralVerdict) -> tuple[int, int]:
    mp, mm = vp.base.maslov, vm.base.maslov
    return (mp + mm) // 2 - 1, (mm - mp) // 2


def _lambda_bullet(v_up: SpectralVerdict, v_down: SpectralVerdict) -> int | None:
    """Smallest i <= min(n(up), n(down)) with lambda_i(up)=0 and lambda_i(down)!=0."""
    bound = min(v_up.n, v_down.n)
    scan_to = max(v_up.saturation_page, v_down.saturation_page) + 1
    if bound is not INFINITY:
        scan_to = min(scan_to, int(bound))
    for i in range(1, scan_to + 1):
        if not (v_up.lambda_defined_at(i) and v_down.lambda_defined_at(i)):
            break
        if i > bound:
            break
        if v_up.lambda_vanishes_at(i) and not v_down.lambda_vanishes_at(i):
            return i
    return None


def check_obstruction(
    v_plus_up: SpectralVerdict,
    v_minus_up: SpectralVerdict,
    v_plus_down: SpectralVerdict,
    v_minus_down: SpectralVerdict,
) -> ObstructionReport:
    """Decide the decomposable-cobordism obstruction for Lambda_- -> Lambda_+.

    ``*_up`` verdicts belong to Lambda_+ (the top of the cobordism), ``*_down``
    to Lambda_-.  The fourth hypothesis is evaluated with the minus-invariant
    bound min(n^-); the literal text's min(n^+) reading is reported alongside
    whenever the two disagree.
    """
    details: dict = {}
    bullet = None
    if v_plus_up.n > v_plus_down.n:
        bullet = "n_plus"
        details["n_plus"] = {"plus_top": v_plus_up.n, "plus_bottom": v_plus_down.n}
    if bullet is None:
        i = _lambda_bullet(v_plus_up, v_plus_down)
        if i is not None:
            bullet = "lambda_plus"
            details["lambda_plus_page"] = i
    if bullet is None and v_minus_up.n > v_minus_down.n:
        bullet = "n_minus"
        details["n_minus"] = {"minus_top": v_minus_up.n, "minus_bottom": v_minus_down.n}
    if bullet is None:
        i = _lambda_bullet(v_minus_up, v_minus_down)
        if i is not None:
            bullet = "lambda_minus"
            details["lambda_minus_page"] = i
        # literal reading of the fourth hypothesis bounds i by min(n^+) instead
        bound_alt = min(v_plus_up.n, v_plus_down.n)
        alt = None
        scan_to = max(v_minus_up.saturation_page, v_minus_down.saturation_page) + 1
        if bound_alt is not INFINITY:
            scan_to = min(scan_to, int(bound_alt))
        for j in range(1, scan_to + 1):
            if not (v_minus_up.lambda_defined_at(j) and v_minus_down.lambda_defined_at(j)):
                break
            if v_minus_up.lambda_vanishes_at(j) and not v_minus_down.lambda_vanishes_at(j):
                alt = j
                break
        if (alt is not None) != (i is not None):
            details["fourth_bullet_readings_differ"] = {
                "min_n_minus_reading": i,
                "literal_min_n_plus_reading": alt,
            }
    tb_up, rot_up = _tb_rot_from_verdicts(v_plus_up, v_minus_up)
    tb_down, rot_down = _tb_rot_from_verdicts(v_plus_down, v_minus_down)
    chi = tb_down - tb_up
    classical = {
        "tb_top": tb_up,
        "tb_bottom": tb_down,
        "rot_top": rot_up,
        "rot_bottom": rot_down,
        "rot_compatible": rot_up == rot_down,
        "forced_euler_characteristic": chi,
        "genus_if_knot_to_knot": (-chi) / 2 if chi <= 0 and chi % 2 == 0 else None,
    }
    return ObstructionReport(bullet is not None, bullet, details, classical)
