"""Grid diagrams, grid states, gradings, and Cromwell moves.

Conventions (frozen for the whole package):
  * columns increase rightward, rows increase upward, row 0 at the bottom;
  * a state places one point per vertical circle at integer coordinates,
    ``st[c] = r`` meaning the point ``(c, r)``;
  * markers live at half-integer coordinates: the X of column ``c`` sits at
    ``(c + 1/2, xs[c] + 1/2)`` and likewise for O;
  * Alexander values are stored doubled (``alex2``) so that links with
    half-integer Alexander gradings stay in exact integer arithmetic.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from functools import cached_property
from typing import Iterable, Iterator, NamedTuple, Sequence

State = tuple[int, ...]

PACK_MAX = 16  # 4 bits per entry in the packed state key


class GridError(ValueError):
    """Base class for grid-level failures."""


class ParseError(GridError):
    pass


class IneligibleCommutation(GridError):
    pass


class PatternNotFound(GridError):
    pass


class Bigrading(NamedTuple):
    maslov: int
    alex2: int  # twice the Alexander value


@dataclass(frozen=True)
class GridDiagram:
    """Size-m grid given by the two marker permutations.

    ``xs[c]`` (resp. ``os[c]``) is the row of the X (resp. O) in column c.
    """

    m: int
    xs: State
    os: State

    def __post_init__(self) -> None:
        m = self.m
        if m < 2:
            raise GridError(f"grid size must be at least 2, got {m}")
        for name, perm in (("X", self.xs), ("O", self.os)):
            if len(perm) != m or sorted(perm) != list(range(m)):
                raise GridError(f"{name} row list is not a permutation of 0..{m - 1}")
        for c in range(m):
            if self.xs[c] == self.os[c]:
                raise GridError(f"marker collision at column {c}")

    @cached_property
    def xs_inv(self) -> State:
        return invert(self.xs)

    @cached_property
    def os_inv(self) -> State:
        return invert(self.os)

    @cached_property
    def components(self) -> int:
        return num_components(self)

    def x_markers(self) -> list[tuple[int, int]]:
        """Doubled coordinates of the X markers."""
        return [(2 * c + 1, 2 * r + 1) for c, r in enumerate(self.xs)]

    def o_markers(self) -> list[tuple[int, int]]:
        return [(2 * c + 1, 2 * r + 1) for c, r in enumerate(self.os)]


def invert(perm: Sequence[int]) -> State:
    inv = [0] * len(perm)
    for i, v in enumerate(perm):
        inv[v] = i
    return tuple(inv)


# ---------------------------------------------------------------------------
# parsing / serialization


def parse_grid(text: str) -> GridDiagram:
    """Parse the external grid format.

    Lines ``m: <int>``, ``X: <m ints>``, ``O: <m ints>``; ``#`` starts a
    comment; zero-indexed, row 0 at the bottom.
    """
    m: int | None = None
    xs: list[int] | None = None
    os_: list[int] | None = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, rest = line.partition(":")
        if not sep:
            raise ParseError(f"line {lineno}: expected 'key: values'")
        key = key.strip().lower()
        try:
            values = [int(tok) for tok in rest.split()]
        except ValueError as exc:
            raise ParseError(f"line {lineno}: {exc}") from None
        if key == "m":
            if len(values) != 1:
                raise ParseError(f"line {lineno}: m takes a single integer")
            m = values[0]
        elif key == "x":
            xs = values
        elif key == "o":
            os_ = values
        else:
            raise ParseError(f"line {lineno}: unknown key {key!r}")
    if m is None:
        raise ParseError("missing 'm:' line")
    if xs is None:
        raise ParseError("missing 'X:' line")
    if os_ is None:
        raise ParseError("missing 'O:' line")
    if len(xs) != m:
        raise ParseError(f"X: expected {m} entries, got {len(xs)}")
    if len(os_) != m:
        raise ParseError(f"O: expected {m} entries, got {len(os_)}")
    try:
        return GridDiagram(m, tuple(xs), tuple(os_))
    except GridError as exc:
        raise ParseError(str(exc)) from None


def serialize_grid(g: GridDiagram) -> str:
    return (
        f"m: {g.m}\n"
        f"X: {' '.join(map(str, g.xs))}\n"
        f"O: {' '.join(map(str, g.os))}\n"
    )


# ---------------------------------------------------------------------------
# components, domination counts, gradings


def num_components(g: GridDiagram) -> int:
    """Number of link components: cycles of the column map X -> O -> X."""
    seen = [False] * g.m
    count = 0
    for start in range(g.m):
        if seen[start]:
            continue
        count += 1
        c = start
        while not seen[c]:
            seen[c] = True
            c = g.xs_inv[g.os[c]]
    return count


def count_I(P: Iterable[tuple[float, float]], Q: Iterable[tuple[float, float]]) -> int:
    """#{(p, q) in P x Q : p < q} in the strict product order."""
    P = list(P)
    Q = list(Q)
    return sum(1 for p in P for q in Q if p[0] < q[0] and p[1] < q[1])


def _state_points2(st: Sequence[int]) -> list[tuple[int, int]]:
    return [(2 * c, 2 * r) for c, r in enumerate(st)]


def maslov_pair(g: GridDiagram, st: Sequence[int]) -> tuple[int, int]:
    """(M_O, M_X) for a state, both exact integers."""
    pts = _state_points2(st)
    xm = g.x_markers()
    om = g.o_markers()
    ixx = count_I(pts, pts)
    m_o = ixx - (count_I(pts, om) + count_I(om, pts)) + count_I(om, om) + 1
    m_x = ixx - (count_I(pts, xm) + count_I(xm, pts)) + count_I(xm, xm) + 1
    return m_o, m_x


def bigrading(g: GridDiagram, st: Sequence[int]) -> Bigrading:
    m_o, m_x = maslov_pair(g, st)
    return Bigrading(m_o, m_o - m_x - (g.m - g.components))


def x_minus(g: GridDiagram) -> State:
    """State directly southwest of the X markers."""
    return tuple(g.xs)


def x_plus(g: GridDiagram) -> State:
    """State directly northeast of the X markers (on the torus)."""
    m = g.m
    st = [0] * m
    for c in range(m):
        st[(c + 1) % m] = (g.xs[c] + 1) % m
    return tuple(st)


def tb_rot(g: GridDiagram) -> tuple[int, int]:
    mp = bigrading(g, x_plus(g)).maslov
    mm = bigrading(g, x_minus(g)).maslov
    if (mp + mm) % 2 or (mm - mp) % 2:
        raise GridError("parity failure in canonical Maslov gradings")
    return (mp + mm) // 2 - 1, (mm - mp) // 2


# ---------------------------------------------------------------------------
# rectangles


@dataclass(frozen=True)
class Rectangle:
    """Embedded rectangle on the torus from ``src`` to ``dst``.

    Spans columns ``[c1, c1+width]`` and rows ``[r1, r1+height]`` cyclically;
    src holds the SW and NE corners, dst the other two.
    """

    src: State
    dst: State
    c1: int
    r1: int
    width: int
    height: int
    n_x: int
    n_o: int
    interior_hits: int

    @property
    def empty(self) -> bool:
        return self.interior_hits == 0


def _cyc(a: int, m: int) -> int:
    return a % m


def _in_open(v: int, start: int, width: int, m: int) -> bool:
    """Is v strictly inside the cyclic interval (start, start+width)?"""
    return 0 < (v - start) % m < width


def _make_rect(g: GridDiagram, src: Sequence[int], cs: int, ct: int) -> Rectangle:
    """Rectangle with SW corner at (cs, src[cs]) and NE at (ct, src[ct])."""
    m = g.m
    width = (ct - cs) % m
    r1 = src[cs]
    height = (src[ct] - r1) % m
    n_x = n_o = 0
    for c in range(m):
        if not _in_open(2 * c + 1, 2 * cs, 2 * width, 2 * m):
            continue
        if _in_open(2 * g.xs[c] + 1, 2 * r1, 2 * height, 2 * m):
            n_x += 1
        if _in_open(2 * g.os[c] + 1, 2 * r1, 2 * height, 2 * m):
            n_o += 1
    hits = 0
    for c in range(m):
        if c in (cs, ct):
            continue
        if _in_open(c, cs, width, m) and _in_open(src[c], r1, height, m):
            hits += 1
    dst = list(src)
    dst[cs], dst[ct] = src[ct], src[cs]
    return Rectangle(tuple(src), tuple(dst), cs, r1, width, height, n_x, n_o, hits)


def rectangles(g: GridDiagram, x: Sequence[int], y: Sequence[int]) -> list[Rectangle]:
    """Rect(x, y): empty unless x, y differ at exactly two columns."""
    diff = [c for c in range(g.m) if x[c] != y[c]]
    if len(diff) != 2:
        return []
    c1, c2 = diff
    if x[c1] != y[c2] or x[c2] != y[c1]:
        return []
    return [_make_rect(g, x, c1, c2), _make_rect(g, x, c2, c1)]


def rectangles_from(g: GridDiagram, x: Sequence[int]) -> Iterator[Rectangle]:
    """All rectangles with initial state x."""
    for cs, ct in itertools.permutations(range(g.m), 2):
        yield _make_rect(g, x, cs, ct)


# ---------------------------------------------------------------------------
# Cromwell moves


def _line_interval(g: GridDiagram, index: int, axis: str) -> tuple[int, int]:
    if axis == "row":
        a, b = g.xs_inv[index], g.os_inv[index]
    else:
        a, b = g.xs[index], g.os[index]
    return (a, b) if a <= b else (b, a)


def commutation_eligible(g: GridDiagram, index: int, axis: str) -> bool:
    """Cromwell condition: the closed marker intervals of the two lines are
    disjoint, strictly nested, or identical.

    A single shared endpoint (two markers stacked in one transverse line)
    makes the exchange change tb/rot, so such pairs are ineligible; the
    identical-interval case is a genuine commutation.
    """
    if axis not in ("row", "column"):
        raise GridError(f"axis must be 'row' or 'column', got {axis!r}")
    a1, a2 = _line_interval(g, index, axis)
    b1, b2 = _line_interval(g, (index + 1) % g.m, axis)
    if (a1, a2) == (b1, b2):
        return True
    disjoint = a2 < b1 or b2 < a1
    nested = (a1 < b1 and b2 < a2) or (b1 < a1 and a2 < b2)
    return disjoint or nested


def commute(g: GridDiagram, index: int, axis: str) -> GridDiagram:
    """Exchange adjacent lines ``index`` and ``index+1`` (cyclically)."""
    if not commutation_eligible(g, index, axis):
        raise IneligibleCommutation(
            f"{axis}s {index},{(index + 1) % g.m} have interleaved marker intervals"
        )
    i, j = index % g.m, (index + 1) % g.m
    if axis == "row":
        swap = {i: j, j: i}
        xs = tuple(swap.get(r, r) for r in g.xs)
        os_ = tuple(swap.get(r, r) for r in g.os)
    else:
        xs = list(g.xs)
        os_ = list(g.os)
        xs[i], xs[j] = xs[j], xs[i]
        os_[i], os_[j] = os_[j], os_[i]
        xs, os_ = tuple(xs), tuple(os_)
    return GridDiagram(g.m, xs, os_)


def translate(g: GridDiagram, dc: int, dr: int) -> GridDiagram:
    """Cyclic translation of the whole diagram (a torus symmetry)."""
    m = g.m
    xs = [0] * m
    os_ = [0] * m
    for c in range(m):
        xs[(c + dc) % m] = (g.xs[c] + dr) % m
        os_[(c + dc) % m] = (g.os[c] + dr) % m
    return GridDiagram(m, tuple(xs), tuple(os_))


def transpose(g: GridDiagram) -> GridDiagram:
    """Reflection across the main diagonal; exchanges rows and columns."""
    return GridDiagram(g.m, invert(g.xs), invert(g.os))


STAB_KINDS = ("X:SE", "X:NW")


def stabilize(g: GridDiagram, column: int, kind: str) -> GridDiagram:
    """Stabilize at the X in ``column``.

    The X's square becomes a 2x2 block with X's on the SW/NE diagonal and
    one O; ``kind`` names the empty cell (X:SE or X:NW).  Columns right of
    ``column`` shift by one, as do rows above the X's row.
    """
    if kind not in STAB_KINDS:
        raise GridError(f"unknown stabilization kind {kind!r}")
    m, c = g.m, column % g.m
    r = g.xs[c]

    def col(e: int) -> int:
        return e if e < c else e + 1

    def row(t: int) -> int:
        # old row r is consumed by the block; its O is placed explicitly
        return t if t < r else t + 1

    xs = [-1] * (m + 1)
    os_ = [-1] * (m + 1)
    for e in range(m):
        if e == c:
            continue
        xs[col(e)] = row(g.xs[e])
        if g.os[e] != r:
            os_[col(e)] = row(g.os[e])
    xs[c] = r
    xs[c + 1] = r + 1
    s = row(g.os[c])  # the O sharing the stabilized column (os[c] != r)
    d = col(g.os_inv[r])  # new column of the O sharing the X's old row
    if kind == "X:SE":
        os_[c] = r + 1
        os_[c + 1] = s
        os_[d] = r
    else:  # X:NW
        os_[c + 1] = r
        os_[c] = s
        os_[d] = r + 1
    return GridDiagram(m + 1, tuple(xs), tuple(os_))


def destabilize(g: GridDiagram, column: int, kind: str) -> GridDiagram:
    """Collapse the 2x2 block whose left column is ``column``; inverse of
    :func:`stabilize` (the block must not wrap around the torus edges)."""
    if kind not in STAB_KINDS:
        raise GridError(f"unknown stabilization kind {kind!r}")
    m, c = g.m, column % g.m
    if c + 1 >= m:
        raise PatternNotFound(f"no block with left column {c}")
    r = g.xs[c]
    ok = r + 1 < m and g.xs[c + 1] == r + 1 and (
        (kind == "X:SE" and g.os[c] == r + 1) or (kind == "X:NW" and g.os[c + 1] == r)
    )
    if not ok:
        raise PatternNotFound(f"no {kind} destabilization pattern at column {c}")

    def uncol(e: int) -> int:
        return e if e < c else e - 1

    def unrow(t: int) -> int:
        if t < r:
            return t
        return r if t <= r + 1 else t - 1

    xs = [-1] * (m - 1)
    os_ = [-1] * (m - 1)
    for e in range(m):
        if e in (c, c + 1):
            continue
        xs[uncol(e)] = unrow(g.xs[e])
        os_[uncol(e)] = unrow(g.os[e])
    xs[c] = r
    os_[c] = unrow(g.os[c + 1] if kind == "X:SE" else g.os[c])
    return GridDiagram(m - 1, tuple(xs), tuple(os_))


def reverse_orientation(g: GridDiagram) -> GridDiagram:
    """Swap X and O markers; reverses the orientation of the link."""
    return GridDiagram(g.m, g.os, g.xs)


# ---------------------------------------------------------------------------
# state packing


def pack_state(st: Sequence[int]) -> int:
    """64-bit key, 4 bits per entry; only valid for m <= 16."""
    key = 0
    for c, r in enumerate(st):
        key |= r << (4 * c)
    return key


def unpack_state(key: int, m: int) -> State:
    return tuple((key >> (4 * c)) & 0xF for c in range(m))


def all_states(m: int) -> Iterator[State]:
    return itertools.permutations(range(m))
