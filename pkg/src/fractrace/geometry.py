"""Concrete cell geometry for the preset fractals.

Cells are addressed by words; their geometry is the image of the level-0
geometry under the composed letter maps.  Gasket-like presets ("vertex" kind)
carry an initial point set whose images are the graph vertices and decide
cell intersections exactly (same-level cells meet only in such points).
Carpet presets ("carpet" kind) have axis-aligned boxes as cells, decided by
integer box arithmetic.  Exact presets use Fractions throughout; the float
mode compares points with a fixed tolerance.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Sequence

from .words import AlphabetSpec, Word, WordError, neighborhood, reduce

Point = tuple  # pair of Fraction (exact mode) or float (float mode)


class GeometryError(ValueError):
    """Raised for level mismatches, unknown letters, or bad preset data."""


# ---------------------------------------------------------------------------
# similitudes


@dataclass(frozen=True)
class Similitude:
    """Affine contraction x -> scale * linear @ x + translation."""

    scale: object  # Fraction or float, 0 < scale <= 1
    linear: tuple  # 2x2 orthogonal matrix as ((a, b), (c, d))
    translation: tuple

    def __post_init__(self) -> None:
        (a, b), (c, d) = self.linear
        for dot, want in (((a * a + b * b), 1), ((c * c + d * d), 1), ((a * c + b * d), 0)):
            if abs(float(dot) - want) > 1e-12:
                raise GeometryError("linear part of a similitude must be orthogonal")

    def apply(self, p: Point) -> Point:
        (a, b), (c, d) = self.linear
        x, y = p
        return (self.scale * (a * x + b * y) + self.translation[0],
                self.scale * (c * x + d * y) + self.translation[1])

    def compose(self, other: "Similitude") -> "Similitude":
        """self after other is applied last: (self o other)(x) = self(other(x))."""
        (a, b), (c, d) = self.linear
        (e, f), (g, h) = other.linear
        lin = ((a * e + b * g, a * f + b * h), (c * e + d * g, c * f + d * h))
        tx, ty = self.apply(other.translation)
        return Similitude(self.scale * other.scale, lin, (tx, ty))


def identity_map(exact: bool = True) -> Similitude:
    one = Fraction(1) if exact else 1.0
    zero = Fraction(0) if exact else 0.0
    return Similitude(one, ((one, zero), (zero, one)), (zero, zero))


def rotation(angle: float) -> Similitude:
    c, s = math.cos(angle), math.sin(angle)
    return Similitude(1.0, ((c, -s), (s, c)), (0.0, 0.0))


# ---------------------------------------------------------------------------
# presets


@dataclass(frozen=True)
class TraceSpec:
    """How the trace set L sits inside the attractor.

    Interval traces (a straight segment) carry a base-N_I digit map aligning
    I-words with subintervals of the unit parameter; ``point(t)`` maps the
    parameter to ambient coordinates and ``length`` is L's geometric length.
    Curve traces (Pentakun) have no parametrization; operations needing one
    must raise.
    """

    kind: str  # "interval" | "curve"
    digits: dict | None = None  # letter -> 0..N_I-1
    endpoints: tuple | None = None  # (p0, p1) for interval traces

    def param_point(self, t):
        if self.kind != "interval":
            raise GeometryError("trace set has no interval parametrization")
        (x0, y0), (x1, y1) = self.endpoints
        return (x0 + t * (x1 - x0), y0 + t * (y1 - y0))

    @property
    def length(self) -> float:
        (x0, y0), (x1, y1) = self.endpoints
        return math.hypot(float(x1 - x0), float(y1 - y0))


class FractalPreset:
    """An iterated-function system plus the derived combinatorial structure.

    kind "vertex": cells are images of ``base_vertices`` under the letter
    maps; two same-level cells intersect exactly when they share such an
    image point.  kind "carpet": cells are grid boxes; ``grid_cells[i]`` is
    the integer position of letter i at scale 1/l.
    """

    def __init__(self, name: str, alphabet: AlphabetSpec, maps: dict,
                 *, kind: str, alpha, rho=None, base_vertices: tuple = (),
                 grid_l: int = 0, grid_cells: tuple = (), group_maps: tuple = (),
                 trace: TraceSpec | None = None, arithmetic: str = "exact",
                 tol: float = 0.0, ambient_dim: int = 2, n_max: int = 10):
        self.name = name
        self.alphabet = alphabet
        self.maps = dict(maps)
        self.kind = kind
        self.alpha = alpha
        self.rho = rho
        self.base_vertices = tuple(base_vertices)
        self.grid_l = grid_l
        self.grid_cells = tuple(grid_cells)
        self.group_maps = tuple(group_maps)
        self.trace = trace
        self.arithmetic = arithmetic
        self.tol = tol
        self.ambient_dim = ambient_dim
        self.n_max = n_max
        if set(self.maps) != set(alphabet.W):
            raise GeometryError("preset must supply one map per letter of W")
        self._neighbor_cache: dict[Word, frozenset[Word]] = {}
        self._reduce_cache: dict[Word, Word] = {}
        self._vertex_cache: dict[Word, tuple] = {}

    # -- alphabet shortcuts -------------------------------------------------
    @property
    def N(self) -> int:
        return len(self.alphabet.S)

    @property
    def N_I(self) -> int:
        return len(self.alphabet.I)

    def exact(self) -> bool:
        return self.arithmetic == "exact"

    # -- address reduction ---------------------------------------------------
    def canonical(self, w: Word) -> Word:
        """S-word addressing the same cell (cached Phi)."""
        if all(c in self.alphabet.S for c in w):
            return w
        hit = self._reduce_cache.get(w)
        if hit is None:
            hit = reduce(self.alphabet, w).canonical
            self._reduce_cache[w] = hit
        return hit

    # -- geometry ------------------------------------------------------------
    def cell_map(self, w: Word) -> Similitude:
        """Composition of the letter maps along w (identity for the empty word)."""
        if not w:
            return identity_map(self.exact())
        try:
            m = self.maps[w[0]]
            for c in w[1:]:
                m = m.compose(self.maps[c])
        except KeyError as exc:
            raise GeometryError(f"unknown letter {exc.args[0]} in word") from exc
        return m

    def cell_vertices(self, w: Word) -> tuple:
        """Images of the initial point set under the cell map (vertex kind)."""
        if self.kind != "vertex":
            raise GeometryError("cell_vertices applies to vertex-kind presets")
        hit = self._vertex_cache.get(w)
        if hit is None:
            m = self.cell_map(w)
            hit = tuple(m.apply(p) for p in self.base_vertices)
            if len(self._vertex_cache) < 500_000:
                self._vertex_cache[w] = hit
        return hit

    def cell_box(self, w: Word) -> tuple[int, int]:
        """Integer lower-left corner of the cell box, in units of l^-|w| (carpet kind)."""
        if self.kind != "carpet":
            raise GeometryError("cell_box applies to carpet presets")
        x = y = 0
        for c in w:
            gx, gy = self.grid_cells[c]
            x = x * self.grid_l + gx
            y = y * self.grid_l + gy
        return (x, y)

    def cell_hull(self, w: Word) -> tuple:
        """Convex hull vertices of the cell, for distance bounds."""
        if self.kind == "carpet":
            x, y = self.cell_box(w)
            s = Fraction(1, self.grid_l ** len(w)) if self.exact() else self.grid_l ** (-len(w))
            x0, y0 = x * s, y * s
            return ((x0, y0), (x0 + s, y0), (x0 + s, y0 + s), (x0, y0 + s))
        return self.cell_vertices(self.canonical(w))

    def diam(self) -> float:
        pts = [tuple(map(float, p)) for p in self.cell_hull(b"")]
        return max(math.dist(p, q) for p in pts for q in pts)

    # -- adjacency -----------------------------------------------------------
    def _points_meet(self, ps: tuple, qs: tuple) -> bool:
        if self.tol == 0.0:
            return bool(set(ps) & set(qs))
        t2 = self.tol * self.tol
        for (x1, y1) in ps:
            for (x2, y2) in qs:
                if (x1 - x2) ** 2 + (y1 - y2) ** 2 <= t2:
                    return True
        return False

    def cells_adjacent(self, v: Word, w: Word) -> bool:
        """Whether the two same-level cells intersect (reflexive, symmetric)."""
        if len(v) != len(w):
            raise GeometryError(f"level mismatch: |v|={len(v)} |w|={len(w)}")
        if v == w:
            return True
        cv, cw = self.canonical(v), self.canonical(w)
        if cv == cw:
            return True
        if self.kind == "carpet":
            (x1, y1), (x2, y2) = self.cell_box(cv), self.cell_box(cw)
            return abs(x1 - x2) <= 1 and abs(y1 - y2) <= 1
        return self._points_meet(self.cell_vertices(cv), self.cell_vertices(cw))

    def neighbors(self, w: Word) -> frozenset[Word]:
        """All same-level W-words whose cells meet w's cell, including w.

        Computed hierarchically: a neighbor's parent must neighbor the parent,
        so candidates are children of the parent's neighbors.  Results are
        memoized per preset.
        """
        hit = self._neighbor_cache.get(w)
        if hit is not None:
            return hit
        W = self.alphabet.W
        if len(w) == 0:
            out = frozenset({b""})
        elif len(w) == 1:
            out = frozenset(bytes([c]) for c in W if self.cells_adjacent(bytes([c]), w))
        else:
            parent = w[:-1]
            cands = (p + bytes([c]) for p in self.neighbors(parent) for c in W)
            out = frozenset(v for v in cands if self.cells_adjacent(v, w))
        self._neighbor_cache[w] = out
        return out

    def neighborhood(self, A: Iterable[Word], k: int) -> frozenset[Word]:
        return neighborhood(A, k, self.neighbors)

    def trace_adjacent(self, v: Word, w: Word) -> bool:
        """M-fold cell-neighborhood relation restricted to I-words."""
        if len(v) != len(w):
            raise GeometryError(f"level mismatch: |v|={len(v)} |w|={len(w)}")
        self.alphabet.check_word(v, self.alphabet.I)
        self.alphabet.check_word(w, self.alphabet.I)
        if v == w:
            return True
        M = self.alphabet.M
        if self.trace is not None and self.trace.kind == "interval" and M == 1:
            return abs(self.trace_index(v) - self.trace_index(w)) <= 1
        return v in self.neighborhood([w], M)

    # -- trace parametrization -------------------------------------------------
    def trace_index(self, w: Word) -> int:
        """Base-N_I integer position of an I-word's subinterval."""
        if self.trace is None or self.trace.kind != "interval":
            raise GeometryError("preset trace is not an interval")
        k = 0
        for c in w:
            k = k * self.N_I + self.trace.digits[c]
        return k

    def trace_word(self, n: int, k: int) -> Word:
        inv = {d: c for c, d in self.trace.digits.items()}
        out = bytearray()
        for _ in range(n):
            out.append(inv[k % self.N_I])
            k //= self.N_I
        return bytes(reversed(out))

    # -- measures ----------------------------------------------------------------
    def cell_measure(self, w: Word, on: str = "K") -> Fraction:
        """Self-similar measure of a cell: N^-|w| on K (S-words), N_I^-|w| on L."""
        if on == "K":
            self.alphabet.check_word(w, self.alphabet.S)
            return Fraction(1, self.N ** len(w))
        if on == "L":
            self.alphabet.check_word(w, self.alphabet.I)
            return Fraction(1, self.N_I ** len(w))
        raise GeometryError("measure base must be 'K' or 'L'")


# ---------------------------------------------------------------------------
# cross-level cell-set tests (used by the Whitney construction)


def refine_to_level(preset: FractalPreset, A: Iterable[Word], m: int) -> frozenset[Word]:
    """Descend a word set to S-words at level m >= the set's level."""
    out = set()
    S = preset.alphabet.S
    for w in A:
        w = preset.canonical(w)
        if len(w) > m:
            raise GeometryError("cannot refine a deeper word to a shallower level")
        frontier = [w]
        for _ in range(m - len(w)):
            frontier = [u + bytes([s]) for u in frontier for s in S]
        out.update(frontier)
    return frozenset(out)


def cellsets_intersect(preset: FractalPreset, A: Iterable[Word], B: Iterable[Word]) -> bool:
    """Whether the unions of cells over A and over B share a point (any levels)."""
    A, B = list(A), list(B)
    if not A or not B:
        return False
    la = max(len(w) for w in A)
    lb = max(len(w) for w in B)
    m = max(la, lb)
    Am = refine_to_level(preset, A, m)
    Bm = refine_to_level(preset, B, m)
    if len(Am) > len(Bm):
        Am, Bm = Bm, Am
    near = set()
    for b in Bm:
        near.update(preset.neighbors(b))
    return bool(Am & near)


def _segment_distance(a, b, c, d) -> float:
    """Distance between segments ab and cd (0 if they cross)."""
    def orient(p, q, r):
        return (q[0] - p[0]) * (r[1] - p[1]) - (q[1] - p[1]) * (r[0] - p[0])

    o1, o2 = orient(a, b, c), orient(a, b, d)
    o3, o4 = orient(c, d, a), orient(c, d, b)
    if o1 * o2 < 0 and o3 * o4 < 0:
        return 0.0

    def point_seg(p, u, v):
        ux, uy = u; vx, vy = v
        dx, dy = vx - ux, vy - uy
        L2 = dx * dx + dy * dy
        t = 0.0 if L2 == 0 else max(0.0, min(1.0, ((p[0] - ux) * dx + (p[1] - uy) * dy) / L2))
        return math.dist(p, (ux + t * dx, uy + t * dy))

    return min(point_seg(a, c, d), point_seg(b, c, d),
               point_seg(c, a, b), point_seg(d, a, b))


def hull_distance(ph: Sequence, qh: Sequence) -> float:
    """Distance between two convex polygons given by vertex lists (0 if overlapping)."""
    P = [tuple(map(float, p)) for p in ph]
    Q = [tuple(map(float, q)) for q in qh]

    def inside(p, poly):
        if len(poly) < 3:
            return False
        sign = 0
        n = len(poly)
        for i in range(n):
            a, b = poly[i], poly[(i + 1) % n]
            cr = (b[0] - a[0]) * (p[1] - a[1]) - (b[1] - a[1]) * (p[0] - a[0])
            if cr != 0:
                s = 1 if cr > 0 else -1
                if sign == 0:
                    sign = s
                elif s != sign:
                    return False
        return True

    if any(inside(q, P) for q in Q) or any(inside(p, Q) for p in P):
        return 0.0
    best = math.inf
    np_, nq = len(P), len(Q)
    for i in range(np_):
        a, b = P[i], P[(i + 1) % np_]
        for j in range(nq):
            best = min(best, _segment_distance(a, b, Q[j], Q[(j + 1) % nq]))
            if best == 0.0:
                return 0.0
    return best


def cellset_distance_bounds(preset: FractalPreset, A: Iterable[Word], B: Iterable[Word]):
    """(lower, upper) bounds on the distance between the cell unions of A and B.

    Hull-to-hull distances lower-bound the true distance; the minimum over
    hull-vertex pairs (points of the sets themselves) upper-bounds it.
    """
    lo = math.inf
    up = math.inf
    hulls_a = [preset.cell_hull(w) for w in A]
    hulls_b = [preset.cell_hull(w) for w in B]
    for ha in hulls_a:
        for hb in hulls_b:
            lo = min(lo, hull_distance(ha, hb))
            for p in ha:
                for q in hb:
                    up = min(up, math.dist(tuple(map(float, p)), tuple(map(float, q))))
    return lo, up


# ---------------------------------------------------------------------------
# carpet admissibility (SC1)-(SC4)


@dataclass(frozen=True)
class CarpetReport:
    symmetry: bool
    connected: bool
    non_diagonal: bool
    borders_included: bool
    failures: tuple[str, ...]

    @property
    def ok(self) -> bool:
        return not self.failures


def verify_carpet_conditions(l: int, pattern: Iterable[tuple[int, int]]) -> CarpetReport:
    """Check the four generalized-carpet conditions on a subset of the l x l grid.

    Symmetry under the square's isometries, connectivity of the closed cell
    union, non-diagonality on every 2x2 block, and inclusion of the bottom row.
    """
    cells = frozenset(pattern)
    if not cells:
        raise GeometryError("carpet pattern must be nonempty")
    if any(not (0 <= x < l and 0 <= y < l) for x, y in cells):
        raise GeometryError("carpet pattern cell outside the grid")
    failures = []

    m = l - 1
    isoms = [lambda x, y: (x, y), lambda x, y: (m - x, y), lambda x, y: (x, m - y),
             lambda x, y: (m - x, m - y), lambda x, y: (y, x), lambda x, y: (m - y, x),
             lambda x, y: (y, m - x), lambda x, y: (m - y, m - x)]
    symmetry = all(frozenset(f(x, y) for x, y in cells) == cells for f in isoms)
    if not symmetry:
        failures.append("SC1 symmetry")

    # closed boxes meet iff grid coordinates differ by <= 1 in each axis
    seen = set()
    stack = [next(iter(sorted(cells)))]
    while stack:
        c = stack.pop()
        if c in seen:
            continue
        seen.add(c)
        x, y = c
        for dx in (-1, 0, 1):
            for dy in (-1, 0, 1):
                nb = (x + dx, y + dy)
                if nb in cells and nb not in seen:
                    stack.append(nb)
    connected = len(seen) == len(cells)
    if not connected:
        failures.append("SC2 connectivity")

    non_diag = True
    for bx in range(l - 1):
        for by in range(l - 1):
            block = [(bx + dx, by + dy) for dx in (0, 1) for dy in (0, 1)]
            present = [c for c in block if c in cells]
            if not present:
                continue
            # interior of the union is connected iff present cells form an
            # edge-connected subgraph of the 2x2 block
            comp = {present[0]}
            changed = True
            while changed:
                changed = False
                for c in present:
                    if c in comp:
                        continue
                    if any(abs(c[0] - d[0]) + abs(c[1] - d[1]) == 1 for d in comp):
                        comp.add(c)
                        changed = True
            if len(comp) != len(present):
                non_diag = False
    if not non_diag:
        failures.append("SC3 non-diagonality")

    borders = all((x, 0) in cells for x in range(l))
    if not borders:
        failures.append("SC4 borders included")

    return CarpetReport(symmetry, connected, non_diag, borders, tuple(failures))
