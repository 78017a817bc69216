"""Whitney-type cover of the attractor minus its trace set, the graph
partition of unity, the extension operator, and the restriction diagnostics
(per-level trace terms and the near-trace energy decay).

The cover indexes trace words w by depth: each carries children-level index
sets A_w inside B_w whose cells sit at distance comparable to alpha^-|w| from
the trace set; bump functions are graph-harmonic 0/1 interpolations on those
sets and are normalized into a partition of unity wherever some bump is
positive.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .besov import CellAverageVector, TraceData, graph_trace
from .energy import (ConstraintSet, EnergyForm, LevelGraph, build_level_graph,
                     form_for, harmonic_extension)
from .geometry import (FractalPreset, GeometryError, cellset_distance_bounds,
                       cellsets_intersect)
from .words import Word


def _letter_words(letters) -> list[Word]:
    return [bytes([c]) for c in letters]


def _all_trace_words(preset: FractalPreset, m: int) -> list[Word]:
    return [bytes(t) for t in itertools.product(preset.alphabet.I, repeat=m)]


def _children(preset: FractalPreset, words) -> frozenset[Word]:
    W = preset.alphabet.W
    return frozenset(w + bytes([c]) for w in words for c in W)


@dataclass
class WhitneyCover:
    """Index sets of the Whitney-type decomposition at depth n.

    ``A_sets``/``B_sets`` hold the plain children-level sets, ``A_hat``/
    ``B_hat`` the hatted variants used at the terminal depth; ``A_eff`` and
    ``B_eff`` select between them.  ``overlap_index[w]`` lists the cover words
    whose effective B-cells meet w's.  ``separation_l`` is the measured
    minimal depth gap after which B-sets cannot meet hatted B-sets, and
    ``distance_bounds[w]`` sandwiches dist(L, K_{B_w}) * alpha^|w|.
    """

    preset: FractalPreset
    n: int
    omega: list  # trace words, levels 0..n
    A_sets: dict
    B_sets: dict
    A_hat: dict
    B_hat: dict
    A_eff: dict
    B_eff: dict
    overlap_index: dict
    separation_l: int
    distance_bounds: dict

    @property
    def eval_level(self) -> int:
        return self.n + 1


def build_whitney(preset: FractalPreset, n: int) -> WhitneyCover:
    """Construct the cover at depth n (cells live at levels up to n + 1)."""
    if n < 1:
        raise GeometryError("Whitney cover needs depth n >= 1")
    if n + 1 > preset.n_max:
        raise GeometryError(f"depth {n} exceeds the level cap n_max={preset.n_max}")
    I_words = _letter_words(preset.alphabet.I)
    W_words = _letter_words(preset.alphabet.W)
    omega: list[Word] = [b""]
    for m in range(1, n + 1):
        omega.extend(_all_trace_words(preset, m))

    near1 = preset.neighborhood(I_words, 1)
    near2 = preset.neighborhood(I_words, 2)
    A_sets = {b"": frozenset(W_words) - near2}
    B_sets = {b"": frozenset(W_words) - near1}
    A_hat = {b"": frozenset(W_words)}
    B_hat = {b"": frozenset(W_words)}

    trace_near: dict[int, tuple] = {}
    for m in range(1, n + 2):
        tw = _all_trace_words(preset, m)
        trace_near[m] = (preset.neighborhood(tw, 1), preset.neighborhood(tw, 2))

    for w in omega[1:]:
        m = len(w)
        n2w = preset.neighborhood([w], 2)
        n3w = preset.neighborhood([w], 3)
        hat_a = _children(preset, n2w)
        hat_b = _children(preset, n3w)
        near1c, near2c = trace_near[m + 1]
        A_sets[w] = hat_a - near2c
        B_sets[w] = hat_b - near1c
        A_hat[w] = hat_a
        B_hat[w] = hat_b

    A_eff = {w: (A_hat[w] if len(w) == n else A_sets[w]) for w in omega}
    B_eff = {w: (B_hat[w] if len(w) == n else B_sets[w]) for w in omega}

    # overlap index sets over the effective B-cells, with bounding-box prefilter
    boxes = {}
    for w in omega:
        cells = B_eff[w]
        if not cells:
            boxes[w] = None
            continue
        xs, ys = [], []
        for u in cells:
            for p in preset.cell_hull(u):
                xs.append(float(p[0]))
                ys.append(float(p[1]))
        boxes[w] = (min(xs), min(ys), max(xs), max(ys))

    def boxes_meet(b1, b2) -> bool:
        if b1 is None or b2 is None:
            return False
        eps = preset.tol
        return not (b1[2] < b2[0] - eps or b2[2] < b1[0] - eps or
                    b1[3] < b2[1] - eps or b2[3] < b1[1] - eps)

    overlap: dict[Word, set] = {w: set() for w in omega}
    for i, w in enumerate(omega):
        for v in omega[i:]:
            if not boxes_meet(boxes[w], boxes[v]):
                continue
            if cellsets_intersect(preset, B_eff[w], B_eff[v]):
                overlap[w].add(v)
                overlap[v].add(w)
    overlap_index = {w: frozenset(s) for w, s in overlap.items()}

    # Measured separation depth: smallest l such that a plain B-set never
    # meets a hatted B-set l or more levels deeper.
    sep = 1
    for w in omega:
        if not B_sets.get(w):
            continue
        for v in omega:
            if len(v) - len(w) >= sep and B_hat.get(v) and \
                    cellsets_intersect(preset, B_sets[w], B_hat[v]):
                sep = len(v) - len(w) + 1
    separation_l = sep

    # distance of each nonempty plain B-set from the trace set, rescaled
    trace_seg = None
    if preset.trace is not None and preset.trace.kind == "interval":
        trace_seg = tuple(preset.trace.endpoints)
    distance_bounds = {}
    for w in omega:
        cells = B_sets.get(w)
        if not cells:
            continue
        if trace_seg is not None:
            lo, up = cellset_distance_bounds(preset, cells, [])
            lo, up = _segment_set_bounds(preset, cells, trace_seg)
        else:
            tcells = _all_trace_words(preset, len(w) + 1)
            lo, up = cellset_distance_bounds(preset, cells, tcells)
        scale = float(preset.alpha) ** len(w)
        distance_bounds[w] = (lo * scale, up * scale)

    return WhitneyCover(preset, n, omega, A_sets, B_sets, A_hat, B_hat,
                        A_eff, B_eff, overlap_index, separation_l, distance_bounds)


def _segment_set_bounds(preset: FractalPreset, cells, seg) -> tuple[float, float]:
    """(lower, upper) bounds for dist(segment, union of cells)."""
    from .geometry import hull_distance
    p0 = tuple(map(float, seg[0]))
    p1 = tuple(map(float, seg[1]))
    lo = math.inf
    up = math.inf
    for w in cells:
        hull = preset.cell_hull(w)
        lo = min(lo, hull_distance([p0, p1], hull))
        for q in hull:
            qf = tuple(map(float, q))
            up = min(up, _point_segment(qf, p0, p1))
    return lo, up


def _point_segment(p, a, b) -> float:
    dx, dy = b[0] - a[0], b[1] - a[1]
    L2 = dx * dx + dy * dy
    t = 0.0 if L2 == 0 else max(0.0, min(1.0, ((p[0] - a[0]) * dx + (p[1] - a[1]) * dy) / L2))
    return math.dist(p, (a[0] + t * dx, a[1] + t * dy))


# ---------------------------------------------------------------------------
# graph realization: vertex membership, bumps, partition of unity


def _vertex_cells(graph: LevelGraph) -> list[list[int]]:
    """For each vertex, the indices of the level cells it belongs to."""
    if graph.preset.kind == "carpet":
        return [[i] for i in range(graph.n_vertices)]
    out: list[list[int]] = [[] for _ in range(graph.n_vertices)]
    for ci, w in enumerate(graph.cells):
        for vid in graph.cell_vertices[w]:
            out[vid].append(ci)
    return out


def _vertices_in_cellset(graph: LevelGraph, vertex_cells, words) -> np.ndarray:
    """Boolean mask of graph vertices lying in the union of the given cells."""
    p = graph.preset
    if not words:
        return np.zeros(graph.n_vertices, dtype=bool)
    m = len(next(iter(words)))
    canon = {p.canonical(w) for w in words}
    cell_hit = np.fromiter((graph.cells[i][:m] in canon for i in range(len(graph.cells))),
                           bool, len(graph.cells))
    mask = np.zeros(graph.n_vertices, dtype=bool)
    for vid, cs in enumerate(vertex_cells):
        if any(cell_hit[c] for c in cs):
            mask[vid] = True
    return mask


@dataclass
class PartitionWeights:
    """Normalized bump weights on the evaluation graph.

    ``psi[w]`` is the weight array of cover word w; weights at a vertex sum
    to one whenever any bump is positive there (``covered`` mask).
    """

    cover: WhitneyCover
    graph: LevelGraph
    phi: dict
    psi: dict
    covered: np.ndarray
    support_masks: dict = field(repr=False, default_factory=dict)


def bump_functions(cover: WhitneyCover, preset: FractalPreset | None = None) -> PartitionWeights:
    """Graph-harmonic bumps: 1 on the A-cells, 0 off the B-cells, normalized.

    Each bump is an energy-minimizing interpolation, so its values stay in
    [0, 1] by the maximum principle.  Empty A-sets give the zero bump.
    """
    preset = preset or cover.preset
    graph = build_level_graph(preset, cover.eval_level)
    vertex_cells = _vertex_cells(graph)
    form = form_for(preset, cover.eval_level, rho=preset.rho or 1.0)
    phi: dict[Word, np.ndarray] = {}
    support: dict[Word, np.ndarray] = {}
    for w in cover.omega:
        a_mask = _vertices_in_cellset(graph, vertex_cells, cover.A_eff[w])
        b_mask = _vertices_in_cellset(graph, vertex_cells, cover.B_eff[w])
        support[w] = b_mask
        if not a_mask.any():
            phi[w] = np.zeros(graph.n_vertices)
            continue
        outside = ~b_mask
        if (a_mask & outside).any():
            raise GeometryError("A-cells touch the complement of the B-cells; "
                                "cover construction violated its separation")
        values = np.zeros(graph.n_vertices)
        interior = b_mask & ~a_mask
        if interior.any():
            cs = ConstraintSet()
            for vid in np.nonzero(a_mask)[0]:
                cs.add_dirichlet(int(vid), 1.0)
            for vid in np.nonzero(outside)[0]:
                cs.add_dirichlet(int(vid), 0.0)
            values = harmonic_extension(form, cs)
            values = np.clip(values, 0.0, 1.0)  # shave solver roundoff only
        else:
            values[a_mask] = 1.0
        phi[w] = values

    total = np.zeros(graph.n_vertices)
    for v in phi.values():
        total += v
    covered = total > 1e-12
    psi = {w: np.where(covered, v / np.where(covered, total, 1.0), 0.0)
           for w, v in phi.items()}
    return PartitionWeights(cover, graph, phi, psi, covered, support)


# ---------------------------------------------------------------------------
# extension operator


@dataclass
class ExtensionResult:
    """Vertex values of the extension plus its pinned trace restriction."""

    cover: WhitneyCover
    graph: LevelGraph
    vertex_values: np.ndarray
    trace_values: CellAverageVector

    def restriction(self) -> TraceData:
        from .besov import VectorTrace
        return VectorTrace(self.cover.preset, self.trace_values.level,
                           self.trace_values.values)


def extend(f: TraceData, weights: PartitionWeights) -> ExtensionResult:
    """Weighted sum of cell averages against the partition of unity.

    Off-trace vertices receive sum_w psi_w(x) Q_|w| f(w); vertices on the
    trace set itself are pinned to the data (the finest cell averages stand
    in for pointwise values), and the trace restriction of the result is the
    finest average vector itself.
    """
    cover = weights.cover
    preset = cover.preset
    graph = weights.graph
    finest = f.averages(cover.eval_level)

    q_by_word: dict[Word, float] = {}
    by_level: dict[int, CellAverageVector] = {}
    for w in cover.omega:
        m = len(w)
        if m not in by_level:
            by_level[m] = f.averages(m)
        q_by_word[w] = by_level[m].word_value(w)

    values = np.zeros(graph.n_vertices)
    for w in cover.omega:
        q = q_by_word[w]
        if q != 0.0:
            values += weights.psi[w] * q

    uncovered = ~weights.covered
    on_trace = np.zeros(graph.n_vertices, dtype=bool)
    if preset.kind == "vertex":
        n_cells = len(finest.values)
        for t, vid in graph.trace_vertices:
            on_trace[vid] = True
            k = int(t * n_cells)
            if k >= n_cells:
                k = n_cells - 1
            left = finest.values[k - 1] if k > 0 and t * n_cells == int(t * n_cells) else None
            if left is not None:
                values[vid] = 0.5 * (left + finest.values[k])
            else:
                values[vid] = finest.values[k]
    else:
        for t, vid in graph.trace_vertices:
            on_trace[vid] = True
            values[vid] = finest.values[int(t * len(finest.values))]

    stranded = uncovered & ~on_trace
    if stranded.any():
        raise GeometryError(f"{int(stranded.sum())} vertices neither covered by the "
                            "partition of unity nor on the trace set")
    return ExtensionResult(cover, graph, values, finest)


def extension_energy(result: ExtensionResult) -> float:
    from .energy import energy
    preset = result.cover.preset
    form = form_for(preset, result.cover.eval_level)
    return energy(form, result.vertex_values)


# ---------------------------------------------------------------------------
# restriction diagnostics


@dataclass
class TraceInequalityReport:
    levels: list
    terms: list            # rho^m E_(m)(Q_m h|L)
    partial_sums: list
    energy: float
    ratios: list           # partial sum / energy

    @property
    def final_ratio(self) -> float:
        return self.ratios[-1]


def trace_inequality_check(preset: FractalPreset, graph: LevelGraph,
                           h: np.ndarray, n_max: int) -> TraceInequalityReport:
    """Per-level weighted trace terms of a graph function against its energy."""
    from .besov import discrete_form
    from .energy import energy
    tr = graph_trace(graph, h)
    rho = float(preset.rho)
    terms = []
    for m in range(n_max + 1):
        e = discrete_form(tr.averages(m))
        terms.append(rho ** m * e)
    partial = list(np.cumsum(terms))
    total = energy(form_for(preset, graph.level), h)
    ratios = [s / total if total > 0 else 0.0 for s in partial]
    return TraceInequalityReport(list(range(n_max + 1)), terms, partial, total, ratios)


def q_mean_constraints(graph: LevelGraph, m: int) -> list[dict]:
    """Per trace-cell weight dictionaries realizing Q_m on graph functions."""
    p = graph.preset
    n_cells = p.N_I ** m
    out: list[dict] = [dict() for _ in range(n_cells)]
    if p.kind == "vertex":
        tv = graph.trace_vertices
        for k in range(n_cells):
            a, b = Fraction(k, n_cells), Fraction(k + 1, n_cells)
            seg = [(t, vid) for t, vid in tv if a <= t <= b]
            wts = out[k]
            for (t0, v0), (t1, v1) in zip(seg, seg[1:]):
                h = float((t1 - t0) / (b - a)) / 2.0
                wts[v0] = wts.get(v0, 0.0) + h
                wts[v1] = wts.get(v1, 0.0) + h
    else:
        fine = p.N_I ** graph.level
        per = fine // n_cells
        for t, vid in graph.trace_vertices:
            k = int(t * n_cells)
            out[k][vid] = out[k].get(vid, 0.0) + 1.0 / per
    return out


@dataclass
class DecayReport:
    """Measured near-trace energy ratios for constrained-harmonic functions."""

    preset_name: str
    n: int
    eval_level: int
    samples: list       # per sample: {"base": E at depth n, "ratios": [b -> ratio]}
    degenerate: int

    def all_ratios(self) -> np.ndarray:
        return np.array([s["ratios"] for s in self.samples])


def decay_check(preset: FractalPreset, n: int, b_max: int = 1, samples: int = 20,
                seed: int = 0, eval_level: int | None = None) -> DecayReport:
    """Energy-decay ratios toward the trace set, Prop-style: for random
    constrained-harmonic h, compare energies restricted to depth n+b trace
    cells against depth n.

    h minimizes energy subject to Dirichlet data on every vertex outside the
    depth-n trace cells and prescribed cell averages on the depth-n trace
    cells (both randomized per sample).
    """
    N = eval_level if eval_level is not None else min(n + b_max + 2, preset.n_max)
    if N < n + b_max:
        raise GeometryError("evaluation level too shallow for the requested decay depth")
    graph = build_level_graph(preset, N)
    p = preset
    ihat = p.alphabet.Ihat
    vertex_cells = _vertex_cells(graph)
    trace_cells_n = [bytes(t) for t in itertools.product(ihat, repeat=n)]
    inside_mask = _vertices_in_cellset(graph, vertex_cells, trace_cells_n)
    outside_ids = np.nonzero(~inside_mask)[0]
    mean_rows = q_mean_constraints(graph, n)

    restrictions = {}
    for b in range(0, b_max + 1):
        words = [bytes(t) for t in itertools.product(ihat, repeat=n + b)]
        restrictions[b] = form_for(p, N, restriction=words)
    full_form = form_for(p, N)

    rng = np.random.default_rng(seed)
    rows = []
    degenerate = 0
    for _ in range(samples):
        cs = ConstraintSet()
        dvals = rng.standard_normal(len(outside_ids))
        for vid, val in zip(outside_ids, dvals):
            cs.add_dirichlet(int(vid), float(val))
        targets = rng.standard_normal(len(mean_rows))
        for wts, target in zip(mean_rows, targets):
            cs.add_mean(wts, float(target))
        h = harmonic_extension(full_form, cs)
        from .energy import energy
        base = energy(restrictions[0], h)
        if base < 1e-14:
            degenerate += 1
            continue
        ratios = [energy(restrictions[b], h) / base for b in range(1, b_max + 1)]
        rows.append({"base": base, "ratios": ratios})
    return DecayReport(p.name, n, N, rows, degenerate)
