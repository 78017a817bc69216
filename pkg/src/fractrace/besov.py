"""Cell averages on the trace set, discrete quadratic forms, Besov seminorms.

Trace data comes in three flavours: closed-form functions of the interval
parameter (integrated by fixed-order Gauss-Legendre, exact for polynomials),
piecewise-constant vectors of finest-level cell averages, and piecewise-linear
restrictions of graph functions.  Averages at any coarser level follow by the
exact coarsening identity: a parent average is the mean of its children.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Callable, Sequence

import numpy as np

from .energy import LevelGraph
from .geometry import FractalPreset, GeometryError

GAUSS_ORDER = 8


@dataclass(frozen=True)
class CellAverageVector:
    """Values of the level-n cell-average operator, indexed by trace position."""

    preset: FractalPreset
    level: int
    values: np.ndarray

    def __post_init__(self) -> None:
        if len(self.values) != self.preset.N_I ** self.level:
            raise GeometryError("cell-average vector has the wrong length")

    def word_value(self, w) -> float:
        return float(self.values[self.preset.trace_index(w)])

    def coarsened(self, m: int) -> "CellAverageVector":
        """Averages at a coarser level m <= level (children mean to parents)."""
        if m > self.level:
            raise GeometryError("coarsening target deeper than source")
        v = self.values
        for _ in range(self.level - m):
            v = v.reshape(-1, self.preset.N_I).mean(axis=1)
        return CellAverageVector(self.preset, m, v)


def _require_interval(preset: FractalPreset) -> None:
    if preset.trace is None or preset.trace.kind != "interval":
        raise GeometryError(f"preset {preset.name} has no interval trace parametrization")


class TraceData:
    """A function on the trace set, evaluable through cell averages."""

    preset: FractalPreset

    def averages(self, n: int) -> CellAverageVector:
        raise NotImplementedError


class CallableTrace(TraceData):
    """Closed-form f(t) on the unit parameter of an interval trace."""

    def __init__(self, preset: FractalPreset, fn: Callable[[float], float]):
        _require_interval(preset)
        self.preset = preset
        self.fn = fn
        nodes, weights = np.polynomial.legendre.leggauss(GAUSS_ORDER)
        self._nodes = (nodes + 1.0) / 2.0
        self._weights = weights / 2.0

    def averages(self, n: int) -> CellAverageVector:
        m = self.preset.N_I ** n
        lefts = np.arange(m) / m
        ts = lefts[:, None] + self._nodes[None, :] / m
        vals = np.vectorize(self.fn, otypes=[float])(ts)
        return CellAverageVector(self.preset, n, vals @ self._weights)


class VectorTrace(TraceData):
    """Piecewise-constant data given by finest-level cell averages."""

    def __init__(self, preset: FractalPreset, level: int, values: Sequence[float]):
        _require_interval(preset)
        self.preset = preset
        self.level = level
        self.values = np.asarray(values, dtype=float)
        if len(self.values) != preset.N_I ** level:
            raise GeometryError("finest-level vector has the wrong length")

    def averages(self, n: int) -> CellAverageVector:
        if n <= self.level:
            return CellAverageVector(self.preset, self.level, self.values).coarsened(n)
        v = self.values
        for _ in range(n - self.level):
            v = np.repeat(v, self.preset.N_I)
        return CellAverageVector(self.preset, n, v)


class PiecewiseLinearTrace(TraceData):
    """Piecewise-linear data through knots (params, values), e.g. a graph restriction."""

    def __init__(self, preset: FractalPreset, knots: Sequence, values: Sequence[float]):
        _require_interval(preset)
        self.preset = preset
        self.knots = [Fraction(k) for k in knots]
        self.values = np.asarray(values, dtype=float)
        if len(self.knots) < 2 or self.knots[0] != 0 or self.knots[-1] != 1:
            raise GeometryError("knots must span the unit parameter interval")
        if any(self.knots[i] >= self.knots[i + 1] for i in range(len(self.knots) - 1)):
            raise GeometryError("knots must be strictly increasing")

    def _integral(self, a: Fraction, b: Fraction) -> float:
        """Exact integral of the interpolant over [a, b]."""
        ks, vs = self.knots, self.values
        total = 0.0
        import bisect
        i = max(bisect.bisect_right(ks, a) - 1, 0)
        lo = a
        while lo < b:
            hi = min(b, ks[i + 1])
            t0 = (lo - ks[i]) / (ks[i + 1] - ks[i])
            t1 = (hi - ks[i]) / (ks[i + 1] - ks[i])
            v0 = vs[i] + float(t0) * (vs[i + 1] - vs[i])
            v1 = vs[i] + float(t1) * (vs[i + 1] - vs[i])
            total += float(hi - lo) * (v0 + v1) / 2.0
            lo = hi
            i += 1
        return total

    def averages(self, n: int) -> CellAverageVector:
        m = self.preset.N_I ** n
        out = np.empty(m)
        for k in range(m):
            a, b = Fraction(k, m), Fraction(k + 1, m)
            out[k] = self._integral(a, b) * m
        return CellAverageVector(self.preset, n, out)


def graph_trace(graph: LevelGraph, values: np.ndarray) -> TraceData:
    """Restriction of a graph function to the trace set.

    Vertex graphs give a piecewise-linear interpolant through the on-trace
    vertices; carpet graphs give the bottom-row cell values as finest averages.
    """
    p = graph.preset
    _require_interval(p)
    if p.kind == "vertex":
        knots = [t for t, _ in graph.trace_vertices]
        vals = [float(values[i]) for _, i in graph.trace_vertices]
        return PiecewiseLinearTrace(p, knots, vals)
    vals = np.empty(p.N_I ** graph.level)
    for t, i in graph.trace_vertices:
        k = int(t * p.N_I ** graph.level)  # cell midpoints at this level
        vals[k] = float(values[i])
    return VectorTrace(p, graph.level, vals)


def cell_average(f: TraceData, n: int) -> CellAverageVector:
    return f.averages(n)


def mollify_once(preset: FractalPreset, level: int, values: Sequence[float]) -> VectorTrace:
    """One refinement sweep with slope-limited linear reconstruction.

    Children of cell i follow the central-difference slope; the children's
    mean reproduces the parent exactly, so coarsening consistency holds.
    """
    v = np.asarray(values, dtype=float)
    n_i = preset.N_I
    out = np.empty(len(v) * n_i)
    for i in range(len(v)):
        lo = v[i - 1] if i > 0 else v[i]
        hi = v[i + 1] if i + 1 < len(v) else v[i]
        slope = (hi - lo) / 2.0
        for c in range(n_i):
            out[i * n_i + c] = v[i] + slope * ((c + 0.5) / n_i - 0.5)
    return VectorTrace(preset, level + 1, out)


# ---------------------------------------------------------------------------
# discrete form and seminorm sequences


def discrete_form(g: CellAverageVector) -> float:
    """Sum over ordered pairs of trace-adjacent cells of the squared difference.

    Each unordered adjacent pair contributes twice; the diagonal contributes
    zero.  This ordered-pair convention is fixed throughout the package.
    """
    p = g.preset
    v = g.values
    if p.trace.kind == "interval" and p.alphabet.M == 1:
        d = np.diff(v)
        return 2.0 * float(np.dot(d, d))
    total = 0.0
    words = [p.trace_word(g.level, k) for k in range(len(v))]
    for a, wa in enumerate(words):
        for b, wb in enumerate(words):
            if a != b and p.trace_adjacent(wa, wb):
                total += float((v[a] - v[b]) ** 2)
    return total


@dataclass(frozen=True)
class BesovSeq:
    """One seminorm sequence a_n for n = 0..n_max with its l2 and sup norms."""

    beta: float
    terms: np.ndarray

    @property
    def l2(self) -> float:
        return float(np.sqrt(np.sum(self.terms ** 2)))

    @property
    def linf(self) -> float:
        return float(np.max(self.terms)) if len(self.terms) else 0.0

    def partial_l2_sq(self) -> np.ndarray:
        return np.cumsum(self.terms ** 2)


def besov_terms(f: TraceData, beta: float, n_max: int) -> BesovSeq:
    """Discrete seminorm sequence alpha^(n beta) (alpha^(-n d) E_(n)(Q_n f))^(1/2)."""
    p = f.preset
    alpha = float(p.alpha)
    d = math.log(p.N_I) / math.log(alpha)
    terms = np.empty(n_max + 1)
    for n in range(n_max + 1):
        e = discrete_form(f.averages(n))
        terms[n] = alpha ** (n * beta) * math.sqrt(alpha ** (-n * d) * e)
    return BesovSeq(beta, terms)


def continuum_terms(f: TraceData, beta: float, c: float, n_max: int,
                    refine_k: int = 3) -> BesovSeq:
    """Continuum seminorm sequence with metric cutoff c, by cell-pair quadrature.

    The double integral over {d(x, y) < c alpha^-m} is approximated at depth
    m + refine_k: pairs of depth cells enter when their midpoints are within
    the cutoff, weighted by the product measure.
    """
    p = f.preset
    _require_interval(p)
    alpha = float(p.alpha)
    d = math.log(p.N_I) / math.log(alpha)
    seg_len = p.trace.length
    terms = np.empty(n_max + 1)
    for m in range(n_max + 1):
        depth = m + refine_k
        q = f.averages(depth).values
        n_cells = len(q)
        # midpoint distance (i - j)/N_I^depth * seg_len < c * alpha^-m
        band = (c / seg_len) * p.N_I ** refine_k
        integral = 0.0
        o = 1
        while o < band:
            diff = q[o:] - q[:-o]
            integral += 2.0 * float(np.dot(diff, diff))
            o += 1
        integral /= float(n_cells) ** 2
        terms[m] = alpha ** (m * beta) * math.sqrt(alpha ** (m * d) * integral)
    return BesovSeq(beta, terms)


def trace_cutoffs(preset: FractalPreset) -> tuple[float, float]:
    """Metric constants (k1, k2): closer than k1 alpha^-n forces adjacency,
    adjacency forces distance at most k2 alpha^-n (straight-segment traces)."""
    _require_interval(preset)
    return preset.trace.length, 2.0 * preset.trace.length


# ---------------------------------------------------------------------------
# fixed test corpus


def test_corpus(preset: FractalPreset, include_harmonic: bool = True) -> dict[str, TraceData]:
    """The package's fixed family of trace test functions.

    Constants, the interval coordinate, a one-step-mollified cell indicator,
    and (for vertex presets with a renormalization factor) the trace of a
    graph-harmonic function.
    """
    _require_interval(preset)
    corpus: dict[str, TraceData] = {
        "constant": CallableTrace(preset, lambda t: 1.0),
        "coordinate": CallableTrace(preset, lambda t: float(t)),
    }
    n_i = preset.N_I
    indicator = np.zeros(n_i ** 2)
    indicator[n_i] = 1.0  # second level-2 cell
    corpus["bump"] = mollify_once(preset, 2, indicator)
    if include_harmonic and preset.kind == "vertex" and preset.rho is not None:
        from .energy import ConstraintSet, build_level_graph, form_for, harmonic_extension
        g = build_level_graph(preset, 6)
        cs = ConstraintSet()
        data = [1.0] + [0.0] * (len(g.corner_ids) - 1)
        for cid, val in zip(g.corner_ids, data):
            cs.add_dirichlet(cid, val)
        h = harmonic_extension(form_for(preset, 6), cs)
        corpus["harmonic"] = graph_trace(g, h)
    return corpus
