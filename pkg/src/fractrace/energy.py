"""Level graphs and renormalized graph Dirichlet energies.

For gasket-like presets the level-n graph has the images of the initial
points as vertices and a complete subgraph inside every cell (unit
conductances); for carpets the cells themselves are the vertices and edges
join intersecting cells.  The level-n energy is rho^n times the raw graph
energy, which makes the gasket (rho = 5/3) and Vicsek (rho = 3) energies
exactly decimation-invariant.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Sequence

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .geometry import FractalPreset, GeometryError
from .words import Word

DIRECT_SOLVE_LIMIT = 2000
CG_TOL = 1e-12
RESIDUAL_TOL = 1e-10


class NumericalError(RuntimeError):
    """A linear solve failed to reach the required residual."""


class ConstraintError(ValueError):
    """Infeasible, contradictory, or underdetermined constraint systems."""


# ---------------------------------------------------------------------------
# level graphs


@dataclass
class LevelGraph:
    """Finite approximation graph of a preset at one level."""

    preset: FractalPreset
    level: int
    n_vertices: int
    edges: np.ndarray                       # (E, 2) vertex ids, i < j
    cells: list[Word]                       # S^n in lexicographic order
    cell_vertices: dict | None              # word -> vertex ids (vertex kind)
    edge_owner: np.ndarray                  # edge -> cell index owning it
    coords: list | None                     # vertex kind: exact/float points
    corner_ids: tuple[int, ...]             # ids of the initial points (vertex kind)
    trace_vertices: list                    # interval trace: sorted (param, vid)
    _lap: sp.csr_matrix | None = field(default=None, repr=False)
    _adj: sp.csr_matrix | None = field(default=None, repr=False)

    def laplacian(self) -> sp.csr_matrix:
        if self._lap is None:
            e = self.edges
            ones = np.ones(len(e))
            A = sp.coo_matrix((np.concatenate([ones, ones]),
                               (np.concatenate([e[:, 0], e[:, 1]]),
                                np.concatenate([e[:, 1], e[:, 0]]))),
                              shape=(self.n_vertices, self.n_vertices)).tocsr()
            self._adj = A
            self._lap = (sp.diags(np.asarray(A.sum(axis=1)).ravel()) - A).tocsr()
        return self._lap

    def adjacency(self) -> sp.csr_matrix:
        self.laplacian()
        return self._adj

    def degrees(self) -> np.ndarray:
        return np.asarray(self.adjacency().sum(axis=1)).ravel()

    def raw_energy(self, f: np.ndarray, mask: np.ndarray | None = None) -> float:
        d = f[self.edges[:, 0]] - f[self.edges[:, 1]]
        if mask is not None:
            d = d[mask]
        return float(np.dot(d, d))


_GRAPH_CACHE: dict = {}  # (preset, level) -> LevelGraph; identity-keyed on purpose


def _trace_param(preset: FractalPreset, p) -> object | None:
    """Parameter of an ambient point on the interval trace, or None if off it."""
    tr = preset.trace
    (x0, y0), (x1, y1) = tr.endpoints
    dx, dy = x1 - x0, y1 - y0
    px, py = p[0] - x0, p[1] - y0
    cross = px * dy - py * dx
    if preset.exact():
        if cross != 0:
            return None
        t = (px * dx + py * dy) / (dx * dx + dy * dy)
        return t if 0 <= t <= 1 else None
    if abs(float(cross)) > preset.tol:
        return None
    t = float(px * dx + py * dy) / float(dx * dx + dy * dy)
    return t if -preset.tol <= t <= 1 + preset.tol else None


def build_level_graph(preset: FractalPreset, n: int) -> LevelGraph:
    """Construct (and cache) the level-n approximation graph."""
    if n < 0 or n > preset.n_max:
        raise GeometryError(f"level {n} outside [0, n_max={preset.n_max}]")
    key = (preset, n)
    if key in _GRAPH_CACHE:
        return _GRAPH_CACHE[key]
    if preset.kind == "vertex":
        g = _build_vertex_graph(preset, n)
    else:
        g = _build_carpet_graph(preset, n)
    comps = sp.csgraph.connected_components(g.adjacency(), directed=False)[0] if g.n_vertices > 1 else 1
    if comps != 1:
        raise GeometryError(f"level-{n} graph of {preset.name} is disconnected")
    _GRAPH_CACHE[key] = g
    return g


def _build_vertex_graph(preset: FractalPreset, n: int) -> LevelGraph:
    S = preset.alphabet.S
    base = preset.base_vertices
    vindex: dict = {}
    coords: list = []
    tol = preset.tol

    def vid_exact(p):
        i = vindex.get(p)
        if i is None:
            i = len(coords)
            vindex[p] = i
            coords.append(p)
        return i

    buckets: dict = {}

    def vid_float(p):
        q = tol * 8.0 if tol else 1e-12
        kx, ky = round(p[0] / q), round(p[1] / q)
        for bx in (kx - 1, kx, kx + 1):
            for by in (ky - 1, ky, ky + 1):
                for i in buckets.get((bx, by), ()):
                    qx, qy = coords[i]
                    if (qx - p[0]) ** 2 + (qy - p[1]) ** 2 <= tol * tol:
                        return i
        i = len(coords)
        coords.append(p)
        buckets.setdefault((kx, ky), []).append(i)
        return i

    vid = vid_exact if preset.exact() else vid_float

    cells: list[Word] = []
    cell_vertices: dict = {}
    edge_index: dict = {}
    edges: list = []
    owners: list = []

    def visit(word: bytes, sim):
        if len(word) == n:
            ci = len(cells)
            cells.append(word)
            ids = tuple(vid(sim.apply(p)) for p in base)
            cell_vertices[word] = ids
            for a in range(len(ids)):
                for b in range(a + 1, len(ids)):
                    e = (ids[a], ids[b]) if ids[a] < ids[b] else (ids[b], ids[a])
                    if e in edge_index:
                        raise GeometryError("two cells share an edge; preset violates "
                                            "the finite-intersection assumption")
                    edge_index[e] = len(edges)
                    edges.append(e)
                    owners.append(ci)
            return
        for s in S:
            visit(word + bytes([s]), sim.compose(preset.maps[s]))

    from .geometry import identity_map
    visit(b"", identity_map(preset.exact()))

    trace_vertices = []
    if preset.trace is not None and preset.trace.kind == "interval":
        for p, i in ((coords[i], i) for i in range(len(coords))):
            t = _trace_param(preset, p)
            if t is not None:
                trace_vertices.append((t, i))
        trace_vertices.sort(key=lambda ti: float(ti[0]))

    corner_ids = tuple(vid(p) for p in base)
    return LevelGraph(preset, n, len(coords), np.array(edges, dtype=np.int64).reshape(-1, 2),
                      cells, cell_vertices, np.array(owners, dtype=np.int64),
                      coords, corner_ids, trace_vertices)


def _build_carpet_graph(preset: FractalPreset, n: int) -> LevelGraph:
    S = preset.alphabet.S
    cells: list[Word] = []

    def visit(word: bytes):
        if len(word) == n:
            cells.append(word)
            return
        for s in S:
            visit(word + bytes([s]))

    visit(b"")
    boxes = [preset.cell_box(w) for w in cells]
    index = {b: i for i, b in enumerate(boxes)}
    edges = []
    owners = []
    for i, (x, y) in enumerate(boxes):
        for dx, dy in ((1, 0), (0, 1), (1, 1), (1, -1)):
            j = index.get((x + dx, y + dy))
            if j is not None:
                edges.append((min(i, j), max(i, j)))
                owners.append(i)
    trace_cells = []
    if preset.trace is not None:
        for i, (x, y) in enumerate(boxes):
            if y == 0:
                trace_cells.append((Fraction(2 * x + 1, 2 * preset.grid_l ** n), i))
        trace_cells.sort(key=lambda ti: ti[0])
    return LevelGraph(preset, n, len(cells), np.array(edges, dtype=np.int64).reshape(-1, 2),
                      cells, None, np.array(owners, dtype=np.int64), None, (),
                      trace_cells)


# ---------------------------------------------------------------------------
# energy forms


@dataclass(frozen=True)
class EnergyForm:
    """Renormalized Dirichlet energy rho^n * sum over in-scope edges of (df)^2."""

    graph: LevelGraph
    rho: object
    restriction: frozenset | None = None  # S-words at one level <= graph level

    def __post_init__(self) -> None:
        if float(self.rho) <= 0:
            raise ValueError("rho must be positive")
        if self.restriction is not None:
            levels = {len(w) for w in self.restriction}
            if len(levels) > 1 or (levels and max(levels) > self.graph.level):
                raise GeometryError("restriction words must share one level <= graph level")

    def edge_mask(self) -> np.ndarray | None:
        if self.restriction is None:
            return None
        m = len(next(iter(self.restriction))) if self.restriction else 0
        g = self.graph
        if g.preset.kind == "vertex":
            owner_ok = np.fromiter(((g.cells[c][:m] in self.restriction)
                                    for c in g.edge_owner), bool, len(g.edge_owner))
            return owner_ok
        # carpet: an inter-cell edge lies inside the restricted union iff both
        # endpoint cells descend from it
        keep = np.zeros(len(g.edges), dtype=bool)
        inset = np.fromiter((g.cells[i][:m] in self.restriction for i in range(g.n_vertices)),
                            bool, g.n_vertices)
        keep = inset[g.edges[:, 0]] & inset[g.edges[:, 1]]
        return keep


def form_for(preset: FractalPreset, n: int, restriction: Iterable[Word] | None = None,
             rho=None) -> EnergyForm:
    rho = preset.rho if rho is None else rho
    if rho is None:
        raise ValueError(f"preset {preset.name} has no renormalization factor; pass rho")
    r = None if restriction is None else frozenset(preset.canonical(w) for w in restriction)
    return EnergyForm(build_level_graph(preset, n), rho, r)


def energy(form: EnergyForm, f: np.ndarray) -> float:
    """rho^n-weighted Dirichlet energy of vertex values (restricted if set)."""
    f = np.asarray(f, dtype=float)
    if f.shape[0] != form.graph.n_vertices:
        raise ConstraintError("vertex value vector has the wrong length")
    if not np.all(np.isfinite(f)):
        raise ConstraintError("vertex values must be finite")
    raw = form.graph.raw_energy(f, form.edge_mask())
    return float(form.rho) ** form.graph.level * raw


def restricted_energy(form: EnergyForm, f: np.ndarray) -> float:
    return energy(form, f)


# ---------------------------------------------------------------------------
# constraints and harmonic extension


@dataclass
class ConstraintSet:
    """Dirichlet pins plus linear mean constraints (rows of weights, target)."""

    dirichlet: list = field(default_factory=list)        # (vertex_id, value)
    means: list = field(default_factory=list)            # ({vertex_id: weight}, target)

    def add_dirichlet(self, vid: int, value: float) -> None:
        self.dirichlet.append((int(vid), float(value)))

    def add_mean(self, weights: dict, target: float) -> None:
        self.means.append(({int(k): float(v) for k, v in weights.items()}, float(target)))


def _solve_spd(L: sp.csr_matrix, rhs: np.ndarray) -> np.ndarray:
    n = L.shape[0]
    if n == 0:
        return np.zeros(0)
    if n < DIRECT_SOLVE_LIMIT:
        return spla.spsolve(L.tocsc(), rhs)
    d = L.diagonal()
    M = sp.diags(1.0 / np.where(d > 0, d, 1.0))
    x, info = spla.cg(L, rhs, rtol=CG_TOL, atol=0.0, maxiter=20 * n, M=M)
    if info != 0:
        x = spla.spsolve(L.tocsc(), rhs)
    return x


def harmonic_extension(form: EnergyForm, constraints: ConstraintSet) -> np.ndarray:
    """Unique energy minimizer subject to the given constraints.

    Pure Dirichlet systems are solved on the free block (CG above the direct
    limit); mean constraints go through a sparse KKT system with Lagrange
    multipliers.  The solution is rejected, never regularized, if the
    relative residual exceeds 1e-10.
    """
    g = form.graph
    n = g.n_vertices
    fixed_vals: dict[int, float] = {}
    for vid, val in constraints.dirichlet:
        if not 0 <= vid < n:
            raise ConstraintError(f"constrained vertex {vid} not in graph")
        if vid in fixed_vals and fixed_vals[vid] != val:
            raise ConstraintError(f"contradictory Dirichlet values at vertex {vid}")
        fixed_vals[vid] = val
    if not fixed_vals and not constraints.means:
        raise ConstraintError("constraint system is empty")

    mask = form.edge_mask()
    if mask is None:
        L = g.laplacian()
    else:
        e = g.edges[mask]
        ones = np.ones(len(e))
        A = sp.coo_matrix((np.concatenate([ones, ones]),
                           (np.concatenate([e[:, 0], e[:, 1]]),
                            np.concatenate([e[:, 1], e[:, 0]]))), shape=(n, n)).tocsr()
        L = sp.diags(np.asarray(A.sum(axis=1)).ravel()) - A

    fixed = np.array(sorted(fixed_vals), dtype=np.int64)
    vals = np.array([fixed_vals[i] for i in fixed])
    free = np.setdiff1d(np.arange(n), fixed)

    if not constraints.means:
        _check_component_coverage(L, fixed, n)
        Lff = L[free][:, free]
        rhs = -L[free][:, fixed] @ vals if len(fixed) else np.zeros(len(free))
        x = _solve_spd(Lff.tocsr(), rhs)
        out = np.empty(n)
        out[fixed] = vals
        out[free] = x
        _check_residual(Lff, x, rhs)
        return out

    rows, cols, data, targets = [], [], [], []
    fmap = {int(v): i for i, v in enumerate(free)}
    for r, (weights, target) in enumerate(constraints.means):
        t = target
        for vid, w in weights.items():
            if not 0 <= vid < n:
                raise ConstraintError(f"constrained vertex {vid} not in graph")
            if vid in fixed_vals:
                t -= w * fixed_vals[vid]
            else:
                rows.append(r)
                cols.append(fmap[vid])
                data.append(w)
        targets.append(t)
    nc = len(constraints.means)
    C = sp.coo_matrix((data, (rows, cols)), shape=(nc, len(free))).tocsr()
    Lff = L[free][:, free].tocsr()
    rhs_top = -L[free][:, fixed] @ vals if len(fixed) else np.zeros(len(free))
    K = sp.bmat([[Lff, C.T], [C, None]], format="csc")
    rhs = np.concatenate([rhs_top, np.array(targets)])
    sol = spla.spsolve(K, rhs)
    if not np.all(np.isfinite(sol)):
        raise NumericalError("constrained system is singular or infeasible")
    x = sol[:len(free)]
    _check_residual(K, sol, rhs)
    out = np.empty(n)
    out[fixed] = vals
    out[free] = x
    return out


def _check_component_coverage(L: sp.csr_matrix, fixed: np.ndarray, n: int) -> None:
    if len(fixed) == 0:
        raise ConstraintError("need at least one constraint per connected component")
    ncomp, labels = sp.csgraph.connected_components(L, directed=False)
    covered = set(labels[fixed])
    if len(covered) != ncomp:
        raise ConstraintError("a connected component has no constraint; system singular")


def _check_residual(A, x, b) -> None:
    if A.shape[0] == 0:
        return
    if not np.all(np.isfinite(x)):
        raise NumericalError("solver produced non-finite values")
    r = A @ x - b
    scale = max(float(np.linalg.norm(b)), 1e-30)
    rel = float(np.linalg.norm(r)) / scale
    if rel > RESIDUAL_TOL and float(np.linalg.norm(r)) > RESIDUAL_TOL:
        raise NumericalError(f"solve residual {rel:.2e} exceeds {RESIDUAL_TOL:.0e}")


class DirichletSolver:
    """Factorize one Dirichlet problem and solve it for many boundary values."""

    def __init__(self, graph: LevelGraph, fixed_ids: Sequence[int]):
        self.graph = graph
        L = graph.laplacian()
        self.fixed = np.array(sorted(set(int(i) for i in fixed_ids)), dtype=np.int64)
        if len(self.fixed) == 0:
            raise ConstraintError("need at least one fixed vertex")
        _check_component_coverage(L, self.fixed, graph.n_vertices)
        self.free = np.setdiff1d(np.arange(graph.n_vertices), self.fixed)
        self._Lff = L[self.free][:, self.free].tocsc()
        self._Lfd = L[self.free][:, self.fixed].tocsr()
        self._lu = spla.splu(self._Lff)

    def solve(self, fixed_values: Sequence[float]) -> np.ndarray:
        vals = np.asarray(fixed_values, dtype=float)
        x = self._lu.solve(-self._Lfd @ vals)
        out = np.empty(self.graph.n_vertices)
        out[self.fixed] = vals
        out[self.free] = x
        return out


# ---------------------------------------------------------------------------
# effective resistance and the renormalization-ratio estimate


def effective_resistance(graph: LevelGraph, source: Sequence[int], sink: Sequence[int]) -> float:
    """1 / E(h) for the unit-potential flow between two vertex sets (rho = 1)."""
    src, snk = set(map(int, source)), set(map(int, sink))
    if not src or not snk:
        raise ConstraintError("source and sink must be nonempty")
    if src & snk:
        raise ConstraintError("source and sink overlap")
    ncomp = sp.csgraph.connected_components(graph.adjacency(), directed=False)[0]
    if ncomp != 1:
        raise ConstraintError("effective resistance requires a connected graph")
    cs = ConstraintSet()
    for v in sorted(src):
        cs.add_dirichlet(v, 1.0)
    for v in sorted(snk):
        cs.add_dirichlet(v, 0.0)
    form = EnergyForm(graph, 1.0)
    h = harmonic_extension(form, cs)
    e = graph.raw_energy(h)
    if e <= 0:
        raise NumericalError("degenerate flow: zero energy between source and sink")
    return 1.0 / e


def resistance_terminals(graph: LevelGraph) -> tuple[list[int], list[int]]:
    """Opposite-face terminal sets: left/right cell columns for carpets,
    the first two initial points for vertex presets."""
    p = graph.preset
    if p.kind == "carpet":
        size = p.grid_l ** graph.level
        left, right = [], []
        for i, w in enumerate(graph.cells):
            x, _ = p.cell_box(w)
            if x == 0:
                left.append(i)
            if x == size - 1:
                right.append(i)
        return left, right
    return [graph.corner_ids[0]], [graph.corner_ids[1]]


def estimate_rho(preset: FractalPreset, levels: Sequence[int]) -> list[dict]:
    """Resistance growth ratios rho_hat_n = R_{n+1} / R_n across opposite faces."""
    levels = sorted(set(int(n) for n in levels))
    if not levels or levels[0] < 1:
        raise ValueError("levels must be >= 1")
    cache: dict[int, float] = {}

    def R(n: int) -> float:
        if n not in cache:
            g = build_level_graph(preset, n)
            cache[n] = effective_resistance(g, *resistance_terminals(g))
        return cache[n]

    return [{"level": n, "R_n": R(n), "R_next": R(n + 1), "ratio": R(n + 1) / R(n)}
            for n in levels]


def is_energy_connected(preset: FractalPreset, A: Iterable[Word]) -> bool:
    """Whether the cell union over A is connected under energy-carrying contacts."""
    A = [preset.canonical(w) for w in A]
    if not A:
        raise GeometryError("word set must be nonempty")
    if len({len(w) for w in A}) != 1:
        raise GeometryError("word set must have a uniform level")
    remaining = set(A)
    stack = [A[0]]
    remaining.discard(A[0])
    while stack:
        w = stack.pop()
        for v in preset.neighbors(w):
            if v in remaining:
                remaining.discard(v)
                stack.append(v)
    return not remaining


# ---------------------------------------------------------------------------
# CSV export


def export_edges(graph: LevelGraph, path: str) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["vertex_id", "vertex_id"])
        for a, b in graph.edges:
            w.writerow([int(a), int(b)])


def export_values(values: Sequence[float], path: str) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["vertex_id", "value"])
        for i, v in enumerate(values):
            w.writerow([i, repr(float(v))])
