"""Built-in fractal presets and JSON preset loading.

Exact presets (gasket, Vicsek, carpets) use Fraction coordinates so cell
intersections are decided exactly; the Pentakun is irrational and uses floats
with a fixed point-matching tolerance of 1e-9.
"""

from __future__ import annotations

import json
import math
from fractions import Fraction

from .geometry import FractalPreset, GeometryError, Similitude, TraceSpec, identity_map
from .words import AlphabetSpec

F = Fraction

PENTAKUN_TOL = 1e-9


def _exact_similitude(scale: Fraction, translation) -> Similitude:
    one, zero = F(1), F(0)
    return Similitude(scale, ((one, zero), (zero, one)), tuple(translation))


def _corner_map(scale: Fraction, corner) -> Similitude:
    """x -> (x - a) * scale + a, the contraction fixing the given corner."""
    ax, ay = corner
    return _exact_similitude(scale, (ax * (1 - scale), ay * (1 - scale)))


def make_gasket2() -> FractalPreset:
    """Two-dimensional gasket on corners (0,0), (1,0), (1/2,1); trace = bottom edge."""
    corners = ((F(0), F(0)), (F(1), F(0)), (F(1, 2), F(1)))
    maps = {i: _corner_map(F(1, 2), corners[i]) for i in range(3)}
    alphabet = AlphabetSpec(W=(0, 1, 2), S=(0, 1, 2), I=(0, 1), Ihat=(0, 1), M=1)
    trace = TraceSpec("interval", digits={0: 0, 1: 1}, endpoints=(corners[0], corners[1]))
    return FractalPreset("gasket2", alphabet, maps, kind="vertex", alpha=2,
                         rho=F(5, 3), base_vertices=corners, trace=trace)


def make_vicsek() -> FractalPreset:
    """Vicsek cross on the unit square; trace = main diagonal (3 of the 5 maps)."""
    pts = ((F(0), F(0)), (F(1), F(0)), (F(1), F(1)), (F(0), F(1)), (F(1, 2), F(1, 2)))
    maps = {i: _corner_map(F(1, 3), pts[i]) for i in range(5)}
    alphabet = AlphabetSpec(W=(0, 1, 2, 3, 4), S=(0, 1, 2, 3, 4), I=(0, 4, 2),
                            Ihat=(0, 4, 2), M=1)
    trace = TraceSpec("interval", digits={0: 0, 4: 1, 2: 2}, endpoints=(pts[0], pts[2]))
    return FractalPreset("vicsek", alphabet, maps, kind="vertex", alpha=3,
                         rho=F(3), base_vertices=pts[:4], trace=trace)


def make_carpet(name: str, l: int, removed: frozenset) -> FractalPreset:
    """Generalized carpet on the l x l grid with the given holes; trace = bottom edge."""
    cells = tuple(sorted(((x, y) for x in range(l) for y in range(l)
                          if (x, y) not in removed), key=lambda c: (c[1], c[0])))
    if not cells:
        raise GeometryError("carpet needs at least one cell")
    n = len(cells)
    maps = {i: _exact_similitude(F(1, l), (F(cells[i][0], l), F(cells[i][1], l)))
            for i in range(n)}
    bottom = tuple(i for i in range(n) if cells[i][1] == 0)
    if len(bottom) != l:
        raise GeometryError("carpet trace requires the full bottom row")
    letters = tuple(range(n))
    alphabet = AlphabetSpec(W=letters, S=letters, I=bottom, Ihat=bottom, M=1)
    digits = {i: cells[i][0] for i in bottom}
    trace = TraceSpec("interval", digits=digits, endpoints=((F(0), F(0)), (F(1), F(0))))
    return FractalPreset(name, alphabet, maps, kind="carpet", alpha=l,
                         grid_l=l, grid_cells=cells, trace=trace)


def make_pentakun() -> FractalPreset:
    """Pentakun (five rotated contractions of a regular pentagon); trace = Koch-like curve.

    Letters 5 and 6 are F_2 and F_3 composed with rotations by 72 and 288
    degrees; the trace alphabet is {2, 3, 5, 6}.
    """
    alpha = (3.0 + math.sqrt(5.0)) / 2.0
    corners = tuple((math.cos(2 * k * math.pi / 5 + math.pi / 2),
                     math.sin(2 * k * math.pi / 5 + math.pi / 2)) for k in range(5))
    inv = 1.0 / alpha

    def base_map(k: int) -> Similitude:
        ax, ay = corners[k]
        return Similitude(inv, ((1.0, 0.0), (0.0, 1.0)), (ax * (1 - inv), ay * (1 - inv)))

    def rot(k: int) -> Similitude:
        c, s = math.cos(2 * k * math.pi / 5), math.sin(2 * k * math.pi / 5)
        return Similitude(1.0, ((c, -s), (s, c)), (0.0, 0.0))

    maps = {i: base_map(i) for i in range(5)}
    maps[5] = base_map(2).compose(rot(1))
    maps[6] = base_map(3).compose(rot(4))
    action = {(g, s): ((s + g) % 5, g) for g in range(5) for s in range(5)}
    mul = tuple(tuple((a + b) % 5 for b in range(5)) for a in range(5))
    alphabet = AlphabetSpec(W=tuple(range(7)), S=tuple(range(5)), I=(2, 3, 5, 6),
                            Ihat=(2, 3, 5, 6), M=1, group_size=5,
                            letter_factor={5: (2, 1), 6: (3, 4)},
                            action=action, group_mul=mul)
    rho = (math.sqrt(161.0) + 9.0) / 10.0
    return FractalPreset("pentakun", alphabet, maps, kind="vertex", alpha=alpha,
                         rho=rho, base_vertices=corners,
                         group_maps=tuple(rot(k) for k in range(5)),
                         trace=TraceSpec("curve"), arithmetic="float", tol=PENTAKUN_TOL)


_FACTORIES = {
    "gasket2": make_gasket2,
    "vicsek": make_vicsek,
    "pentakun": make_pentakun,
    "carpet3": lambda: make_carpet("carpet3", 3, frozenset({(1, 1)})),
    "carpet4": lambda: make_carpet("carpet4", 4, frozenset({(1, 1), (2, 1), (1, 2), (2, 2)})),
    "grid3": lambda: make_carpet("grid3", 3, frozenset()),
}

_CACHE: dict[str, FractalPreset] = {}


def preset_names() -> tuple[str, ...]:
    return tuple(sorted(_FACTORIES))


def get_preset(name: str) -> FractalPreset:
    if name not in _FACTORIES:
        raise KeyError(f"unknown preset {name!r}; available: {', '.join(preset_names())}")
    if name not in _CACHE:
        _CACHE[name] = _FACTORIES[name]()
    return _CACHE[name]


# ---------------------------------------------------------------------------
# JSON presets


def _num(v, exact: bool):
    if exact:
        return F(v) if isinstance(v, str) else F(v)
    return float(F(v)) if isinstance(v, str) else float(v)


def preset_from_json(doc: dict) -> FractalPreset:
    """Build a preset from its JSON description.

    Expected keys: name, ambient_dim, arithmetic_mode, alphabet {W, S, I,
    Ihat, M}, maps {letter: {scale, matrix, translation}}, optional rho,
    and either initial_points (vertex kind) or grid {l, cells} (carpet kind).
    Numbers may be given as strings like "1/3" for exact arithmetic.
    """
    exact = doc.get("arithmetic_mode", "exact-rational") != "float-with-tolerance"
    al = doc["alphabet"]

    def _letters(v):
        return tuple(range(v)) if isinstance(v, int) else tuple(v)

    alphabet = AlphabetSpec(W=_letters(al["W"]), S=_letters(al["S"]),
                            I=tuple(al["I"]), Ihat=tuple(al.get("Ihat", al["I"])),
                            M=int(al.get("M", 1)))
    maps = {}
    for key, m in doc["maps"].items():
        mat = m.get("matrix", [[1, 0], [0, 1]])
        lin = tuple(tuple(_num(x, exact) for x in row) for row in mat)
        maps[int(key)] = Similitude(_num(m["scale"], exact), lin,
                                    tuple(_num(x, exact) for x in m["translation"]))
    rho = None
    if doc.get("rho") is not None:
        rho = F(doc["rho"]) if exact else float(F(doc["rho"]))
    trace = None
    if "trace" in doc:
        t = doc["trace"]
        if t.get("kind", "interval") == "interval":
            ends = tuple(tuple(_num(x, exact) for x in p) for p in t["endpoints"])
            trace = TraceSpec("interval", digits={int(k): v for k, v in t["digits"].items()},
                              endpoints=ends)
        else:
            trace = TraceSpec("curve")
    scales = {float(m.scale) for m in maps.values()}
    if max(scales) - min(scales) > 1e-12:
        raise GeometryError("all letter maps must share one contraction ratio")
    kwargs = dict(alpha=1.0 / float(next(iter(maps.values())).scale), rho=rho, trace=trace,
                  arithmetic="exact" if exact else "float",
                  tol=0.0 if exact else float(doc.get("tol", PENTAKUN_TOL)),
                  ambient_dim=int(doc.get("ambient_dim", 2)))
    if "grid" in doc:
        g = doc["grid"]
        return FractalPreset(doc["name"], alphabet, maps, kind="carpet",
                             grid_l=int(g["l"]), grid_cells=tuple(tuple(c) for c in g["cells"]),
                             **kwargs)
    pts = doc.get("initial_points")
    if pts is None:
        raise GeometryError("vertex-kind JSON preset needs initial_points")
    base = tuple(tuple(_num(x, exact) for x in p) for p in pts)
    return FractalPreset(doc["name"], alphabet, maps, kind="vertex",
                         base_vertices=base, **kwargs)


def preset_from_path(path: str) -> FractalPreset:
    with open(path, "r", encoding="utf-8") as fh:
        return preset_from_json(json.load(fh))


def validate_preset(preset: FractalPreset) -> None:
    """Spot checks: contractions contract, level-1 cells form a connected union,
    and interval-trace digit maps agree with the geometry of the I-maps."""
    for i, m in preset.maps.items():
        if not (0 < float(m.scale) < 1):
            raise GeometryError(f"map {i} is not a contraction")
    S = preset.alphabet.S
    seen = {S[0]}
    frontier = [S[0]]
    while frontier:
        i = frontier.pop()
        for j in S:
            if j not in seen and preset.cells_adjacent(bytes([i]), bytes([j])):
                seen.add(j)
                frontier.append(j)
    if seen != set(S):
        raise GeometryError("level-1 cells do not form a connected set")
    tr = preset.trace
    if tr is not None and tr.kind == "interval":
        n_i = preset.N_I
        for i in preset.alphabet.I:
            d = tr.digits[i]
            m = preset.cell_map(preset.canonical(bytes([i])))
            for t, s in ((0, F(d, n_i)), (1, F(d + 1, n_i))):
                img = m.apply(tr.param_point(F(t) if preset.exact() else float(t)))
                want = tr.param_point(s if preset.exact() else float(s))
                err = math.dist(tuple(map(float, img)), tuple(map(float, want)))
                if err > max(preset.tol, 1e-12):
                    raise GeometryError(f"trace digits inconsistent for letter {i}")
