"""Word calculus: addresses over a finite alphabet, address reduction, neighborhoods.

Words are stored as ``bytes``: each letter is an integer in [0, 255] and the
level of a word is its length.  The empty word ``b""`` addresses the whole set.
All functions here are pure; geometry enters only through injected oracles.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Iterable, Mapping, Sequence

Word = bytes

EMPTY: Word = b""

MAX_LEVEL_DEFAULT = 10


class WordError(ValueError):
    """Raised for malformed words or inconsistent word sets."""


def word(letters: Iterable[int]) -> Word:
    return bytes(letters)


def concat(v: Word, w: Word) -> Word:
    """Concatenation v.w; the level of the result is |v| + |w|."""
    return v + w


def level(w: Word) -> int:
    return len(w)


@dataclass(frozen=True)
class AlphabetSpec:
    """Index sets and isometry bookkeeping for one iterated-function system.

    ``W`` is the full letter set, ``S`` the generating subset (the attractor is
    the fixed point of the S-maps), ``I`` the trace subset and ``Ihat`` an
    auxiliary subset with I <= Ihat <= W.  Letters outside S factor through an
    S-map composed with a finite-group isometry: ``letter_factor[i] = (j, g)``
    with j in S.  ``action[(g, s)] = (s2, g2)`` encodes g o F_s = F_s2 o g2,
    and ``group_mul`` is the group's composition table (identity is 0).
    """

    W: tuple[int, ...]
    S: tuple[int, ...]
    I: tuple[int, ...]
    Ihat: tuple[int, ...]
    M: int = 1
    group_size: int = 1
    letter_factor: Mapping[int, tuple[int, int]] = field(default_factory=dict)
    action: Mapping[tuple[int, int], tuple[int, int]] = field(default_factory=dict)
    group_mul: tuple[tuple[int, ...], ...] = ((0,),)

    def __post_init__(self) -> None:
        sw, ss, si, sh = set(self.W), set(self.S), set(self.I), set(self.Ihat)
        if not (ss <= sw and si <= sh <= sw):
            raise WordError("alphabet containments violated: need S<=W and I<=Ihat<=W")
        if len(si) >= len(ss):
            raise WordError("trace set I must be strictly smaller than S")
        if self.M < 1:
            raise WordError("neighborhood radius M must be a positive integer")
        for i in self.W:
            j, g = self.factor(i)
            if j not in ss or not (0 <= g < self.group_size):
                raise WordError(f"letter_factor for {i} leaves S or the group")
        for g in range(self.group_size):
            for s in self.S:
                s2, g2 = self.act(g, s)
                if s2 not in ss or not (0 <= g2 < self.group_size):
                    raise WordError("composition action must stay in group x S")

    def factor(self, i: int) -> tuple[int, int]:
        if i in self.letter_factor:
            return self.letter_factor[i]
        if i in self.S:
            return (i, 0)
        raise WordError(f"letter {i} outside W has no factorization")

    def act(self, g: int, s: int) -> tuple[int, int]:
        if g == 0:
            return (s, 0)
        return self.action[(g, s)]

    def mul(self, g1: int, g2: int) -> int:
        return self.group_mul[g1][g2]

    def check_word(self, w: Word, letters: Sequence[int] | None = None) -> None:
        allowed = set(self.W if letters is None else letters)
        for c in w:
            if c not in allowed:
                raise WordError(f"letter {c} not in allowed set {sorted(allowed)}")


@dataclass(frozen=True)
class ReducedAddress:
    """Canonical S-word plus the isometry carrying its cell onto the original."""

    canonical: Word
    isometry: int


def reduce(spec: AlphabetSpec, w: Word) -> ReducedAddress:
    """Rewrite a W-word as an S-word composed with one group element.

    Built letter by letter: appending letter i to a word with reduction
    (u, g) first factors F_i = F_j o h, then pushes g across F_j via the
    action table.  Cells are preserved: the canonical word addresses the
    same cell as ``w``.
    """
    spec.check_word(w)
    out = bytearray()
    g = 0
    for i in w:
        j, h = spec.factor(i)
        j2, g2 = spec.act(g, j)
        out.append(j2)
        g = spec.mul(g2, h)
    return ReducedAddress(bytes(out), g)


NeighborFn = Callable[[Word], Iterable[Word]]


def neighborhood(A: Iterable[Word], k: int, neighbors: NeighborFn) -> frozenset[Word]:
    """k-fold neighborhood of a same-level word set under a cell-adjacency oracle.

    ``neighbors(w)`` must enumerate all same-level words whose cells meet w's
    cell (including w itself).  k = 0 returns A; each further step adjoins
    every word adjacent to the current set, so the result is monotone in k.
    """
    current = frozenset(A)
    if not current:
        return current
    levels = {len(w) for w in current}
    if len(levels) != 1:
        raise WordError(f"neighborhood needs a uniform level, got {sorted(levels)}")
    if k < 0:
        raise WordError("neighborhood order k must be >= 0")
    for _ in range(k):
        grown = set(current)
        for w in current:
            grown.update(neighbors(w))
        if len(grown) == len(current):
            break
        current = frozenset(grown)
    return current
