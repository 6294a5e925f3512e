"""Multi-index bookkeeping for tensor multiwavelet elements.

An *element* is one increment block W_l^j: a level vector l (one level per
dimension) and a cell vector j with 0 <= j_m <= max(0, 2^(l_m - 1) - 1).
Each element carries a block of (k+1)^d coefficients.

Three truncations of the tensor space are used: the full space
(|l|_inf <= N), the sparse space (|l|_1 <= N), and adaptive sets maintained
in a hash table.  Elements are always enumerated in the order
(|l|_1, l, j) lexicographic so that runs are reproducible byte for byte.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from itertools import product

import numpy as np

__all__ = [
    "ElementKey",
    "SpaceSpec",
    "cells_at_level",
    "enumerate_space",
    "dof_count",
    "parents",
    "children",
    "element_sort_key",
    "HashTables",
]

ElementKey = tuple[tuple[int, ...], tuple[int, ...]]  # (levels, cells)


def cells_at_level(l: int) -> int:
    """Number of cells of the increment space W_l in one dimension."""
    return 1 if l <= 1 else 2 ** (l - 1)


def element_sort_key(key: ElementKey):
    levels, cells = key
    return (sum(levels), levels, cells)


@dataclass(frozen=True)
class SpaceSpec:
    """Which tensor elements are admissible: full, sparse or adaptive."""

    d: int
    k: int
    N: int
    truncation: str = "sparse"

    def __post_init__(self):
        if self.truncation not in ("full", "sparse", "adaptive"):
            raise ValueError(f"unknown truncation {self.truncation!r}")
        if self.d < 1 or self.k < 0 or self.N < 0:
            raise ValueError("invalid space parameters")

    @property
    def block_size(self) -> int:
        return (self.k + 1) ** self.d

    def admits(self, levels: tuple[int, ...]) -> bool:
        if self.truncation == "sparse":
            return sum(levels) <= self.N
        return max(levels) <= self.N


def _level_vectors(spec: SpaceSpec) -> list[tuple[int, ...]]:
    vecs = [lv for lv in product(range(spec.N + 1), repeat=spec.d) if spec.admits(lv)]
    vecs.sort(key=lambda lv: (sum(lv), lv))
    return vecs


def enumerate_space(spec: SpaceSpec) -> list[ElementKey]:
    """All admissible elements, ordered lexicographically in (|l|_1, l, j)."""
    if spec.truncation == "adaptive":
        raise ValueError("adaptive spaces are enumerated through their hash table")
    out: list[ElementKey] = []
    for lv in _level_vectors(spec):
        ranges = [range(cells_at_level(l)) for l in lv]
        out.extend((lv, cells) for cells in product(*ranges))
    return out


def dof_count(spec: SpaceSpec) -> int:
    """Total coefficients: (k+1)^d per element times the element count."""
    total = 0
    for lv in product(range(spec.N + 1), repeat=spec.d):
        if spec.admits(lv):
            n = 1
            for l in lv:
                n *= cells_at_level(l)
            total += n
    return total * spec.block_size


def parents(key: ElementKey) -> list[ElementKey]:
    """Direct parents: lower one level component by one.

    Lowering level 1 -> 0 maps the cell index to 0; level components at 0
    have no parent in that dimension.
    """
    levels, cells = key
    out = []
    for m, l in enumerate(levels):
        if l == 0:
            continue
        pl = levels[:m] + (l - 1,) + levels[m + 1:]
        pj = cells[m] // 2 if l >= 2 else 0
        out.append((pl, cells[:m] + (pj,) + cells[m + 1:]))
    return out


def children(key: ElementKey, max_level: int | None = None) -> list[ElementKey]:
    """Direct children: raise one level component by one.

    Raising 0 -> 1 keeps the single cell j = 0; raising l -> l+1 for l >= 1
    splits the cell into {2j, 2j+1}.
    """
    levels, cells = key
    out = []
    for m, l in enumerate(levels):
        if max_level is not None and l >= max_level:
            continue
        cl = levels[:m] + (l + 1,) + levels[m + 1:]
        kids = (0,) if l == 0 else (2 * cells[m], 2 * cells[m] + 1)
        for j in kids:
            out.append((cl, cells[:m] + (j,) + cells[m + 1:]))
    return out


@dataclass
class HashTables:
    """Active-element table H with child counters, and its leaf subset L.

    Invariants (checked by `audit`): every non-root element has all of its
    direct parents present (the no-hole closure), the stored child counts
    match a recount, and L is exactly the childless subset of H.
    """

    H: dict[ElementKey, int] = field(default_factory=dict)  # key -> num_children

    def __contains__(self, key: ElementKey) -> bool:
        return key in self.H

    def __len__(self) -> int:
        return len(self.H)

    @property
    def leaves(self) -> set[ElementKey]:
        return {k for k, n in self.H.items() if n == 0}

    def add(self, key: ElementKey) -> None:
        """Insert `key`, creating missing ancestors, updating child counts."""
        if key in self.H:
            return
        self.H[key] = 0
        for p in parents(key):
            if p not in self.H:
                self.add(p)
            self.H[p] += 1

    def remove_leaf(self, key: ElementKey) -> None:
        if self.H.get(key, -1) != 0:
            raise ValueError(f"{key} is not a leaf of the hash table")
        del self.H[key]
        for p in parents(key):
            self.H[p] -= 1

    def sorted_keys(self) -> list[ElementKey]:
        return sorted(self.H, key=element_sort_key)

    def audit(self) -> None:
        recount: dict[ElementKey, int] = {k: 0 for k in self.H}
        for key in self.H:
            for p in parents(key):
                if p not in self.H:
                    raise AssertionError(f"hole: parent {p} of {key} missing")
                recount[p] += 1
        for key, n in self.H.items():
            if recount[key] != n:
                raise AssertionError(f"child count mismatch at {key}: {n} != {recount[key]}")

    def level_histogram(self, d: int, N: int) -> dict[tuple[int, ...], tuple[int, int]]:
        """Per level vector: (active element count, total possible)."""
        hist: dict[tuple[int, ...], tuple[int, int]] = {}
        for lv in product(range(N + 1), repeat=d):
            total = int(np.prod([cells_at_level(l) for l in lv]))
            hist[lv] = (0, total)
        for (lv, _cells) in self.H:
            c, t = hist[lv]
            hist[lv] = (c + 1, t)
        return hist
