"""Element sets with flat coefficient indexing and grouping helpers.

The solver stores a distribution function as one flat vector of element
coefficient blocks.  Elements are ordered by (|l|_1, l, j) and each block
is a C-ordered (k+1)^d tensor of polynomial indices, so the layout is a
pure function of the element set and runs reproduce byte-identically.

`Partition` is the workhorse of the sparse-space operator engine: it splits
the dimensions into an *active* set (where a term applies 1D operator
matrices) and an identity rest, groups the flat coefficients by the
identity-part slots, and orders each group's active part canonically by
(level budget, slot tuple).  Budgets nest, so the active-part list of any
level budget n is a prefix of the budget-N list and operator blocks
restrict by slicing.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import sparse

from .basis1d import n_slots, slot_levels
from .hiergrid import ElementKey, SpaceSpec, cells_at_level, element_sort_key, enumerate_space

__all__ = ["Dimension", "ElementSet", "Partition"]


@dataclass(frozen=True)
class Dimension:
    """One coordinate direction of the phase-space box."""

    label: str
    lo: float
    hi: float
    periodic: bool
    kind: str  # "x" or "v"

    @property
    def length(self) -> float:
        return self.hi - self.lo


class ElementSet:
    """Ordered element list plus per-coefficient slot decompositions."""

    def __init__(self, d: int, k: int, N: int, keys: list[ElementKey]):
        self.d = d
        self.k = k
        self.N = N
        self.keys = sorted(keys, key=element_sort_key)
        self.key_index = {key: e for e, key in enumerate(self.keys)}
        self.block_size = (k + 1) ** d
        self.n_elements = len(self.keys)
        self.n_dof = self.n_elements * self.block_size
        self._dim_slots: np.ndarray | None = None

    @classmethod
    def from_spec(cls, spec: SpaceSpec) -> "ElementSet":
        return cls(spec.d, spec.k, spec.N, enumerate_space(spec))

    @property
    def dim_slots(self) -> np.ndarray:
        """(d, n_dof) array: hierarchical 1D slot of every coefficient."""
        if self._dim_slots is None:
            d, k, bs = self.d, self.k, self.block_size
            levels = np.array([key[0] for key in self.keys], dtype=np.int64)
            cells = np.array([key[1] for key in self.keys], dtype=np.int64)
            if self.n_elements == 0:
                levels = levels.reshape(0, d)
                cells = cells.reshape(0, d)
            out = np.empty((d, self.n_dof), dtype=np.int64)
            for m in range(d):
                l = levels[:, m]
                base = np.where(l == 0, 0, (k + 1) * 2 ** np.maximum(l - 1, 0) + cells[:, m] * (k + 1))
                im = (np.arange(bs) // (k + 1) ** (d - 1 - m)) % (k + 1)
                out[m] = (base[:, None] + im[None, :]).reshape(-1)
            self._dim_slots = out
        return self._dim_slots

    def element_block(self, vec: np.ndarray, e: int) -> np.ndarray:
        bs = self.block_size
        return vec[e * bs: (e + 1) * bs].reshape((self.k + 1,) * self.d)

    def moment_vector(self, tables: list[np.ndarray]) -> np.ndarray:
        """Flat vector with entries prod_m tables[m][slot_m(dof)]."""
        ds = self.dim_slots
        out = np.ones(self.n_dof)
        for m in range(self.d):
            out *= tables[m][ds[m]]
        return out

    def partition(self, active: tuple[int, ...]) -> "Partition":
        return Partition(self, active)


def _encode(slots: np.ndarray, strides: np.ndarray) -> np.ndarray:
    """Combine per-dim slot columns into one integer key."""
    out = np.zeros(slots.shape[1], dtype=np.int64)
    for row, s in zip(slots, strides):
        out = out * s + row
    return out


class Partition:
    """Group the flat DOFs of a sparse element set for batched operators.

    active: dims whose slots vary inside a group (operator matrices apply
    there); the rest form the group key.  For each group g the active slots
    present are exactly the canonical combos of level budget
    n_g = N - sum of identity-slot levels, as a prefix of the budget-N
    canonical list (asserted at construction).
    """

    def __init__(self, eset: ElementSet, active: tuple[int, ...]):
        self.eset = eset
        self.active = tuple(active)
        self.rest = tuple(m for m in range(eset.d) if m not in self.active)
        k, N = eset.k, eset.N
        lev = slot_levels(k, N)
        ds = eset.dim_slots
        M = n_slots(k, N)
        strides = np.full(len(self.active), M, dtype=np.int64)

        acodes = _encode(ds[list(self.active)], strides)
        uniq_a, inv_a = np.unique(acodes, return_inverse=True)
        decoded = self._decode(uniq_a, len(self.active), M)
        budgets = sum(lev[col] for col in decoded)
        order = np.lexsort((uniq_a, budgets))  # (budget, slot tuple) canonical
        rank = np.empty_like(order)
        rank[order] = np.arange(order.size)
        self.combo_slots = [col[order] for col in decoded]  # per active dim
        self.combo_budget = budgets[order]
        self.prefix = np.searchsorted(self.combo_budget, np.arange(N + 2))  # q(n) = prefix[n+1]
        combo_pos = rank[inv_a]

        if self.rest:
            rcodes = _encode(ds[list(self.rest)], np.full(len(self.rest), M, dtype=np.int64))
        else:
            rcodes = np.zeros(eset.n_dof, dtype=np.int64)
        uniq_r, group_pos = np.unique(rcodes, return_inverse=True)
        rdecoded = self._decode(uniq_r, max(len(self.rest), 1), M)
        if self.rest:
            self.group_slots = rdecoded
            self.group_budget = np.asarray(N - sum(lev[col] for col in rdecoded), dtype=np.int64)
        else:
            self.group_slots = []
            self.group_budget = np.full(uniq_r.size, N, dtype=np.int64)
        self.n_groups = uniq_r.size

        idx = np.full((self.q(N), self.n_groups), -1, dtype=np.int64)
        idx[combo_pos, group_pos] = np.arange(eset.n_dof)
        for g in range(self.n_groups):
            qg = self.q(self.group_budget[g])
            col = idx[:, g]
            if (col[:qg] < 0).any() or (col[qg:] >= 0).any():
                raise ValueError("element set lacks the sparse product structure")
        self.index = idx

    @staticmethod
    def _decode(codes: np.ndarray, ndim: int, M: int) -> list[np.ndarray]:
        cols = []
        rem = codes.copy()
        for _ in range(ndim):
            cols.append(rem % M)
            rem = rem // M
        return cols[::-1]

    def q(self, n: int) -> int:
        """Number of canonical active combos with budget <= n."""
        n = int(min(max(n, -1), self.eset.N))
        return int(self.prefix[n + 1])

    def groups_by_budget(self) -> dict[int, np.ndarray]:
        out: dict[int, np.ndarray] = {}
        for n in np.unique(self.group_budget):
            out[int(n)] = np.nonzero(self.group_budget == n)[0]
        return out

    def restricted_kron(self, factors: dict[int, np.ndarray], q_out: int, q_in: int,
                        chunk: int = 2048):
        """CSR of the tensor-product operator on canonical combo pairs.

        factors maps an active dim to its 1D hierarchical matrix; omitted
        active dims contribute identity (slot equality).
        """
        rows_parts = []
        cols_in = [col[:q_in] for col in self.combo_slots]
        for start in range(0, q_out, chunk):
            stop = min(start + chunk, q_out)
            block = np.ones((stop - start, q_in))
            for t, dim in enumerate(self.active):
                r = self.combo_slots[t][start:stop]
                c = cols_in[t]
                if dim in factors:
                    block *= factors[dim][np.ix_(r, c)]
                else:
                    block *= (r[:, None] == c[None, :])
            rows_parts.append(sparse.csr_matrix(block))
        return sparse.vstack(rows_parts, format="csr") if rows_parts else \
            sparse.csr_matrix((0, q_in))
