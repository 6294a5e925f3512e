"""Batched operator backend for the sparse (|l|_1 <= N) element set.

The state is a flat coefficient vector over the canonical element order.
Every operator term touches a few *active* dimensions; grouping the
remaining slots and ordering each group's active part by level budget
turns the Galerkin-projected tensor operator into a handful of
sparse-matrix x dense-block products, one per budget (see
`spaces.Partition`).  All index structures and operator blocks are built
once per run; a right-hand-side evaluation is pure gathers, CSR products
and scatter-adds, which keeps the per-step cost proportional to the sparse
degrees of freedom rather than to the full tensor grid.

Field-coupled terms go through a product pipeline: per velocity-slot
column, the physical-space part of f is transformed to a nodal
representation of just the level needed, multiplied cell by cell with the
field's Galerkin blocks, transformed back, and consumed by the velocity
operator blocks.  This is exact: the nodal level is chosen so that every
projection the scheme asks for is computed in a space containing it.
"""

from __future__ import annotations

import numpy as np
from scipy import sparse

from .basis1d import n_slots, slot_levels
from .operators import EMField, cell_mult_tables, cell_mult_tables_2d
from .spaces import Partition

__all__ = ["SparseEngine"]


class _BatchedTerm:
    """P_S (tensor product of 1D matrices) P_S as budget-sliced blocks."""

    def __init__(self, part: Partition, factors: dict[int, np.ndarray]):
        N = part.eset.N
        K = part.restricted_kron(factors, part.q(N), part.q(N))
        self.batches = []
        for n, groups in part.groups_by_budget().items():
            qn = part.q(n)
            if qn == 0 or groups.size == 0:
                continue
            idx = part.index[:qn][:, groups]
            self.batches.append((K[:qn, :qn].tocsr(), idx))

    def apply_into(self, out: np.ndarray, f: np.ndarray, scale: float) -> None:
        for K, idx in self.batches:
            out[idx] += scale * (K @ f[idx])


class _ProductPipeline:
    """Product layout of M[field] f for one (field, preserved xi-dims) rule."""

    def __init__(self, op, id_xi_dims: tuple[int, ...]):
        eset = op.element_set
        geo = op.geometry
        self.op = op
        self.xd = geo.x_dims
        k, N = op.k, op.N
        nf = k + 1
        lev = slot_levels(k, N)
        part = eset.partition(self.xd)
        self.part = part
        rest = part.rest  # all velocity dims, ascending
        mu = np.full(part.n_groups, N, dtype=np.int64)
        for m in id_xi_dims:
            mu -= lev[part.group_slots[rest.index(m)]]
        self.col_offset = np.empty(part.n_groups, dtype=np.int64)
        self.col_stride = np.empty(part.n_groups, dtype=np.int64)
        self.col_mslot = np.empty(part.n_groups, dtype=np.int64)
        self.batches = []
        offset = 0
        # one batch per nodal level; columns of smaller budget are zero-padded
        for m in np.unique(mu):
            m = int(m)
            cols = np.nonzero(mu == m)[0]
            qm = part.q(m)
            G = cols.size
            Mm = n_slots(k, m)
            rect = part.combo_slots[0][:qm].copy()
            if len(self.xd) == 2:
                rect = rect * Mm + part.combo_slots[1][:qm]
            idx_in = np.full((qm, G), -1, dtype=np.int64)
            np.copyto(idx_in, part.index[:qm][:, cols])
            self.batches.append((m, Mm, rect, idx_in, offset, G))
            self.col_offset[cols] = offset + np.arange(G)
            self.col_stride[cols] = G
            self.col_mslot[cols] = Mm
            offset += Mm ** len(self.xd) * G
        self.size = offset
        self.group_codes = self._encode_groups(part)

    @staticmethod
    def _encode_groups(part: Partition) -> np.ndarray:
        M = n_slots(part.eset.k, part.eset.N)
        code = np.zeros(part.n_groups, dtype=np.int64)
        for col in part.group_slots:
            code = code * M + col
        order = np.argsort(code)
        return code, order

    def column_of(self, xi_slot_arrays: list[np.ndarray]) -> np.ndarray:
        """Pipeline column index for velocity slot combos (pipeline rest order)."""
        code, order = self.group_codes
        M = n_slots(self.op.k, self.op.N)
        want = np.zeros(xi_slot_arrays[0].shape, dtype=np.int64)
        for col in xi_slot_arrays:
            want = want * M + col
        pos = np.searchsorted(code[order], want)
        return order[pos]

    def apply(self, f: np.ndarray, tables: list[np.ndarray]) -> np.ndarray:
        op = self.op
        nf = op.k + 1
        fpad = np.concatenate([f, [0.0]])  # index -1 gathers a zero
        out = np.empty(self.size)
        for m, Mm, rect, idx_in, offset, G in self.batches:
            Q = op.bases[self.xd[0]].Q(m)
            nc = 2 ** m
            if len(self.xd) == 1:
                U = np.zeros((Mm, G))
                U[rect] = fpad[idx_in]
                Un = (Q @ U).reshape(nc, nf, G)
                Un = np.matmul(tables[m], Un)
                V = Q.T @ Un.reshape(Mm, G)
                out[offset: offset + Mm * G] = V.ravel()
            else:
                U = np.zeros((Mm * Mm, G))
                U[rect] = fpad[idx_in]
                # axis-0 as one GEMM, axis-1 as a broadcast batched matmul
                U = (Q @ U.reshape(Mm, Mm * G)).reshape(Mm, Mm, G)
                U = np.matmul(Q, U)  # (s1, s2, G) nodal
                U = U.reshape(nc, nf, nc, nf, G).transpose(0, 2, 1, 3, 4)
                U = np.ascontiguousarray(U).reshape(nc * nc, nf * nf, G)
                Cmat = tables[m].reshape(nc * nc, nf * nf, nf * nf)
                U = np.matmul(Cmat, U)
                U = U.reshape(nc, nc, nf, nf, G).transpose(0, 2, 1, 3, 4)
                U = np.ascontiguousarray(U).reshape(Mm, Mm, G)
                U = (Q.T @ U.reshape(Mm, Mm * G)).reshape(Mm, Mm, G)
                U = np.matmul(Q.T, U)  # (s1, s2, G) hierarchical
                out[offset: offset + Mm * Mm * G] = U.reshape(Mm * Mm, G).ravel()
        return out

    def flat_input_index(self, x_rect: np.ndarray, cols: np.ndarray) -> np.ndarray:
        """Product-layout flat index of (x rectangular slot, column)."""
        return self.col_offset[cols] + x_rect * self.col_stride[cols]


class _BackTerm:
    """rhs += sign * P_S (xi operator tensor) applied to a product layout."""

    def __init__(self, op, pipeline: _ProductPipeline, xi_factors: dict[int, np.ndarray],
                 sign: float):
        eset = op.element_set
        k, N = op.k, op.N
        lev = slot_levels(k, N)
        self.sign = sign
        active = tuple(sorted(xi_factors))
        part = eset.partition(active)
        K = part.restricted_kron(xi_factors, part.q(N), part.q(N))
        xd = op.geometry.x_dims
        rest = part.rest  # x dims + identity xi dims, ascending
        x_pos = [rest.index(m) for m in xd]
        idxi_pos = [(m, rest.index(m)) for m in rest if m not in xd]

        # budget in the input direction ignores the x-slot levels
        n_in = np.full(part.n_groups, N, dtype=np.int64)
        for m, p in idxi_pos:
            n_in -= lev[part.group_slots[p]]
        n_out = part.group_budget

        pip_rest = pipeline.part.rest  # all xi dims ascending
        self.batches = []
        for pair in np.unique(np.stack([n_out, n_in], axis=1), axis=0):
            no, ni = int(pair[0]), int(pair[1])
            cols = np.nonzero((n_out == no) & (n_in == ni))[0]
            q_out, q_in = part.q(no), part.q(ni)
            if q_out == 0 or q_in == 0 or cols.size == 0:
                continue
            idx_out = part.index[:q_out][:, cols]
            # pipeline columns for every (input combo, group) pair
            xi_slots = []
            for m in pip_rest:
                if m in active:
                    t = active.index(m)
                    col = np.broadcast_to(part.combo_slots[t][:q_in, None],
                                          (q_in, cols.size))
                else:
                    p = rest.index(m)
                    col = np.broadcast_to(part.group_slots[p][cols][None, :],
                                          (q_in, cols.size))
                xi_slots.append(col.reshape(-1))
            pip_cols = pipeline.column_of(xi_slots).reshape(q_in, cols.size)
            x_rect = part.group_slots[x_pos[0]][cols]
            if len(xd) == 2:
                x_rect = x_rect * pipeline.col_mslot[pip_cols[0]] + \
                    part.group_slots[x_pos[1]][cols]
            idx_in = pipeline.flat_input_index(x_rect[None, :], pip_cols)
            self.batches.append((K[:q_out, :q_in].tocsr(), idx_in, idx_out))

    def apply_into(self, rhs: np.ndarray, prod: np.ndarray) -> None:
        for K, idx_in, idx_out in self.batches:
            rhs[idx_out] += self.sign * (K @ prod[idx_in])


class SparseEngine:
    def __init__(self, op):
        self.op = op
        eset = op.element_set
        self.shape = (eset.n_dof,)
        self._partitions: dict[tuple[int, ...], Partition] = {}
        self.static_ops = []
        for term in op.static_terms:
            part = self._partition(tuple(sorted(term.factors)))
            self.static_ops.append((term, _BatchedTerm(part, term.factors)))
        self.pipelines: dict[tuple[str, tuple[int, ...]], _ProductPipeline] = {}
        self.back_terms: list[tuple[tuple[str, tuple[int, ...]], _BackTerm]] = []
        for term in op.field_terms:
            key = (term.field, term.id_xi_dims)
            if key not in self.pipelines:
                self.pipelines[key] = _ProductPipeline(op, term.id_xi_dims)
            self.back_terms.append(
                (key, _BackTerm(op, self.pipelines[key], term.xi_factors, term.sign)))
        self._current_matrices = None

    def _partition(self, active: tuple[int, ...]) -> Partition:
        if active not in self._partitions:
            self._partitions[active] = self.op.element_set.partition(active)
        return self._partitions[active]

    # ------------------------------------------------------------------ state
    def zeros(self) -> np.ndarray:
        return np.zeros(self.shape)

    # -------------------------------------------------------------- operators
    def vlasov_rhs(self, f: np.ndarray, fields: EMField, alpha2: dict[int, float]) -> np.ndarray:
        op = self.op
        rhs = np.zeros(self.shape)
        for term, bop in self.static_ops:
            scale = term.scale if term.alpha_dim is None else -0.5 * alpha2[term.alpha_dim]
            if scale != 0.0:
                bop.apply_into(rhs, f, scale)
        products: dict[tuple[str, tuple[int, ...]], np.ndarray] = {}
        tables_cache: dict[str, list[np.ndarray]] = {}
        xd = op.geometry.x_dims
        for key, back in self.back_terms:
            if key not in products:
                name = key[0]
                if name not in tables_cache:
                    if len(xd) == 1:
                        tables_cache[name] = cell_mult_tables(op.bases[xd[0]], fields[name])
                    else:
                        tables_cache[name] = cell_mult_tables_2d(
                            op.bases[xd[0]], op.bases[xd[1]], fields[name])
                products[key] = self.pipelines[key].apply(f, tables_cache[name])
            back.apply_into(rhs, products[key])
        return rhs

    # ---------------------------------------------------------------- moments
    def _moment_csr(self):
        if self._current_matrices is None:
            op = self.op
            geo = op.geometry
            eset = op.element_set
            ds = eset.dim_slots
            xd = geo.x_dims
            if len(xd) == 1:
                rows = ds[xd[0]]
                ncols = op.bases[xd[0]].M
                xshape = (ncols,)
            else:
                M2 = op.bases[xd[1]].M
                rows = ds[xd[0]] * M2 + ds[xd[1]]
                ncols = op.bases[xd[0]].M * M2
                xshape = (op.bases[xd[0]].M, M2)
            mats = {}
            for idx, n in enumerate(geo.xi_dims, start=1):
                tables = []
                for m in range(geo.d):
                    if m in xd:
                        tables.append(np.ones(op.bases[m].M))
                    elif m == n:
                        tables.append(op.bases[m].moment(1))
                    else:
                        tables.append(op.bases[m].moment(0))
                vals = eset.moment_vector(tables)
                nz = np.nonzero(vals)[0]
                mats[f"j{idx}"] = sparse.csr_matrix(
                    (vals[nz], (rows[nz], nz)), shape=(ncols, eset.n_dof))
            self._current_matrices = (mats, xshape)
        return self._current_matrices

    def compute_current(self, f: np.ndarray) -> dict[str, np.ndarray]:
        mats, xshape = self._moment_csr()
        return {name: (M @ f).reshape(xshape) for name, M in mats.items()}

    def moment_vector(self, tables: list[np.ndarray]) -> np.ndarray:
        return self.op.element_set.moment_vector(tables)

    # ------------------------------------------------------------- separable
    def from_separable(self, vecs: list[tuple[float, list[np.ndarray]]]) -> np.ndarray:
        eset = self.op.element_set
        out = np.zeros(self.shape)
        for coef, factors in vecs:
            out += coef * eset.moment_vector(factors)
        return out

    # ---------------------------------------------------------------- export
    def gather_element_blocks(self, f: np.ndarray, keys) -> np.ndarray:
        eset = self.op.element_set
        bs = eset.block_size
        out = np.empty((len(keys), bs))
        for i, key in enumerate(keys):
            e = eset.key_index[key]
            out[i] = f[e * bs:(e + 1) * bs]
        return out
