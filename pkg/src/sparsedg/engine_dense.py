"""Dense full-tensor backend for the DG operators.

The state is a d-dimensional array of hierarchical coefficients, one axis
per dimension with (k+1) 2^N slots.  Tensor-product terms are axis
contractions with dense 1D matrices; the Galerkin projection onto a full or
adaptive (hash-table) subspace is a boolean mask applied to inputs and
outputs.  Exact but only affordable at moderate N * d, which is all the
full-grid and adaptive runs need; it doubles as the oracle the sparse
engine is tested against.
"""

from __future__ import annotations

import numpy as np

from .operators import EMField, cell_mult_tables, cell_mult_tables_2d

__all__ = ["DenseEngine"]


class DenseEngine:
    def __init__(self, op):
        self.op = op
        self.shape = tuple(b.M for b in op.bases)
        size = 1
        for s in self.shape:
            size *= s
        if size * 8 > 4 * 2 ** 30:
            raise MemoryError(
                f"dense tensor space of shape {self.shape} exceeds the memory guard; "
                "use the sparse scheme or a smaller level")
        self.mask: np.ndarray | None = None  # boolean, None = full space

    # ------------------------------------------------------------------ state
    def zeros(self) -> np.ndarray:
        return np.zeros(self.shape)

    def set_mask_from_keys(self, keys) -> None:
        """Restrict the active space to the given elements (adaptive scheme)."""
        k, d = self.op.k, self.op.geometry.d
        mask = np.zeros(self.shape, dtype=bool)
        for (levels, cells) in keys:
            sl = []
            for m in range(d):
                l, j = levels[m], cells[m]
                base = 0 if l == 0 else (k + 1) * 2 ** (l - 1) + j * (k + 1)
                sl.append(slice(base, base + k + 1))
            mask[tuple(sl)] = True
        self.mask = mask

    def apply_mask(self, F: np.ndarray) -> np.ndarray:
        if self.mask is not None:
            F = np.where(self.mask, F, 0.0)
        return F

    # -------------------------------------------------------------- operators
    def _tensor_apply(self, F: np.ndarray, factors: dict[int, np.ndarray]) -> np.ndarray:
        out = F
        for dim, A in factors.items():
            out = np.moveaxis(np.tensordot(A, out, axes=(1, dim)), 0, dim)
        return out

    def vlasov_rhs(self, f: np.ndarray, fields: EMField, alpha2: dict[int, float]) -> np.ndarray:
        op = self.op
        f = self.apply_mask(f)
        rhs = np.zeros(self.shape)
        for term in op.static_terms:
            scale = term.scale if term.alpha_dim is None else -0.5 * alpha2[term.alpha_dim]
            if scale == 0.0:
                continue
            rhs += scale * self._tensor_apply(f, term.factors)
        products: dict[str, np.ndarray] = {}
        for term in op.field_terms:
            if term.field not in products:
                products[term.field] = self._field_product(f, fields[term.field])
            rhs += term.sign * self._tensor_apply(products[term.field], term.xi_factors)
        return self.apply_mask(rhs)

    def _field_product(self, f: np.ndarray, field_coeffs: np.ndarray) -> np.ndarray:
        """Exact Galerkin multiplication of f by a physical-space field."""
        op = self.op
        xd = op.geometry.x_dims
        k = op.k
        nf = k + 1
        if len(xd) == 1:
            bx = op.bases[xd[0]]
            C = cell_mult_tables(bx, field_coeffs)[bx.N]
            Q = bx.Q()
            G = np.moveaxis(np.tensordot(Q, f, axes=(1, xd[0])), 0, xd[0])
            Gm = np.moveaxis(G, xd[0], 0)
            cell_shape = (2 ** bx.N, nf) + Gm.shape[1:]
            Gm = Gm.reshape(cell_shape)
            Gm = np.einsum("cab,cb...->ca...", C, Gm)
            G = np.moveaxis(Gm.reshape((2 ** bx.N * nf,) + cell_shape[2:]), 0, xd[0])
            return np.moveaxis(np.tensordot(Q.T, G, axes=(1, xd[0])), 0, xd[0])
        b1, b2 = op.bases[xd[0]], op.bases[xd[1]]
        C = cell_mult_tables_2d(b1, b2, field_coeffs)[b1.N]
        G = f
        for ax, b in zip(xd, (b1, b2)):
            G = np.moveaxis(np.tensordot(b.Q(), G, axes=(1, ax)), 0, ax)
        G = np.moveaxis(G, xd, (0, 1))
        rest = G.shape[2:]
        n1, n2 = 2 ** b1.N, 2 ** b2.N
        G = G.reshape(n1, nf, n2, nf, *rest)  # (c1, b1, c2, b2, ...)
        G = np.einsum("cdabef,cedf...->cadb...", C, G)
        # back to (slot1, slot2, rest)
        G = G.reshape(n1 * nf, n2 * nf, *rest)
        G = np.moveaxis(G, (0, 1), xd)
        for ax, b in zip(xd, (b1, b2)):
            G = np.moveaxis(np.tensordot(b.Q().T, G, axes=(1, ax)), 0, ax)
        return G

    # ---------------------------------------------------------------- moments
    def compute_current(self, f: np.ndarray) -> dict[str, np.ndarray]:
        op = self.op
        geo = op.geometry
        f = self.apply_mask(f)
        out = {}
        for idx, n in enumerate(geo.xi_dims, start=1):
            tables = []
            for m in range(geo.d):
                if m in geo.x_dims:
                    tables.append(None)
                elif m == n:
                    tables.append(op.bases[m].moment(1))
                else:
                    tables.append(op.bases[m].moment(0))
            J = f
            # contract velocity axes from the last to keep axis numbering stable
            for m in sorted(geo.xi_dims, reverse=True):
                J = np.tensordot(J, tables[m], axes=(m, 0))
            out[f"j{idx}"] = J
        return out

    @staticmethod
    def _outer(factors: list[np.ndarray]) -> np.ndarray:
        out = factors[0]
        for v in factors[1:]:
            out = np.multiply.outer(out, v)
        return out

    def moment_vector(self, tables: list[np.ndarray]) -> np.ndarray:
        return self.apply_mask(self._outer(tables))

    # ------------------------------------------------------------- separable
    def from_separable(self, vecs: list[tuple[float, list[np.ndarray]]]) -> np.ndarray:
        F = np.zeros(self.shape)
        for coef, factors in vecs:
            F += coef * self._outer(factors)
        return self.apply_mask(F)

    # ---------------------------------------------------------------- export
    def gather_element_blocks(self, f: np.ndarray, keys) -> np.ndarray:
        k, d = self.op.k, self.op.geometry.d
        bs = (k + 1) ** d
        out = np.empty((len(keys), bs))
        for e, (levels, cells) in enumerate(keys):
            sl = []
            for m in range(d):
                l, j = levels[m], cells[m]
                base = 0 if l == 0 else (k + 1) * 2 ** (l - 1) + j * (k + 1)
                sl.append(np.arange(base, base + k + 1))
            out[e] = f[np.ix_(*sl)].reshape(-1)
        return out

    def scatter_element_blocks(self, keys, blocks: np.ndarray) -> np.ndarray:
        k, d = self.op.k, self.op.geometry.d
        F = self.zeros()
        for e, (levels, cells) in enumerate(keys):
            sl = []
            for m in range(d):
                l, j = levels[m], cells[m]
                base = 0 if l == 0 else (k + 1) * 2 ** (l - 1) + j * (k + 1)
                sl.append(np.arange(base, base + k + 1))
            F[np.ix_(*sl)] = blocks[e].reshape((k + 1,) * d)
        return F
