"""Semi-discrete DG operators for reduced Vlasov-Maxwell systems.

The Vlasov right-hand side is assembled from tensor-product 1D operator
matrices in the hierarchical basis (the unidirectional principle): every
weak-form term factors into per-dimension matrices because the advection
coefficient in each direction never depends on that direction.

Transport in a physical direction x_m (speed = the coordinate of one
velocity dimension) is time independent and precompiled.  The force terms
couple the electromagnetic fields, which live on the full tensor space of
the physical directions only; their action on f is an exact Galerkin
multiply-then-project evaluated per cell in a nodal representation of the
x-directions.

Fluxes: global Lax-Friedrichs for the Vlasov equation (dissipation
constants alpha recomputed once per step), upwind or alternating fluxes for
the Maxwell part.  Velocity-space boundaries use the single-valued
convention consistent with compactly supported distributions; physical
boundaries are periodic.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
import math

import numpy as np
from scipy import sparse

from .basis1d import Basis1D, gauss_unit, refinement_filters, _legendre_table
from .hiergrid import SpaceSpec
from .spaces import Dimension, ElementSet

__all__ = [
    "FluxConfig",
    "Transport",
    "ForceTerm",
    "Geometry",
    "EMField",
    "VlasovOperator",
    "NumericalBlowupError",
    "legendre_triple_products",
]

MAXWELL_FLUXES = ("upwind", "alternating_pm", "alternating_mp")


class NumericalBlowupError(RuntimeError):
    """Raised when coefficients stop being finite during evolution."""


@dataclass(frozen=True)
class FluxConfig:
    """Numerical flux selection; Vlasov transport always uses global LF."""

    maxwell_flux: str = "upwind"

    def __post_init__(self):
        if self.maxwell_flux not in MAXWELL_FLUXES:
            raise ValueError(f"maxwell_flux must be one of {MAXWELL_FLUXES}")


@dataclass(frozen=True)
class Transport:
    """Advection along x_dim with speed = coordinate of speed_dim (or const)."""

    x_dim: int
    speed_dim: int | None = None
    speed: float = 1.0


@dataclass(frozen=True)
class ForceTerm:
    """One separable piece of the velocity-space transport coefficient.

    The coefficient multiplying d/d(xi_dim) is sign * field(x) * (coordinate
    of coord_dim if given).  E.g. the streaming-Weibel xi_1 coefficient
    E_1 + xi_2 B_3 contributes ("E1", xi_dim, None, +1) and
    ("B3", xi_dim, coord_dim=xi_2, +1).
    """

    field: str
    xi_dim: int
    coord_dim: int | None = None
    sign: float = 1.0


@dataclass(frozen=True)
class Geometry:
    """Phase-space box, transport structure and field coupling of a problem."""

    dims: tuple[Dimension, ...]
    transport: tuple[Transport, ...]
    forces: tuple[ForceTerm, ...] = ()
    maxwell: str = "none"  # "sw_1d2v" | "ampere_2d" | "none"
    field_names: tuple[str, ...] = ()

    @property
    def d(self) -> int:
        return len(self.dims)

    @property
    def x_dims(self) -> tuple[int, ...]:
        return tuple(m for m, dim in enumerate(self.dims) if dim.kind == "x")

    @property
    def xi_dims(self) -> tuple[int, ...]:
        return tuple(m for m, dim in enumerate(self.dims) if dim.kind == "v")


@lru_cache(maxsize=None)
def legendre_triple_products(k: int) -> np.ndarray:
    """T[p, a, b] = integral over [0,1] of L_p L_a L_b (orthonormal basis).

    k+2 Gauss points integrate the degree 3k product exactly for k <= 3.
    """
    xs, ws = gauss_unit(k + 2)
    leg = _legendre_table(k)
    vals = np.array([np.polynomial.polynomial.polyval(xs, leg[i]) for i in range(k + 1)])
    return np.einsum("pq,aq,bq,q->pab", vals, vals, vals, ws)


def cell_mult_tables(basis: Basis1D, hier_coeffs: np.ndarray) -> list[np.ndarray]:
    """Per-level cell multiplication blocks of a 1D field.

    Returns C[m] of shape (2^m, k+1, k+1) with
    C[m][cell, a, b] = integral over the level-m cell of phi_a * field * phi_b.
    Exact for the field in V_N^k: the level-N table is formed from nodal
    coefficients and coarser levels aggregate through the two-scale filters.
    """
    k, N = basis.k, basis.N
    T = legendre_triple_products(k)
    nodal = (basis.Q() @ hier_coeffs).reshape(2 ** N, k + 1)
    h = basis.cell_width()
    tables = [None] * (N + 1)
    tables[N] = np.einsum("cp,pab->cab", nodal, T) / math.sqrt(h)
    H0, H1, _, _ = refinement_filters(k)
    for m in range(N, 0, -1):
        C = tables[m]
        tables[m - 1] = (np.einsum("ai,cij,bj->cab", H0, C[0::2], H0)
                         + np.einsum("ai,cij,bj->cab", H1, C[1::2], H1))
    return tables


def cell_mult_tables_2d(b1: Basis1D, b2: Basis1D, hier_coeffs: np.ndarray) -> list[np.ndarray]:
    """2D analogue of `cell_mult_tables` for fields on a tensor x-space.

    C[m] has shape (2^m, 2^m, k+1, k+1, k+1, k+1) indexed
    (cell1, cell2, a1, a2, b1, b2).
    """
    k, N = b1.k, b1.N
    T = legendre_triple_products(k)
    nodal = b1.Q() @ hier_coeffs @ b2.Q().T
    nf = k + 1
    nodal = nodal.reshape(2 ** N, nf, 2 ** N, nf)
    scale = 1.0 / math.sqrt(b1.cell_width() * b2.cell_width())
    tmp = np.tensordot(nodal, T, axes=(1, 0))        # (c, d, q, a1, b1)
    tmp = np.tensordot(tmp, T, axes=(2, 0))          # (c, d, a1, b1, a2, b2)
    C = np.ascontiguousarray(tmp.transpose(0, 1, 2, 4, 3, 5)) * scale
    tables = [None] * (N + 1)
    tables[N] = C
    H0, H1, _, _ = refinement_filters(k)
    Hs = (H0, H1)
    for m in range(N, 0, -1):
        C = tables[m]
        nxt = np.zeros((2 ** (m - 1), 2 ** (m - 1), nf, nf, nf, nf))
        for s1 in (0, 1):
            for s2 in (0, 1):
                sub = C[s1::2, s2::2]                      # (c, d, i, j, k, l)
                t = np.tensordot(Hs[s1], sub, axes=(1, 2))  # (a, c, d, j, k, l)
                t = np.tensordot(Hs[s2], t, axes=(1, 3))    # (b, a, c, d, k, l)
                t = np.tensordot(Hs[s1], t, axes=(1, 4))    # (e, b, a, c, d, l)
                t = np.tensordot(Hs[s2], t, axes=(1, 5))    # (b2, b1, a2, a1, c, d)
                nxt += t.transpose(4, 5, 3, 2, 1, 0)
        tables[m - 1] = nxt
    return tables


@dataclass
class EMField:
    """Electromagnetic field coefficients on the physical-space tensor basis."""

    components: dict[str, np.ndarray]

    def copy(self) -> "EMField":
        return EMField({k: v.copy() for k, v in self.components.items()})

    def __getitem__(self, name: str) -> np.ndarray:
        return self.components[name]

    def check_finite(self) -> None:
        for name, arr in self.components.items():
            if not np.all(np.isfinite(arr)):
                raise NumericalBlowupError(f"non-finite coefficients in field {name}")


@dataclass(frozen=True)
class TensorTerm:
    """Static tensor-product term: scale * prod_m factors[m] (identity elsewhere)."""

    name: str
    factors: dict[int, np.ndarray]
    scale: float = 1.0
    alpha_dim: int | None = None  # scaled by -alpha2[alpha_dim]/2 at apply time


@dataclass(frozen=True)
class FieldTerm:
    """Field-coupled term: sign * M[field] applied in x, xi_factors in velocity."""

    name: str
    field: str
    xi_factors: dict[int, np.ndarray]
    sign: float
    id_xi_dims: tuple[int, ...]  # velocity dims the term leaves untouched


class VlasovOperator:
    """Compiled semi-discrete operator for one (geometry, k, N, scheme) run.

    scheme: "full" or "adaptive" use the dense tensor engine (with an
    optional element mask), "sparse" the batched sparse-set engine.
    """

    def __init__(self, geometry: Geometry, k: int, N: int, scheme: str = "sparse",
                 flux: FluxConfig | None = None):
        self.geometry = geometry
        self.k = k
        self.N = N
        self.scheme = scheme
        self.flux = flux or FluxConfig()
        self.bases = tuple(Basis1D(k, N, dim.lo, dim.hi) for dim in geometry.dims)
        self.x_bases = tuple(self.bases[m] for m in geometry.x_dims)
        self._compile_terms()
        if scheme == "sparse":
            from .engine_sparse import SparseEngine
            self.element_set = ElementSet.from_spec(SpaceSpec(geometry.d, k, N, "sparse"))
            self.engine = SparseEngine(self)
        elif scheme in ("full", "adaptive"):
            from .engine_dense import DenseEngine
            self.element_set = ElementSet.from_spec(SpaceSpec(geometry.d, k, N, "full"))
            self.engine = DenseEngine(self)
        else:
            raise ValueError(f"unknown scheme {scheme!r}")
        self._maxwell_matrices()

    # ------------------------------------------------------------------ terms
    def _compile_terms(self) -> None:
        geo = self.geometry
        terms: list[TensorTerm] = []
        for tr in geo.transport:
            bx = self.bases[tr.x_dim]
            adv = bx.advection(periodic=self.geometry.dims[tr.x_dim].periodic)
            jmp = bx.edge_jump(periodic=self.geometry.dims[tr.x_dim].periodic)
            if tr.speed_dim is None:
                terms.append(TensorTerm(f"adv_x{tr.x_dim}", {tr.x_dim: adv}, tr.speed))
                alpha1 = abs(tr.speed)
            else:
                bxi = self.bases[tr.speed_dim]
                terms.append(TensorTerm(f"adv_x{tr.x_dim}",
                                        {tr.x_dim: adv, tr.speed_dim: bxi.coordinate()}))
                alpha1 = max(abs(bxi.lo), abs(bxi.hi))
            terms.append(TensorTerm(f"pen_x{tr.x_dim}", {tr.x_dim: jmp}, -0.5 * alpha1))
        for n in geo.xi_dims:
            if not any(ft.xi_dim == n for ft in geo.forces):
                continue
            bv = self.bases[n]
            terms.append(TensorTerm(f"pen_xi{n}", {n: bv.edge_jump(periodic=False)},
                                    1.0, alpha_dim=n))
        self.static_terms = tuple(terms)

        fterms: list[FieldTerm] = []
        for ft in geo.forces:
            bv = self.bases[ft.xi_dim]
            factors = {ft.xi_dim: bv.advection(periodic=False)}
            if ft.coord_dim is not None:
                factors[ft.coord_dim] = self.bases[ft.coord_dim].coordinate()
            ids = tuple(n for n in geo.xi_dims if n not in factors)
            fterms.append(FieldTerm(f"force_{ft.field}_xi{ft.xi_dim}", ft.field,
                                    factors, ft.sign, ids))
        self.field_terms = tuple(fterms)

    # ---------------------------------------------------------------- maxwell
    def _maxwell_matrices(self) -> None:
        geo = self.geometry
        if geo.maxwell == "sw_1d2v":
            bx = self.x_bases[0]
            D = bx.deriv_volume()
            if self.flux.maxwell_flux == "upwind":
                curl = -D + bx.edge_central(True)
                pen = -0.5 * bx.edge_jump(True)
                self._mx = {"E1": (curl, pen), "B3": (curl, pen)}
            else:
                pm = self.flux.maxwell_flux == "alternating_pm"
                left = -D + bx.edge_one_sided("left")
                right = -D + bx.edge_one_sided("right")
                zero = np.zeros_like(D)
                # hatE = E+, hatB = B-  (pm); the mp variant swaps the sides
                self._mx = {"E1": (left if pm else right, zero),
                            "B3": (right if pm else left, zero)}

    def maxwell_rhs(self, fields: EMField, J: dict[str, np.ndarray]) -> dict[str, np.ndarray]:
        """Semi-discrete time derivative of the field coefficients."""
        geo = self.geometry
        if geo.maxwell == "none":
            return {}
        if geo.maxwell == "ampere_2d":
            return {"E1": -J["j1"], "E2": -J["j2"]}
        if geo.maxwell == "sw_1d2v":
            curl_e, pen_e = self._mx["E1"]
            curl_b, pen_b = self._mx["B3"]
            dE1 = curl_e @ fields["B3"] + pen_e @ fields["E1"] - J["j1"]
            dB3 = curl_b @ fields["E1"] + pen_b @ fields["B3"]
            dE2 = -J["j2"]
            return {"E1": dE1, "E2": dE2, "B3": dB3}
        raise ValueError(geo.maxwell)

    # ---------------------------------------------------------------- vlasov
    def vlasov_rhs(self, f: np.ndarray, fields: EMField, alpha2: dict[int, float]) -> np.ndarray:
        """df/dt from transport + force terms at frozen fields and alphas."""
        if not np.all(np.isfinite(f)):
            raise NumericalBlowupError("non-finite distribution coefficients")
        fields.check_finite()
        return self.engine.vlasov_rhs(f, fields, alpha2)

    def compute_current(self, f: np.ndarray) -> dict[str, np.ndarray]:
        """L2 projection of the velocity moments of f onto the x-space."""
        return self.engine.compute_current(f)

    # ---------------------------------------------------------------- alphas
    def field_point_values(self, fields: EMField) -> dict[str, np.ndarray]:
        """Field values at tensor Gauss points of the finest x-mesh."""
        out = {}
        for name, coeffs in fields.components.items():
            if len(self.x_bases) == 1:
                P = self._eval_matrix_1d(self.x_bases[0])
                out[name] = P @ coeffs
            else:
                P1 = self._eval_matrix_1d(self.x_bases[0])
                P2 = self._eval_matrix_1d(self.x_bases[1])
                out[name] = P1 @ coeffs @ P2.T
        return out

    def _eval_matrix_1d(self, basis: Basis1D) -> np.ndarray:
        def build():
            xs, _ = gauss_unit(basis.k + 2)
            ncell = 2 ** basis.N
            h = basis.cell_width()
            pts = basis.lo + h * (np.repeat(np.arange(ncell), xs.size) + np.tile(xs, ncell))
            return basis.point_eval_matrix(pts)
        return basis._get("evalmat", build)

    def alpha_bounds(self, fields: EMField) -> tuple[dict[int, float], dict[int, float]]:
        """(alpha1 per x-dim, alpha2 per xi-dim) for the global LF fluxes.

        alpha1 maximizes |xi . n| over the velocity box (corner values);
        alpha2 maximizes the force coefficient over quadrature points in x
        and corners of the coordinate factor's range.
        """
        geo = self.geometry
        alpha1 = {}
        for tr in geo.transport:
            if tr.speed_dim is None:
                alpha1[tr.x_dim] = abs(tr.speed)
            else:
                b = self.bases[tr.speed_dim]
                alpha1[tr.x_dim] = max(abs(b.lo), abs(b.hi))
        alpha2 = {n: 0.0 for n in geo.xi_dims}
        if self.geometry.forces:
            vals = self.field_point_values(fields)
            for n in geo.xi_dims:
                terms = [ft for ft in geo.forces if ft.xi_dim == n]
                if not terms:
                    continue
                best = 0.0
                corners = [[]]
                coord_dims = sorted({ft.coord_dim for ft in terms if ft.coord_dim is not None})
                for cd in coord_dims:
                    b = self.bases[cd]
                    corners = [c + [v] for c in corners for v in (b.lo, b.hi)]
                for corner in corners:
                    coeff = np.zeros_like(next(iter(vals.values())))
                    for ft in terms:
                        fac = 1.0
                        if ft.coord_dim is not None:
                            fac = corner[coord_dims.index(ft.coord_dim)]
                        coeff = coeff + ft.sign * fac * vals[ft.field]
                    best = max(best, float(np.max(np.abs(coeff))))
                alpha2[n] = best
        return alpha1, alpha2

    # ------------------------------------------------------------ projections
    def project_separable(self, terms: list[tuple[float, list]]) -> np.ndarray:
        """Project sum_t c_t * prod_m g_tm(x_m) onto the discrete space."""
        vecs = []
        for coef, factors in terms:
            vecs.append((coef, [self.bases[m].function_inner(factors[m])
                                for m in range(self.geometry.d)]))
        return self.engine.from_separable(vecs)

    def project_field(self, name_or_fn, fn=None) -> np.ndarray:
        """Project a physical-space function onto the field basis.

        For 1D x: fn(x);  for 2D x: fn must be separable, given as a list of
        (coef, [g1, g2]) terms.
        """
        fn = fn if fn is not None else name_or_fn
        if len(self.x_bases) == 1:
            return self.x_bases[0].function_inner(fn)
        total = None
        for coef, (g1, g2) in fn:
            v = coef * np.outer(self.x_bases[0].function_inner(g1),
                                self.x_bases[1].function_inner(g2))
            total = v if total is None else total + v
        return total

    # ------------------------------------------------------------ diagnostics
    def moment_vector(self, tables: list[np.ndarray]) -> np.ndarray:
        """Engine-shaped contraction vector prod_m tables[m][slot]."""
        return self.engine.moment_vector(tables)

    def inner(self, f: np.ndarray, vec: np.ndarray) -> float:
        return float(np.vdot(f.ravel(), vec.ravel()))

    def l2_norm_sq(self, f: np.ndarray) -> float:
        """Physical L2 norm squared (Parseval over the orthonormal basis)."""
        return float(np.vdot(f.ravel(), f.ravel()))
