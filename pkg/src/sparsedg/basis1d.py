"""One-dimensional multiwavelet machinery on dyadic grids.

Everything lives on nested dyadic meshes of an interval [lo, hi]: the level-l
mesh has 2^l equal cells.  Two orthonormal bases of the same piecewise
polynomial space V_N^k are used throughout:

* the *nodal* basis: per-cell L2-orthonormal Legendre polynomials on the
  finest (level-N) cells, and
* the *hierarchical* basis: level-0 global Legendre polynomials plus
  multiwavelets w_{i,l}^j spanning the orthogonal complement W_l of
  V_{l-1} in V_l for l = 1..N.

Wavelets are built from a mother family f_1..f_{k+1} supported on [-1, 1],
piecewise polynomial of degree <= k on each half, with parity
f_i(-x) = (-1)^(i+k) f_i(x) and k+i vanishing moments.  The family is
generated exactly (rational arithmetic) for any k <= 3; for k = 3 it matches
the classical closed-form table.

Slot ordering for a space at level budget N is level-major:
(l=0, i=0..k), (l=1, j=0, i), (l=2, j=0..1, i), ...  so the basis of a
coarser budget m <= N is the leading block, and Galerkin matrices restrict
by slicing.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache
import math

import numpy as np

__all__ = [
    "alpert_polynomials",
    "eval_scaling",
    "eval_wavelet",
    "gauss_unit",
    "hier_transform_1d",
    "inverse_hier_transform_1d",
    "refinement_filters",
    "hier_to_nodal_matrix",
    "build_operator_matrices_1d",
    "Basis1D",
    "n_slots",
    "slot_of",
    "slot_levels",
]

MAX_DEGREE = 3


class BasisConfigError(ValueError):
    """Unsupported polynomial degree or malformed basis request."""


def _exact_nullvector(rows: list[list[Fraction]], n: int) -> list[Fraction]:
    """One kernel vector of the (len(rows) x n) rational matrix.

    The callers always hand over a system whose kernel is exactly
    one-dimensional; Gaussian elimination over Fraction keeps it exact.
    """
    mat = [list(r) for r in rows]
    pivot_cols: list[int] = []
    r = 0
    for c in range(n):
        piv = None
        for rr in range(r, len(mat)):
            if mat[rr][c] != 0:
                piv = rr
                break
        if piv is None:
            continue
        mat[r], mat[piv] = mat[piv], mat[r]
        inv = mat[r][c]
        mat[r] = [v / inv for v in mat[r]]
        for rr in range(len(mat)):
            if rr != r and mat[rr][c] != 0:
                f = mat[rr][c]
                mat[rr] = [a - f * b for a, b in zip(mat[rr], mat[r])]
        pivot_cols.append(c)
        r += 1
    free = [c for c in range(n) if c not in pivot_cols]
    if len(free) != 1:
        raise BasisConfigError(f"expected 1-dim kernel, got {len(free)} free columns")
    fc = free[0]
    vec = [Fraction(0)] * n
    vec[fc] = Fraction(1)
    for rr, pc in enumerate(pivot_cols):
        vec[pc] = -mat[rr][fc]
    return vec


@lru_cache(maxsize=None)
def alpert_polynomials(k: int) -> tuple[np.ndarray, np.ndarray]:
    """Mother wavelet family for degree k.

    Returns (coeffs, parity): coeffs[i] holds the monomial coefficients of
    f_{i+1} restricted to (0, 1) (degree <= k), parity[i] = (-1)^(i+1+k) is
    the sign rule extending to (-1, 0).  Normalized on [-1, 1], with the
    sign fixed by f_i(1) > 0.
    """
    if not 0 <= k <= MAX_DEGREE:
        raise BasisConfigError(f"degree k={k} outside supported range 0..{MAX_DEGREE}")
    nf = k + 1
    exact: list[list[Fraction] | None] = [None] * nf
    for parity in (+1, -1):
        members = [t for t in range(nf) if (-1) ** (t + 1 + k) == parity]
        fixed: list[list[Fraction]] = []
        # most-constrained member first: each solve has a 1-dim kernel
        for t in sorted(members, reverse=True):
            rows: list[list[Fraction]] = []
            # orthogonality to x^m on [-1,1] for m <= k + t; opposite-parity
            # moments vanish identically
            for m in range(k + t + 1):
                if (-1) ** m != parity:
                    continue
                rows.append([Fraction(2, m + p + 1) for p in range(nf)])
            # orthogonality to the already-fixed members of this class
            for q in fixed:
                rows.append([2 * sum(q[s] * Fraction(1, s + p + 1) for s in range(nf))
                             for p in range(nf)])
            sol = _exact_nullvector(rows, nf)
            exact[t] = sol
            fixed.append(sol)
    coeffs = np.zeros((nf, nf))
    parities = np.zeros(nf, dtype=int)
    for t in range(nf):
        q = exact[t]
        assert q is not None
        norm2 = 2 * sum(q[a] * q[b] * Fraction(1, a + b + 1)
                        for a in range(nf) for b in range(nf))
        scale = 1.0 / math.sqrt(float(norm2))
        if sum(q) < 0:
            scale = -scale
        coeffs[t] = [float(c) * scale for c in q]
        parities[t] = (-1) ** (t + 1 + k)
    coeffs.setflags(write=False)
    parities.setflags(write=False)
    return coeffs, parities


def _legendre_unit_coeffs(k: int) -> np.ndarray:
    """Monomial coefficients of the L2-orthonormal Legendre basis on [0,1]."""
    coeffs = np.zeros((k + 1, k + 1))
    for i in range(k + 1):
        leg = np.polynomial.legendre.Legendre.basis(i).convert(kind=np.polynomial.Polynomial)
        # shift from [-1,1] to [0,1]: u -> 2u - 1, then normalize
        shifted = leg(np.polynomial.Polynomial([-1.0, 2.0]))
        coeffs[i, : i + 1] = shifted.coef * math.sqrt(2 * i + 1)
    return coeffs


@lru_cache(maxsize=None)
def _legendre_table(k: int) -> np.ndarray:
    return _legendre_unit_coeffs(k)


def eval_scaling(k: int, i: int, x) -> float | np.ndarray:
    """Value of the i-th (1-based) orthonormal Legendre polynomial on [0,1]."""
    if not 1 <= i <= k + 1:
        raise ValueError(f"polynomial index i={i} outside 1..{k + 1}")
    x = np.asarray(x, dtype=float)
    if np.any((x < 0) | (x > 1)):
        raise ValueError("evaluation point outside [0, 1]")
    val = np.polynomial.polynomial.polyval(x, _legendre_table(k)[i - 1])
    return float(val) if val.ndim == 0 else val


def eval_wavelet(k: int, l: int, j: int, i: int, x, side: str = "right") -> float | np.ndarray:
    """Value of the multiwavelet w_{i,l}^j at x in [0, 1].

    `side` picks the one-sided limit at breakpoints of the piecewise
    polynomial ("right" matches the half-open cell convention; "left" gives
    the trace from below).  Points outside the support evaluate to zero.
    """
    if l < 1:
        raise ValueError("wavelet level must be >= 1; level 0 is the scaling basis")
    if not 0 <= j <= max(0, 2 ** (l - 1) - 1):
        raise ValueError(f"cell index j={j} invalid for level {l}")
    if not 1 <= i <= k + 1:
        raise ValueError(f"polynomial index i={i} outside 1..{k + 1}")
    coeffs, parity = alpert_polynomials(k)
    x = np.asarray(x, dtype=float)
    scale = 2.0 ** ((l - 1) / 2.0)
    # y in [0,1] across the support cell; mother argument t = 2y - 1 in [-1,1]
    y = 2.0 ** (l - 1) * x - j
    t = 2.0 * y - 1.0
    inside = (y >= 0.0) & (y <= 1.0)
    if side == "right":
        use_right = t >= 0.0
        # at the support's right end only the left limit exists
        use_right = np.where(y >= 1.0, False, use_right)
    elif side == "left":
        use_right = t > 0.0
        use_right = np.where(y <= 0.0, True, use_right)
    else:
        raise ValueError("side must be 'left' or 'right'")
    q = coeffs[i - 1]
    pos = np.polynomial.polynomial.polyval(np.abs(t), q)
    sgn = np.where(use_right, 1.0, float(parity[i - 1]))
    val = np.where(inside, scale * math.sqrt(2.0) * sgn * pos, 0.0)
    return float(val) if val.ndim == 0 else val


@lru_cache(maxsize=None)
def gauss_unit(n: int) -> tuple[np.ndarray, np.ndarray]:
    """Gauss-Legendre nodes and weights on [0, 1]."""
    x, w = np.polynomial.legendre.leggauss(n)
    return (x + 1.0) / 2.0, w / 2.0


@lru_cache(maxsize=None)
def refinement_filters(k: int) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Two-scale filters (H0, H1, G0, G1) of the orthonormal multiwavelets.

    H_s[i, i'] = <parent scaling_i, child-s scaling_i'>, G_s likewise with
    the parent-level wavelet.  The stacked matrix [H0 H1; G0 G1] is
    orthogonal, which is what makes the hierarchical transform an isometry.
    """
    nf = k + 1
    xs, ws = gauss_unit(k + 2)  # exact for degree 2k+1 integrands
    leg = _legendre_table(k)
    legv = np.array([np.polynomial.polynomial.polyval(xs, leg[i]) for i in range(nf)])
    coeffs, parity = alpert_polynomials(k)
    H = []
    G = []
    for s in (0, 1):
        par_pts = (xs + s) / 2.0
        parv = np.array([np.polynomial.polynomial.polyval(par_pts, leg[i]) for i in range(nf)])
        # mother wavelet on the parent cell: h_i(y) = sqrt(2) f_i(2y - 1)
        t = 2.0 * par_pts - 1.0
        qv = np.array([np.polynomial.polynomial.polyval(np.abs(t), coeffs[i]) for i in range(nf)])
        wavv = math.sqrt(2.0) * np.where(t[None, :] >= 0.0, qv, qv * parity[:, None].astype(float))
        H.append((legv * ws) @ parv.T / math.sqrt(2.0))
        G.append((legv * ws) @ wavv.T / math.sqrt(2.0))
    H0, H1 = H[0].T, H[1].T
    G0, G1 = G[0].T, G[1].T
    for m in (H0, H1, G0, G1):
        m.setflags(write=False)
    return H0, H1, G0, G1


def _check_len(values: np.ndarray, k: int) -> int:
    n = values.shape[0]
    blocks = n // (k + 1)
    if blocks * (k + 1) != n or blocks & (blocks - 1):
        raise ValueError(f"length {n} is not (k+1) * 2^N for k={k}")
    return int(round(math.log2(blocks)))


def hier_transform_1d(nodal: np.ndarray, k: int) -> np.ndarray:
    """Per-cell Legendre coefficients on level N -> hierarchical coefficients.

    Operates along axis 0 (trailing axes ride along).  Orthogonal, so it is
    an isometry and `inverse_hier_transform_1d` is its exact inverse.
    """
    nodal = np.asarray(nodal, dtype=float)
    N = _check_len(nodal, k)
    H0, H1, G0, G1 = refinement_filters(k)
    nf = k + 1
    out = np.empty_like(nodal)
    s = nodal.reshape(2 ** N, nf, *nodal.shape[1:])
    pos = nodal.shape[0]
    for l in range(N, 0, -1):
        even, odd = s[0::2], s[1::2]
        details = np.einsum("ip,cp...->ci...", G0, even) + np.einsum("ip,cp...->ci...", G1, odd)
        s = np.einsum("ip,cp...->ci...", H0, even) + np.einsum("ip,cp...->ci...", H1, odd)
        cnt = details.shape[0] * nf
        out[pos - cnt: pos] = details.reshape(cnt, *nodal.shape[1:])
        pos -= cnt
    out[:nf] = s.reshape(nf, *nodal.shape[1:])
    return out


def inverse_hier_transform_1d(hier: np.ndarray, k: int) -> np.ndarray:
    """Hierarchical coefficients -> per-cell Legendre coefficients on level N."""
    hier = np.asarray(hier, dtype=float)
    N = _check_len(hier, k)
    H0, H1, G0, G1 = refinement_filters(k)
    nf = k + 1
    s = hier[:nf].reshape(1, nf, *hier.shape[1:])
    pos = nf
    for l in range(1, N + 1):
        cnt = 2 ** (l - 1) * nf
        d = hier[pos: pos + cnt].reshape(2 ** (l - 1), nf, *hier.shape[1:])
        pos += cnt
        even = np.einsum("ip,ci...->cp...", H0, s) + np.einsum("ip,ci...->cp...", G0, d)
        odd = np.einsum("ip,ci...->cp...", H1, s) + np.einsum("ip,ci...->cp...", G1, d)
        s = np.stack([even, odd], axis=1).reshape(2 ** l, nf, *hier.shape[1:])
    return s.reshape(hier.shape)


@lru_cache(maxsize=None)
def hier_to_nodal_matrix(k: int, N: int) -> np.ndarray:
    """Orthogonal change of basis Q with nodal = Q @ hier (dense, cached)."""
    M = (k + 1) * 2 ** N
    Q = inverse_hier_transform_1d(np.eye(M), k)
    Q.setflags(write=False)
    return Q


def n_slots(k: int, level: int) -> int:
    """Dimension of V_level^k, i.e. number of hierarchical slots."""
    return (k + 1) * 2 ** level


def slot_of(k: int, l: int, j: int, i: int) -> int:
    """Flat hierarchical slot index of (level l, cell j, polynomial i), i 0-based."""
    if l == 0:
        return i
    return (k + 1) * 2 ** (l - 1) + j * (k + 1) + i


@lru_cache(maxsize=None)
def slot_levels(k: int, N: int) -> np.ndarray:
    """Level of each hierarchical slot, in slot order."""
    out = np.empty(n_slots(k, N), dtype=np.int64)
    out[: k + 1] = 0
    pos = k + 1
    for l in range(1, N + 1):
        cnt = (k + 1) * 2 ** (l - 1)
        out[pos: pos + cnt] = l
        pos += cnt
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class Basis1D:
    """Hierarchical basis plus Galerkin operator matrices for one dimension.

    All matrices are dense (M x M with M = (k+1) 2^N), expressed in the
    hierarchical basis that is orthonormal with respect to the physical
    L2 inner product on [lo, hi].  Because slots are level-major, the
    matrices of any coarser budget m are the leading (k+1)2^m blocks.

    Edge conventions: the jump at an interior edge is (left trace - right
    trace) and the average the arithmetic mean.  With `periodic` the wrap
    edge is included; otherwise the domain boundary uses the single-valued
    convention [g] = g n, {g} = g/2 appropriate for compactly supported
    solutions.
    """

    k: int
    N: int
    lo: float = 0.0
    hi: float = 1.0

    def __post_init__(self):
        if not 0 <= self.k <= MAX_DEGREE:
            raise BasisConfigError(f"degree k={self.k} unsupported")
        if self.N < 0:
            raise BasisConfigError("max level must be nonnegative")
        object.__setattr__(self, "_cache", {})

    # -- geometry ----------------------------------------------------------
    @property
    def length(self) -> float:
        return self.hi - self.lo

    @property
    def M(self) -> int:
        return n_slots(self.k, self.N)

    def cell_width(self, level: int | None = None) -> float:
        level = self.N if level is None else level
        return self.length / 2 ** level

    # -- cached building blocks --------------------------------------------
    def _get(self, key, builder):
        cache = self._cache
        if key not in cache:
            cache[key] = builder()
        return cache[key]

    def nodal_traces(self) -> tuple[np.ndarray, np.ndarray]:
        """Per-cell basis values at the cell's left/right endpoint (nodal)."""
        def build():
            leg = _legendre_table(self.k)
            h = self.cell_width()
            t0 = np.polynomial.polynomial.polyval(0.0, leg.T) / math.sqrt(h)
            t1 = np.polynomial.polynomial.polyval(1.0, leg.T) / math.sqrt(h)
            return t0, t1
        return self._get("traces", build)

    def Q(self, m: int | None = None) -> np.ndarray:
        """hier -> nodal change of basis at budget m (defaults to N)."""
        m = self.N if m is None else m
        return hier_to_nodal_matrix(self.k, m)

    def _nodal_to_hier(self, A_nodal: np.ndarray) -> np.ndarray:
        Q = self.Q()
        return Q.T @ A_nodal @ Q

    def mass(self) -> np.ndarray:
        return np.eye(self.M)

    def deriv_volume(self) -> np.ndarray:
        """D[a, b] = integral of phi_b * phi_a' (test index first)."""
        def build():
            nf = self.k + 1
            xs, ws = gauss_unit(self.k + 2)
            leg = _legendre_table(self.k)
            vals = np.array([np.polynomial.polynomial.polyval(xs, leg[i]) for i in range(nf)])
            dcoef = np.array([np.polynomial.polynomial.polyder(leg[i]) for i in range(nf)])
            dval = np.array([np.polynomial.polynomial.polyval(xs, dcoef[i]) for i in range(nf)])
            dhat = (dval * ws) @ vals.T  # dhat[a,b] = int Lb La' on [0,1]
            ncell = 2 ** self.N
            A = np.kron(np.eye(ncell), dhat / self.cell_width())
            return self._nodal_to_hier(A)
        return self._get("deriv", build)

    def _edges(self, periodic: bool):
        """(left cell, right cell) index pairs of interior (+wrap) edges."""
        ncell = 2 ** self.N
        pairs = [(c, c + 1) for c in range(ncell - 1)]
        if periodic:
            pairs.append((ncell - 1, 0))
        return pairs

    def _edge_matrix(self, periodic: bool, which: str) -> np.ndarray:
        def build():
            nf = self.k + 1
            ncell = 2 ** self.N
            Mn = nf * ncell
            t0, t1 = self.nodal_traces()
            A = np.zeros((Mn, Mn))
            for (cl, cr) in self._edges(periodic):
                sl = slice(cl * nf, (cl + 1) * nf)
                sr = slice(cr * nf, (cr + 1) * nf)
                jump_a = [(sl, t1), (sr, -t0)]
                if which == "central":
                    trial = [(sl, 0.5 * t1), (sr, 0.5 * t0)]
                elif which == "jump":
                    trial = [(sl, t1), (sr, -t0)]
                elif which == "left":
                    trial = [(sl, t1)]
                elif which == "right":
                    trial = [(sr, t0)]
                else:
                    raise ValueError(which)
                for (sa, va) in jump_a:
                    for (sb, vb) in trial:
                        A[sa, sb] += np.outer(va, vb)
            if not periodic:
                # boundary faces, single-valued convention [g] = g n, {g} = g/2
                first = slice(0, nf)
                last = slice(Mn - nf, Mn)
                if which == "central":
                    A[last, last] += 0.5 * np.outer(t1, t1)
                    A[first, first] -= 0.5 * np.outer(t0, t0)
                elif which == "jump":
                    A[last, last] += np.outer(t1, t1)
                    A[first, first] += np.outer(t0, t0)
                else:
                    raise ValueError("one-sided fluxes are defined on periodic meshes only")
            return self._nodal_to_hier(A)
        return self._get(("edge", periodic, which), build)

    def edge_central(self, periodic: bool) -> np.ndarray:
        """CEN[a, b] = sum over edges of {phi_b} [phi_a] (+ boundary halves)."""
        return self._edge_matrix(periodic, "central")

    def edge_jump(self, periodic: bool) -> np.ndarray:
        """JMP[a, b] = sum over edges of [phi_b] [phi_a] (+ boundary traces)."""
        return self._edge_matrix(periodic, "jump")

    def edge_one_sided(self, side: str) -> np.ndarray:
        """Trace-from-one-side flux pairing (alternating fluxes), periodic."""
        return self._edge_matrix(True, side)

    def advection(self, periodic: bool) -> np.ndarray:
        """Unit-speed skew part D - CEN; pair with -(alpha/2) JMP for LF flux."""
        return self.deriv_volume() - self.edge_central(periodic)

    def coordinate(self) -> np.ndarray:
        """X[a, b] = integral of phi_b(x) * x * phi_a(x) over [lo, hi]."""
        def build():
            nf = self.k + 1
            xs, ws = gauss_unit(self.k + 2)
            leg = _legendre_table(self.k)
            vals = np.array([np.polynomial.polynomial.polyval(xs, leg[i]) for i in range(nf)])
            xhat = (vals * (ws * xs)) @ vals.T
            ncell = 2 ** self.N
            h = self.cell_width()
            blocks = [self.lo * np.eye(nf) + h * (c * np.eye(nf) + xhat) for c in range(ncell)]
            A = np.zeros((nf * ncell, nf * ncell))
            for c, B in enumerate(blocks):
                A[c * nf:(c + 1) * nf, c * nf:(c + 1) * nf] = B
            return self._nodal_to_hier(A)
        return self._get("coord", build)

    def moment(self, r: int) -> np.ndarray:
        """moment(r)[a] = integral of phi_a(x) * x^r over [lo, hi]."""
        def build():
            nf = self.k + 1
            npts = max(self.k + 2, (r + self.k) // 2 + 2)
            xs, ws = gauss_unit(npts)
            leg = _legendre_table(self.k)
            vals = np.array([np.polynomial.polynomial.polyval(xs, leg[i]) for i in range(nf)])
            ncell = 2 ** self.N
            h = self.cell_width()
            out = np.zeros(nf * ncell)
            for c in range(ncell):
                x_phys = self.lo + h * (c + xs)
                out[c * nf:(c + 1) * nf] = vals @ (ws * x_phys ** r) * math.sqrt(h)
            return self.Q().T @ out
        return self._get(("moment", r), build)

    def function_inner(self, fn, npts: int = 24) -> np.ndarray:
        """<phi_a, fn> for a smooth callable fn, per finest cell quadrature."""
        nf = self.k + 1
        xs, ws = gauss_unit(npts)
        leg = _legendre_table(self.k)
        vals = np.array([np.polynomial.polynomial.polyval(xs, leg[i]) for i in range(nf)])
        ncell = 2 ** self.N
        h = self.cell_width()
        x_phys = self.lo + h * (np.arange(ncell)[:, None] + xs[None, :])
        fv = np.asarray(fn(x_phys), dtype=float)
        nodal = np.einsum("iq,cq->ci", vals, fv * ws[None, :]) * math.sqrt(h)
        return self.Q().T @ nodal.reshape(-1)

    def trig_inner(self, wavenumber: float, harmonic: int) -> tuple[np.ndarray, np.ndarray]:
        """(<phi_a, sin(w n x)>, <phi_a, cos(w n x)>) tables, x physical."""
        def build():
            w = wavenumber * harmonic
            return (self.function_inner(lambda x: np.sin(w * x)),
                    self.function_inner(lambda x: np.cos(w * x)))
        return self._get(("trig", wavenumber, harmonic), build)

    def point_eval_matrix(self, pts: np.ndarray, side: str = "right") -> np.ndarray:
        """P[q, a] = phi_a(pts[q]), one-sided at breakpoints; pts physical."""
        pts = np.asarray(pts, dtype=float)
        u = (pts - self.lo) / self.length
        nf = self.k + 1
        ncell = 2 ** self.N
        eps = 1e-12
        if side == "right":
            cells = np.minimum(np.floor(u * ncell + eps).astype(int), ncell - 1)
        else:
            cells = np.maximum(np.ceil(u * ncell - eps).astype(int) - 1, 0)
        loc = u * ncell - cells
        loc = np.clip(loc, 0.0, 1.0)
        leg = _legendre_table(self.k)
        vals = np.array([np.polynomial.polynomial.polyval(loc, leg[i]) for i in range(nf)]).T
        h = self.cell_width()
        P = np.zeros((pts.size, nf * ncell))
        cols = cells[:, None] * nf + np.arange(nf)[None, :]
        np.put_along_axis(P, cols, vals / math.sqrt(h), axis=1)
        return P @ self.Q()

    def cell_inner(self, l: int, j: int, fn, npts: int = 12) -> np.ndarray:
        """<v_{i,l}^j, fn> for i = 1..k+1, by composite Gauss quadrature.

        The support is subdivided down to the finest-level cells so narrow
        features (thermal-width Gaussians) are integrated to machine
        accuracy even against coarse-level functions.
        """
        nf = self.k + 1
        xs, ws = gauss_unit(npts)
        coeffs, parity = alpert_polynomials(self.k)
        leg = _legendre_table(self.k)
        if l == 0:
            nsub = 2 ** self.N
            y = (np.arange(nsub)[:, None] + xs[None, :]) / nsub  # in [0,1]
            vals = np.array([np.polynomial.polynomial.polyval(y, leg[i])
                             for i in range(nf)])
            x_phys = self.lo + self.length * y
            fv = np.asarray(fn(x_phys), dtype=float)
            return np.einsum("icq,cq,q->i", vals, fv, ws) / nsub \
                * self.length / math.sqrt(self.length)
        nsub = max(2, 2 ** (self.N - l + 1))
        y = (np.arange(nsub)[:, None] + xs[None, :]) / nsub  # across the support
        t = 2.0 * y - 1.0
        qv = np.array([np.polynomial.polynomial.polyval(np.abs(t), coeffs[i])
                       for i in range(nf)])
        vals = math.sqrt(2.0) * np.where(t[None, :, :] >= 0.0, qv,
                                         qv * parity[:, None, None].astype(float))
        support_width = self.length / 2 ** (l - 1)
        x_phys = self.lo + support_width * (j + y)
        fv = np.asarray(fn(x_phys), dtype=float)
        scale = 2.0 ** ((l - 1) / 2.0) / math.sqrt(self.length)
        return np.einsum("icq,cq,q->i", vals, fv, ws) * (support_width / nsub) * scale

    def reflection(self) -> tuple[np.ndarray, np.ndarray]:
        """Signed slot permutation of x -> lo + hi - x.

        Returns (perm, sign): coefficients of the reflected function are
        sign * c[perm].  Exact (a signed permutation), because reflection
        maps each basis function to +/- another one: Legendre parity at
        level 0 and the mother-wavelet parity rule at levels >= 1.
        """
        def build():
            k, N = self.k, self.N
            _, parity = alpert_polynomials(k)
            perm = np.empty(self.M, dtype=np.int64)
            sign = np.empty(self.M)
            for i in range(k + 1):
                perm[i] = i
                sign[i] = (-1.0) ** i
            for l in range(1, N + 1):
                ncell = 2 ** (l - 1)
                for j in range(ncell):
                    for i in range(k + 1):
                        s = slot_of(k, l, j, i)
                        perm[s] = slot_of(k, l, ncell - 1 - j, i)
                        sign[s] = float(parity[i])
            return perm, sign
        return self._get("reflect", build)


def build_operator_matrices_1d(k: int, N: int, flavor: str, periodic: bool = True,
                               lo: float = 0.0, hi: float = 1.0) -> np.ndarray:
    """Named 1D operator matrices in the hierarchical basis.

    flavor: mass | stiffness | edge_avg | edge_jump | boundary.
    `boundary` returns the non-periodic edge_avg + edge_jump boundary parts
    only (the single-valued convention terms).
    """
    b = Basis1D(k, N, lo, hi)
    if flavor == "mass":
        return b.mass()
    if flavor == "stiffness":
        # derivative acts on the trial function, so constants map to zero
        return b.deriv_volume().T
    if flavor == "edge_avg":
        return b.edge_central(periodic)
    if flavor == "edge_jump":
        return b.edge_jump(periodic)
    if flavor == "boundary":
        full = b.edge_central(False)
        interior = b.edge_central(True) - _wrap_edge_part(b)
        return full - interior
    raise BasisConfigError(f"unknown operator flavor {flavor!r}")


def _wrap_edge_part(b: Basis1D) -> np.ndarray:
    """Central-flux contribution of the periodic wrap edge alone."""
    nf = b.k + 1
    ncell = 2 ** b.N
    Mn = nf * ncell
    t0, t1 = b.nodal_traces()
    A = np.zeros((Mn, Mn))
    sl = slice((ncell - 1) * nf, Mn)
    sr = slice(0, nf)
    A[sl, sl] += np.outer(t1, 0.5 * t1)
    A[sl, sr] += np.outer(t1, 0.5 * t0)
    A[sr, sl] += np.outer(-t0, 0.5 * t1)
    A[sr, sr] += np.outer(-t0, 0.5 * t0)
    Q = b.Q()
    return Q.T @ A @ Q
