"""Adaptive multiresolution machinery.

The active space is a hash table H of elements (with child counters) plus
its leaf subset; refinement and coarsening test the L2 norm of an
element's coefficient block against thresholds eps and eta = eps/10.

The projection algorithm starts from the root element, computes detail
blocks on demand and keeps splitting any leaf whose block norm exceeds
eps, maintaining the no-hole closure (every ancestor present; closure
ancestors created during projection carry their true projection
coefficients).  The evolution cycle per step is: predict one forward-Euler
step on the current space, refine where predicted details become
significant (new children zero-initialized), evolve with the RK stepper on
the refined space, then coarsen leaves whose details fell below eta.

Block norms use coefficients of the physically orthonormal basis (the
default, which reproduces the published active-element counts exactly);
the unit-cube coefficient convention is available as an alternative.
"""

from __future__ import annotations

from dataclasses import dataclass
import math

import numpy as np

from .hiergrid import ElementKey, HashTables, children, element_sort_key, parents
from .operators import EMField, VlasovOperator
from .timeint import KineticState, step as rk_step, step_forward_euler

__all__ = ["AdaptConfig", "SeparableProjector", "CallableProjector",
           "adaptive_project", "predict", "refine", "coarsen", "AdaptiveDriver"]


@dataclass(frozen=True)
class AdaptConfig:
    N: int
    k: int
    eps: float
    eta: float | None = None  # defaults to eps / 10
    normalization: str = "physical"  # "physical" or "unit" block-norm convention

    def __post_init__(self):
        if self.eps <= 0:
            raise ValueError("refinement threshold must be positive")
        eta = self.eta if self.eta is not None else self.eps / 10.0
        if not 0 < eta < self.eps:
            raise ValueError("coarsening threshold must satisfy 0 < eta < eps")
        object.__setattr__(self, "eta", eta)
        if self.normalization not in ("unit", "physical"):
            raise ValueError("normalization must be 'unit' or 'physical'")


def _norm_scale(op: VlasovOperator, cfg: AdaptConfig) -> float:
    if cfg.normalization == "physical":
        return 1.0
    vol = 1.0
    for dim in op.geometry.dims:
        vol *= dim.length
    return 1.0 / math.sqrt(vol)


class SeparableProjector:
    """Detail blocks of sum_t c_t prod_m g_tm via memoized 1D integrals."""

    def __init__(self, op: VlasovOperator, terms: list[tuple[float, list]]):
        self.op = op
        self.terms = terms
        self._memo: dict[tuple[int, int, int, int], np.ndarray] = {}

    def _w1d(self, t: int, m: int, l: int, j: int) -> np.ndarray:
        key = (t, m, l, j)
        if key not in self._memo:
            fn = self.terms[t][1][m]
            self._memo[key] = self.op.bases[m].cell_inner(l, j, fn)
        return self._memo[key]

    def block(self, key: ElementKey) -> np.ndarray:
        levels, cells = key
        d = self.op.geometry.d
        out = None
        for t, (coef, _) in enumerate(self.terms):
            fac = self._w1d(t, 0, levels[0], cells[0])
            for m in range(1, d):
                fac = np.multiply.outer(fac, self._w1d(t, m, levels[m], cells[m]))
            out = coef * fac if out is None else out + coef * fac
        if not np.all(np.isfinite(out)):
            raise ValueError(f"initial data not finite on element {key}")
        return out.reshape(-1)


class CallableProjector:
    """Detail blocks of an arbitrary pointwise function, tensor quadrature."""

    def __init__(self, op: VlasovOperator, fn, npts: int | None = None):
        self.op = op
        self.fn = fn
        self.npts = npts or (op.k + 6)

    def block(self, key: ElementKey) -> np.ndarray:
        from .basis1d import gauss_unit, alpert_polynomials, _legendre_table
        op = self.op
        levels, cells = key
        d = op.geometry.d
        xs, ws = gauss_unit(self.npts)
        axes = []
        for m in range(d):
            b = op.bases[m]
            l, j = levels[m], cells[m]
            if l == 0:
                width = b.length
                y = xs
                leg = _legendre_table(op.k)
                vals = np.array([np.polynomial.polynomial.polyval(y, leg[i])
                                 for i in range(op.k + 1)]) / math.sqrt(b.length)
                x = b.lo + b.length * y
                axes.append((x, vals, ws * width))
            else:
                width = b.length / 2 ** (l - 1)
                halves = []
                for s in (0, 1):
                    y = (xs + s) / 2.0
                    t = 2.0 * y - 1.0
                    coeffs, parity = alpert_polynomials(op.k)
                    qv = np.array([np.polynomial.polynomial.polyval(np.abs(t), coeffs[i])
                                   for i in range(op.k + 1)])
                    v = math.sqrt(2.0) * np.where(t[None, :] >= 0.0, qv,
                                                  qv * parity[:, None].astype(float))
                    halves.append((b.lo + width * (j + y),
                                   v * 2.0 ** ((l - 1) / 2.0) / math.sqrt(b.length),
                                   ws * width / 2.0))
                x = np.concatenate([h[0] for h in halves])
                vals = np.concatenate([h[1] for h in halves], axis=1)
                w = np.concatenate([h[2] for h in halves])
                axes.append((x, vals, w))
        grids = np.meshgrid(*[a[0] for a in axes], indexing="ij")
        fv = np.asarray(self.fn(*grids), dtype=float)
        if not np.all(np.isfinite(fv)):
            raise ValueError(f"initial data not finite on element {key}")
        out = fv
        for m in range(d - 1, -1, -1):
            _, vals, w = axes[m]
            out = np.tensordot(out, (vals * w[None, :]).T, axes=(m, 0))
            out = np.moveaxis(out, -1, m)
        return out.reshape(-1)


def adaptive_project(op: VlasovOperator, projector, cfg: AdaptConfig
                     ) -> tuple[HashTables, np.ndarray]:
    """Adaptive multiresolution projection onto the hash-table space."""
    if op.scheme != "adaptive":
        raise ValueError("adaptive projection needs an adaptive-scheme operator")
    d = op.geometry.d
    scale = _norm_scale(op, cfg)
    tables = HashTables()
    blocks: dict[ElementKey, np.ndarray] = {}

    def ensure(key: ElementKey) -> None:
        """Add with ancestors-first closure; every added element gets its
        true projection block."""
        if key in tables:
            return
        for p in parents(key):
            ensure(p)
        tables.add(key)
        blocks[key] = projector.block(key)

    root = ((0,) * d, (0,) * d)
    ensure(root)
    frontier = [root]
    while frontier:
        added: list[ElementKey] = []
        for key in sorted(frontier, key=element_sort_key):
            norm = scale * float(np.linalg.norm(blocks[key]))
            if norm <= cfg.eps:
                continue
            for child in children(key, max_level=cfg.N):
                if child not in tables:
                    ensure(child)
                    added.append(child)
        frontier = added
    f = op.engine.scatter_element_blocks(list(blocks), np.stack([blocks[k] for k in blocks]))
    op.engine.set_mask_from_keys(tables.sorted_keys())
    f = op.engine.apply_mask(f)
    return tables, f


def predict(op: VlasovOperator, state: KineticState, rhs_fn, dt: float) -> KineticState:
    """Forward-Euler prediction on the current space, fields frozen at t^n."""
    return step_forward_euler(state, rhs_fn, dt)


def refine(op: VlasovOperator, tables: HashTables, f_pred: np.ndarray,
           cfg: AdaptConfig) -> bool:
    """Split every element whose predicted block norm exceeds eps.

    Traverses the whole table (not only leaves).  New children (and any
    closure ancestors) are zero-initialized, which is exact: an element
    absent from H has coefficient zero.  Returns True if H changed.
    """
    scale = _norm_scale(op, cfg)
    blocks = op.engine.gather_element_blocks(f_pred, tables.sorted_keys())
    norms = scale * np.linalg.norm(blocks, axis=1)
    changed = False
    for key, norm in zip(tables.sorted_keys(), norms):
        if norm <= cfg.eps:
            continue
        for child in children(key, max_level=cfg.N):
            if child not in tables:
                tables.add(child)
                changed = True
    return changed


def coarsen(op: VlasovOperator, tables: HashTables, f: np.ndarray,
            cfg: AdaptConfig) -> tuple[np.ndarray, bool]:
    """Remove leaves with block norm below eta until a fixed point.

    Removed coefficients are zeroed exactly (mask re-application); the root
    element is never removed.
    """
    d = op.geometry.d
    root = ((0,) * d, (0,) * d)
    scale = _norm_scale(op, cfg)
    changed = False
    while True:
        leaves = [key for key in tables.leaves if key != root]
        if not leaves:
            break
        blocks = op.engine.gather_element_blocks(f, leaves)
        norms = scale * np.linalg.norm(blocks, axis=1)
        removable = [key for key, nrm in zip(leaves, norms) if nrm < cfg.eta]
        if not removable:
            break
        for key in removable:
            tables.remove_leaf(key)
        changed = True
    if changed:
        op.engine.set_mask_from_keys(tables.sorted_keys())
        f = op.engine.apply_mask(f)
    return f, changed


class AdaptiveDriver:
    """Predict -> refine -> evolve -> coarsen cycle on the dense engine."""

    def __init__(self, op: VlasovOperator, tables: HashTables, cfg: AdaptConfig,
                 scheme: str = "tvd_rk3"):
        self.op = op
        self.tables = tables
        self.cfg = cfg
        self.scheme = scheme
        op.engine.set_mask_from_keys(tables.sorted_keys())

    def step(self, state: KineticState, rhs_fn, dt: float) -> KineticState:
        pred = predict(self.op, state, rhs_fn, dt)
        if refine(self.op, self.tables, pred.f, self.cfg):
            self.op.engine.set_mask_from_keys(self.tables.sorted_keys())
        new = rk_step(state, rhs_fn, dt, self.scheme)
        f, _ = coarsen(self.op, self.tables, new.f, self.cfg)
        new.f = f
        return new
