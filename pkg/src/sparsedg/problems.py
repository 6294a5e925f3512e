"""Benchmark problem definitions.

Two kinetic benchmarks are provided: the 1D2V streaming Weibel instability
(reduced Vlasov-Maxwell with one spatial and two velocity coordinates) and
2D2V Landau damping for the Vlasov-Ampere system.  Initial data are sums of
separable factors, which both the projection and the error norms exploit.

All problems are posed on physical boxes; periodicity in the spatial
directions, compactly supported distributions in the velocity directions.
"""

from __future__ import annotations

from dataclasses import dataclass
import math

import numpy as np

from .operators import EMField, ForceTerm, Geometry, Transport, VlasovOperator
from .spaces import Dimension

__all__ = ["SWParams", "LandauParams", "sw_geometry", "landau_geometry",
           "advection_geometry", "free_transport_geometry_1d1v",
           "sw_setup", "landau_setup", "reverse_state", "Problem"]


@dataclass(frozen=True)
class SWParams:
    """Streaming Weibel parameters; beta is the squared thermal velocity."""

    delta: float
    v01: float
    v02: float
    k0: float = 0.2
    beta: float = 0.01
    b: float = 0.001
    xi_max: float = 1.2

    @property
    def length(self) -> float:
        return 2.0 * math.pi / self.k0


@dataclass(frozen=True)
class LandauParams:
    alpha: float
    k1: float = 0.5
    k2: float = 0.5
    xi_max: float = 6.0

    @property
    def lengths(self) -> tuple[float, float]:
        return (4.0 * math.pi, 4.0 * math.pi)


@dataclass
class Problem:
    """Everything a run needs: geometry, initial data, diagnostics hooks."""

    name: str
    geometry: Geometry
    f0_separable: list[tuple[float, list]]
    field_init: dict  # name -> 1D callable or list of separable terms (2D)
    params: object
    log_mode_wavenumber: float


def _gaussian(center: float, beta: float):
    return lambda x: np.exp(-((x - center) ** 2) / beta)


def sw_geometry(params: SWParams) -> Geometry:
    dims = (
        Dimension("x2", 0.0, params.length, periodic=True, kind="x"),
        Dimension("xi1", -params.xi_max, params.xi_max, periodic=False, kind="v"),
        Dimension("xi2", -params.xi_max, params.xi_max, periodic=False, kind="v"),
    )
    # f_t + xi2 f_x2 + (E1 + xi2 B3) f_xi1 + (E2 - xi1 B3) f_xi2 = 0
    transport = (Transport(x_dim=0, speed_dim=2),)
    forces = (
        ForceTerm("E1", xi_dim=1, coord_dim=None, sign=+1.0),
        ForceTerm("B3", xi_dim=1, coord_dim=2, sign=+1.0),
        ForceTerm("E2", xi_dim=2, coord_dim=None, sign=+1.0),
        ForceTerm("B3", xi_dim=2, coord_dim=1, sign=-1.0),
    )
    return Geometry(dims, transport, forces, maxwell="sw_1d2v",
                    field_names=("E1", "E2", "B3"))


def sw_setup(choice: int) -> Problem:
    """Streaming Weibel configuration 1 (symmetric) or 2 (non-symmetric)."""
    if choice == 1:
        params = SWParams(delta=0.5, v01=0.3, v02=0.3)
    elif choice == 2:
        params = SWParams(delta=1.0 / 6.0, v01=0.5, v02=0.1)
    else:
        raise ValueError("streaming Weibel parameter choice must be 1 or 2")
    geo = sw_geometry(params)
    amp = 1.0 / (math.pi * params.beta)
    one = lambda x: np.ones_like(np.asarray(x, dtype=float))
    f0 = [
        (amp * params.delta,
         [one, _gaussian(params.v01, params.beta), _gaussian(0.0, params.beta)]),
        (amp * (1.0 - params.delta),
         [one, _gaussian(-params.v02, params.beta), _gaussian(0.0, params.beta)]),
    ]
    b, k0 = params.b, params.k0
    field_init = {
        "E1": lambda x: np.zeros_like(np.asarray(x, dtype=float)),
        "E2": lambda x: np.zeros_like(np.asarray(x, dtype=float)),
        "B3": lambda x: b * np.sin(k0 * x),
    }
    return Problem(f"sw{choice}", geo, f0, field_init, params, params.k0)


def landau_geometry(params: LandauParams) -> Geometry:
    Lx, Ly = params.lengths
    dims = (
        Dimension("x1", 0.0, Lx, periodic=True, kind="x"),
        Dimension("x2", 0.0, Ly, periodic=True, kind="x"),
        Dimension("xi1", -params.xi_max, params.xi_max, periodic=False, kind="v"),
        Dimension("xi2", -params.xi_max, params.xi_max, periodic=False, kind="v"),
    )
    transport = (Transport(x_dim=0, speed_dim=2), Transport(x_dim=1, speed_dim=3))
    forces = (
        ForceTerm("E1", xi_dim=2, coord_dim=None, sign=+1.0),
        ForceTerm("E2", xi_dim=3, coord_dim=None, sign=+1.0),
    )
    return Geometry(dims, transport, forces, maxwell="ampere_2d",
                    field_names=("E1", "E2"))


def landau_setup(strength: str) -> Problem:
    """2D2V Landau damping, weak (alpha = 0.01) or strong (alpha = 0.5)."""
    if strength == "weak":
        params = LandauParams(alpha=0.01)
    elif strength == "strong":
        params = LandauParams(alpha=0.5)
    else:
        raise ValueError("landau strength must be 'weak' or 'strong'")
    geo = landau_geometry(params)
    a, k1, k2 = params.alpha, params.k1, params.k2
    one = lambda x: np.ones_like(np.asarray(x, dtype=float))
    maxw = lambda xi: np.exp(-xi ** 2 / 2.0)
    amp = 1.0 / (2.0 * math.pi)
    f0 = [
        (amp, [one, one, maxw, maxw]),
        (amp * a, [lambda x: np.cos(k1 * x), one, maxw, maxw]),
        (amp * a, [one, lambda x: np.cos(k2 * x), maxw, maxw]),
    ]
    zero = lambda x: np.zeros_like(np.asarray(x, dtype=float))
    field_init = {
        "E1": [(a / k1, [lambda x: np.sin(k1 * x), one])],
        "E2": [(a / k2, [one, lambda x: np.sin(k2 * x)])],
    }
    return Problem(f"landau_{strength}", geo, f0, field_init, params, params.k1)


def advection_geometry(L: float = 1.0, speed: float = 1.0) -> Geometry:
    """1D constant-speed periodic advection (operator oracle problem)."""
    dims = (Dimension("x", 0.0, L, periodic=True, kind="x"),)
    return Geometry(dims, (Transport(x_dim=0, speed_dim=None, speed=speed),))


def free_transport_geometry_1d1v(L: float = 1.0, xi_max: float = 1.0) -> Geometry:
    """1D1V free streaming f_t + xi f_x = 0 (adaptivity oracle problem)."""
    dims = (
        Dimension("x", 0.0, L, periodic=True, kind="x"),
        Dimension("xi", -xi_max, xi_max, periodic=False, kind="v"),
    )
    return Geometry(dims, (Transport(x_dim=0, speed_dim=1),))


def initial_state(op: VlasovOperator, problem: Problem):
    """Project the problem's initial data onto the operator's spaces."""
    f = op.project_separable(problem.f0_separable)
    comps = {}
    for name in problem.geometry.field_names:
        comps[name] = op.project_field(problem.field_init[name])
    return f, EMField(comps)


def reverse_state(op: VlasovOperator, f: np.ndarray, fields: EMField
                  ) -> tuple[np.ndarray, EMField]:
    """Time-reversal map: f(xi) -> f(-xi), B -> -B, E unchanged.

    Exact on coefficients: velocity reflection is a signed slot permutation
    in each velocity dimension (cells mirror, polynomials pick up their
    parity sign), so applying it twice is the bitwise identity.
    """
    geo = op.geometry
    for m in geo.xi_dims:
        dim = geo.dims[m]
        if abs(dim.lo + dim.hi) > 1e-14 * max(1.0, abs(dim.hi)):
            raise ValueError(f"velocity box of {dim.label} is not symmetric about 0")
    if op.scheme == "sparse":
        f = _reverse_sparse(op, f)
    else:
        f = _reverse_dense(op, f)
    comps = {}
    for name, arr in fields.components.items():
        comps[name] = -arr if name.startswith("B") else arr.copy()
    return f, EMField(comps)


def _reverse_dense(op: VlasovOperator, f: np.ndarray) -> np.ndarray:
    out = f
    for m in op.geometry.xi_dims:
        # the permutation is an involution and the sign depends only on the
        # polynomial index, so coefficients map as sign * c[perm]
        perm, sign = op.bases[m].reflection()
        shape = [1] * out.ndim
        shape[m] = perm.size
        out = np.take(out, perm, axis=m) * sign.reshape(shape)
    return out


def _reverse_sparse(op: VlasovOperator, f: np.ndarray) -> np.ndarray:
    eset = op.element_set
    ds = eset.dim_slots
    d = op.geometry.d
    M = [op.bases[m].M for m in range(d)]
    sign = np.ones(eset.n_dof)
    slots = []
    for m in range(d):
        if m in op.geometry.xi_dims:
            perm, sg = op.bases[m].reflection()
            slots.append(perm[ds[m]])
            sign *= sg[ds[m]]
        else:
            slots.append(ds[m])
    code = np.zeros(eset.n_dof, dtype=np.int64)
    own = np.zeros(eset.n_dof, dtype=np.int64)
    for m in range(d):
        code = code * M[m] + slots[m]
        own = own * M[m] + ds[m]
    order = np.argsort(own)
    pos = np.searchsorted(own[order], code)
    target = order[pos]
    out = np.zeros_like(f)
    out[target] = sign * f
    return out
