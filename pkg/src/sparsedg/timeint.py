"""Explicit time stepping: TVD-RK3 (default), classical RK4, forward Euler.

The integrators are written against a tiny state protocol: a state is any
object supporting `linear_combination([(w, state), ...], dt_rhs_pairs)`;
in practice the solveruses `KineticState`, a (f, fields) pair of coefficient
arrays.  The CFL rule follows the finest-mesh formula
dt = CFL / sum_m (c_m / h_m) with per-dimension physical cell widths.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .operators import EMField, NumericalBlowupError

__all__ = ["TimeConfig", "KineticState", "compute_dt", "step", "step_tvd_rk3",
           "step_rk4", "step_forward_euler"]

SCHEMES = ("tvd_rk3", "rk4", "forward_euler")


@dataclass(frozen=True)
class TimeConfig:
    cfl: float = 0.1
    t_end: float = 0.0
    scheme: str = "tvd_rk3"
    dt_override: float | None = None
    dt_scaling_exponent: float | None = None  # dt ~ h_N^e for accuracy runs

    def __post_init__(self):
        if self.cfl <= 0:
            raise ValueError("cfl must be positive")
        if self.t_end < 0:
            raise ValueError("t_end must be nonnegative")
        if self.scheme not in SCHEMES:
            raise ValueError(f"scheme must be one of {SCHEMES}")


@dataclass
class KineticState:
    """Distribution coefficients plus field coefficients at one time level."""

    f: np.ndarray
    fields: EMField
    t: float = 0.0

    def copy(self) -> "KineticState":
        return KineticState(self.f.copy(), self.fields.copy(), self.t)

    def combine(self, parts: list[tuple[float, "KineticState"]]) -> "KineticState":
        f = sum(w * s.f for w, s in parts)
        comps = {}
        for name in self.fields.components:
            comps[name] = sum(w * s.fields[name] for w, s in parts)
        t = sum(w * s.t for w, s in parts)
        return KineticState(f, EMField(comps), t)


def compute_dt(speeds: dict[int, float], widths: dict[int, float], cfl: float,
               scaling_exponent: float | None = None, h_ref: float = 1.0) -> float:
    """CFL time step dt = cfl / sum_m (c_m / h_m).

    With a scaling exponent e the step is reduced by (h_ref)^(e-1) where
    h_ref is the dimensionless finest mesh size 2^-N, giving dt = O(h^e)
    while staying below the plain CFL step for h_ref < 1.
    """
    denom = 0.0
    for m, c in speeds.items():
        if c < 0:
            raise ValueError("wave speeds must be nonnegative")
        denom += c / widths[m]
    if denom <= 0.0:
        raise ValueError("all wave speeds vanish; no dynamics to resolve")
    dt = cfl / denom
    if scaling_exponent is not None:
        dt *= h_ref ** (scaling_exponent - 1.0)
    return dt


def _stage(state: KineticState, rhs_fn, dt: float,
           parts: list[tuple[float, KineticState]], rhs_weight: float,
           rhs_state: KineticState) -> KineticState:
    df, dfields = rhs_fn(rhs_state)
    out_f = sum(w * s.f for w, s in parts) + rhs_weight * dt * df
    comps = {}
    for name in state.fields.components:
        comps[name] = sum(w * s.fields[name] for w, s in parts) + \
            rhs_weight * dt * dfields.get(name, 0.0)
    if not np.all(np.isfinite(out_f)):
        raise NumericalBlowupError(f"blow-up at t={state.t:.6g}")
    return KineticState(out_f, EMField(comps), state.t)


def step_forward_euler(state: KineticState, rhs_fn, dt: float) -> KineticState:
    out = _stage(state, rhs_fn, dt, [(1.0, state)], 1.0, state)
    out.t = state.t + dt
    return out


def step_tvd_rk3(state: KineticState, rhs_fn, dt: float) -> KineticState:
    """u1 = u + dt R(u); u2 = 3/4 u + 1/4 u1 + 1/4 dt R(u1);
    u^{n+1} = 1/3 u + 2/3 u2 + 2/3 dt R(u2)."""
    u1 = _stage(state, rhs_fn, dt, [(1.0, state)], 1.0, state)
    u2 = _stage(state, rhs_fn, dt, [(0.75, state), (0.25, u1)], 0.25, u1)
    out = _stage(state, rhs_fn, dt, [(1.0 / 3.0, state), (2.0 / 3.0, u2)], 2.0 / 3.0, u2)
    out.t = state.t + dt
    return out


def step_rk4(state: KineticState, rhs_fn, dt: float) -> KineticState:
    """Classical four-stage Runge-Kutta."""
    k1 = rhs_fn(state)
    s2 = _combine_rhs(state, k1, 0.5 * dt)
    k2 = rhs_fn(s2)
    s3 = _combine_rhs(state, k2, 0.5 * dt)
    k3 = rhs_fn(s3)
    s4 = _combine_rhs(state, k3, dt)
    k4 = rhs_fn(s4)
    f = state.f + dt / 6.0 * (k1[0] + 2 * k2[0] + 2 * k3[0] + k4[0])
    comps = {}
    for name in state.fields.components:
        comps[name] = state.fields[name] + dt / 6.0 * (
            k1[1].get(name, 0.0) + 2 * k2[1].get(name, 0.0)
            + 2 * k3[1].get(name, 0.0) + k4[1].get(name, 0.0))
    if not np.all(np.isfinite(f)):
        raise NumericalBlowupError(f"blow-up at t={state.t:.6g}")
    return KineticState(f, EMField(comps), state.t + dt)


def _combine_rhs(state: KineticState, k, scale: float) -> KineticState:
    comps = {name: state.fields[name] + scale * k[1].get(name, 0.0)
             for name in state.fields.components}
    return KineticState(state.f + scale * k[0], EMField(comps), state.t)


def step(state: KineticState, rhs_fn, dt: float, scheme: str = "tvd_rk3") -> KineticState:
    if scheme == "tvd_rk3":
        return step_tvd_rk3(state, rhs_fn, dt)
    if scheme == "rk4":
        return step_rk4(state, rhs_fn, dt)
    if scheme == "forward_euler":
        return step_forward_euler(state, rhs_fn, dt)
    raise ValueError(f"unknown scheme {scheme!r}")
