"""Batch run driver: configuration, time loop, and the study protocol.

A run is deterministic: fixed element order, fixed reduction order, no
wall-clock content in the data files.  The reversibility protocol (evolve
to T, flip velocities and magnetic field, evolve to 2T, compare with the
initial state) doubles as the accuracy benchmark.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
import math
import time

import numpy as np

from . import adaptivity as adapt
from .diagnostics import Diagnostics, DiagnosticsRecord, f_error_l2, f_error_linf, field_error_l2
from .operators import EMField, FluxConfig, VlasovOperator
from .problems import Problem, initial_state, landau_setup, reverse_state, sw_setup
from .timeint import KineticState, compute_dt, step as rk_step

__all__ = ["RunConfig", "RunResult", "build_problem", "run_simulation", "study"]

PROBLEMS = ("sw1", "sw2", "landau_weak", "landau_strong")
SCHEMES = ("full", "sparse", "adaptive")


@dataclass(frozen=True)
class RunConfig:
    problem: str = "sw1"
    scheme: str = "sparse"
    k: int = 1
    N: int = 5
    eps: float | None = None
    eta: float | None = None
    maxwell_flux: str = "upwind"
    cfl: float = 0.1
    t_end: float = 1.0
    time_scheme: str = "tvd_rk3"
    dt_override: float | None = None
    dt_scaling_exponent: float | None = None
    diagnostics_interval: int = 1
    snapshot_times: tuple[float, ...] = ()
    output_dir: str = "."
    reverse_at: float | None = None
    workers: int = 0  # study-level parallelism; 0 = no process pool
    compute_linf: bool = False

    def __post_init__(self):
        if self.problem not in PROBLEMS:
            raise ValueError(f"problem must be one of {PROBLEMS}")
        if self.scheme not in SCHEMES:
            raise ValueError(f"scheme must be one of {SCHEMES}")
        if self.scheme == "adaptive" and self.eps is None:
            raise ValueError("adaptive runs require an eps threshold")
        if self.scheme != "adaptive" and self.eps is not None:
            raise ValueError("eps is only meaningful for adaptive runs")
        if self.diagnostics_interval < 1:
            raise ValueError("diagnostics_interval must be >= 1")


@dataclass
class RunResult:
    config: RunConfig
    records: list[DiagnosticsRecord]
    state: KineticState
    op: VlasovOperator
    problem: Problem
    active_dof: int
    errors: dict[str, float] = field(default_factory=dict)
    tables: object | None = None
    wall_time: float = 0.0
    l2_history: list[float] = field(default_factory=list)


def build_problem(name: str) -> Problem:
    if name == "sw1":
        return sw_setup(1)
    if name == "sw2":
        return sw_setup(2)
    if name == "landau_weak":
        return landau_setup("weak")
    if name == "landau_strong":
        return landau_setup("strong")
    raise ValueError(name)


def _active_elements(op: VlasovOperator, tables) -> int:
    if tables is not None:
        return len(tables)
    return op.element_set.n_elements


def run_simulation(cfg: RunConfig, snapshot_hook=None) -> RunResult:
    """Execute one run; snapshot_hook(state, tables, t) is called at requested times."""
    t_start = time.perf_counter()
    problem = build_problem(cfg.problem)
    op = VlasovOperator(problem.geometry, cfg.k, cfg.N, cfg.scheme,
                        FluxConfig(cfg.maxwell_flux))
    geo = problem.geometry

    tables = None
    if cfg.scheme == "adaptive":
        acfg = adapt.AdaptConfig(cfg.N, cfg.k, cfg.eps, cfg.eta)
        projector = adapt.SeparableProjector(op, problem.f0_separable)
        tables, f = adapt.adaptive_project(op, projector, acfg)
        comps = {name: op.project_field(problem.field_init[name])
                 for name in geo.field_names}
        fields = EMField(comps)
        driver = adapt.AdaptiveDriver(op, tables, acfg, cfg.time_scheme)
    else:
        f, fields = initial_state(op, problem)
        driver = None

    state = KineticState(f, fields, 0.0)
    diag = Diagnostics(op, problem.log_mode_wavenumber)
    records = [diag.record(state, _active_elements(op, tables))]
    l2_history = [op.l2_norm_sq(state.f)]

    events = {round(float(cfg.t_end), 12)}
    if cfg.reverse_at is not None:
        events.add(round(float(cfg.reverse_at), 12))
    for t in cfg.snapshot_times:
        events.add(round(float(t), 12))
    if snapshot_hook is not None and any(abs(t) < 1e-12 for t in cfg.snapshot_times):
        snapshot_hook(state, tables, 0.0)

    widths = {m: geo.dims[m].length * 2.0 ** (-cfg.N) for m in range(geo.d)}
    h_ref = 2.0 ** (-cfg.N)
    nstep = 0
    reversed_already = cfg.reverse_at is None

    while state.t < cfg.t_end - 1e-12:
        alpha1, alpha2 = op.alpha_bounds(state.fields)
        speeds = dict(alpha1)
        speeds.update(alpha2)
        if cfg.dt_override is not None:
            dt = cfg.dt_override
        else:
            dt = compute_dt(speeds, widths, cfg.cfl, cfg.dt_scaling_exponent, h_ref)
        next_event = min((t for t in events if t > state.t + 1e-12),
                         default=cfg.t_end)
        dt = min(dt, next_event - state.t)

        def rhs_fn(s: KineticState, _alpha2=alpha2):
            J = op.compute_current(s.f)
            return op.vlasov_rhs(s.f, s.fields, _alpha2), op.maxwell_rhs(s.fields, J)

        if driver is not None:
            state = driver.step(state, rhs_fn, dt)
        else:
            state = rk_step(state, rhs_fn, dt, cfg.time_scheme)
        nstep += 1
        l2_history.append(op.l2_norm_sq(state.f))

        at_event = any(abs(state.t - t) < 1e-10 for t in events)
        if nstep % cfg.diagnostics_interval == 0 or at_event:
            records.append(diag.record(state, _active_elements(op, tables),
                                       time.perf_counter() - t_start))
        if not reversed_already and abs(state.t - cfg.reverse_at) < 1e-10:
            state.f, state.fields = reverse_state(op, state.f, state.fields)
            reversed_already = True
        if snapshot_hook is not None and \
                any(abs(state.t - t) < 1e-10 for t in cfg.snapshot_times):
            snapshot_hook(state, tables, state.t)

    errors: dict[str, float] = {}
    if cfg.reverse_at is not None:
        fr, fieldsr = reverse_state(op, state.f, state.fields)
        errors["f_l2"] = f_error_l2(op, fr, problem.f0_separable)
        names = tuple(n for n in geo.field_names if n.startswith("E"))
        errors["E_l2"] = field_error_l2(op, fieldsr, problem.field_init, names)
        if "B3" in geo.field_names:
            errors["B_l2"] = field_error_l2(op, fieldsr, problem.field_init, ("B3",))
        if cfg.compute_linf:
            errors["f_linf"] = f_error_linf(op, fr, problem.f0_separable)

    active_dof = _active_elements(op, tables) * op.element_set.block_size
    return RunResult(cfg, records, state, op, problem, active_dof, errors,
                     tables, time.perf_counter() - t_start, l2_history)


@dataclass
class StudyCell:
    label: str
    config: RunConfig
    errors: dict[str, float]
    dof: int
    failed: str | None = None


def _run_cell(args) -> StudyCell:
    label, cfg = args
    try:
        res = run_simulation(cfg)
        return StudyCell(label, cfg, res.errors, res.active_dof)
    except Exception as exc:  # noqa: BLE001 - study cells report, not crash
        return StudyCell(label, cfg, {}, 0, failed=f"{type(exc).__name__}: {exc}")


def study(base: RunConfig, sweep: str, values: list) -> list[StudyCell]:
    """Run a convergence matrix over N (sparse/full) or eps (adaptive).

    With base.workers > 1 the cells run in separate processes; per-cell
    outputs are deterministic either way because each run is sequential.
    """
    jobs = []
    for v in values:
        if sweep == "N":
            cfg = replace(base, N=int(v))
            label = f"N={int(v)}"
        elif sweep == "eps":
            cfg = replace(base, eps=float(v))
            label = f"eps={float(v):g}"
        else:
            raise ValueError("sweep must be 'N' or 'eps'")
        jobs.append((label, cfg))
    if base.workers and base.workers > 1:
        import concurrent.futures as cf
        with cf.ProcessPoolExecutor(max_workers=base.workers) as pool:
            return list(pool.map(_run_cell, jobs))
    return [_run_cell(job) for job in jobs]
