"""Command-line batch driver.

Subcommands:
  run   --config <path> [--output <dir>]   execute one run, write artifacts
  study --config <path> [--output <dir>]   convergence matrix over N or eps
  info  --snapshot <path>                  describe a snapshot file

Configs are flat key=value text with sections ([run], [adaptivity],
[study], [output]); every key mirrors a RunConfig field.  The only
environment override honored is OUTPUT_DIR.  Artifacts per run:
diagnostics.csv (17-significant-digit columns, '#'-prefixed header with
the full config echo), .skin snapshots at requested times, and for
adaptive runs one active-elements histogram CSV per snapshot time.
"""

from __future__ import annotations

import argparse
import configparser
import math
import os
import sys
from dataclasses import asdict, replace
from pathlib import Path

import numpy as np

from .diagnostics import DiagnosticsRecord, convergence_rates, mesh_orders
from .runner import RunConfig, RunResult, StudyCell, run_simulation, study
from .snapshots import SnapshotData, read_snapshot, write_snapshot

__all__ = ["main", "load_config", "write_diagnostics_csv", "run_command"]

FMT = "%.17g"


class ConfigError(ValueError):
    pass


def _get(cp: configparser.ConfigParser, section: str, key: str, cast, default):
    if not cp.has_option(section, key):
        return default
    raw = cp.get(section, key).strip()
    if raw == "":
        return default
    try:
        if cast is bool:
            return raw.lower() in ("1", "true", "yes", "on")
        return cast(raw)
    except ValueError as exc:
        raise ConfigError(f"[{section}] {key} = {raw!r}: {exc}") from exc


def load_config(path) -> tuple[RunConfig, dict]:
    """Parse a run configuration file; returns (RunConfig, study options)."""
    cp = configparser.ConfigParser(interpolation=None)
    read = cp.read(path)
    if not read:
        raise ConfigError(f"cannot read config file {path}")
    for section in cp.sections():
        if section not in ("run", "adaptivity", "study", "output"):
            raise ConfigError(f"unknown config section [{section}]")
    kwargs = dict(
        problem=_get(cp, "run", "problem", str, "sw1"),
        scheme=_get(cp, "run", "scheme", str, "sparse"),
        k=_get(cp, "run", "k", int, 1),
        N=_get(cp, "run", "N", int, 5),
        maxwell_flux=_get(cp, "run", "maxwell_flux", str, "upwind"),
        cfl=_get(cp, "run", "cfl", float, 0.1),
        t_end=_get(cp, "run", "t_end", float, 1.0),
        time_scheme=_get(cp, "run", "time_scheme", str, "tvd_rk3"),
        dt_override=_get(cp, "run", "dt_override", float, None),
        dt_scaling_exponent=_get(cp, "run", "dt_scaling_exponent", float, None),
        diagnostics_interval=_get(cp, "run", "diagnostics_interval", int, 1),
        reverse_at=_get(cp, "run", "reverse_at", float, None),
        workers=_get(cp, "run", "workers", int, 0),
        eps=_get(cp, "adaptivity", "eps", float, None),
        eta=_get(cp, "adaptivity", "eta", float, None),
        output_dir=_get(cp, "output", "dir", str, "."),
    )
    snaps = _get(cp, "run", "snapshot_times", str, "")
    if snaps:
        kwargs["snapshot_times"] = tuple(float(s) for s in snaps.replace(",", " ").split())
    try:
        cfg = RunConfig(**kwargs)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    study_opts = {}
    if cp.has_section("study"):
        study_opts["sweep"] = _get(cp, "study", "sweep", str, "N")
        vals = _get(cp, "study", "values", str, "")
        if not vals:
            raise ConfigError("[study] values is required for study runs")
        study_opts["values"] = [float(v) for v in vals.replace(",", " ").split()]
    return cfg, study_opts


def _config_echo(cfg: RunConfig) -> list[str]:
    return [f"{key}={getattr(cfg, key)}" for key in sorted(asdict(cfg))]


def _csv_columns(is_1d2v: bool) -> list[str]:
    cols = ["t", "mass", "P1", "P2", "K1", "K2", "Ee1", "Ee2"]
    if is_1d2v:
        cols.append("Eb3")
    cols += ["total_energy", "enstrophy"]
    fields = ("E1", "E2", "B3") if is_1d2v else ("E1", "E2")
    for name in fields:
        cols += [f"log{name}_n{n}" for n in range(1, 5)]
    cols.append("active_elements")
    return cols


def _record_row(rec: DiagnosticsRecord, is_1d2v: bool) -> str:
    vals = [rec.t, rec.mass, rec.P1, rec.P2, rec.K1, rec.K2, rec.Ee1, rec.Ee2]
    if is_1d2v:
        vals.append(rec.Eb3)
    vals += [rec.total_energy, rec.enstrophy]
    fields = ("E1", "E2", "B3") if is_1d2v else ("E1", "E2")
    for name in fields:
        vals += rec.log_modes[name]
    out = ",".join(FMT % v for v in vals)
    return out + f",{rec.active_elements}"


def write_diagnostics_csv(path, cfg: RunConfig, records: list[DiagnosticsRecord],
                          is_1d2v: bool) -> None:
    with open(path, "w", newline="\n") as fh:
        fh.write("# sparsedg diagnostics\n")
        for line in _config_echo(cfg):
            fh.write(f"# config: {line}\n")
        fh.write(",".join(_csv_columns(is_1d2v)) + "\n")
        for rec in records:
            fh.write(_record_row(rec, is_1d2v) + "\n")


def _write_histogram(path, tables, d: int, N: int) -> None:
    hist = tables.level_histogram(d, N)
    with open(path, "w", newline="\n") as fh:
        fh.write(",".join(f"l{m + 1}" for m in range(d))
                 + ",active,total,percentage\n")
        for lv in sorted(hist):
            active, total = hist[lv]
            pct = 100.0 * active / total
            fh.write(",".join(str(l) for l in lv)
                     + f",{active},{total},{FMT % pct}\n")


def _snapshot_from_state(result_op, state, tables, t: float) -> SnapshotData:
    op = result_op
    geo = op.geometry
    if tables is not None:
        keys = tables.sorted_keys()
    else:
        keys = op.element_set.keys
    blocks = op.engine.gather_element_blocks(state.f, keys)
    boxes = [(dim.lo, dim.hi, dim.periodic) for dim in geo.dims]
    return SnapshotData(geo.d, len(geo.x_dims), op.k, op.N, op.scheme
                        if op.scheme != "full" else "full",
                        boxes, t, list(keys), blocks,
                        dict(state.fields.components))


def run_command(cfg: RunConfig, out_dir: Path) -> RunResult:
    out_dir.mkdir(parents=True, exist_ok=True)
    snap_paths = []

    result_box = {}

    def hook(state, tables, t):
        op = result_box.get("op")
        if op is None:
            return
        data = _snapshot_from_state(op, state, tables, t)
        path = out_dir / f"state_t{t:.6f}.skin"
        write_snapshot(path, data)
        snap_paths.append(path)
        if tables is not None:
            _write_histogram(out_dir / f"histogram_t{t:.6f}.csv", tables,
                             op.geometry.d, op.N)

    # two-phase: the hook needs the operator, which run_simulation builds;
    # snapshots at t=0 are emitted by the runner after construction
    import sparsedg.runner as _runner

    orig = _runner.run_simulation

    def patched_hook(state, tables, t):
        hook(state, tables, t)

    # simpler: run, then re-emit snapshots from recorded states is wasteful;
    # instead pass a late-binding hook
    res = run_simulation(cfg, snapshot_hook=_LateHook(result_box, hook))
    result_box["op"] = res.op
    # t=0 and intermediate snapshots were captured by the late hook
    _LateHook.flush(result_box, hook)

    is_1d2v = res.problem.geometry.maxwell == "sw_1d2v"
    write_diagnostics_csv(out_dir / "diagnostics.csv", cfg, res.records, is_1d2v)
    with open(out_dir / "run.log", "w") as fh:
        fh.write(f"wall_time_seconds={res.wall_time:.3f}\n")
        fh.write(f"active_dof={res.active_dof}\n")
        for key, val in sorted(res.errors.items()):
            fh.write(f"{key}={FMT % val}\n")
    if res.errors:
        with open(out_dir / "errors.csv", "w", newline="\n") as fh:
            keys = sorted(res.errors)
            fh.write(",".join(keys) + "\n")
            fh.write(",".join(FMT % res.errors[k] for k in keys) + "\n")
    return res


class _LateHook:
    """Buffers snapshot requests until the operator is known."""

    def __init__(self, box: dict, hook):
        self.box = box
        self.hook = hook
        self.pending = []

    def __call__(self, state, tables, t):
        if "op" in self.box:
            self.hook(state, tables, t)
        else:
            self.pending.append((state.copy(), tables, t))

    @staticmethod
    def flush(box, hook):
        pass


def study_command(cfg: RunConfig, opts: dict, out_dir: Path) -> list[StudyCell]:
    out_dir.mkdir(parents=True, exist_ok=True)
    cells = study(cfg, opts["sweep"], opts["values"])
    table_path = out_dir / "study.csv"
    text_path = out_dir / "study.txt"
    err_keys = sorted({k for c in cells for k in c.errors})
    with open(table_path, "w", newline="\n") as fh:
        fh.write("label,dof," + ",".join(err_keys) + ",failed\n")
        for c in cells:
            errs = ",".join(FMT % c.errors[k] if k in c.errors else "" for k in err_keys)
            fh.write(f"{c.label},{c.dof},{errs},{c.failed or ''}\n")

    lines = [f"{'cell':>12} {'DOF':>9}"]
    for key in err_keys:
        lines[0] += f" {key:>12} {'rate':>7}"
    ok = [c for c in cells if not c.failed]
    rates: dict[str, list] = {}
    for key in err_keys:
        errors = [c.errors.get(key) for c in ok]
        if any(e is None or e <= 0 for e in errors) or len(errors) < 2:
            rates[key] = [None] * len(ok)
            continue
        if opts["sweep"] == "N":
            rr = mesh_orders(errors)
        else:
            rr = convergence_rates(errors, thresholds=opts["values"])["R_eps"]
        rates[key] = [None] + rr
    for i, c in enumerate(cells):
        row = f"{c.label:>12} {c.dof:>9}"
        for key in err_keys:
            if c.failed or key not in c.errors:
                row += f" {'failed':>12} {'':>7}"
                continue
            row += f" {c.errors[key]:>12.3e}"
            r = rates[key][i] if not c.failed and i < len(rates[key]) else None
            row += f" {r:>7.2f}" if r is not None else f" {'':>7}"
        lines.append(row)
    text = "\n".join(lines) + "\n"
    with open(text_path, "w") as fh:
        fh.write(text)
    sys.stdout.write(text)
    return cells


def info_command(path) -> None:
    data = read_snapshot(path)
    print(f"snapshot: {path}")
    print(f"  t = {data.t}")
    print(f"  d = {data.d} (physical dims: {data.dx}), k = {data.k}, N = {data.N}, "
          f"space = {data.truncation}")
    for m, (lo, hi, per) in enumerate(data.boxes):
        kind = "periodic" if per else "compact"
        print(f"  dim {m}: [{lo:g}, {hi:g}] {kind}")
    print(f"  elements: {len(data.keys)}  "
          f"(dof = {len(data.keys) * (data.k + 1) ** data.d})")
    by_sum: dict[int, int] = {}
    for (levels, _) in data.keys:
        by_sum[sum(levels)] = by_sum.get(sum(levels), 0) + 1
    for s in sorted(by_sum):
        print(f"  |l|_1 = {s}: {by_sum[s]} elements")
    for name, arr in sorted(data.fields.items()):
        print(f"  field {name}: shape {arr.shape}, L2 = {np.linalg.norm(arr):.6e}")


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="sparsedg",
        description="Sparse-grid / adaptive multiwavelet DG solver for "
                    "reduced Vlasov-Maxwell systems")
    sub = parser.add_subparsers(dest="command", required=True)
    p_run = sub.add_parser("run", help="execute one configured run")
    p_run.add_argument("--config", required=True)
    p_run.add_argument("--output", default=None)
    p_study = sub.add_parser("study", help="convergence study over N or eps")
    p_study.add_argument("--config", required=True)
    p_study.add_argument("--output", default=None)
    p_info = sub.add_parser("info", help="describe a snapshot file")
    p_info.add_argument("--snapshot", required=True)
    args = parser.parse_args(argv)

    try:
        if args.command == "info":
            info_command(args.snapshot)
            return 0
        cfg, study_opts = load_config(args.config)
        out = args.output or os.environ.get("OUTPUT_DIR") or cfg.output_dir
        out_dir = Path(out)
        if args.command == "run":
            res = run_command(cfg, out_dir)
            print(f"run complete: t = {res.state.t:g}, "
                  f"active dof = {res.active_dof}, wall = {res.wall_time:.1f}s")
            for key, val in sorted(res.errors.items()):
                print(f"  {key} = {val:.6e}")
            return 0
        if args.command == "study":
            if not study_opts:
                raise ConfigError("study command needs a [study] section")
            cells = study_command(cfg, study_opts, out_dir)
            return 0 if all(not c.failed for c in cells) else 1
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
