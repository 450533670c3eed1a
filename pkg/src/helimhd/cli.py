"""Batch driver: simulate / convergence / conserve / operator-tests.

Configuration is flat key = value text with sections (INI); unknown
sections or keys are errors, for reproducibility.  Exit codes: 0 success,
1 a tolerance or rate threshold was breached, 2 configuration error,
3 solver failure.  The output directory comes from --out, else the
HELIMHD_OUT environment variable, else [output] dir, else ./helimhd-out.

Identical configurations produce bitwise-identical CSV outputs: assembly
and factorisation orders are fixed and no timestamps are written.
"""

from __future__ import annotations

import argparse
import configparser
import math
import os
import sys

import numpy as np

EXIT_OK = 0
EXIT_TOLERANCE = 1
EXIT_CONFIG = 2
EXIT_SOLVER = 3

_SCHEMA = {
    "mesh": {"n", "box"},
    "model": {"k", "case", "initial"},
    "physics": {"re", "rm", "re_inv", "rm_inv", "sc", "mu"},
    "time": {"t_final", "dt"},
    "solver": {"tol", "max_iters", "scheme"},
    "output": {"dir", "cadence", "vtk", "figures"},
    "convergence": {"levels", "t_final", "dt_factor", "threshold"},
    "conserve": {"steps", "div_tol", "drift_tol", "balance_tol"},
    "operator-tests": {"levels", "tol_commuting", "tol_projector",
                       "tol_adjoint"},
}


class ConfigError(ValueError):
    pass


class RunConfig(dict):
    """Validated configuration; plain nested dict with typed getters."""

    def get_in(self, section, key, default=None):
        return self.get(section, {}).get(key, default)


def load_config(path) -> RunConfig:
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    try:
        with open(path) as fh:
            parser.read_file(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}")
    except configparser.Error as exc:
        raise ConfigError(f"malformed config file {path}: {exc}")
    cfg = RunConfig()
    for section in parser.sections():
        if section not in _SCHEMA:
            raise ConfigError(f"unknown config section [{section}]")
        cfg[section] = {}
        for key, value in parser.items(section):
            if key not in _SCHEMA[section]:
                raise ConfigError(
                    f"unknown config key '{key}' in section [{section}]")
            cfg[section][key] = value
    return cfg


def _as_float(cfg, section, key, default):
    raw = cfg.get_in(section, key)
    if raw is None:
        return default
    try:
        return float(raw)
    except ValueError:
        raise ConfigError(f"config key '{key}' in [{section}] must be a "
                          f"number, got {raw!r}")


def _as_int(cfg, section, key, default):
    raw = cfg.get_in(section, key)
    if raw is None:
        return default
    try:
        return int(raw)
    except ValueError:
        raise ConfigError(f"config key '{key}' in [{section}] must be an "
                          f"integer, got {raw!r}")


def _as_bool(cfg, section, key, default):
    raw = cfg.get_in(section, key)
    if raw is None:
        return default
    low = raw.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"config key '{key}' in [{section}] must be a "
                      f"boolean, got {raw!r}")


def _as_int_list(cfg, section, key, default):
    raw = cfg.get_in(section, key)
    if raw is None:
        return list(default)
    try:
        return [int(tok) for tok in raw.replace(",", " ").split()]
    except ValueError:
        raise ConfigError(f"config key '{key}' in [{section}] must be a "
                          f"list of integers, got {raw!r}")


def _params(cfg):
    from .solver import PhysParams
    re_raw = cfg.get_in("physics", "re")
    rm_raw = cfg.get_in("physics", "rm")
    re_inv = _as_float(cfg, "physics", "re_inv", None)
    rm_inv = _as_float(cfg, "physics", "rm_inv", None)
    if re_raw is not None and re_inv is not None:
        raise ConfigError("config keys 're' and 're_inv' are exclusive")
    if rm_raw is not None and rm_inv is not None:
        raise ConfigError("config keys 'rm' and 'rm_inv' are exclusive")
    if re_inv is None:
        re_inv = 0.0 if re_raw in (None, "inf") else 1.0 / float(re_raw)
    if rm_inv is None:
        rm_inv = 0.0 if rm_raw in (None, "inf") else 1.0 / float(rm_raw)
    try:
        return PhysParams(re_inv=re_inv, rm_inv=rm_inv,
                          sc=_as_float(cfg, "physics", "sc", 1.0),
                          mu=_as_float(cfg, "physics", "mu", 1.0))
    except ValueError as exc:
        raise ConfigError(str(exc))


def _box(cfg):
    raw = cfg.get_in("mesh", "box")
    if raw is None:
        return ((0.0, 1.0), (0.0, 1.0), (0.0, 1.0))
    vals = [float(tok) for tok in raw.replace(",", " ").split()]
    if len(vals) != 6:
        raise ConfigError("config key 'box' needs six numbers "
                          "(xlo xhi ylo yhi zlo zhi)")
    return tuple((vals[2 * d], vals[2 * d + 1]) for d in range(3))


def _mesh(cfg):
    from .mesh import build_box_mesh
    n = _as_int(cfg, "mesh", "n", None)
    if n is None:
        raise ConfigError("config key 'n' in [mesh] is required")
    try:
        return build_box_mesh(n, _box(cfg))
    except ValueError as exc:
        raise ConfigError(str(exc))


def _outdir(cfg, args) -> str:
    out = args.out or os.environ.get("HELIMHD_OUT") \
        or cfg.get_in("output", "dir") or "helimhd-out"
    os.makedirs(out, exist_ok=True)
    return out


def _solver_options(cfg):
    scheme = cfg.get_in("solver", "scheme", "auto")
    if scheme not in ("auto", "picard", "newton"):
        raise ConfigError(f"config key 'scheme' must be auto, picard or "
                          f"newton, got {scheme!r}")
    return dict(tol=_as_float(cfg, "solver", "tol", 1e-12),
                max_iters=_as_int(cfg, "solver", "max_iters", 50),
                scheme=scheme)


def _build_run(cfg):
    """(system, state0) for simulate/conserve runs."""
    from .manufactured import build_case, initial_data
    from .solver import MhdSystem
    params = _params(cfg)
    mesh = _mesh(cfg)
    k = _as_int(cfg, "model", "k", 0)
    case_name = cfg.get_in("model", "case")
    initial_name = cfg.get_in("model", "initial")
    if case_name and initial_name:
        raise ConfigError("config keys 'case' and 'initial' are exclusive")
    if not case_name and not initial_name:
        raise ConfigError("config key 'case' or 'initial' in [model] "
                          "is required")
    try:
        if case_name:
            case = build_case(case_name, params)
            system = MhdSystem(mesh, params, source=case.source(), k=k,
                               **_solver_options(cfg))
            state = system.init_state(case.u, case.B)
        else:
            u0, b0 = initial_data(initial_name)
            system = MhdSystem(mesh, params, k=k, **_solver_options(cfg))
            state = system.init_state(u0, b0)
    except ValueError as exc:
        raise ConfigError(str(exc))
    return system, state


def _time_loop(system, state, steps, dt, outdir, cfg, quiet):
    """Run steps, collecting one report row per step; returns (rows, rc)."""
    from . import diagnostics as diag
    from .mesh import write_vtk
    from .solver import SolverError
    cadence = _as_int(cfg, "output", "cadence", 0)
    write_snaps = _as_bool(cfg, "output", "vtk", False)
    rows = [diag.report_state(system, state)]
    rc = EXIT_OK
    for step in range(1, steps + 1):
        try:
            new_state = system.step_midpoint(state, dt)
        except SolverError as exc:
            print(f"solver failure at step {step} (t={state.t:.6g}): {exc}",
                  file=sys.stderr)
            rc = EXIT_SOLVER
            break
        rows.append(diag.report_step(system, state, new_state))
        state = new_state
        if write_snaps and cadence and step % cadence == 0:
            asm = system.asm
            write_vtk(system.mesh,
                      os.path.join(outdir, f"state_{step:06d}.vtk"),
                      point_scalars={"P": state.p},
                      point_vectors={"u": asm.vertex_values(system.ned,
                                                            state.u)},
                      cell_vectors={"B": asm.cell_values(system.rt,
                                                         state.b)})
        if not quiet and (step % max(1, steps // 10) == 0 or step == steps):
            r = rows[-1]
            print(f"  step {step:5d}/{steps} t={state.t:.4f} "
                  f"energy={r.energy:.9e} divB={r.div_b_max:.2e}")
    return rows, state, rc


def cmd_simulate(cfg, args) -> int:
    from . import reporting
    outdir = _outdir(cfg, args)
    t_final = _as_float(cfg, "time", "t_final", None)
    dt = _as_float(cfg, "time", "dt", None)
    if t_final is None or dt is None:
        raise ConfigError("config keys 't_final' and 'dt' in [time] are "
                          "required")
    if not 0 < dt <= t_final:
        raise ConfigError("config needs 0 < dt <= t_final")
    system, state = _build_run(cfg)
    steps = int(round(t_final / dt))
    rows, state, rc = _time_loop(system, state, steps, dt, outdir, cfg,
                                 args.quiet)
    reporting.write_timeseries_csv(rows, os.path.join(outdir,
                                                      "timeseries.csv"))
    if _as_bool(cfg, "output", "figures", True):
        reporting.timeseries_figures(rows, outdir)
    if not args.quiet:
        print(f"wrote {os.path.join(outdir, 'timeseries.csv')} "
              f"({len(rows)} rows)")
    return rc


def cmd_conserve(cfg, args) -> int:
    from . import reporting
    outdir = _outdir(cfg, args)
    dt = _as_float(cfg, "time", "dt", 0.01)
    steps = _as_int(cfg, "conserve", "steps", 50)
    div_tol = _as_float(cfg, "conserve", "div_tol", 1e-12)
    drift_tol = _as_float(cfg, "conserve", "drift_tol", 1e-8)
    balance_tol = _as_float(cfg, "conserve", "balance_tol", 1e-8)
    system, state = _build_run(cfg)
    rows, state, rc = _time_loop(system, state, steps, dt, outdir, cfg,
                                 args.quiet)
    reporting.write_timeseries_csv(rows, os.path.join(outdir,
                                                      "conservation.csv"))
    if _as_bool(cfg, "output", "figures", True):
        reporting.timeseries_figures(rows, outdir)
    if rc != EXIT_OK:
        return rc

    failures = []
    max_div = max(r.div_b_max for r in rows)
    if max_div > div_tol:
        failures.append(f"magnetic Gauss law: max |D2 B| = {max_div:.3e} "
                        f"> {div_tol:g}")
    ideal_free = system.params.is_ideal and system.source.f is None \
        and system.source.g_b is None
    if ideal_free:
        for label, attr in [("energy", "energy"),
                            ("magnetic helicity", "magnetic_helicity"),
                            ("cross helicity", "cross_helicity")]:
            v0 = getattr(rows[0], attr)
            drift = max(abs(getattr(r, attr) - v0) for r in rows) \
                / max(abs(v0), 1e-30)
            if drift > drift_tol:
                failures.append(f"{label} drift {drift:.3e} > {drift_tol:g}")
    else:
        worst_e = max(r.energy_residual for r in rows[1:])
        if worst_e > balance_tol:
            failures.append(f"energy identity residual {worst_e:.3e} "
                            f"> {balance_tol:g}")
        worst_m = max(r.helicity_m_residual for r in rows[1:])
        worst_c = max(r.helicity_c_residual for r in rows[1:])
        if worst_m > balance_tol:
            failures.append(f"magnetic-helicity rate residual "
                            f"{worst_m:.3e} > {balance_tol:g}")
        if worst_c > balance_tol:
            failures.append(f"cross-helicity rate residual {worst_c:.3e} "
                            f"> {balance_tol:g}")
    if not args.quiet:
        print(f"max |D2 B| over run: {max_div:.3e}")
    if failures:
        for f in failures:
            print(f"FAIL {f}", file=sys.stderr)
        return EXIT_TOLERANCE
    if not args.quiet:
        print("all conservation invariants within tolerance")
    return EXIT_OK


def cmd_convergence(cfg, args) -> int:
    from . import reporting
    from .manufactured import build_case
    from .verification import run_convergence
    outdir = _outdir(cfg, args)
    case_name = cfg.get_in("model", "case", "decay-trig")
    params = _params(cfg)
    try:
        case = build_case(case_name, params)
    except ValueError as exc:
        raise ConfigError(str(exc))
    levels = _as_int_list(cfg, "convergence", "levels", (2, 4, 8))
    t_final = _as_float(cfg, "convergence", "t_final", 0.1)
    dt_factor = _as_float(cfg, "convergence", "dt_factor", 0.1)
    threshold = _as_float(cfg, "convergence", "threshold", 0.9)
    from .solver import SolverError
    try:
        table = run_convergence(case, k=_as_int(cfg, "model", "k", 0),
                                ns=levels, T=t_final, dt_factor=dt_factor,
                                quiet=args.quiet)
    except SolverError as exc:
        print(f"solver failure during convergence study: {exc}",
              file=sys.stderr)
        return EXIT_SOLVER
    reporting.eoc_to_csv(table, os.path.join(outdir, "eoc.csv"))
    text = reporting.eoc_to_text(table)
    with open(os.path.join(outdir, "eoc.txt"), "w") as fh:
        fh.write(text)
    if _as_bool(cfg, "output", "figures", True):
        reporting.eoc_figure(table, os.path.join(outdir, "eoc.png"))
    if not args.quiet:
        print(text, end="")
    bad = {k: r for k, r in table.final_rates().items() if r < threshold}
    if bad:
        for k, r in bad.items():
            print(f"FAIL rate {k} = {r:.3f} < threshold {threshold}",
                  file=sys.stderr)
        return EXIT_TOLERANCE
    return EXIT_OK


def cmd_operator_tests(cfg, args) -> int:
    from . import reporting
    from .mesh import build_box_mesh
    from .verification import run_operator_battery
    outdir = _outdir(cfg, args)
    levels = _as_int_list(cfg, "operator-tests", "levels", (1, 2, 3))
    checks = run_operator_battery(
        [build_box_mesh(n, _box(cfg)) for n in levels],
        tol_commuting=_as_float(cfg, "operator-tests", "tol_commuting",
                                1e-10),
        tol_projector=_as_float(cfg, "operator-tests", "tol_projector",
                                1e-12),
        tol_adjoint=_as_float(cfg, "operator-tests", "tol_adjoint", 1e-12))
    reporting.battery_to_csv(checks, os.path.join(outdir,
                                                  "operator_checks.csv"))
    text = reporting.battery_to_text(checks)
    if not args.quiet:
        print(text, end="")
    failed = [c for c in checks if not c.passed]
    if failed:
        for c in failed:
            print(f"FAIL {c.name}: {c.value:.3e} > tol {c.tol:g}",
                  file=sys.stderr)
        return EXIT_TOLERANCE
    return EXIT_OK


_COMMANDS = {
    "simulate": cmd_simulate,
    "convergence": cmd_convergence,
    "conserve": cmd_conserve,
    "operator-tests": cmd_operator_tests,
}


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="helimhd",
        description="Structure-preserving seven-field MHD simulator")
    parser.add_argument("command", choices=sorted(_COMMANDS))
    parser.add_argument("--config", required=True, help="path to the "
                        "key=value run configuration")
    parser.add_argument("--out", default=None, help="output directory "
                        "(overrides HELIMHD_OUT and the config)")
    parser.add_argument("--quiet", action="store_true")
    args = parser.parse_args(argv)
    try:
        cfg = load_config(args.config)
        return _COMMANDS[args.command](cfg, args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
