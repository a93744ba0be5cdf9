"""Command-line front end: scenario loading, commands, report files.

Commands operate on one scenario (built-in name or JSON file) and write
plot-ready CSV plus structured JSON reports.  All writes go through a
temp-file rename so a crashed run never leaves a half-written report, and
repeated runs of the same build and scenario produce byte-identical files.

Exit codes: 0 success, 1 contract or golden-value failure, 2 configuration
error, 3 solver failure.
"""

from __future__ import annotations

import argparse
import io
import json
import os
import sys
import tempfile

import numpy as np

from . import banach, metric, mms, moreau, quadrature
from .common import (
    ConfigurationError,
    GapReport,
    ModelError,
    SolverFailure,
    SweepRow,
)
from .models import fenchel_gap, piecewise_quadratic_density, SeparablePotential
from .scenarios import Scenario, load_scenario, registry_names
from .solve import Objective, SolveConfig, global_minimize, grid_oracle

__all__ = ["main"]

_EXIT_OK = 0
_EXIT_CONTRACT = 1
_EXIT_CONFIG = 2
_EXIT_SOLVER = 3


# ---------------------------------------------------------------------------
# Serialization helpers
# ---------------------------------------------------------------------------


def _fmt(x: float) -> str:
    # repr of a Python float is the shortest round-trip form, so the CSV is
    # both exact and stable across runs
    return repr(float(x))


def _atomic_write(path: str, data: str) -> None:
    directory = os.path.dirname(path) or "."
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(data)
        os.replace(tmp, path)
    finally:
        if os.path.exists(tmp):
            os.unlink(tmp)


def _csv_header(n: int) -> str:
    cols = (["sigma"] + [f"u_{i}" for i in range(n)]
            + ["phi", "energy", "dissipation_term", "r_slope",
               "conditioned_slope", "integral_term", "gap",
               "classification", "quad_error"])
    return ",".join(cols)


def _csv_line(row: SweepRow, n: int) -> str:
    u = np.atleast_1d(row.u)
    fields = ([_fmt(row.sigma)] + [_fmt(u[i]) for i in range(n)]
              + [_fmt(row.phi), _fmt(row.energy), _fmt(row.dissipation),
                 _fmt(row.r_slope), _fmt(row.conditioned),
                 _fmt(row.integral), _fmt(row.gap), row.classification,
                 _fmt(row.quad_error)])
    return ",".join(fields)


def _sweep_csv(rows, n: int) -> str:
    out = io.StringIO()
    out.write(_csv_header(n) + "\n")
    for row in rows:
        out.write(_csv_line(row, n) + "\n")
    return out.getvalue()


def _row_json(row: SweepRow) -> dict:
    doc = {
        "sigma": float(row.sigma),
        "u": [float(x) for x in np.atleast_1d(row.u)],
        "phi": float(row.phi),
        "energy": float(row.energy),
        "dissipation_term": float(row.dissipation),
        "r_slope": float(row.r_slope),
        "conditioned_slope": float(row.conditioned),
        "integral_term": float(row.integral),
        "gap": float(row.gap),
        "classification": row.classification,
        "quad_error": float(row.quad_error),
    }
    if row.xi is not None:
        doc["xi"] = [float(x) for x in np.atleast_1d(row.xi)]
    return doc


def _gap_json(report: GapReport) -> dict:
    return {
        "scenario": report.name,
        "kind": report.kind,
        "rows": [_row_json(r) for r in report.rows],
        "worst_gap": float(report.worst_gap),
        "has_violation": bool(report.has_violation),
    }


def _dump_json(doc) -> str:
    return json.dumps(doc, sort_keys=True, indent=2) + "\n"


def _emit(out_dir: str, name: str, data: str) -> str:
    path = os.path.join(out_dir, name)
    _atomic_write(path, data)
    return path


# ---------------------------------------------------------------------------
# Oracle cross-checks (--oracle)
# ---------------------------------------------------------------------------


def _oracle_window(sc: Scenario, sigma: float):
    u0 = sc.u0
    r = 1.5 * max(1.0, float(np.max(np.abs(u0)))) + 2.0
    return u0 - r, u0 + r


def _oracle_check(sc: Scenario, sigma: float, phi: float) -> float:
    """|grid-oracle value - solver value| at one σ; inf when skipped."""
    if sc.system.n > 3:
        return float("nan")
    lo, hi = _oracle_window(sc, sigma)

    def fn(u):
        return sc.system.step_value(sc.u0, u, sigma)

    step = 1e-4 if sc.system.n == 1 else 2e-2
    value, _ = grid_oracle(Objective(fn=fn), lo, hi, step)
    return abs(value - phi)


def _run_oracle_audit(sc: Scenario, rows) -> list:
    failures = []
    for row in rows:
        diff = _oracle_check(sc, row.sigma, row.phi)
        if np.isnan(diff):
            continue
        if diff > 1e-6:
            failures.append((row.sigma, diff))
    return failures


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------


def _cmd_step(sc: Scenario, args, out_dir: str, workers: int) -> int:
    sigma = sc.tau if args.tau is None else args.tau
    if sc.kind == "banach":
        res = banach.banach_step(sc.system, sc.u0, sigma, sc.solve)
    else:
        res = metric.metric_step(sc.system, sc.u0, sigma, sc.solve)
    doc = {
        "scenario": sc.name,
        "kind": sc.kind,
        "sigma": float(sigma),
        "value": float(res.value),
        "minimizers": [[float(x) for x in m] for m in res.minimizers],
        "d_minus": float(res.d_minus),
        "d_plus": float(res.d_plus),
        "energy_at_minimizer": float(sc.system.energy.value(res.minimizer)),
        "energy_at_start": float(sc.system.energy.value(sc.u0)),
    }
    path = _emit(out_dir, f"{sc.name}_step.json", _dump_json(doc))
    m = res.minimizer
    print(f"{sc.name}: sigma={sigma:g} value={res.value:.10g} "
          f"minimizer={np.array2string(m, precision=8)} "
          f"d=[{res.d_minus:.6g}, {res.d_plus:.6g}]")
    print(f"wrote {path}")
    if args.oracle:
        diff = _oracle_check(sc, sigma, res.value)
        if not np.isnan(diff) and diff > 1e-6:
            print(f"oracle disagreement: |Δvalue| = {diff:.3e}", file=sys.stderr)
            return _EXIT_CONTRACT
        print("oracle agreement: ok" if not np.isnan(diff)
              else "oracle check skipped (n > 3)")
    return _EXIT_OK


def _sweep_trace(sc: Scenario, targets, workers: int):
    if sc.kind == "banach":
        return banach.interpolant_sweep(sc.system, sc.u0, targets, sc.solve,
                                        sc.quadrature, sc.gap_tol,
                                        workers=workers)
    return metric.metric_sweep(sc.system, sc.u0, targets, sc.solve,
                               sc.quadrature, sc.gap_tol, workers)


def _target_rows(trace, targets) -> list:
    rows = []
    for s in targets:
        row = trace.row_at(float(s))
        if row is None:
            raise SolverFailure(f"sweep lost its target sample at σ={s}")
        rows.append(row)
    return rows


def _cmd_sweep(sc: Scenario, args, out_dir: str, workers: int) -> int:
    targets = sc.sigma_targets(args.sigma_samples)
    trace = _sweep_trace(sc, targets, workers)
    rows = _target_rows(trace, targets)
    report = GapReport(name=sc.name, kind=sc.kind, rows=tuple(rows))
    csv_path = _emit(out_dir, f"{sc.name}_sweep.csv",
                     _sweep_csv(trace.rows, sc.system.n))
    doc = _gap_json(report)
    doc["jumps"] = [{
        "sigma": float(j.sigma), "width": float(j.width),
        "u_left": [float(x) for x in np.atleast_1d(j.u_left)],
        "u_right": [float(x) for x in np.atleast_1d(j.u_right)],
        "value_left": float(j.value_left),
        "value_right": float(j.value_right),
    } for j in trace.jumps]
    json_path = _emit(out_dir, f"{sc.name}_gap_report.json", _dump_json(doc))
    print(f"{sc.name}: {len(trace.rows)} grid rows, {len(rows)} targets, "
          f"worst gap {report.worst_gap:.3e}")
    print(f"wrote {csv_path}")
    print(f"wrote {json_path}")
    if args.oracle:
        failures = _run_oracle_audit(sc, rows)
        if failures:
            for s, diff in failures:
                print(f"oracle disagreement at sigma={s:g}: {diff:.3e}",
                      file=sys.stderr)
            return _EXIT_CONTRACT
        print("oracle agreement: ok")
    if report.has_violation:
        print("violation entries present", file=sys.stderr)
        return _EXIT_CONTRACT
    return _EXIT_OK


def _cmd_gap(sc: Scenario, args, out_dir: str, workers: int) -> int:
    targets = sc.sigma_targets(args.sigma_samples)
    trace = _sweep_trace(sc, targets, workers)
    rows = _target_rows(trace, targets)
    report = GapReport(name=sc.name, kind=sc.kind, rows=tuple(rows))
    for row in rows:
        print(f"sigma={row.sigma:<10.6g} gap={row.gap:+.6e} "
              f"+/- {row.quad_error:.1e}  [{row.classification}]")
    path = _emit(out_dir, f"{sc.name}_gap_report.json",
                 _dump_json(_gap_json(report)))
    print(f"wrote {path}")
    if args.oracle:
        failures = _run_oracle_audit(sc, rows)
        if failures:
            for s, diff in failures:
                print(f"oracle disagreement at sigma={s:g}: {diff:.3e}",
                      file=sys.stderr)
            return _EXIT_CONTRACT
    if report.has_violation:
        print("violation entries present", file=sys.stderr)
        return _EXIT_CONTRACT
    return _EXIT_OK


def _cmd_mms(sc: Scenario, args, out_dir: str, workers: int) -> int:
    tau = sc.tau if args.tau is None else args.tau
    horizon = sc.horizon if args.horizon is None else args.horizon
    traj = mms.run_mms(sc.system, sc.u0, tau, horizon, sc.solve)
    report = mms.edb_report(sc.system, traj, sc.solve, gap_tol=sc.gap_tol,
                            workers=workers)

    out = io.StringIO()
    n = sc.system.n
    out.write(",".join(["t"] + [f"u_{i}" for i in range(n)] + ["energy"]) + "\n")
    for k, t in enumerate(traj.node_times()):
        vals = [_fmt(t)] + [_fmt(x) for x in traj.nodes[k]]
        vals.append(_fmt(traj.energies[k]))
        out.write(",".join(vals) + "\n")
    csv_path = _emit(out_dir, f"{sc.name}_mms_nodes.csv", out.getvalue())

    doc = {
        "scenario": sc.name,
        "kind": sc.kind,
        "tau": float(tau),
        "horizon": float(horizon),
        "cells": traj.cells,
        "node_energies": [float(e) for e in traj.energies],
        "cell_rows": [_row_json(r) for r in report.cell_rows],
        "total_residual": float(report.total_residual),
        "total_error": float(report.total_error),
        "endpoint_drift": float(report.endpoint_drift),
    }
    json_path = _emit(out_dir, f"{sc.name}_edb_report.json", _dump_json(doc))
    print(f"{sc.name}: {traj.cells} cells, worst |cell gap| "
          f"{report.worst_cell_gap:.3e}, total residual "
          f"{report.total_residual:+.3e} +/- {report.total_error:.1e}")
    print(f"wrote {csv_path}")
    print(f"wrote {json_path}")
    if any(c == "violation" for c in report.classifications):
        print("violation entries present", file=sys.stderr)
        return _EXIT_CONTRACT
    return _EXIT_OK


def _cmd_pipeline(sc: Scenario, args, out_dir: str, workers: int) -> int:
    if sc.kind != "banach":
        raise ConfigurationError(
            "the smoothing pipeline needs a Banach-side scenario")
    targets = sc.sigma_targets(args.sigma_samples)
    etas = tuple(2.0 ** -k for k in range(2, 13))
    spec = quadrature.QuadratureSpec(uniform=96, per_octave=4)
    report = banach.yosida_pipeline(sc.system, sc.u0, targets, etas,
                                    sc.solve, spec, sc.gap_tol,
                                    workers=workers)
    doc = {
        "scenario": sc.name,
        "etas": [float(e) for e in report.etas],
        "per_eta": [_gap_json(rep) for rep in report.per_eta],
        "limit_rows": [_row_json(r) for r in report.limit_rows],
        "all_eta_identities": bool(report.all_eta_identities),
        "worst_limit_gap": float(report.worst_limit_gap),
        "ebar_empirical": float(report.ebar_empirical),
        "ebar_apriori": float(report.ebar_apriori),
    }
    path = _emit(out_dir, f"{sc.name}_pipeline.json", _dump_json(doc))
    print(f"{sc.name}: {len(etas)} smoothing levels, per-level identities: "
          f"{report.all_eta_identities}, worst limit gap "
          f"{report.worst_limit_gap:+.3e}")
    print(f"coercivity budget: empirical {report.ebar_empirical:.6g} "
          f"<= a-priori {report.ebar_apriori:.6g}")
    print(f"wrote {path}")
    if not report.all_eta_identities:
        print("a smoothing level failed its identity", file=sys.stderr)
        return _EXIT_CONTRACT
    if report.worst_limit_gap < -2e-4:
        print("limit gap below tolerance", file=sys.stderr)
        return _EXIT_CONTRACT
    if report.ebar_empirical > report.ebar_apriori:
        print("coercivity budget exceeded", file=sys.stderr)
        return _EXIT_CONTRACT
    return _EXIT_OK


# ---------------------------------------------------------------------------
# Self test
# ---------------------------------------------------------------------------


def _selftest_goldens(checks: list) -> None:
    cfg = SolveConfig()

    sc = load_scenario("ex3_6")
    res = banach.banach_step(sc.system, sc.u0, 0.5, cfg)
    checks.append(("hinge step at sigma=0.5",
                   abs(res.minimizer[0] - 0.5) <= 1e-6))
    cs = banach.conditioned_slope(sc.system, sc.u0, 2.0, None, cfg)
    checks.append(("hinge conditioned slope at sigma=2",
                   abs(cs.value - 0.125) <= 1e-6))

    sc = load_scenario("ex4_2")
    for sigma, want in ((1.0, 4.8), (3.0, 3.0), (6.0, 6.0 / 7.0)):
        res = banach.banach_step(sc.system, sc.u0, sigma, cfg)
        checks.append((f"kinked-rate step at sigma={sigma:g}",
                       abs(res.minimizer[0] - want) <= 1e-6))

    sc = load_scenario("ex2_13")
    res = metric.metric_step(sc.system, sc.u0, 0.5, cfg)
    checks.append(("hinge metric step at sigma=0.5",
                   abs(res.minimizer[0] - 0.5) <= 1e-6))
    gap = metric.slope_estimate_gap(sc.system, sc.u0, 2.0, cfg).gap
    checks.append(("hinge metric slope estimate strict at sigma=2",
                   abs(gap - 0.5) <= 1e-3))

    sc = load_scenario("ex2_12")
    res = metric.metric_step(sc.system, sc.u0, 0.25, cfg)
    checks.append(("truncated metric step at sigma=0.25",
                   abs(res.minimizer[0] - 1.6) <= 1e-6))
    res = metric.metric_step(sc.system, sc.u0, 2.0, cfg)
    checks.append(("truncated metric step at sigma=2",
                   abs(res.minimizer[0]) <= 1e-6))

    density = piecewise_quadratic_density(1.0, 1.0, 4.0)
    R = SeparablePotential(density, n=1)
    w = moreau.prox(R, 0.5, np.array([2.0]))
    checks.append(("prox of the kinked density", abs(w[0] - 1.0) <= 1e-8))
    val, grad = moreau.yosida_value_gradient(R, 0.5, np.array([2.0]))
    checks.append(("smoothed value and gradient",
                   abs(val - 1.5) <= 1e-8 and abs(grad[0] - 2.0) <= 1e-8))
    checks.append(("dual certificate of the kinked density",
                   abs(fenchel_gap(R, np.array([-1.0]), np.array([-2.5]))) <= 1e-9))


def _selftest_oracle(checks: list) -> None:
    cfg = SolveConfig()
    probes = (("ex3_6", 0.5), ("ex3_6", 2.0), ("ex4_2", 1.0),
              ("ex4_2", 3.0), ("ex2_12", 0.25), ("ex2_12", 2.0),
              ("quadratic", 1.0))
    for name, sigma in probes:
        sc = load_scenario(name)
        if sc.kind == "banach":
            res = banach.banach_step(sc.system, sc.u0, sigma, cfg)
        else:
            res = metric.metric_step(sc.system, sc.u0, sigma, cfg)
        diff = _oracle_check(sc, sigma, res.value)
        checks.append((f"oracle agreement on {name} at sigma={sigma:g}",
                       bool(diff <= 1e-6)))


def _selftest_deterministic(checks: list, workers: int) -> None:
    sc = load_scenario("quadratic")
    spec = quadrature.QuadratureSpec(uniform=48, per_octave=4)
    targets = np.linspace(0.5, 4.0, 5)

    def render() -> str:
        trace = banach.interpolant_sweep(sc.system, sc.u0, targets, sc.solve,
                                         spec, sc.gap_tol, workers=workers)
        return _sweep_csv(trace.rows, sc.system.n)

    first, second = render(), render()
    checks.append(("byte-identical sweep reports", first == second))


def _cmd_selftest(sc, args, out_dir: str, workers: int) -> int:
    checks = []
    _selftest_goldens(checks)
    _selftest_oracle(checks)
    _selftest_deterministic(checks, workers)
    failed = [name for name, ok in checks if not ok]
    for name, ok in checks:
        print(f"{'PASS' if ok else 'FAIL'}  {name}")
    doc = {
        "checks": [{"name": name, "passed": bool(ok)} for name, ok in checks],
        "failed": len(failed),
    }
    path = _emit(out_dir, "selftest_report.json", _dump_json(doc))
    print(f"wrote {path}")
    print(f"{len(checks) - len(failed)}/{len(checks)} checks passed")
    return _EXIT_CONTRACT if failed else _EXIT_OK


# ---------------------------------------------------------------------------
# Entry point
# ---------------------------------------------------------------------------

_COMMANDS = {
    "step": _cmd_step,
    "sweep": _cmd_sweep,
    "gap": _cmd_gap,
    "mms": _cmd_mms,
    "pipeline": _cmd_pipeline,
    "selftest": _cmd_selftest,
}


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="maxslope",
        description="Single-step variational interpolants, energy balance "
                    "certificates, and minimizing-movement runs.")
    parser.add_argument("command", choices=sorted(_COMMANDS),
                        help="what to run")
    parser.add_argument("--scenario", default="quadratic",
                        help="built-in name or JSON scenario path "
                             f"(built-ins: {', '.join(registry_names())})")
    parser.add_argument("--sigma-samples", type=int, default=None,
                        help="number of target step sizes across the window")
    parser.add_argument("--tau", type=float, default=None,
                        help="time step override (step/mms)")
    parser.add_argument("--horizon", type=float, default=None,
                        help="time horizon override (mms)")
    parser.add_argument("--out", default="maxslope-reports",
                        help="report directory (default: maxslope-reports)")
    parser.add_argument("--oracle", action="store_true",
                        help="cross-check solver values against the dense "
                             "grid oracle (n <= 3)")
    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        workers = quadrature.worker_count()
        if args.command == "selftest":
            sc = None
        else:
            sc = load_scenario(args.scenario, args.sigma_samples,
                               args.tau, args.horizon)
        return _COMMANDS[args.command](sc, args, args.out, workers)
    except ConfigurationError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return _EXIT_CONFIG
    except ModelError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return _EXIT_CONFIG
    except SolverFailure as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return _EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())
