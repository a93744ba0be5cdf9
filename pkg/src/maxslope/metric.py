"""Single-step analysis in metric spaces.

A metric system couples a distance on R^n, an energy, and a convex rate
density ψ.  The single-step functional at base point u° and step size σ is

    Φ(u) = σ ψ(D(u°, u)/σ) + E(u),

its infimum is the marginal value φ(σ), and the minimizers are the
variational interpolants.  The module certifies, per σ, whether the energy
identity

    E(ũ_σ) + σ ψ(D(u°,ũ_σ)/σ) + ∫₀^σ ψ*(ψ'(d_ρ/ρ)) dρ = E(u°)

holds (it always does, with either the minimal or maximal distance
selection d_ρ), and whether the descent estimate with the local-slope
integrand ψ*(|∂E|(ũ_ρ)) is an identity or strictly off.  Strictness is the
honest outcome for non-geodesic distances or jumping interpolants, so gaps
are classified rather than asserted away.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from . import quadrature as quad
from .common import (GapReport, InterpolantTrace, JumpRecord, ModelError,
                     SolverFailure, StepResult, SweepRow, as_point,
                     classify_gap)
from .convex import ScalarConvex, one_sided_derivatives
from .models import EnergyFunctional
from .solve import Objective, SolveConfig, global_minimize

__all__ = ["MetricModel", "euclidean_metric", "truncated_metric",
           "MetricSystem", "metric_step", "metric_slope", "distance_slope",
           "slope_estimate_gap", "SlopeEstimate", "metric_sweep",
           "energy_identity_residual", "energy_dissipation_gap",
           "gap_report", "uniform_slope_probe"]

_SLOPE_RADII = 13
_SLOPE_DIRS = 64
_SLOPE_STAB = 1e-8


@dataclass(frozen=True)
class MetricModel:
    """A distance on R^n with the structural flags the analysis needs.

    ``locally_euclidean`` means D(u, v) = |u - v| for v near u, which lets
    slope probes use ambient spheres.  ``geodesic`` records whether the
    distance supports midpoints; identities are only guaranteed there."""

    n: int
    dist: Callable[[np.ndarray, np.ndarray], float]
    dist_from: Callable[[np.ndarray, np.ndarray], np.ndarray]
    locally_euclidean: bool = True
    geodesic: bool = True
    name: str = "metric"


def euclidean_metric(n: int) -> MetricModel:
    """The flat distance |u - v| on R^n."""
    def d(u, v):
        return float(np.linalg.norm(np.asarray(v, float) - np.asarray(u, float)))

    def d_from(u0, pts):
        return np.linalg.norm(np.atleast_2d(pts) - np.asarray(u0, float), axis=1)

    return MetricModel(n, d, d_from, True, True, "euclidean")


def truncated_metric(n: int, radius: float = 1.0) -> MetricModel:
    """min(|u - v|, radius): a bounded, non-geodesic distance.

    Beyond the truncation radius all points are equally far, so interpolants
    can teleport and descent inequalities go strict."""
    if radius <= 0:
        raise ModelError("truncation radius must be positive")

    def d(u, v):
        return min(float(np.linalg.norm(np.asarray(v, float) - np.asarray(u, float))), radius)

    def d_from(u0, pts):
        return np.minimum(np.linalg.norm(np.atleast_2d(pts) - np.asarray(u0, float), axis=1), radius)

    return MetricModel(n, d, d_from, True, False, f"truncated({radius:g})")


@dataclass(frozen=True)
class MetricSystem:
    """Distance + energy + rate density, the full single-step setup."""

    metric: MetricModel
    energy: EnergyFunctional
    psi: ScalarConvex
    name: str = "metric-system"

    def __post_init__(self):
        if self.metric.n != self.energy.n:
            raise ModelError("metric and energy dimensions disagree")

    @property
    def n(self) -> int:
        return self.metric.n

    def step_value(self, u0, u, sigma: float) -> float:
        d = self.metric.dist(u0, u)
        return sigma * float(self.psi.value(d / sigma)) + self.energy.value(u)


def _psi_values(psi: ScalarConvex, ts: np.ndarray) -> np.ndarray:
    # ScalarConvex evaluates pointwise; keep the loop here so callers can
    # batch distances without caring
    return np.array([float(psi.value(t)) for t in np.atleast_1d(ts)])


def _dissipation_radius(sys: MetricSystem, u0: np.ndarray, sigma: float,
                        budget: float) -> float:
    """Radius t with σψ(D(u°, u° + t e)/σ) > budget, inf if D saturates."""
    e = np.zeros(sys.n)
    e[0] = 1.0
    t = max(1.0, sigma)
    prev_d = 0.0
    for _ in range(200):
        d = sys.metric.dist(u0, u0 + t * e)
        if sigma * float(sys.psi.value(d / sigma)) > budget:
            return t
        if d <= prev_d * (1 + 1e-9) + 1e-12:
            return np.inf
        prev_d = d
        t *= 2.0
    return np.inf


def metric_step(sys: MetricSystem, u0, sigma: float,
                cfg: SolveConfig = SolveConfig(), hints=()) -> StepResult:
    """Solve the single-step problem; returns value, minimizers, d bracket.

    The search window is the intersection of the energy sublevel box at
    level E(u°) (dissipation is nonnegative, so minimizers can never raise
    the energy) with the dissipation ball at budget E(u°) - inf E.  If both
    are unbounded the problem may be non-coercive and we refuse to guess."""
    if sigma <= 0:
        raise ModelError("step size must be positive")
    u0 = as_point(u0, sys.n)
    e0 = sys.energy.value(u0)
    lower = sys.energy.lower_bound()
    budget = e0 - lower + 1e-9 * (1 + abs(e0))
    r_diss = _dissipation_radius(sys, u0, sigma, budget)
    r_energy = sys.energy.sublevel_radius(e0 + 1e-9 * (1 + abs(e0)))
    if not np.isfinite(r_diss) and r_energy is None:
        raise SolverFailure(
            "no coercive bound: dissipation saturates and the energy has "
            "unbounded sublevel sets")
    lo = u0 - (r_diss if np.isfinite(r_diss) else np.inf)
    hi = u0 + (r_diss if np.isfinite(r_diss) else np.inf)
    if r_energy is not None:
        lo = np.maximum(lo, -r_energy * np.ones(sys.n))
        hi = np.minimum(hi, r_energy * np.ones(sys.n))
    if np.any(~np.isfinite(lo)) or np.any(~np.isfinite(hi)):
        raise SolverFailure("could not bound the minimizer set")

    def fn(u):
        return sys.step_value(u0, u, sigma)

    def batch(pts):
        ds = sys.metric.dist_from(u0, pts)
        return sigma * _psi_values(sys.psi, ds / sigma) + sys.energy.value_batch(pts)

    obj = Objective(fn=fn, batch=batch)
    value, mins = global_minimize(obj, lo, hi, cfg, hints=tuple(hints) + (u0,))
    dists = [sys.metric.dist(u0, m) for m in mins]
    return StepResult(sigma=sigma, value=value, minimizers=tuple(mins),
                      d_minus=min(dists), d_plus=max(dists))


def _probe_directions(n: int, total: int = _SLOPE_DIRS) -> np.ndarray:
    if n == 1:
        return np.array([[1.0], [-1.0]])
    dirs = [np.eye(n)[i] * s for i in range(n) for s in (+1.0, -1.0)]
    rng = np.random.default_rng(97)
    while len(dirs) < total:
        v = rng.standard_normal(n)
        nv = np.linalg.norm(v)
        if nv > 1e-12:
            dirs.append(v / nv)
    return np.asarray(dirs[:total])


def _sphere_slope(value_at, u: np.ndarray, dist_to, r0: float) -> float:
    """Sphere-probe local slope: max over directions of the descent quotient,
    extrapolated over halving radii.

    Quotients increase as r shrinks for the convex part, so the last two
    levels drive a Richardson step unless they already agree."""
    dirs = _probe_directions(len(u))
    ms = []
    base = value_at(u)
    for k in range(_SLOPE_RADII):
        r = r0 * 2.0 ** (-k)
        best = 0.0
        for d in dirs:
            v = u + r * d
            dd = dist_to(u, v)
            if dd <= 0:
                continue
            q = (base - value_at(v)) / dd
            if q > best:
                best = q
        ms.append(best)
    m1, m2 = ms[-2], ms[-1]
    if abs(m2 - m1) <= _SLOPE_STAB * max(1.0, abs(m2)):
        return max(m2, 0.0)
    return max(2.0 * m2 - m1, m2, 0.0)


def metric_slope(sys: MetricSystem, u, r0: Optional[float] = None) -> float:
    """Local slope |∂E|(u): analytic when the energy provides one and the
    distance is locally flat, sphere-probed otherwise."""
    u = as_point(u, sys.n)
    if sys.metric.locally_euclidean:
        s = sys.energy.slope(u)
        if s is not None:
            return float(s)
    if r0 is None:
        r0 = 1e-2 * (1.0 + float(np.linalg.norm(u)))
    return _sphere_slope(sys.energy.value, u, sys.metric.dist, r0)


def distance_slope(sys: MetricSystem, u0, u, r0: Optional[float] = None) -> float:
    """Local slope of v ↦ -D(u°, v) at u; 1 on flat regions, 0 where the
    distance has saturated."""
    u0 = as_point(u0, sys.n)
    u = as_point(u, sys.n)
    if r0 is None:
        r0 = 1e-3 * (1.0 + float(np.linalg.norm(u - u0)))

    def neg_dist(v):
        return -sys.metric.dist(u0, v)

    return _sphere_slope(neg_dist, u, sys.metric.dist, r0)


@dataclass(frozen=True)
class SlopeEstimate:
    """One-sided certificate ψ'(D/σ)·|∂D| ≥ |∂E| at a step minimizer."""

    sigma: float
    u: np.ndarray
    bound: float
    slope: float

    @property
    def gap(self) -> float:
        return self.bound - self.slope


def slope_estimate_gap(sys: MetricSystem, u0, sigma: float,
                       cfg: SolveConfig = SolveConfig()) -> SlopeEstimate:
    """Check the slope bound at the lexicographic step minimizer.

    Every minimizer obeys |∂E|(ũ) ≤ ψ'₊(D(u°,ũ)/σ) · |∂D(u°,·)|(ũ); the
    returned gap = bound - slope should be ≥ -tol."""
    u0 = as_point(u0, sys.n)
    res = metric_step(sys, u0, sigma, cfg)
    u = res.minimizer
    d = sys.metric.dist(u0, u)
    dp = one_sided_derivatives(sys.psi, d / sigma)[1]
    ds = distance_slope(sys, u0, u) if d > 0 else 1.0
    return SlopeEstimate(sigma=sigma, u=u, bound=dp * ds,
                         slope=metric_slope(sys, u))


def _conj_value(psi: ScalarConvex, s: float) -> float:
    return float(psi.conjugate(s))


@dataclass
class _RowState:
    sigma: float
    u: np.ndarray
    phi: float
    d_minus: float
    d_plus: float
    slope: float

    def signature(self) -> np.ndarray:
        return np.concatenate([self.u, [self.slope]])


def _solve_row(sys: MetricSystem, u0: np.ndarray, rho: float,
               cfg: SolveConfig) -> _RowState:
    res = metric_step(sys, u0, rho, cfg)
    return _RowState(sigma=rho, u=res.minimizer, phi=res.value,
                     d_minus=res.d_minus, d_plus=res.d_plus,
                     slope=metric_slope(sys, res.minimizer))


def _integrands(sys: MetricSystem, st: _RowState):
    """(identity integrand with d⁻, with d⁺, descent integrand) at one ρ."""
    rho = st.sigma
    f_minus = _conj_value(sys.psi, _mid_deriv(sys.psi, st.d_minus / rho))
    f_plus = _conj_value(sys.psi, _mid_deriv(sys.psi, st.d_plus / rho))
    f_gap = _conj_value(sys.psi, st.slope)
    return f_minus, f_plus, f_gap


def _mid_deriv(psi: ScalarConvex, t: float) -> float:
    lo, hi = one_sided_derivatives(psi, t)
    return 0.5 * (lo + hi)


def metric_sweep(sys: MetricSystem, u0, targets,
                 cfg: SolveConfig = SolveConfig(),
                 spec: quad.QuadratureSpec = quad.QuadratureSpec(),
                 gap_tol: float = 1e-4,
                 workers: int = 1) -> InterpolantTrace:
    """Interpolant trace over a σ grid with both certified integrals.

    Solves the step problem on the full quadrature grid, locates interpolant
    or slope discontinuities by bisection, and integrates the identity
    integrands (minimal and maximal distance selection) and the descent
    integrand piecewise.  Rows carry the running integrals, the gap
    E(u°) - φ(σ) - ∫ψ*(|∂E|), its classification, and both identity
    residuals."""
    u0 = as_point(u0, sys.n)
    e0 = sys.energy.value(u0)
    grid = quad.build_sigma_grid(targets, spec)
    states = quad.parallel_map(lambda r: _solve_row(sys, u0, r, cfg), grid,
                               workers)
    sigs = np.array([st.signature() for st in states])
    jump_idx = quad.detect_jumps(grid, sigs, spec)

    def state_sig(rho):
        return _solve_row(sys, u0, rho, cfg).signature()

    jumps = []
    jump_tuples = {"minus": [], "plus": [], "gap": []}
    for i in jump_idx:
        sx, width, sig_l, sig_r = quad.refine_jump(
            grid[i], grid[i + 1], sigs[i], sigs[i + 1], state_sig, spec)
        u_l, sl_l = sig_l[:-1], sig_l[-1]
        u_r, sl_r = sig_r[:-1], sig_r[-1]
        st_l = _RowState(sx, u_l, sys.step_value(u0, u_l, sx),
                         sys.metric.dist(u0, u_l), sys.metric.dist(u0, u_l), sl_l)
        st_r = _RowState(sx, u_r, sys.step_value(u0, u_r, sx),
                         sys.metric.dist(u0, u_r), sys.metric.dist(u0, u_r), sl_r)
        jumps.append(JumpRecord(sigma=sx, width=width, u_left=u_l, u_right=u_r,
                                value_left=st_l.phi, value_right=st_r.phi))
        fl = _integrands(sys, st_l)
        fr = _integrands(sys, st_r)
        for k, key in enumerate(("minus", "plus", "gap")):
            jump_tuples[key].append((i, sx, width, fl[k], fr[k]))

    fs = np.array([_integrands(sys, st) for st in states])
    # a grid sample sitting inside a refined jump bracket is a minimizer tie:
    # its inf/sup selections straddle the jump, so force the one-sided value
    # matching the side of the refined location the sample falls on
    for k, key in enumerate(("minus", "plus", "gap")):
        for i, sx, width, fl_k, fr_k in jump_tuples[key]:
            snap = width + 4.0 * spec.jump_rtol * max(1.0, abs(sx))
            for j in (i, i + 1):
                if abs(grid[j] - sx) <= snap:
                    fs[j, k] = fl_k if grid[j] < sx else fr_k
    rho_min = grid[0]
    phi_min = states[0].phi
    drop = e0 - phi_min
    integrals = {}
    for k, key in enumerate(("minus", "plus", "gap")):
        head = rho_min * fs[0, k]
        head_err = abs(drop - head) + rho_min * abs(fs[1, k] - fs[0, k])
        integrals[key] = quad.PiecewiseIntegral(grid, fs[:, k],
                                                jump_tuples[key], head, head_err)

    rows = []
    for i, st in enumerate(states):
        g_val, g_err = integrals["gap"].value_at(st.sigma)
        m_val, m_err = integrals["minus"].value_at(st.sigma)
        p_val, p_err = integrals["plus"].value_at(st.sigma)
        d_rep = sys.metric.dist(u0, st.u)
        diss = st.sigma * float(sys.psi.value(d_rep / st.sigma))
        gap = e0 - st.phi - g_val
        rows.append(SweepRow(
            sigma=st.sigma, u=st.u, phi=st.phi, energy=st.phi - diss,
            dissipation=diss,
            r_slope=float(fs[i, 2]),
            conditioned=float(fs[i, 0]),
            integral=g_val, gap=gap,
            classification=classify_gap(gap, gap_tol, g_err),
            quad_error=g_err,
            d_minus=st.d_minus, d_plus=st.d_plus, slope=st.slope,
            identity_minus=e0 - st.phi - m_val,
            identity_plus=e0 - st.phi - p_val))
    return InterpolantTrace(kind="metric", u0=u0, rows=tuple(rows),
                            jumps=tuple(jumps), rho_min=rho_min)


def _trace_row(trace: InterpolantTrace, sigma: float) -> SweepRow:
    row = trace.row_at(sigma)
    if row is None:
        raise ModelError(f"σ={sigma} is not a trace sample")
    return row


def energy_identity_residual(sys: MetricSystem, u0, sigma: float,
                             cfg: SolveConfig = SolveConfig(),
                             spec: quad.QuadratureSpec = quad.QuadratureSpec(),
                             workers: int = 1):
    """(residual with d⁻ selection, with d⁺, quadrature error bar) at σ.

    Both residuals should vanish within the error bar for any metric system;
    this is the selection-independent energy identity."""
    trace = metric_sweep(sys, u0, [sigma], cfg, spec, workers=workers)
    row = _trace_row(trace, sigma)
    return row.identity_minus, row.identity_plus, row.quad_error


def energy_dissipation_gap(sys: MetricSystem, u0, sigma: float,
                           cfg: SolveConfig = SolveConfig(),
                           spec: quad.QuadratureSpec = quad.QuadratureSpec(),
                           gap_tol: float = 1e-4,
                           workers: int = 1) -> SweepRow:
    """Gap of the descent estimate with the ψ*(|∂E|) integrand at one σ."""
    trace = metric_sweep(sys, u0, [sigma], cfg, spec, gap_tol, workers)
    return _trace_row(trace, sigma)


def gap_report(sys: MetricSystem, u0, targets,
               cfg: SolveConfig = SolveConfig(),
               spec: quad.QuadratureSpec = quad.QuadratureSpec(),
               gap_tol: float = 1e-4,
               workers: int = 1, name: str = "") -> GapReport:
    """Classified gap table over the requested σ targets."""
    trace = metric_sweep(sys, u0, targets, cfg, spec, gap_tol, workers)
    rows = tuple(_trace_row(trace, s) for s in np.atleast_1d(targets))
    return GapReport(name=name or sys.name, kind="metric", rows=rows)


def uniform_slope_probe(sys: MetricSystem, pairs, curvature: float = 0.0) -> float:
    """Max over pairs (u, w) of E(u) - E(w) - |∂E|(u)·D(u,w) - (c/2)D².

    Nonpositive (within slope-probe accuracy) when the slope controls energy
    differences uniformly with a quadratic modulus; large positive values
    flag that descent certificates cannot be trusted far from u."""
    worst = -np.inf
    for u, w in pairs:
        u = as_point(u, sys.n)
        w = as_point(w, sys.n)
        d = sys.metric.dist(u, w)
        s = metric_slope(sys, u)
        r = sys.energy.value(u) - sys.energy.value(w) - s * d - 0.5 * curvature * d * d
        worst = max(worst, r)
    return worst
