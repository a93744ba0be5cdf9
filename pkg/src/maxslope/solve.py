"""Deterministic global minimization for single-step problems.

Two complementary paths:

* ``global_minimize`` — the production path: a dense vectorized scan plus
  golden-section polish of every near-optimal basin in 1D, seeded multistart
  L-BFGS in dimension 2..8, always with fixed seeds so repeated runs are
  bit-identical.
* ``grid_oracle`` — the slow reference: exhaustive evaluation on a grid with
  two local refinement passes around every candidate within value tolerance
  of the best.  Used to cross-check the fast path.

Minimizer sets are clustered (points closer than ``cluster_tol`` merge) and
ordered lexicographically, smallest representative first.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import optimize

from .common import SolverFailure, ModelError

__all__ = ["SolveConfig", "Objective", "global_minimize", "grid_oracle",
           "constrained_dual_minimize", "golden_section"]

_INVPHI = (np.sqrt(5.0) - 1.0) / 2.0


@dataclass(frozen=True)
class SolveConfig:
    """Tolerances and budgets for the solver paths.

    ``value_tol`` decides which candidates count as tied for the optimum,
    ``arg_tol`` the golden-section bracket width, ``cluster_tol`` the merge
    radius for the minimizer set, ``oracle_step`` the exhaustive grid pitch
    (before its two refinements).  The multistart seed is fixed: identical
    inputs give identical outputs.
    """

    value_tol: float = 1e-9
    arg_tol: float = 1e-12
    cluster_tol: float = 1e-6
    coarse: int = 4001
    multistart: int = 16
    seed: int = 20210 + 831
    oracle_step: float = 1e-6
    max_expand: int = 24

    def __post_init__(self):
        if min(self.value_tol, self.arg_tol, self.cluster_tol, self.oracle_step) <= 0:
            raise ModelError("tolerances must be positive")
        if self.oracle_step > self.cluster_tol * 10.0 * 100.0:
            # keep the oracle meaningfully finer than the cluster radius
            raise ModelError("oracle step too coarse for the cluster tolerance")


@dataclass(frozen=True)
class Objective:
    """A scalar objective with optional vectorized / gradient evaluations."""

    fn: object
    batch: object = None
    grad: object = None

    def value(self, u: np.ndarray) -> float:
        return float(self.fn(u))

    def values(self, U: np.ndarray) -> np.ndarray:
        if self.batch is not None:
            return np.asarray(self.batch(U), dtype=float)
        return np.array([self.value(u) for u in U])


def golden_section(f, a: float, b: float, arg_tol: float = 1e-12,
                   max_iter: int = 200):
    """Golden-section minimization on [a, b]; returns (x, f(x)).

    Tracks the best sample seen, so corner minima are located to bracket
    precision even though interior probes never hit them exactly."""
    c = b - _INVPHI * (b - a)
    d = a + _INVPHI * (b - a)
    fc, fd = f(c), f(d)
    best_x, best_f = (c, fc) if fc <= fd else (d, fd)
    for _ in range(max_iter):
        if b - a <= arg_tol * max(1.0, abs(a), abs(b)):
            break
        if fc <= fd:
            b, d, fd = d, c, fc
            c = b - _INVPHI * (b - a)
            fc = f(c)
            if fc < best_f:
                best_x, best_f = c, fc
        else:
            a, c, fc = c, d, fd
            d = a + _INVPHI * (b - a)
            fd = f(d)
            if fd < best_f:
                best_x, best_f = d, fd
    mid = 0.5 * (a + b)
    fmid = f(mid)
    if fmid < best_f:
        best_x, best_f = mid, fmid
    return float(best_x), float(best_f)


def _cluster(points, values, cfg: SolveConfig):
    """Keep value-ties with the best, merge by distance, sort lexicographically."""
    order = np.argsort(values, kind="stable")
    points = [points[i] for i in order]
    values = [values[i] for i in order]
    fbest = values[0]
    keep_p, keep_v = [], []
    for p, v in zip(points, values):
        if v > fbest + cfg.value_tol:
            break
        merged = False
        for j, q in enumerate(keep_p):
            if np.max(np.abs(p - q)) <= cfg.cluster_tol:
                if tuple(p) < tuple(q):
                    keep_p[j] = p
                    keep_v[j] = min(keep_v[j], v)
                merged = True
                break
        if not merged:
            keep_p.append(p)
            keep_v.append(v)
    idx = sorted(range(len(keep_p)), key=lambda j: tuple(keep_p[j]))
    return [keep_p[j] for j in idx], fbest


def _scan_candidates_1d(obj: Objective, lo: float, hi: float, cfg: SolveConfig):
    """Dense scan + golden polish of every discrete local minimum."""
    xs = np.linspace(lo, hi, cfg.coarse)
    fs = obj.values(xs[:, None])
    if not np.all(np.isfinite(fs)):
        finite = np.isfinite(fs)
        if not np.any(finite):
            raise SolverFailure("objective not finite anywhere on the window")
        fs = np.where(finite, fs, np.inf)
    interior_min = (fs[1:-1] <= fs[:-2]) & (fs[1:-1] <= fs[2:])
    idxs = list(np.nonzero(interior_min)[0] + 1)
    if fs[0] <= fs[1]:
        idxs.append(0)
    if fs[-1] <= fs[-2]:
        idxs.append(len(xs) - 1)
    cand_x, cand_f = [], []
    for k in idxs:
        a = xs[max(k - 1, 0)]
        b = xs[min(k + 1, len(xs) - 1)]
        x, fx = golden_section(lambda t: obj.value(np.array([t])), a, b, cfg.arg_tol)
        cand_x.append(x)
        cand_f.append(fx)
    if cand_x:
        h = xs[1] - xs[0]
        xbest = cand_x[int(np.argmin(cand_f))]
        boundary = (abs(xbest - lo) <= 2 * h) or (abs(xbest - hi) <= 2 * h)
    else:
        boundary = True
    return cand_x, cand_f, boundary


def _minimize_1d(obj: Objective, lo: float, hi: float, cfg: SolveConfig):
    for _ in range(cfg.max_expand):
        cand_x, cand_f, boundary = _scan_candidates_1d(obj, lo, hi, cfg)
        if not boundary:
            break
        width = hi - lo
        lo -= width
        hi += width
    else:
        raise SolverFailure("window expansion failed; scenario may be non-coercive")
    pts = [np.array([x]) for x in cand_x]
    mins, fbest = _cluster(pts, cand_f, cfg)
    return fbest, mins


def _minimize_nd(obj: Objective, lo: np.ndarray, hi: np.ndarray, cfg: SolveConfig,
                 hints=()):
    n = len(lo)
    rng = np.random.default_rng(cfg.seed)
    starts = [np.asarray(h, float) for h in hints]
    center = 0.5 * (lo + hi)
    starts.append(center)
    spread = 0.25 * (hi - lo)
    for _ in range(max(cfg.multistart - len(starts), 0)):
        starts.append(center + spread * rng.standard_normal(n))
    starts = [np.clip(s, lo, hi) for s in starts]
    bounds = list(zip(lo, hi))
    cand_x, cand_f = [], []
    for s in starts:
        res = optimize.minimize(
            obj.value, s, jac=obj.grad, method="L-BFGS-B", bounds=bounds,
            options={"ftol": 1e-16, "gtol": 1e-12, "maxiter": 800},
        )
        cand_x.append(np.asarray(res.x, float))
        cand_f.append(float(res.fun))
    if not cand_x:
        raise SolverFailure("no starts produced a candidate")
    mins, fbest = _cluster(cand_x, cand_f, cfg)
    # ``polish``: one re-solve from each representative
    polished_x, polished_f = [], []
    for m in mins:
        res = optimize.minimize(
            obj.value, m, jac=obj.grad, method="L-BFGS-B", bounds=bounds,
            options={"ftol": 1e-16, "gtol": 1e-13, "maxiter": 800},
        )
        polished_x.append(np.asarray(res.x, float))
        polished_f.append(float(res.fun))
    mins, fbest = _cluster(polished_x, polished_f, cfg)
    return fbest, mins


def global_minimize(obj: Objective, lo, hi, cfg: SolveConfig = SolveConfig(),
                    hints=()):
    """Global minimum of ``obj`` over the box [lo, hi]; returns (value, minimizers).

    1D uses the scan+polish path (window auto-expands while the best
    candidate is boundary-active); higher dimensions use seeded multistart
    L-BFGS with the provided warm-start hints prepended."""
    lo = np.atleast_1d(np.asarray(lo, float))
    hi = np.atleast_1d(np.asarray(hi, float))
    if lo.shape != hi.shape or np.any(hi <= lo):
        raise ModelError("invalid solver window")
    if len(lo) == 1:
        value, mins = _minimize_1d(obj, float(lo[0]), float(hi[0]), cfg)
    else:
        value, mins = _minimize_nd(obj, lo, hi, cfg, hints=hints)
    if not mins:
        raise SolverFailure("empty minimizer set")
    return value, mins


def grid_oracle(obj: Objective, lo, hi, step: float | None = None,
                cfg: SolveConfig = SolveConfig(), refinements: int = 2):
    """Exhaustive reference minimization on a grid (n ≤ 3).

    Evaluates the full mesh at pitch ``step`` (capped per-axis at a budget
    that keeps the sweep in memory), then runs ``refinements`` local passes
    around every grid minimum within value tolerance of the best.  Returns
    (value, minimizers) with the same clustering as the fast path."""
    lo = np.atleast_1d(np.asarray(lo, float))
    hi = np.atleast_1d(np.asarray(hi, float))
    n = len(lo)
    if n > 3:
        raise ModelError("grid oracle supports n <= 3")
    if step is None:
        step = cfg.oracle_step
    caps = {1: 2_000_001, 2: 1025, 3: 129}
    counts = [int(min(np.ceil((hi[i] - lo[i]) / step) + 1, caps[n])) for i in range(n)]
    counts = [max(c, 9) for c in counts]

    def mesh(lo_, hi_, counts_):
        axes = [np.linspace(lo_[i], hi_[i], counts_[i]) for i in range(n)]
        grids = np.meshgrid(*axes, indexing="ij")
        return np.stack([g.ravel() for g in grids], axis=1), axes

    pts, axes = mesh(lo, hi, counts)
    vals = obj.values(pts)
    fbest = float(np.min(vals))
    band = max(cfg.value_tol, 1e-12 * max(1.0, abs(fbest)))
    # refinement candidates: every point within a generous band of the best
    coarse_band = max(band, float(np.quantile(vals, 0.001)) - fbest + band)
    cand_idx = np.nonzero(vals <= fbest + coarse_band)[0]
    # anchors by ascending value with greedy distance dedupe; value order
    # keeps the coarse argmin as the first anchor so no local refinement
    # window can lose it
    order = cand_idx[np.argsort(vals[cand_idx], kind="stable")]
    rtol = 10 * max(step, cfg.cluster_tol)
    reps = []
    for i in order:
        p = pts[i]
        if all(np.max(np.abs(p - q)) > rtol for q in reps):
            reps.append(p)
        if len(reps) >= 64:
            break
    out_x, out_f = [], []
    h = np.array([ax[1] - ax[0] if len(ax) > 1 else step for ax in axes])
    for rep in reps:
        local_lo, local_hi = rep - 2 * h, rep + 2 * h
        local_counts = [65] * n
        cur_lo, cur_hi = local_lo, local_hi
        best_p, best_v = rep, obj.value(rep)
        for _ in range(refinements):
            p2, axes2 = mesh(cur_lo, cur_hi, local_counts)
            v2 = obj.values(p2)
            k = int(np.argmin(v2))
            if v2[k] < best_v:
                best_p, best_v = p2[k], float(v2[k])
            h2 = np.array([ax[1] - ax[0] for ax in axes2])
            cur_lo, cur_hi = best_p - 2 * h2, best_p + 2 * h2
        if n == 1:
            x, fx = golden_section(lambda t: obj.value(np.array([t])),
                                   float(cur_lo[0]), float(cur_hi[0]), cfg.arg_tol)
            if fx < best_v:
                best_p, best_v = np.array([x]), fx
        out_x.append(np.asarray(best_p, float))
        out_f.append(best_v)
    mins, value = _cluster(out_x, out_f, cfg)
    return value, mins


def constrained_dual_minimize(dual_fn, feasible, cfg: SolveConfig = SolveConfig()):
    """Minimize a convex dual objective over a subdifferential descriptor.

    ``dual_fn`` maps ξ (vector) to a float (typically R*(−ξ)).  Interval
    feasible sets in 1D get endpoint + golden interior analysis; sampled sets
    are enumerated; boxes in higher dimension run bounded L-BFGS from the
    box corners and center.  Returns (value, ξ); ties break toward the
    lexicographically smallest ξ."""
    from .models import SubdifferentialSet  # local import to avoid a cycle

    if not isinstance(feasible, SubdifferentialSet):
        raise ModelError("feasible set must be a SubdifferentialSet")
    if feasible.points is not None:
        vals = [float(dual_fn(p)) for p in feasible.points]
        best = min(vals)
        ties = [p for p, v in zip(feasible.points, vals) if v <= best + cfg.value_tol]
        ties.sort(key=tuple)
        return best, np.asarray(ties[0], float)
    lo, hi = feasible.lo, feasible.hi
    if feasible.is_singleton:
        xi = lo.copy()
        return float(dual_fn(xi)), xi
    n = len(lo)
    if n == 1:
        a, b = float(lo[0]), float(hi[0])
        x, fx = golden_section(lambda t: float(dual_fn(np.array([t]))), a, b,
                               cfg.arg_tol)
        cands = [(float(dual_fn(np.array([a]))), a), (float(dual_fn(np.array([b]))), b),
                 (fx, x)]
        best = min(c[0] for c in cands)
        ties = sorted(x_ for v, x_ in cands if v <= best + cfg.value_tol)
        return best, np.array([ties[0]])
    starts = [0.5 * (lo + hi), lo.copy(), hi.copy()]
    best_v, best_x = np.inf, None
    for s in starts:
        res = optimize.minimize(lambda x: float(dual_fn(x)), s, method="L-BFGS-B",
                                bounds=list(zip(lo, hi)),
                                options={"ftol": 1e-16, "maxiter": 400})
        if res.fun < best_v - cfg.value_tol or (
                abs(res.fun - best_v) <= cfg.value_tol
                and (best_x is None or tuple(res.x) < tuple(best_x))):
            best_v, best_x = float(res.fun), np.asarray(res.x, float)
    return best_v, best_x
