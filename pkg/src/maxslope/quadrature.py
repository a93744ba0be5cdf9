"""σ-grids and jump-aware quadrature for dissipation integrals.

Integrands live on (0, σ*]: values of per-ρ single-step solves.  The grid is
geometric below the smallest target (resolving the ρ → 0 tail down to
ρ_min = rho_min_factor · min target) plus a uniform fill across the target
window.  Integration is per-piece Simpson between breakpoints; breakpoints
are the requested targets plus located discontinuities.  Discontinuities are
found by comparing consecutive state signatures against the median increment
and refined by bisection with fresh solves.  The head (0, ρ_min] enters as a
rectangle ρ_min·f(ρ_min) whose discrepancy against the marginal-function
drop E(u°) − φ(ρ_min) is charged to the error bar.
"""

from __future__ import annotations

import heapq
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.integrate import cumulative_simpson, cumulative_trapezoid

from .common import ModelError

__all__ = ["QuadratureSpec", "build_sigma_grid", "detect_jumps", "refine_jump",
           "PiecewiseIntegral", "worker_count", "parallel_map"]


@dataclass(frozen=True)
class QuadratureSpec:
    """Grid resolution and jump-handling knobs for the ρ integrals."""

    uniform: int = 512
    per_octave: int = 8
    rho_min_factor: float = 1e-4
    jump_factor: float = 10.0
    jump_abs: float = 1e-7
    jump_rtol: float = 1e-9

    def __post_init__(self):
        if self.uniform < 16 or self.per_octave < 1:
            raise ModelError("quadrature grid too coarse")
        if not (0 < self.rho_min_factor < 1):
            raise ModelError("rho_min_factor must sit in (0, 1)")


def build_sigma_grid(targets, spec: QuadratureSpec = QuadratureSpec()) -> np.ndarray:
    """Sorted σ grid containing every target, geometric tail + uniform fill."""
    targets = np.atleast_1d(np.asarray(targets, float))
    if np.any(targets <= 0):
        raise ModelError("σ targets must be positive")
    lo_t, hi = float(np.min(targets)), float(np.max(targets))
    rho_min = spec.rho_min_factor * lo_t
    n_oct = int(np.ceil(np.log2(hi / rho_min) * spec.per_octave)) + 1
    geo = hi * np.power(2.0, -np.arange(n_oct + 1) / spec.per_octave)
    geo = geo[geo >= rho_min * (1 - 1e-12)]
    uni = np.linspace(rho_min, hi, spec.uniform)
    pts = np.concatenate([[rho_min], geo, uni, targets])
    pts = np.unique(pts)
    # drop near-duplicates (relative 1e-12) but never a target
    keep = [0]
    t_set = set(float(t) for t in targets)
    for i in range(1, len(pts)):
        if pts[i] - pts[keep[-1]] > 1e-12 * max(1.0, pts[i]) or float(pts[i]) in t_set:
            keep.append(i)
    return pts[keep]


def detect_jumps(xs: np.ndarray, states: np.ndarray,
                 spec: QuadratureSpec = QuadratureSpec()):
    """Indices i where the state jumps between xs[i] and xs[i+1].

    A jump is an increment whose per-Δσ rate exceeds ``jump_factor`` times
    the median rate plus an absolute floor (grids are non-uniform, so rates
    rather than raw increments are compared)."""
    states = np.atleast_2d(np.asarray(states, float))
    if states.shape[0] != len(xs):
        states = states.T
    dx = np.diff(xs)
    inc = np.max(np.abs(np.diff(states, axis=0)), axis=1)
    med_rate = float(np.median(inc / np.maximum(dx, 1e-300)))
    scale = float(np.max(np.abs(states))) or 1.0
    big = inc > spec.jump_factor * max(med_rate, 1e-12) * dx + spec.jump_abs
    big |= inc > 0.25 * scale
    rates = inc / np.maximum(dx, 1e-300)
    idxs = []
    for i in np.nonzero(big)[0]:
        # a genuine discontinuity dwarfs the neighbouring rates; a steep smooth
        # ramp keeps them comparable, and rates (unlike raw increments) stay
        # comparable across spacing changes of the merged grid
        left = rates[i - 1] if i > 0 else 0.0
        right = rates[i + 1] if i + 1 < len(inc) else 0.0
        floor = spec.jump_abs / max(dx[i], 1e-300)
        if rates[i] > spec.jump_factor * max(left, right, floor) or inc[i] > 0.25 * scale:
            idxs.append(int(i))
    return idxs


def refine_jump(lo: float, hi: float, state_lo, state_hi, solve_state,
                spec: QuadratureSpec = QuadratureSpec()):
    """Bisect a located jump to relative width ``jump_rtol``.

    ``solve_state(σ)`` recomputes the full state signature.  The midpoint is
    attached to whichever side it resembles more; the final bracket gives the
    jump location and one-sided limit states."""
    state_lo = np.asarray(state_lo, float)
    state_hi = np.asarray(state_hi, float)
    for _ in range(80):
        if hi - lo <= spec.jump_rtol * max(1.0, hi):
            break
        mid = 0.5 * (lo + hi)
        sm = np.asarray(solve_state(mid), float)
        if np.max(np.abs(sm - state_lo)) <= np.max(np.abs(sm - state_hi)):
            lo, state_lo = mid, sm
        else:
            hi, state_hi = mid, sm
    return 0.5 * (lo + hi), hi - lo, state_lo, state_hi


def refine_cells(xs, fs, sample, cell_tol: float, max_depth: int = 6,
                 budget: Optional[int] = None, skip=()):
    """Subdivide cells where the midpoint Simpson/trapezoid test disagrees.

    ``sample(x)`` evaluates the integrand at a new abscissa.  Each cell gets
    a midpoint probe; when |Simpson - trapezoid| exceeds ``cell_tol`` scaled
    by the cell's share of the range, the halves are re-examined down to
    ``max_depth`` levels or until ``budget`` new samples are spent.  Cells
    whose left index is in ``skip`` (located jumps) are left alone.  Returns
    the merged abscissae and values with all original samples retained."""
    xs = np.asarray(xs, float)
    fs = np.asarray(fs, float)
    span = max(xs[-1] - xs[0], 1e-300)
    if budget is None:
        budget = 6 * len(xs)
    skip = set(int(i) for i in skip)
    extra_x, extra_f = [], []
    spent = 0
    heap = []
    tie = 0

    def probe(x0, f0, x1, f1, depth):
        # midpoint test; a cell failing it queues for subdivision with the
        # worst discrepancies served first so a budget cannot starve a kink
        nonlocal spent, tie
        if x1 - x0 <= 1e-12 * max(1.0, abs(x1)) or spent >= budget:
            return
        xm = 0.5 * (x0 + x1)
        fm = float(sample(xm))
        spent += 1
        extra_x.append(xm)
        extra_f.append(fm)
        h = x1 - x0
        miss = abs((f0 + 4.0 * fm + f1) * h / 6.0 - (f0 + f1) * h / 2.0)
        if miss > cell_tol * h / span and depth < max_depth:
            heapq.heappush(heap, (-miss, tie, x0, f0, xm, fm, x1, f1, depth))
            tie += 1

    for i in range(len(xs) - 1):
        if i not in skip:
            probe(xs[i], fs[i], xs[i + 1], fs[i + 1], 0)
    while heap and spent < budget:
        _, _, x0, f0, xm, fm, x1, f1, depth = heapq.heappop(heap)
        probe(x0, f0, xm, fm, depth + 1)
        probe(xm, fm, x1, f1, depth + 1)
    if not extra_x:
        return xs, fs
    ax = np.concatenate([xs, extra_x])
    af = np.concatenate([fs, extra_f])
    order = np.argsort(ax, kind="stable")
    return ax[order], af[order]


@dataclass(frozen=True)
class _Piece:
    xs: np.ndarray
    cum: np.ndarray
    err: np.ndarray
    offset: float
    err_offset: float


class PiecewiseIntegral:
    """Prefix integrals of a sampled integrand with interior discontinuities.

    ``jumps`` is a list of (index i, σ_x, width, f_left, f_right): the
    discontinuity sits between sample i and i+1.  Each smooth piece is
    integrated by cumulative Simpson; the Simpson/trapezoid discrepancy plus
    jump-localization width feed the error bar.  ``head`` and ``head_err``
    account for (0, xs[0]]."""

    def __init__(self, xs, fs, jumps=(), head: float = 0.0, head_err: float = 0.0):
        xs = np.asarray(xs, float)
        fs = np.asarray(fs, float)
        self.head = float(head)
        self.head_err = float(head_err)
        bounds = [-1] + [j[0] for j in sorted(jumps, key=lambda j: j[0])] + [len(xs) - 1]
        jlist = sorted(jumps, key=lambda j: j[0])
        pieces = []
        offset, err_off = self.head, self.head_err
        for k in range(len(bounds) - 1):
            i0, i1 = bounds[k] + 1, bounds[k + 1]
            px = list(xs[i0:i1 + 1])
            pf = list(fs[i0:i1 + 1])
            if k > 0:
                sx, w, fl, fr = jlist[k - 1][1], jlist[k - 1][2], jlist[k - 1][3], jlist[k - 1][4]
                if sx < px[0]:
                    px.insert(0, sx)
                    pf.insert(0, fr)
                err_off += abs(w) * max(abs(fl), abs(fr))
            if k < len(jlist):
                sx, fl = jlist[k][1], jlist[k][3]
                if not px or sx > px[-1]:
                    px.append(sx)
                    pf.append(fl)
            px = np.asarray(px, float)
            pf = np.asarray(pf, float)
            if len(px) >= 3:
                cum = cumulative_simpson(pf, x=px, initial=0.0)
                trap = cumulative_trapezoid(pf, x=px, initial=0.0)
                err = np.abs(cum - trap)
            elif len(px) == 2:
                cum = cumulative_trapezoid(pf, x=px, initial=0.0)
                err = np.abs(cum) * 0.5
            else:
                cum = np.zeros(1)
                err = np.zeros(1)
            pieces.append(_Piece(px, cum, err, offset, err_off))
            offset += float(cum[-1])
            err_off += float(err[-1])
        self._pieces = pieces
        self.total = offset
        self.total_err = err_off

    def value_at(self, x: float):
        """(integral over (0, x], error bar); x must be a sample or bound."""
        for p in self._pieces:
            if p.xs[0] - 1e-12 <= x <= p.xs[-1] + 1e-12 * max(1.0, x):
                k = int(np.argmin(np.abs(p.xs - x)))
                if abs(p.xs[k] - x) > 1e-9 * max(1.0, x):
                    raise ModelError(f"x={x} is not a quadrature sample")
                return p.offset + float(p.cum[k]), p.err_offset + float(p.err[k])
        raise ModelError(f"x={x} outside the integrated range")


def worker_count(env: str = "MAXSLOPE_THREADS") -> int:
    """Worker cap from the environment; unset means the machine default."""
    raw = os.environ.get(env)
    if raw is None:
        return max(os.cpu_count() or 1, 1)
    try:
        k = int(raw)
    except ValueError as exc:
        raise ModelError(f"{env} must be an integer, got {raw!r}") from exc
    if k < 1:
        raise ModelError(f"{env} must be >= 1")
    return k


def parallel_map(fn, items, workers: int = 1):
    """Order-preserving map; a thread pool when workers > 1.

    Tasks must be independent (no shared mutable state), which keeps the
    result identical for every schedule."""
    items = list(items)
    if workers <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=min(workers, len(items))) as pool:
        return list(pool.map(fn, items))
