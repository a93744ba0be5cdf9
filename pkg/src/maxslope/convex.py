"""Scalar convex analysis kernel.

One-sided derivatives of convex functions via monotone difference quotients,
numeric Legendre conjugates with auto-expanded windows, and radial profiles

    g(t) = t * R(v / t)

of dissipation potentials.  The radial machinery rests on two classical
identities: the directional derivative of a convex function is the support
function of its subdifferential, and on ∂R(w) the conjugate is affine,
R*(ξ) = ⟨ξ, w⟩ − R(w).  Hence with f(λ) = R(λw),

    max R*(∂R(w)) = f'₊(1) − R(w),      min R*(∂R(w)) = f'₋(1) − R(w),

and the profile derivatives are g'₋(t) = −max R*(∂R(v/t)),
g'₊(t) = −min R*(∂R(v/t)).  Everything here is deterministic.
"""

from __future__ import annotations

import numpy as np

from .common import ModelError

__all__ = [
    "ScalarConvex",
    "one_sided_derivatives",
    "conjugate_1d",
    "radial_derivative_pair",
    "radial_profile",
    "is_radially_differentiable",
    "p_mapping",
]

# Difference-quotient ladder: h_k = H0 * 2^-k, stop once consecutive
# quotients move by less than STAB (convexity makes them monotone).
_H0 = 1e-2
_LEVELS = 21
_STAB = 1e-8

# Kink snap width for closed-form derivative pairs.
_SNAP = 1e-9


class ScalarConvex:
    """A finite convex function on the real line, R(0) arbitrary.

    Wraps a vectorized evaluation callable plus optional closed forms:
    ``deriv`` (single-valued derivative away from ``breakpoints``),
    ``deriv_pair`` (exact one-sided derivatives, overrides everything),
    ``conjugate`` and ``prox``.  ``breakpoints`` lists the kink locations;
    between them ``deriv`` must be the classical derivative.
    """

    def __init__(self, value, deriv=None, deriv_pair=None, conjugate=None,
                 prox=None, breakpoints=(), name="scalar-convex"):
        self._value = value
        self._deriv = deriv
        self._deriv_pair = deriv_pair
        self._conjugate = conjugate
        self._prox = prox
        self.breakpoints = tuple(float(b) for b in sorted(breakpoints))
        self.name = name

    def __call__(self, r):
        out = self._value(np.asarray(r, dtype=float))
        return out

    def value(self, r) -> float:
        return float(self._value(np.float64(r)))

    # -- derivatives -----------------------------------------------------

    @property
    def has_closed_derivative(self) -> bool:
        return self._deriv is not None or self._deriv_pair is not None

    def derivative_pair(self, lam: float, snap: float = _SNAP):
        """Exact (f'₋, f'₊) at ``lam`` when closed forms exist, else None."""
        if self._deriv_pair is not None:
            left, right = self._deriv_pair(float(lam))
            return float(left), float(right)
        if self._deriv is None:
            return None
        lam = float(lam)
        for b in self.breakpoints:
            if abs(lam - b) <= snap * max(1.0, abs(b)):
                off = snap * max(1.0, abs(b))
                return (float(self._deriv(b - off)), float(self._deriv(b + off)))
        d = float(self._deriv(lam))
        return (d, d)

    # -- conjugate and prox ----------------------------------------------

    @property
    def has_closed_conjugate(self) -> bool:
        return self._conjugate is not None

    def conjugate(self, s):
        if self._conjugate is not None:
            return self._conjugate(np.asarray(s, dtype=float))
        s = np.asarray(s, dtype=float)
        if s.ndim == 0:
            return np.float64(conjugate_1d(self, float(s)))
        return np.array([conjugate_1d(self, float(x)) for x in s])

    @property
    def has_closed_prox(self) -> bool:
        return self._prox is not None

    def prox(self, s: float, eta: float) -> float:
        """argmin_w (w-s)^2/(2 eta) + f(w); closed form only (see moreau)."""
        if self._prox is None:
            raise ModelError(f"{self.name} has no closed-form prox")
        return float(self._prox(float(s), float(eta)))


def _quotient_limit(values) -> float:
    prev = None
    for q in values:
        if not np.isfinite(q):
            raise ModelError("non-finite difference quotient (domain violation?)")
        if prev is not None and abs(q - prev) < _STAB:
            return q
        prev = q
    return prev


def one_sided_derivatives(f, lam: float, h0: float = _H0, levels: int = _LEVELS):
    """(f'₋(lam), f'₊(lam)) for a convex scalar function.

    Closed forms are used when ``f`` is a ScalarConvex carrying them;
    otherwise monotone difference quotients with the geometric step ladder
    h_k = h0 * 2^-k, stopping at the first stable quotient.  Convexity makes
    the right quotients decrease and the left quotients increase, so the
    returned pair brackets the true subdifferential interval.
    """
    if isinstance(f, ScalarConvex):
        pair = f.derivative_pair(lam)
        if pair is not None:
            return pair
        fn = f.value
    else:
        fn = lambda x: float(f(x))
    lam = float(lam)
    f0 = fn(lam)
    hs = h0 * np.power(2.0, -np.arange(levels))
    right = _quotient_limit((fn(lam + h) - f0) / h for h in hs)
    left = _quotient_limit((f0 - fn(lam - h)) / h for h in hs)
    return (left, right)


def conjugate_1d(f, s: float, window: float = 1.0, samples: int = 4001,
                 max_expand: int = 60) -> float:
    """Legendre conjugate f*(s) = sup_r [ s r − f(r) ] of a superlinear f.

    Uses the closed form when available.  Otherwise maximizes on a dense
    grid whose window doubles until the maximizer is strictly interior
    (superlinearity guarantees termination), then refines the grid twice
    around the argmax and polishes with a golden-section pass.
    """
    if isinstance(f, ScalarConvex) and f._conjugate is not None:
        return float(f._conjugate(np.float64(s)))
    s = float(s)
    evaluate = f if not isinstance(f, ScalarConvex) else f.__call__

    def m(r):
        return s * r - np.asarray(evaluate(r), dtype=float)

    w = float(window)
    for _ in range(max_expand):
        grid = np.linspace(-w, w, samples)
        vals = m(grid)
        if not np.all(np.isfinite(vals)):
            raise ModelError("conjugate target is not finite on the window")
        k = int(np.argmax(vals))
        if 2 <= k <= samples - 3:
            break
        w *= 2.0
        if w > 1e12:
            raise ModelError("conjugate window expansion failed; f may lack "
                             "superlinear growth")
    else:
        raise ModelError("conjugate window expansion failed to interiorize")

    for _ in range(2):
        h = grid[1] - grid[0]
        grid = np.linspace(grid[k] - 2 * h, grid[k] + 2 * h, samples)
        vals = m(grid)
        k = int(np.argmax(vals))

    lo, hi = grid[max(k - 1, 0)], grid[min(k + 1, samples - 1)]
    # golden-section maximization on the final bracket
    invphi = (np.sqrt(5.0) - 1.0) / 2.0
    a, b = lo, hi
    c, d = b - invphi * (b - a), a + invphi * (b - a)
    fc, fd = float(m(c)), float(m(d))
    for _ in range(120):
        if b - a < 1e-13 * max(1.0, abs(a) + abs(b)):
            break
        if fc > fd:
            b, d, fd = d, c, fc
            c = b - invphi * (b - a)
            fc = float(m(c))
        else:
            a, c, fc = c, d, fd
            d = a + invphi * (b - a)
            fd = float(m(d))
    return max(float(vals[k]), fc, fd)


def radial_derivative_pair(R, v, lam: float = 1.0):
    """One-sided derivatives of λ ↦ R(λ v) at ``lam``.

    Prefers an exact hook ``R.radial_derivative_pair`` (structured
    potentials), falling back to difference quotients of the scalar map.
    """
    hook = getattr(R, "radial_derivative_pair", None)
    if hook is not None:
        pair = hook(v, lam)
        if pair is not None:
            return pair
    value = getattr(R, "value", None)
    if value is None:
        value = R
    v = np.asarray(v, dtype=float)
    return one_sided_derivatives(lambda t: float(value(t * v)), lam)


def radial_profile(R, v, t: float):
    """(g(t), g'₋(t), g'₊(t)) for the profile g(t) = t R(v/t), t > 0.

    g is convex and nonincreasing; its one-sided slopes equal the negated
    extremes of R* over ∂R(v/t).
    """
    if t <= 0.0:
        raise ModelError("radial profile needs t > 0")
    v = np.asarray(v, dtype=float)
    w = v / t
    value = getattr(R, "value", R)
    rw = float(value(w))
    g = t * rw
    if not np.any(v):
        return (g, 0.0, 0.0)
    fm, fp = radial_derivative_pair(R, w, 1.0)
    max_conj = fp - rw
    min_conj = fm - rw
    return (g, -max_conj, -min_conj)


def is_radially_differentiable(R, v, tol: float = 1e-6) -> bool:
    """Whether λ ↦ R(λv) is differentiable at λ=1 (R* constant on ∂R(v))."""
    v = np.asarray(v, dtype=float)
    if not np.any(v):
        raise ModelError("radial differentiability is tested at v != 0")
    fm, fp = radial_derivative_pair(R, v, 1.0)
    return bool(fp - fm <= tol * max(1.0, abs(fp), abs(fm)))


def p_mapping(R, v, tol: float = 1e-6) -> float:
    """The pairing 𝔓(v) = ⟨ξ, v⟩, ξ ∈ ∂R(v), where it is single-valued.

    Equals R(v) + R*(ξ), and p·R(v) for p-homogeneous R.  Raises when the
    pairing is genuinely multi-valued at ``v``.
    """
    v = np.asarray(v, dtype=float)
    if not np.any(v):
        return 0.0
    fm, fp = radial_derivative_pair(R, v, 1.0)
    if fp - fm > tol * max(1.0, abs(fp), abs(fm)):
        raise ModelError("radial derivative is multi-valued at v; "
                         "the pairing is not single-valued")
    return 0.5 * (fm + fp)
