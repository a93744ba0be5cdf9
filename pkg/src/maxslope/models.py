"""Dissipation potentials, energy functionals, and subdifferential descriptors.

Potentials R : R^n -> [0, ∞) are convex, vanish at 0, and grow superlinearly.
Energies E : R^n -> (-∞, ∞] are proper, lower semicontinuous, bounded below.
Both expose a ``subdifferential`` descriptor (box / singleton / sampled) plus
whatever closed forms their structure affords: conjugates, exact radial
derivative pairs, proximal maps, analytic metric slopes.
"""

from __future__ import annotations

import numpy as np

from . import convex
from .common import ModelError, as_point
from .convex import ScalarConvex

__all__ = [
    "SubdifferentialSet",
    "DissipationPotential",
    "SeparablePotential",
    "NormPotential",
    "SumPotential",
    "EnergyFunctional",
    "QuadraticEnergy",
    "HingeEnergy",
    "ZeroEnergy",
    "TwoWellEnergy",
    "PerturbedQuadraticEnergy",
    "GridPhaseFieldEnergy",
    "fenchel_gap",
    "superlinearity_offset",
    "quadratic_density",
    "power_density",
    "piecewise_quadratic_density",
]

# kink snap width: must exceed the solver's argument noise on flat branches
# (value-comparison methods resolve a quadratic minimum only to ~sqrt(eps))
_HINGE_SNAP = 1e-7


class SubdifferentialSet:
    """Descriptor of a subdifferential: a coordinate box or a finite sample.

    Boxes cover the separable cases (singletons are degenerate boxes);
    ``sampled`` holds finitely many representatives when the true set is not
    a box (segments of norm-type potentials, nonconvex branch ties).
    """

    __slots__ = ("lo", "hi", "points")

    def __init__(self, lo=None, hi=None, points=None):
        self.lo = None if lo is None else np.atleast_1d(np.asarray(lo, float))
        self.hi = None if hi is None else np.atleast_1d(np.asarray(hi, float))
        self.points = None if points is None else np.atleast_2d(np.asarray(points, float))
        if self.points is None:
            if self.lo is None or self.hi is None or self.lo.shape != self.hi.shape:
                raise ModelError("box descriptor needs matching lo/hi")
            if np.any(self.hi < self.lo - 1e-15):
                raise ModelError("box descriptor needs lo <= hi")

    # -- constructors ------------------------------------------------------

    @classmethod
    def singleton(cls, vec):
        v = np.atleast_1d(np.asarray(vec, float))
        return cls(lo=v.copy(), hi=v.copy())

    @classmethod
    def box(cls, lo, hi):
        return cls(lo=lo, hi=hi)

    @classmethod
    def sampled(cls, pts):
        return cls(points=pts)

    # -- queries -----------------------------------------------------------

    @property
    def kind(self) -> str:
        if self.points is not None:
            return "sampled"
        return "singleton" if self.is_singleton else "box"

    @property
    def is_singleton(self) -> bool:
        return self.points is None and bool(np.all(self.hi - self.lo <= 0.0))

    @property
    def vector(self) -> np.ndarray:
        if self.points is not None:
            if len(self.points) == 1:
                return self.points[0]
            raise ModelError("sampled descriptor is not a singleton")
        if not self.is_singleton:
            raise ModelError("box descriptor is not a singleton")
        return self.lo

    def distance(self, xi) -> float:
        """sup-norm distance from xi to the descriptor."""
        xi = np.atleast_1d(np.asarray(xi, float))
        if self.points is not None:
            return float(np.min(np.max(np.abs(self.points - xi), axis=1)))
        over = np.maximum(xi - self.hi, 0.0)
        under = np.maximum(self.lo - xi, 0.0)
        return float(np.max(np.maximum(over, under)))

    def contains(self, xi, tol: float = 1e-9) -> bool:
        return self.distance(xi) <= tol

    def clip(self, xi) -> np.ndarray:
        """Nearest element of the descriptor to xi."""
        xi = np.atleast_1d(np.asarray(xi, float))
        if self.points is not None:
            k = int(np.argmin(np.max(np.abs(self.points - xi), axis=1)))
            return self.points[k].copy()
        return np.clip(xi, self.lo, self.hi)

    def negated(self) -> "SubdifferentialSet":
        if self.points is not None:
            return SubdifferentialSet.sampled(-self.points)
        return SubdifferentialSet.box(-self.hi, -self.lo)

    def intersect(self, other: "SubdifferentialSet", tol: float = 0.0):
        """Box-box intersection, inflating both by ``tol``; None when empty."""
        if self.points is not None or other.points is not None:
            raise ModelError("intersection is defined for box descriptors")
        lo = np.maximum(self.lo - tol, other.lo - tol)
        hi = np.minimum(self.hi + tol, other.hi + tol)
        if np.any(hi < lo):
            return None
        return SubdifferentialSet.box(lo, hi)

    def __repr__(self):
        if self.points is not None:
            return f"SubdifferentialSet(sampled x{len(self.points)})"
        return f"SubdifferentialSet(lo={self.lo}, hi={self.hi})"


# ---------------------------------------------------------------------------
# Dissipation potentials
# ---------------------------------------------------------------------------


class DissipationPotential:
    """Base class; concrete structures override the hooks they can do exactly."""

    n: int = 1
    tag: str = "generic"
    name: str = "potential"

    def value(self, v) -> float:
        raise NotImplementedError

    def value_batch(self, V: np.ndarray) -> np.ndarray:
        return np.array([self.value(v) for v in np.atleast_2d(V)])

    def subdifferential(self, v) -> SubdifferentialSet:
        raise NotImplementedError

    def gradient(self, v):
        """Gradient where the subdifferential is a singleton, else None."""
        sub = self.subdifferential(v)
        return sub.vector if sub.is_singleton else None

    def conjugate(self, xi) -> float:
        raise NotImplementedError

    def conjugate_batch(self, Xi: np.ndarray) -> np.ndarray:
        return np.array([self.conjugate(x) for x in np.atleast_2d(Xi)])

    def radial_derivative_pair(self, v, lam: float = 1.0):
        """Exact one-sided derivatives of λ ↦ R(λv), or None for the fallback."""
        return None

    def __call__(self, v):
        return self.value(v)


def _density_conj(density: ScalarConvex, s: float) -> float:
    return float(density.conjugate(np.float64(s)))


class SeparablePotential(DissipationPotential):
    """R(v) = Σ_i w_i ψ_i(v_i) with scalar convex densities ψ_i, w_i > 0.

    A single shared density vectorizes across coordinates (the grid-integral
    case uses uniform weights h).  Subdifferentials are coordinate boxes,
    conjugates split coordinatewise: R*(ξ) = Σ_i w_i ψ_i*(ξ_i / w_i).
    """

    def __init__(self, densities, n=None, weights=None, tag="separable", name=None):
        if isinstance(densities, ScalarConvex):
            if n is None:
                raise ModelError("shared-density potential needs n")
            self.shared = densities
            self.densities = (densities,) * n
        else:
            self.shared = None
            self.densities = tuple(densities)
            n = len(self.densities)
        self.n = int(n)
        if self.n < 1:
            raise ModelError("potential dimension must be >= 1")
        self.weights = np.ones(self.n) if weights is None else np.asarray(weights, float)
        if self.weights.shape != (self.n,) or np.any(self.weights <= 0):
            raise ModelError("weights must be positive, one per coordinate")
        self.tag = tag
        self.name = name or f"separable[{self.densities[0].name}x{self.n}]"

    def value(self, v) -> float:
        v = as_point(v, self.n)
        if self.shared is not None:
            return float(np.dot(self.weights, self.shared(v)))
        return float(sum(w * d.value(x) for w, d, x in zip(self.weights, self.densities, v)))

    def value_batch(self, V) -> np.ndarray:
        V = np.atleast_2d(np.asarray(V, float))
        if self.shared is not None:
            return np.asarray(self.shared(V)) @ self.weights
        cols = [w * np.asarray(d(V[:, i])) for i, (w, d) in enumerate(zip(self.weights, self.densities))]
        return np.sum(cols, axis=0)

    def subdifferential(self, v) -> SubdifferentialSet:
        v = as_point(v, self.n)
        lo = np.empty(self.n)
        hi = np.empty(self.n)
        for i, (w, d, x) in enumerate(zip(self.weights, self.densities, v)):
            dl, dr = convex.one_sided_derivatives(d, x)
            lo[i], hi[i] = w * dl, w * dr
        return SubdifferentialSet.box(lo, hi)

    def conjugate(self, xi) -> float:
        xi = as_point(xi, self.n)
        return float(sum(w * _density_conj(d, s / w)
                         for w, d, s in zip(self.weights, self.densities, xi)))

    def conjugate_batch(self, Xi) -> np.ndarray:
        Xi = np.atleast_2d(np.asarray(Xi, float))
        if self.shared is not None and self.shared.has_closed_conjugate:
            return np.asarray(self.shared.conjugate(Xi / self.weights)) @ self.weights
        return super().conjugate_batch(Xi)

    def radial_derivative_pair(self, v, lam: float = 1.0):
        v = as_point(v, self.n)
        left = right = 0.0
        for w, d, x in zip(self.weights, self.densities, v):
            if x == 0.0:
                continue
            dl, dr = convex.one_sided_derivatives(d, lam * x)
            if x > 0:
                left += w * x * dl
                right += w * x * dr
            else:
                left += w * x * dr
                right += w * x * dl
        return (left, right)


class NormPotential(DissipationPotential):
    """R(v) = ψ(|v|) for a convex ψ with ψ(0) = 0 (so ψ is nondecreasing on R+).

    Conjugate: R*(ξ) = ψ*(|ξ|).  The subdifferential at v ≠ 0 is the segment
    [ψ'₋, ψ'₊](|v|) · v/|v| (a box in 1D, endpoint samples otherwise)."""

    def __init__(self, psi: ScalarConvex, n: int = 1, name=None):
        self.psi = psi
        self.n = int(n)
        self.tag = "metric-like"
        self.name = name or f"norm[{psi.name}]"

    def value(self, v) -> float:
        v = as_point(v, self.n)
        return float(self.psi(np.linalg.norm(v)))

    def value_batch(self, V) -> np.ndarray:
        V = np.atleast_2d(np.asarray(V, float))
        return np.asarray(self.psi(np.linalg.norm(V, axis=1)))

    def subdifferential(self, v) -> SubdifferentialSet:
        v = as_point(v, self.n)
        r = float(np.linalg.norm(v))
        if r == 0.0:
            _, dr = convex.one_sided_derivatives(self.psi, 0.0)
            if self.n == 1:
                return SubdifferentialSet.box([-dr], [dr])
            pts = [np.zeros(self.n)]
            for i in range(self.n):
                e = np.zeros(self.n)
                e[i] = dr
                pts.extend([e, -e])
            return SubdifferentialSet.sampled(pts)
        dl, dr = convex.one_sided_derivatives(self.psi, r)
        direction = v / r
        if self.n == 1:
            a, b = dl * direction[0], dr * direction[0]
            return SubdifferentialSet.box([min(a, b)], [max(a, b)])
        if abs(dr - dl) <= 1e-12 * max(1.0, abs(dr)):
            return SubdifferentialSet.singleton(dr * direction)
        return SubdifferentialSet.sampled([dl * direction, 0.5 * (dl + dr) * direction, dr * direction])

    def conjugate(self, xi) -> float:
        xi = as_point(xi, self.n)
        return _density_conj(self.psi, float(np.linalg.norm(xi)))

    def radial_derivative_pair(self, v, lam: float = 1.0):
        v = as_point(v, self.n)
        r = float(np.linalg.norm(v))
        if r == 0.0:
            return (0.0, 0.0)
        dl, dr = convex.one_sided_derivatives(self.psi, lam * r)
        return (r * dl, r * dr)


class SumPotential(DissipationPotential):
    """Pointwise sum of potentials on the same space.

    Subdifferential: Minkowski sum (boxes add).  Conjugate: numeric (the
    inf-convolution has no generic closed form)."""

    def __init__(self, parts, name=None):
        parts = tuple(parts)
        if not parts:
            raise ModelError("sum potential needs at least one part")
        self.parts = parts
        self.n = parts[0].n
        if any(p.n != self.n for p in parts):
            raise ModelError("sum potential parts must share the dimension")
        self.tag = "sum"
        self.name = name or "+".join(p.name for p in parts)

    def value(self, v) -> float:
        return float(sum(p.value(v) for p in self.parts))

    def value_batch(self, V) -> np.ndarray:
        return np.sum([p.value_batch(V) for p in self.parts], axis=0)

    def subdifferential(self, v) -> SubdifferentialSet:
        lo = np.zeros(self.n)
        hi = np.zeros(self.n)
        for p in self.parts:
            sub = p.subdifferential(v)
            if sub.points is not None:
                raise ModelError("sum potential needs box-valued parts")
            lo += sub.lo
            hi += sub.hi
        return SubdifferentialSet.box(lo, hi)

    def conjugate(self, xi) -> float:
        if self.n != 1:
            raise ModelError("numeric conjugate of a sum is 1D-only")
        s = float(as_point(xi, 1)[0])

        def scalar(r):
            r = np.asarray(r, float)
            flat = np.atleast_1d(r).reshape(-1, 1)
            out = self.value_batch(flat)
            return out.reshape(np.shape(r)) if np.ndim(r) else float(out[0])

        return convex.conjugate_1d(scalar, s)

    def radial_derivative_pair(self, v, lam: float = 1.0):
        pairs = [convex.radial_derivative_pair(p, v, lam) for p in self.parts]
        return (sum(p[0] for p in pairs), sum(p[1] for p in pairs))


# ---------------------------------------------------------------------------
# Built-in scalar densities
# ---------------------------------------------------------------------------


def quadratic_density(curvature: float = 1.0) -> ScalarConvex:
    """ψ(r) = c r²/2; conjugate s²/(2c); prox shrinkage."""
    c = float(curvature)
    if c <= 0:
        raise ModelError("curvature must be positive")
    return ScalarConvex(
        value=lambda r: 0.5 * c * np.square(r),
        deriv=lambda r: c * np.asarray(r, float),
        deriv_pair=lambda lam: (c * lam, c * lam),
        conjugate=lambda s: np.square(s) / (2.0 * c),
        prox=lambda s, eta: s / (1.0 + eta * c),
        name=f"quadratic(c={c:g})",
    )


def power_density(p: float, scale: float = 1.0) -> ScalarConvex:
    """ψ(r) = a |r|^p / p, p > 1; conjugate a^(1-q) |s|^q / q with q = p/(p-1)."""
    p = float(p)
    a = float(scale)
    if p <= 1 or a <= 0:
        raise ModelError("power density needs p > 1 and scale > 0")
    q = p / (p - 1.0)

    def val(r):
        return a * np.power(np.abs(r), p) / p

    def der(r):
        r = np.asarray(r, float)
        return a * np.sign(r) * np.power(np.abs(r), p - 1.0)

    def conj(s):
        return a ** (1.0 - q) * np.power(np.abs(s), q) / q

    prox = None
    if p == 2.0:
        prox = lambda s, eta: s / (1.0 + eta * a)

    return ScalarConvex(
        value=val,
        deriv=der,
        deriv_pair=lambda lam: (float(der(lam)), float(der(lam))),
        conjugate=conj,
        prox=prox,
        name=f"power(p={p:g},a={a:g})",
    )


def piecewise_quadratic_density(kink: float = 1.0, inner: float = 1.0,
                                outer: float = 4.0) -> ScalarConvex:
    """Even density with curvature jump at ±kink.

    ψ(r) = i r²/2 on |r| ≤ k and (o r² − (o−i) k²)/2 beyond; the derivative
    jumps from i·k to o·k at r = k, so ∂ψ(±k) is a genuine interval and the
    radial derivative is multi-valued exactly on |r| = k.  Conjugate:
    s²/(2i) for |s| ≤ ik, k|s| − i k²/2 for ik ≤ |s| ≤ ok, and
    s²/(2o) + (o−i)k²/2 beyond.  Prox is piecewise exact.
    """
    k, i, o = float(kink), float(inner), float(outer)
    if not (k > 0 and 0 < i < o):
        raise ModelError("need kink > 0 and 0 < inner < outer")

    def val(r):
        r = np.asarray(r, float)
        a = np.abs(r)
        return np.where(a <= k, 0.5 * i * r * r, 0.5 * (o * r * r - (o - i) * k * k))

    def der(r):
        r = np.asarray(r, float)
        return np.where(np.abs(r) <= k, i * r, o * r)

    def der_pair(lam):
        if abs(lam - k) <= _HINGE_SNAP * max(1.0, k):
            return (i * k, o * k)
        if abs(lam + k) <= _HINGE_SNAP * max(1.0, k):
            return (-o * k, -i * k)
        d = i * lam if abs(lam) < k else o * lam
        return (float(d), float(d))

    def conj(s):
        s = np.asarray(s, float)
        a = np.abs(s)
        mid = k * a - 0.5 * i * k * k
        high = 0.5 * s * s / o + 0.5 * (o - i) * k * k
        return np.where(a <= i * k, 0.5 * s * s / i, np.where(a <= o * k, mid, high))

    def prox(s, eta):
        s = np.asarray(s, dtype=float)
        w_in = s / (1.0 + eta * i)
        w_out = s / (1.0 + eta * o)
        out = np.where(np.abs(w_in) <= k, w_in,
                       np.where(np.abs(w_out) >= k, w_out, np.sign(s) * k))
        return out if out.ndim else float(out)

    return ScalarConvex(
        value=val, deriv=der, deriv_pair=der_pair, conjugate=conj, prox=prox,
        breakpoints=(-k, k), name=f"piecewise-quadratic(k={k:g},{i:g}/{o:g})",
    )


# ---------------------------------------------------------------------------
# Energies
# ---------------------------------------------------------------------------


class EnergyFunctional:
    """Base energy: proper, lsc, bounded below.

    ``lam`` is a λ-convexity constant when known (None otherwise) and
    ``slope`` an analytic metric slope w.r.t. the Euclidean distance when the
    model affords one (estimators take over otherwise)."""

    n: int = 1
    name: str = "energy"
    lam = None

    def value(self, u) -> float:
        raise NotImplementedError

    def value_batch(self, U: np.ndarray) -> np.ndarray:
        return np.array([self.value(u) for u in np.atleast_2d(U)])

    def subdifferential(self, u) -> SubdifferentialSet:
        raise NotImplementedError

    def lower_bound(self) -> float:
        raise NotImplementedError

    def slope(self, u):
        return None

    def sublevel_radius(self, level: float):
        """r with {E ≤ level} ⊂ {‖u‖∞ ≤ r}, or None when unbounded/unknown."""
        return None

    def __call__(self, u):
        return self.value(u)


class QuadraticEnergy(EnergyFunctional):
    """E(u) = u·A u / 2 + b·u + c with A symmetric positive semidefinite."""

    def __init__(self, A=1.0, b=0.0, c=0.0, n=None, name="quadratic-energy"):
        A = np.atleast_2d(np.asarray(A, float))
        if n is None:
            n = A.shape[0]
        if A.shape != (n, n):
            raise ModelError("A must be n x n")
        self.A = 0.5 * (A + A.T)
        self.b = np.broadcast_to(np.asarray(b, float), (n,)).astype(float)
        self.c = float(c)
        self.n = int(n)
        self.name = name
        eigs = np.linalg.eigvalsh(self.A)
        if eigs[0] < -1e-12:
            raise ModelError("A must be positive semidefinite")
        self.lam = float(max(eigs[0], 0.0))
        if eigs[0] > 1e-12:
            ustar = np.linalg.solve(self.A, -self.b)
            self._lower = float(self.value(ustar))
        elif np.allclose(self.b, 0.0):
            self._lower = self.c
        else:
            raise ModelError("unbounded-below quadratic energy")

    def value(self, u) -> float:
        u = as_point(u, self.n)
        return float(0.5 * u @ self.A @ u + self.b @ u + self.c)

    def value_batch(self, U) -> np.ndarray:
        U = np.atleast_2d(np.asarray(U, float))
        return 0.5 * np.einsum("ij,jk,ik->i", U, self.A, U) + U @ self.b + self.c

    def gradient(self, u) -> np.ndarray:
        return self.A @ as_point(u, self.n) + self.b

    def subdifferential(self, u) -> SubdifferentialSet:
        return SubdifferentialSet.singleton(self.gradient(u))

    def lower_bound(self) -> float:
        return self._lower

    def slope(self, u) -> float:
        return float(np.linalg.norm(self.gradient(u)))

    def sublevel_radius(self, level: float):
        if self.lam <= 1e-12:
            return None
        if level < self._lower:
            return 0.0
        ustar = np.linalg.solve(self.A, -self.b)
        return float(np.max(np.abs(ustar)) + np.sqrt(2.0 * (level - self._lower) / self.lam))


class HingeEnergy(EnergyFunctional):
    """E(u) = max(u, 0) on the line: flat for u ≤ 0, slope 1 beyond.

    ∂E(0) = [0, 1]; descriptor and slope snap to the kink within the snap
    width since certified minimizers land there only up to solver noise."""

    n = 1
    name = "hinge-energy"
    lam = 0.0

    def value(self, u) -> float:
        return float(max(as_point(u, 1)[0], 0.0))

    def value_batch(self, U) -> np.ndarray:
        U = np.atleast_2d(np.asarray(U, float))
        return np.maximum(U[:, 0], 0.0)

    def subdifferential(self, u) -> SubdifferentialSet:
        x = as_point(u, 1)[0]
        if abs(x) <= _HINGE_SNAP:
            return SubdifferentialSet.box([0.0], [1.0])
        return SubdifferentialSet.singleton([1.0 if x > 0 else 0.0])

    def lower_bound(self) -> float:
        return 0.0

    def slope(self, u) -> float:
        return 1.0 if as_point(u, 1)[0] > _HINGE_SNAP else 0.0


class ZeroEnergy(EnergyFunctional):
    def __init__(self, n=1):
        self.n = int(n)
        self.name = "zero-energy"
        self.lam = 0.0

    def value(self, u) -> float:
        as_point(u, self.n)
        return 0.0

    def value_batch(self, U) -> np.ndarray:
        return np.zeros(len(np.atleast_2d(U)))

    def subdifferential(self, u) -> SubdifferentialSet:
        return SubdifferentialSet.singleton(np.zeros(self.n))

    def lower_bound(self) -> float:
        return 0.0

    def slope(self, u) -> float:
        return 0.0


class TwoWellEnergy(EnergyFunctional):
    """E(u) = min_j [ c_j |u − m_j|²/2 + o_j ]: smooth wells glued by a min.

    Nonconvex; the descriptor returns the active well's gradient (both at
    exact ties).  Minimizing movements against this energy produce genuine
    interpolant jumps when the far well undercuts the near one."""

    def __init__(self, centers, offsets, curvatures=None, n=1, name="two-well-energy"):
        self.n = int(n)
        self.centers = [as_point(m, self.n) for m in centers]
        self.offsets = [float(o) for o in offsets]
        if curvatures is None:
            curvatures = [1.0] * len(self.centers)
        self.curvatures = [float(c) for c in curvatures]
        if not (len(self.centers) == len(self.offsets) == len(self.curvatures)):
            raise ModelError("wells need matching centers/offsets/curvatures")
        if min(self.curvatures) <= 0:
            raise ModelError("well curvatures must be positive")
        self.name = name
        self.lam = None

    def _branch_values(self, u):
        u = as_point(u, self.n)
        return np.array([0.5 * c * float(np.sum((u - m) ** 2)) + o
                         for m, o, c in zip(self.centers, self.offsets, self.curvatures)])

    def value(self, u) -> float:
        return float(np.min(self._branch_values(u)))

    def value_batch(self, U) -> np.ndarray:
        U = np.atleast_2d(np.asarray(U, float))
        vals = [0.5 * c * np.sum((U - m) ** 2, axis=1) + o
                for m, o, c in zip(self.centers, self.offsets, self.curvatures)]
        return np.min(vals, axis=0)

    def subdifferential(self, u) -> SubdifferentialSet:
        u = as_point(u, self.n)
        vals = self._branch_values(u)
        best = float(np.min(vals))
        grads = [c * (u - m) for m, c, v in zip(self.centers, self.curvatures, vals)
                 if v <= best + 1e-12 * max(1.0, abs(best))]
        if len(grads) == 1:
            return SubdifferentialSet.singleton(grads[0])
        return SubdifferentialSet.sampled(grads)

    def lower_bound(self) -> float:
        return min(self.offsets)

    def sublevel_radius(self, level: float):
        radii = [float(np.max(np.abs(m))) + np.sqrt(max(2.0 * (level - o) / c, 0.0))
                 for m, o, c in zip(self.centers, self.offsets, self.curvatures)
                 if level >= o]
        return max(radii) if radii else 0.0


class PerturbedQuadraticEnergy(EnergyFunctional):
    """Strongly convex quadratic plus a bounded smooth sinusoidal ripple.

    E(u) = u·Au/2 + b·u + amp·Σ_i sin(f_i u_i + φ_i).  Stays λ-convex with
    λ = λ_min(A) − amp·max f², which the constructor requires positive."""

    def __init__(self, A, b, amp, freq, phase=None, name="perturbed-quadratic"):
        A = np.atleast_2d(np.asarray(A, float))
        self.n = A.shape[0]
        self.A = 0.5 * (A + A.T)
        self.b = np.broadcast_to(np.asarray(b, float), (self.n,)).astype(float)
        self.amp = float(amp)
        self.freq = np.broadcast_to(np.asarray(freq, float), (self.n,)).astype(float)
        self.phase = (np.zeros(self.n) if phase is None
                      else np.broadcast_to(np.asarray(phase, float), (self.n,)).astype(float))
        self.name = name
        lam_quad = float(np.linalg.eigvalsh(self.A)[0])
        self.lam = lam_quad - abs(self.amp) * float(np.max(self.freq) ** 2)
        if self.lam <= 0:
            raise ModelError("perturbation destroys convexity; shrink amp or freq")
        # global minimum via the convexity bound: E >= quadratic part - n*amp
        if lam_quad <= 1e-12:
            raise ModelError("quadratic part must be positive definite")
        ustar = np.linalg.solve(self.A, -self.b)
        self._lam_quad = lam_quad
        self._ustar = ustar
        self._quad_lower = float(0.5 * ustar @ self.A @ ustar + self.b @ ustar)
        self._lower = self._quad_lower - self.n * abs(self.amp)

    def value(self, u) -> float:
        u = as_point(u, self.n)
        return float(0.5 * u @ self.A @ u + self.b @ u
                     + self.amp * np.sum(np.sin(self.freq * u + self.phase)))

    def value_batch(self, U) -> np.ndarray:
        U = np.atleast_2d(np.asarray(U, float))
        quad = 0.5 * np.einsum("ij,jk,ik->i", U, self.A, U) + U @ self.b
        return quad + self.amp * np.sum(np.sin(self.freq * U + self.phase), axis=1)

    def gradient(self, u) -> np.ndarray:
        u = as_point(u, self.n)
        return self.A @ u + self.b + self.amp * self.freq * np.cos(self.freq * u + self.phase)

    def subdifferential(self, u) -> SubdifferentialSet:
        return SubdifferentialSet.singleton(self.gradient(u))

    def lower_bound(self) -> float:
        return self._lower

    def slope(self, u) -> float:
        return float(np.linalg.norm(self.gradient(u)))

    def sublevel_radius(self, level: float):
        # {E <= L} sits inside {quadratic part <= L + n·|amp|}
        slack = max(level + self.n * abs(self.amp) - self._quad_lower, 0.0)
        return float(np.max(np.abs(self._ustar)) + np.sqrt(2.0 * slack / self._lam_quad))


class GridPhaseFieldEnergy(EnergyFunctional):
    """Discretized scalar phase-field energy on (0,1) with zero boundary data.

    n interior nodes, h = 1/(n+1):

        E(u) = Σ_{i=0..n} (u_{i+1}−u_i)²/(2h) + h Σ_{i=1..n} W(u_i),

    with the double-well W(r) = (r²−1)²/4.  Gradient:
    (2u_j − u_{j−1} − u_{j+1})/h + h W'(u_j).  The Hessian is the stiff
    tridiagonal Laplacian plus h·diag(W''), so λ-convexity holds with
    λ = λ_min(K) − h (W'' ≥ −1)."""

    def __init__(self, n: int = 64, name="phase-field-grid"):
        self.n = int(n)
        if self.n < 2:
            raise ModelError("grid energy needs at least 2 interior nodes")
        self.h = 1.0 / (self.n + 1)
        self.name = name
        main = np.full(self.n, 2.0 / self.h)
        off = np.full(self.n - 1, -1.0 / self.h)
        from scipy.linalg import eigh_tridiagonal

        lam_min = float(eigh_tridiagonal(main, off, select="i",
                                         select_range=(0, 0))[0][0])
        self.lam = lam_min - self.h
        # E >= 0 termwise (quadratic part and W are nonnegative)
        self._lower = 0.0

    def _pad(self, U):
        U = np.atleast_2d(np.asarray(U, float))
        z = np.zeros((U.shape[0], 1))
        return np.hstack([z, U, z])

    def value(self, u) -> float:
        return float(self.value_batch(as_point(u, self.n)[None, :])[0])

    def value_batch(self, U) -> np.ndarray:
        P = self._pad(U)
        grad_term = np.sum(np.diff(P, axis=1) ** 2, axis=1) / (2.0 * self.h)
        U = P[:, 1:-1]
        well = 0.25 * np.sum((U * U - 1.0) ** 2, axis=1) * self.h
        return grad_term + well

    def gradient(self, u) -> np.ndarray:
        u = as_point(u, self.n)
        p = np.concatenate([[0.0], u, [0.0]])
        lap = (2.0 * p[1:-1] - p[:-2] - p[2:]) / self.h
        wprime = u * (u * u - 1.0)
        return lap + self.h * wprime

    def subdifferential(self, u) -> SubdifferentialSet:
        return SubdifferentialSet.singleton(self.gradient(u))

    def lower_bound(self) -> float:
        return self._lower

    def slope(self, u) -> float:
        return float(np.linalg.norm(self.gradient(u)))

    def sublevel_radius(self, level: float):
        # the well term alone forces h(u_j² − 1)²/4 ≤ level at every node
        if level < 0:
            return 0.0
        return float(np.sqrt(1.0 + 2.0 * np.sqrt(level / self.h)))


# ---------------------------------------------------------------------------
# Module-level helpers
# ---------------------------------------------------------------------------


def fenchel_gap(R: DissipationPotential, v, xi) -> float:
    """R(v) + R*(ξ) − ⟨ξ, v⟩ ≥ 0; zero iff ξ ∈ ∂R(v)."""
    v = as_point(v, R.n)
    xi = as_point(xi, R.n)
    return float(R.value(v) + R.conjugate(xi) - xi @ v)


def superlinearity_offset(R: DissipationPotential, directions: int = 16,
                          t_max: float = 1e6) -> float:
    """Smallest C with |w| ≤ C + R(w) for all w, probed along fixed rays.

    Superlinear growth makes sup_w (|w| − R(w)) finite and attained; the
    probe takes the max over seeded unit directions of the 1D suprema."""
    rng = np.random.default_rng(1729)
    if R.n == 1:
        dirs = np.array([[1.0], [-1.0]])
    else:
        raw = rng.standard_normal((directions, R.n))
        raw = np.vstack([raw, np.eye(R.n), -np.eye(R.n)])
        dirs = raw / np.linalg.norm(raw, axis=1, keepdims=True)
    best = 0.0
    for d in dirs:
        t = 1.0
        t_hi = t
        # expand until the margin decays (superlinearity kicks in)
        while t_hi < t_max:
            if t_hi - R.value(t_hi * d) < -abs(t_hi) * 0.5:
                break
            t_hi *= 2.0
        grid = np.linspace(0.0, t_hi, 4097)
        vals = grid - R.value_batch(grid[:, None] * d[None, :])
        k = int(np.argmax(vals))
        lo = grid[max(k - 1, 0)]
        hi = grid[min(k + 1, len(grid) - 1)]
        fine = np.linspace(lo, hi, 4097)
        vals = fine - R.value_batch(fine[:, None] * d[None, :])
        best = max(best, float(np.max(vals)))
    return best
