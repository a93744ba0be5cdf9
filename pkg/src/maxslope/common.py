"""Shared result containers, classification labels, and exceptions."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "ModelError",
    "SolverFailure",
    "ConfigurationError",
    "IDENTITY",
    "STRICT",
    "VIOLATION",
    "INCONCLUSIVE",
    "classify_gap",
    "StepResult",
    "SweepRow",
    "JumpRecord",
    "InterpolantTrace",
    "GapReport",
    "as_point",
]


class ModelError(ValueError):
    """A functional was used outside its contract (domain, structure, growth)."""


class SolverFailure(RuntimeError):
    """Minimization did not produce a certified answer."""


class ConfigurationError(ValueError):
    """Invalid scenario document or option set."""


IDENTITY = "identity"
STRICT = "strict-estimate"
VIOLATION = "violation"
INCONCLUSIVE = "inconclusive"


def classify_gap(gap: float, tol: float, err: float) -> str:
    """Label an energy-dissipation gap.

    ``gap`` is the upper-estimate residual (nonnegative when the one-sided
    estimate holds).  Within ``tol`` of zero it counts as an identity.  A
    label that would depend on resolving less than the quadrature error bar
    ``err`` is downgraded to inconclusive rather than risking a wrong call.
    """
    if abs(gap) <= tol:
        return IDENTITY
    if gap > tol:
        return STRICT if gap > err else INCONCLUSIVE
    return VIOLATION if -gap > err else INCONCLUSIVE


def as_point(u, n: int) -> np.ndarray:
    """Coerce scalars / sequences to a float vector of length ``n``."""
    arr = np.atleast_1d(np.asarray(u, dtype=float))
    if arr.shape != (n,):
        raise ModelError(f"expected a point of dimension {n}, got shape {arr.shape}")
    return arr


@dataclass(frozen=True)
class StepResult:
    """Outcome of one single-step minimization at time step ``sigma``.

    ``minimizers`` holds every global minimizer found (clustered, ordered
    lexicographically); ``d_minus``/``d_plus`` are the smallest and largest
    distance from the base point over that set.
    """

    sigma: float
    value: float
    minimizers: tuple
    d_minus: float
    d_plus: float

    @property
    def minimizer(self) -> np.ndarray:
        return self.minimizers[0]


@dataclass(frozen=True)
class SweepRow:
    """One σ sample of an interpolant sweep, with certificate bookkeeping.

    Banach rows populate ``xi``; metric rows populate ``d_minus``/``d_plus``,
    ``slope`` and the two identity residual variants.  ``conditioned`` is the
    integrand actually used in the dissipation integral (conditioned slope in
    the Banach case, dual of the relaxed slope in the metric case) and
    ``integral`` its running integral from 0 to ``sigma``.
    """

    sigma: float
    u: np.ndarray
    phi: float
    energy: float
    dissipation: float
    r_slope: float
    conditioned: float
    integral: float
    gap: float
    classification: str
    quad_error: float
    xi: np.ndarray | None = None
    d_minus: float | None = None
    d_plus: float | None = None
    slope: float | None = None
    identity_minus: float | None = None
    identity_plus: float | None = None


@dataclass(frozen=True)
class JumpRecord:
    """A located discontinuity of the interpolant map σ ↦ ũ_σ."""

    sigma: float
    width: float
    u_left: np.ndarray
    u_right: np.ndarray
    value_left: float
    value_right: float


@dataclass
class InterpolantTrace:
    """σ-indexed record of single-step solves plus located jumps."""

    kind: str
    u0: np.ndarray
    rows: list = field(default_factory=list)
    jumps: list = field(default_factory=list)
    rho_min: float = 0.0

    @property
    def sigmas(self) -> np.ndarray:
        return np.array([r.sigma for r in self.rows])

    def row_at(self, sigma: float) -> SweepRow:
        for r in self.rows:
            if abs(r.sigma - sigma) <= 1e-12 * max(1.0, sigma):
                return r
        raise KeyError(f"sigma={sigma} is not a sample of this trace")


@dataclass
class GapReport:
    """Per-σ energy-dissipation certificates for one scenario."""

    name: str
    kind: str
    rows: list

    @property
    def classifications(self) -> list:
        return [r.classification for r in self.rows]

    @property
    def worst_gap(self) -> float:
        return min(r.gap for r in self.rows)

    @property
    def has_violation(self) -> bool:
        return any(r.classification == VIOLATION for r in self.rows)
