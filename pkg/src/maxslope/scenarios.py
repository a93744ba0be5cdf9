"""Built-in scenario registry and the JSON scenario loader.

A scenario bundles one system (metric or Banach flavour), a start point,
a σ window, and the solver/quadrature knobs the commands need.  Built-ins
cover the closed-form models the test suite certifies against; custom
scenarios come from JSON files with the same structure-tag vocabulary.
"""

from __future__ import annotations

import dataclasses
import json
import os
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .banach import BanachSystem
from .common import ConfigurationError, as_point
from .convex import ScalarConvex
from .metric import MetricModel, MetricSystem, euclidean_metric, truncated_metric
from .models import (
    DissipationPotential,
    EnergyFunctional,
    GridPhaseFieldEnergy,
    HingeEnergy,
    NormPotential,
    PerturbedQuadraticEnergy,
    QuadraticEnergy,
    SeparablePotential,
    TwoWellEnergy,
    ZeroEnergy,
    piecewise_quadratic_density,
    power_density,
    quadratic_density,
)
from .quadrature import QuadratureSpec
from .solve import SolveConfig

__all__ = ["Scenario", "load_scenario", "registry_names", "scenario_from_dict"]


@dataclass(frozen=True)
class Scenario:
    """Everything a command needs to run one model end to end."""

    name: str
    kind: str                          # "metric" or "banach"
    system: object
    u0: np.ndarray
    sigma_window: tuple
    sigma_samples: int = 33
    gap_tol: float = 1e-4
    solve: SolveConfig = field(default_factory=SolveConfig)
    quadrature: QuadratureSpec = field(default_factory=QuadratureSpec)
    tau: float = 0.25
    horizon: float = 1.0
    description: str = ""

    def sigma_targets(self, samples: Optional[int] = None) -> np.ndarray:
        lo, hi = self.sigma_window
        m = self.sigma_samples if samples is None else int(samples)
        if m < 1:
            raise ConfigurationError("sigma sample count must be positive")
        if m == 1:
            return np.array([hi])
        return np.linspace(lo, hi, m)


# ---------------------------------------------------------------------------
# Built-ins
# ---------------------------------------------------------------------------


def _quadratic_scenario() -> Scenario:
    sys = BanachSystem(
        dissipation=SeparablePotential(quadratic_density(1.0), n=1,
                                       name="quadratic-rate"),
        energy=QuadraticEnergy(1.0, n=1),
        name="quadratic")
    return Scenario(
        name="quadratic", kind="banach", system=sys, u0=np.array([1.0]),
        sigma_window=(0.5, 8.0), sigma_samples=16, tau=0.5, horizon=2.0,
        description="strongly convex quadratic flow; the interpolant is "
                    "u0/(1+sigma) and every gap is an identity")


def _hinge_banach_scenario() -> Scenario:
    sys = BanachSystem(
        dissipation=SeparablePotential(quadratic_density(1.0), n=1,
                                       name="quadratic-rate"),
        energy=HingeEnergy(),
        name="hinge-banach")
    return Scenario(
        name="ex3_6", kind="banach", system=sys, u0=np.array([1.0]),
        sigma_window=(0.25, 4.0), sigma_samples=16, tau=0.25, horizon=1.0,
        description="hinge energy with quadratic rate: the interpolant "
                    "(1-sigma)+ parks at the kink, where only the "
                    "conditioned slope keeps the balance an identity")


def _kinked_rate_scenario() -> Scenario:
    sys = BanachSystem(
        dissipation=SeparablePotential(piecewise_quadratic_density(1.0, 1.0, 4.0),
                                       n=1, name="kinked-rate"),
        energy=QuadraticEnergy(1.0, n=1),
        name="kinked-rate")
    return Scenario(
        name="ex4_2", kind="banach", system=sys, u0=np.array([6.0]),
        sigma_window=(0.25, 8.0), sigma_samples=16, tau=0.5, horizon=2.0,
        description="piecewise-quadratic rate density with derivative jumps "
                    "at speed 1: the interpolant crosses both kinks yet the "
                    "balance stays an identity at every step size")


def _hinge_metric_scenario() -> Scenario:
    sys = MetricSystem(
        metric=euclidean_metric(1),
        energy=HingeEnergy(),
        psi=quadratic_density(1.0),
        name="hinge-metric")
    return Scenario(
        name="ex2_13", kind="metric", system=sys, u0=np.array([1.0]),
        sigma_window=(0.25, 4.0), sigma_samples=16, tau=0.25, horizon=1.0,
        description="metric twin of the hinge model: the slope-based "
                    "estimate goes strict once the interpolant reaches the "
                    "kink, while the distance-based identity still holds")


def _truncated_metric_scenario() -> Scenario:
    sys = MetricSystem(
        metric=truncated_metric(1, 1.0),
        energy=QuadraticEnergy(1.0, n=1),
        psi=quadratic_density(1.0),
        name="truncated-metric")
    return Scenario(
        name="ex2_12", kind="metric", system=sys, u0=np.array([2.0]),
        sigma_window=(0.05, 4.0), sigma_samples=16, tau=0.25, horizon=1.0,
        description="non-geodesic truncated distance: the minimizer jumps "
                    "to the energy minimum at a finite step size and the "
                    "slope-based estimate goes strict beyond it")


def _two_well_scenario() -> Scenario:
    sys = BanachSystem(
        dissipation=SeparablePotential(quadratic_density(1.0), n=1,
                                       name="quadratic-rate"),
        energy=TwoWellEnergy(centers=[2.0, -2.0], offsets=[0.0, -1.0]),
        name="two-well")
    return Scenario(
        name="two_well", kind="banach", system=sys, u0=np.array([2.0]),
        sigma_window=(0.5, 12.0), sigma_samples=16, tau=0.5, horizon=2.0,
        description="nonconvex double well whose interpolant jumps between "
                    "wells at a finite step size; value matching holds at "
                    "the jump and the balance telescopes across it")


def _allen_cahn_scenario() -> Scenario:
    n = 64
    energy = GridPhaseFieldEnergy(n)
    h = energy.h
    sys = BanachSystem(
        dissipation=SeparablePotential(power_density(5.0), n=n,
                                       weights=np.full(n, h),
                                       name="quintic-rate-grid"),
        energy=energy,
        name="allen-cahn-1d")
    x = h * np.arange(1, n + 1)
    u0 = np.sin(np.pi * x)
    return Scenario(
        name="allen_cahn_1d", kind="banach", system=sys, u0=u0,
        sigma_window=(0.01, 0.5), sigma_samples=8, tau=0.05, horizon=0.2,
        gap_tol=1e-3,
        solve=SolveConfig(multistart=4, coarse=257),
        quadrature=QuadratureSpec(uniform=32, per_octave=3),
        description="one-dimensional phase-field chain, forward differences "
                    "and zero boundary data, with a quintic rate density so "
                    "the dual growth window absorbs the cubic nonlinearity")


_BUILDERS = {
    "quadratic": _quadratic_scenario,
    "ex3_6": _hinge_banach_scenario,
    "ex4_2": _kinked_rate_scenario,
    "ex2_13": _hinge_metric_scenario,
    "ex2_12": _truncated_metric_scenario,
    "two_well": _two_well_scenario,
    "allen_cahn_1d": _allen_cahn_scenario,
}

# descriptive aliases for the same builders
_ALIASES = {
    "hinge": "ex3_6",
    "hinge_metric": "ex2_13",
    "kinked_rate": "ex4_2",
    "truncated": "ex2_12",
}


def registry_names() -> tuple:
    """Canonical built-in names, stable order."""
    return tuple(sorted(_BUILDERS))


# ---------------------------------------------------------------------------
# JSON loading
# ---------------------------------------------------------------------------

_DENSITY_TAGS = ("quadratic", "power", "piecewise_quadratic")


def _fail(path: str, message: str):
    raise ConfigurationError(f"{path}: {message}")


def _get(d: dict, key: str, path: str, required: bool = True, default=None):
    if key not in d:
        if required:
            _fail(f"{path}.{key}", "missing field")
        return default
    return d[key]


def _number(d: dict, key: str, path: str, required: bool = True, default=None):
    v = _get(d, key, path, required, default)
    if v is default and not required:
        return default
    if not isinstance(v, (int, float)) or isinstance(v, bool):
        _fail(f"{path}.{key}", f"expected a number, got {type(v).__name__}")
    return float(v)


def _tagged(d, path: str) -> dict:
    if not isinstance(d, dict):
        _fail(path, f"expected an object with a 'tag', got {type(d).__name__}")
    if "tag" not in d:
        _fail(f"{path}.tag", "missing field")
    return d


def _density_from(d, path: str) -> ScalarConvex:
    d = _tagged(d, path)
    tag = d["tag"]
    if tag == "quadratic":
        return quadratic_density(_number(d, "curvature", path, False, 1.0))
    if tag == "power":
        return power_density(_number(d, "p", path),
                             _number(d, "scale", path, False, 1.0))
    if tag == "piecewise_quadratic":
        return piecewise_quadratic_density(
            _number(d, "kink", path, False, 1.0),
            _number(d, "inner", path, False, 1.0),
            _number(d, "outer", path, False, 4.0))
    _fail(f"{path}.tag", f"unknown density tag {tag!r}; "
          f"expected one of {_DENSITY_TAGS}")


def _energy_from(d, path: str) -> EnergyFunctional:
    d = _tagged(d, path)
    tag = d["tag"]
    if tag == "quadratic":
        n = int(_number(d, "n", path, False, 1.0))
        return QuadraticEnergy(_get(d, "A", path, False, 1.0),
                               _get(d, "b", path, False, 0.0),
                               _number(d, "c", path, False, 0.0), n=n)
    if tag == "hinge":
        return HingeEnergy()
    if tag == "zero":
        return ZeroEnergy(int(_number(d, "n", path, False, 1.0)))
    if tag == "two_well":
        return TwoWellEnergy(_get(d, "centers", path),
                             _get(d, "offsets", path),
                             _get(d, "curvatures", path, False),
                             n=int(_number(d, "n", path, False, 1.0)))
    if tag == "perturbed_quadratic":
        return PerturbedQuadraticEnergy(_get(d, "A", path),
                                        _get(d, "b", path),
                                        _number(d, "amp", path),
                                        _get(d, "freq", path),
                                        _get(d, "phase", path, False))
    if tag == "phase_field_grid":
        return GridPhaseFieldEnergy(int(_number(d, "n", path, False, 64.0)))
    _fail(f"{path}.tag", f"unknown energy tag {tag!r}")


def _potential_from(d, path: str) -> DissipationPotential:
    d = _tagged(d, path)
    tag = d["tag"]
    if tag == "separable":
        n = int(_number(d, "n", path, False, 1.0))
        weights = _get(d, "weights", path, False)
        if "density" in d:
            return SeparablePotential(_density_from(d["density"],
                                                    f"{path}.density"),
                                      n=n, weights=weights)
        if "densities" in d:
            dens = d["densities"]
            if not isinstance(dens, list) or not dens:
                _fail(f"{path}.densities", "expected a non-empty list")
            parts = [_density_from(x, f"{path}.densities[{i}]")
                     for i, x in enumerate(dens)]
            return SeparablePotential(parts, weights=weights)
        _fail(path, "separable potential needs 'density' or 'densities'")
    if tag == "norm":
        return NormPotential(_density_from(_get(d, "density", path),
                                           f"{path}.density"),
                             n=int(_number(d, "n", path, False, 1.0)))
    _fail(f"{path}.tag", f"unknown dissipation tag {tag!r}")


def _metric_from(d, path: str) -> MetricModel:
    d = _tagged(d, path)
    tag = d["tag"]
    n = int(_number(d, "n", path, False, 1.0))
    if tag == "euclidean":
        return euclidean_metric(n)
    if tag == "truncated":
        return truncated_metric(n, _number(d, "radius", path, False, 1.0))
    _fail(f"{path}.tag", f"unknown metric tag {tag!r}")


def _replace_from(obj, d, path: str, allowed: tuple):
    if d is None:
        return obj
    if not isinstance(d, dict):
        _fail(path, "expected an object")
    bad = sorted(set(d) - set(allowed))
    if bad:
        _fail(f"{path}.{bad[0]}", "unknown field")
    try:
        return dataclasses.replace(obj, **d)
    except (TypeError, ValueError) as exc:
        _fail(path, str(exc))


def scenario_from_dict(doc: dict, fallback_name: str = "custom") -> Scenario:
    """Build a Scenario from a parsed JSON document, validating field paths."""
    if not isinstance(doc, dict):
        raise ConfigurationError("scenario: top level must be an object")
    name = doc.get("name", fallback_name)
    kind = _get(doc, "kind", "scenario")
    if kind not in ("metric", "banach"):
        _fail("scenario.kind", f"expected 'metric' or 'banach', got {kind!r}")

    window = _get(doc, "sigma_window", "scenario")
    if (not isinstance(window, list) or len(window) != 2
            or not all(isinstance(x, (int, float)) for x in window)):
        _fail("scenario.sigma_window", "expected [lo, hi] numbers")
    lo, hi = float(window[0]), float(window[1])
    if lo <= 0:
        _fail("scenario.sigma_window", "lower endpoint must be positive")
    if hi <= lo:
        _fail("scenario.sigma_window", "window must be increasing")

    energy = _energy_from(_get(doc, "energy", "scenario"), "scenario.energy")
    if kind == "banach":
        diss = _potential_from(_get(doc, "dissipation", "scenario"),
                               "scenario.dissipation")
        system = BanachSystem(dissipation=diss, energy=energy, name=str(name))
    else:
        metric = _metric_from(_get(doc, "metric", "scenario"), "scenario.metric")
        psi = _density_from(_get(doc, "psi", "scenario"), "scenario.psi")
        system = MetricSystem(metric=metric, energy=energy, psi=psi,
                              name=str(name))

    u0_raw = _get(doc, "u0", "scenario")
    try:
        u0 = as_point(u0_raw, system.n)
    except Exception:
        _fail("scenario.u0", f"expected {system.n} coordinates")

    samples = int(_number(doc, "sigma_samples", "scenario", False, 33.0))
    if samples < 1:
        _fail("scenario.sigma_samples", "must be positive")
    gap_tol = _number(doc, "gap_tol", "scenario", False, 1e-4)
    if gap_tol <= 0:
        _fail("scenario.gap_tol", "must be positive")
    tau = _number(doc, "tau", "scenario", False, 0.25)
    horizon = _number(doc, "horizon", "scenario", False, 1.0)
    if tau <= 0 or horizon <= 0:
        _fail("scenario.tau", "time parameters must be positive")

    solve_cfg = _replace_from(
        SolveConfig(), doc.get("solve"), "scenario.solve",
        ("value_tol", "arg_tol", "cluster_tol", "coarse", "multistart",
         "seed", "oracle_step", "max_expand"))
    quad_spec = _replace_from(
        QuadratureSpec(), doc.get("quadrature"), "scenario.quadrature",
        ("uniform", "per_octave", "rho_min_factor", "jump_factor",
         "jump_abs", "jump_rtol"))

    known = {"name", "kind", "u0", "sigma_window", "sigma_samples", "gap_tol",
             "tau", "horizon", "energy", "dissipation", "psi", "metric",
             "solve", "quadrature", "description"}
    extra = sorted(set(doc) - known)
    if extra:
        _fail(f"scenario.{extra[0]}", "unknown field")

    return Scenario(name=str(name), kind=kind, system=system, u0=u0,
                    sigma_window=(lo, hi), sigma_samples=samples,
                    gap_tol=gap_tol, solve=solve_cfg, quadrature=quad_spec,
                    tau=tau, horizon=horizon,
                    description=str(doc.get("description", "")))


def load_scenario(ref: str, sigma_samples: Optional[int] = None,
                  tau: Optional[float] = None,
                  horizon: Optional[float] = None) -> Scenario:
    """Resolve a built-in name or JSON file path to a Scenario.

    Optional overrides replace the scenario's own sample count and time
    parameters, which is how the command-line flags reach the models."""
    key = _ALIASES.get(ref, ref)
    if key in _BUILDERS:
        sc = _BUILDERS[key]()
    elif os.path.exists(ref):
        try:
            with open(ref, "r", encoding="utf-8") as fh:
                doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigurationError(f"{ref}: malformed JSON ({exc})") from exc
        base = os.path.splitext(os.path.basename(ref))[0]
        sc = scenario_from_dict(doc, fallback_name=base)
    else:
        raise ConfigurationError(
            f"unknown scenario {ref!r}; built-ins: {', '.join(registry_names())}")

    updates = {}
    if sigma_samples is not None:
        if sigma_samples < 1:
            raise ConfigurationError("sigma sample count must be positive")
        updates["sigma_samples"] = int(sigma_samples)
    if tau is not None:
        if tau <= 0:
            raise ConfigurationError("tau must be positive")
        updates["tau"] = float(tau)
    if horizon is not None:
        if horizon <= 0:
            raise ConfigurationError("horizon must be positive")
        updates["horizon"] = float(horizon)
    return dataclasses.replace(sc, **updates) if updates else sc
