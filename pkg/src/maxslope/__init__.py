"""Numerical laboratory for generalized gradient systems.

Single-step minimization against a dissipation potential, variational
interpolants, slope certificates, and the energy-dissipation balance,
in both the metric and the finite-dimensional Banach setting.
"""

from .banach import (
    BanachSystem,
    banach_step,
    chain_rule_validation,
    conditioned_slope,
    euler_lagrange_gap,
    integrand_derivative_check,
    interpolant_lipschitz_audit,
    interpolant_sweep,
    marginal_derivative_bounds,
    r_slope,
    selection_residual,
    yosida_pipeline,
)
from .common import (
    ConfigurationError,
    GapReport,
    InterpolantTrace,
    JumpRecord,
    ModelError,
    SolverFailure,
    StepResult,
    SweepRow,
)
from .convex import ScalarConvex, one_sided_derivatives, p_mapping, radial_profile
from .metric import (
    MetricModel,
    MetricSystem,
    distance_slope,
    euclidean_metric,
    metric_slope,
    metric_step,
    metric_sweep,
    slope_estimate_gap,
    truncated_metric,
    uniform_slope_probe,
)
from .mms import MMSTrajectory, edb_report, refinement_study, run_mms
from .models import (
    DissipationPotential,
    EnergyFunctional,
    GridPhaseFieldEnergy,
    HingeEnergy,
    NormPotential,
    PerturbedQuadraticEnergy,
    QuadraticEnergy,
    SeparablePotential,
    SubdifferentialSet,
    SumPotential,
    TwoWellEnergy,
    ZeroEnergy,
    fenchel_gap,
    piecewise_quadratic_density,
    power_density,
    quadratic_density,
)
from .moreau import (
    MoreauEnvelope,
    equi_coercivity_bound,
    prox,
    yosida_conjugate_check,
    yosida_value_gradient,
)
from .quadrature import QuadratureSpec, build_sigma_grid
from .scenarios import Scenario, load_scenario, registry_names
from .solve import SolveConfig, global_minimize, grid_oracle

__version__ = "0.1.0"

__all__ = [
    "BanachSystem", "ConfigurationError", "DissipationPotential",
    "EnergyFunctional", "GapReport", "GridPhaseFieldEnergy", "HingeEnergy",
    "InterpolantTrace", "JumpRecord", "MMSTrajectory", "MetricModel",
    "MetricSystem", "ModelError", "MoreauEnvelope", "NormPotential",
    "PerturbedQuadraticEnergy", "QuadratureSpec", "QuadraticEnergy",
    "Scenario", "ScalarConvex", "SeparablePotential", "SolveConfig",
    "SolverFailure", "StepResult", "SubdifferentialSet", "SumPotential",
    "SweepRow", "TwoWellEnergy", "ZeroEnergy",
    "banach_step", "build_sigma_grid", "chain_rule_validation",
    "conditioned_slope", "distance_slope", "edb_report",
    "equi_coercivity_bound", "euclidean_metric", "euler_lagrange_gap",
    "fenchel_gap", "global_minimize", "grid_oracle",
    "integrand_derivative_check", "interpolant_lipschitz_audit",
    "interpolant_sweep", "load_scenario", "marginal_derivative_bounds",
    "metric_slope", "metric_step", "metric_sweep", "one_sided_derivatives",
    "p_mapping", "piecewise_quadratic_density", "power_density", "prox",
    "quadratic_density", "r_slope", "radial_profile", "refinement_study",
    "registry_names", "run_mms", "selection_residual", "slope_estimate_gap",
    "truncated_metric", "uniform_slope_probe", "yosida_conjugate_check",
    "yosida_pipeline", "yosida_value_gradient",
]
