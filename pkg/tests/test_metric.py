"""Metric single steps, slopes, and the selection-independent energy identity.

The hinge system has the closed-form interpolant max(1 - sigma, 0); the
truncated-distance system jumps to the energy minimum at sigma = 1/3 (where
the branch values 2/(1+sigma) and 1/(2 sigma) cross for the base point 2).
Both closed forms drive the golden assertions below.
"""

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from maxslope.banach import BanachSystem, r_slope
from maxslope.common import IDENTITY, STRICT
from maxslope.metric import (
    MetricSystem,
    distance_slope,
    euclidean_metric,
    energy_identity_residual,
    gap_report,
    metric_slope,
    metric_step,
    metric_sweep,
    slope_estimate_gap,
    truncated_metric,
    uniform_slope_probe,
)
from maxslope.models import (
    EnergyFunctional,
    HingeEnergy,
    QuadraticEnergy,
    SeparablePotential,
    SubdifferentialSet,
    quadratic_density,
)
from maxslope.quadrature import QuadratureSpec


def trace_row(trace, sigma):
    for r in trace.rows:
        if r.sigma == sigma:
            return r
    raise AssertionError(f"no row at sigma={sigma}")


class TestMetricModels:
    def test_euclidean_distance(self, rng):
        m = euclidean_metric(2)
        u, w = rng.uniform(-3, 3, size=(2, 2))
        assert m.dist(u, w) == pytest.approx(np.linalg.norm(u - w))
        assert m.dist(u, u) == 0.0

    def test_truncated_distance(self, rng):
        m = truncated_metric(1, 1.0)
        assert m.dist(np.array([2.0]), np.array([0.0])) == pytest.approx(1.0)
        assert m.dist(np.array([0.3]), np.array([0.0])) == pytest.approx(0.3)
        # capping keeps symmetry and the triangle inequality
        for _ in range(40):
            a, b, c = rng.uniform(-4, 4, size=(3, 1))
            assert m.dist(a, b) == pytest.approx(m.dist(b, a))
            assert m.dist(a, c) <= m.dist(a, b) + m.dist(b, c) + 1e-12


class TestMetricStep:
    def test_hinge_interpolant(self, hinge_metric):
        sys = hinge_metric.system
        for sigma in (0.25, 0.5, 1.0, 2.0, 4.0):
            res = metric_step(sys, np.array([1.0]), sigma)
            expect = max(1.0 - sigma, 0.0)
            assert res.minimizer[0] == pytest.approx(expect, abs=1e-6)
            # phi = sigma/2 on the sliding branch wins until sigma = 1,
            # then the parked branch value 1/(2 sigma)
            phi = 1.0 - sigma / 2.0 if sigma <= 1.0 else 1.0 / (2.0 * sigma)
            assert res.value == pytest.approx(phi, abs=1e-9)
            assert res.d_minus == pytest.approx(min(sigma, 1.0), abs=1e-6)

    def test_truncated_branches(self, truncated):
        sys = truncated.system
        for sigma in (0.1, 0.25):
            res = metric_step(sys, np.array([2.0]), sigma)
            assert res.minimizer[0] == pytest.approx(2.0 / (1.0 + sigma),
                                                     abs=1e-6)
        for sigma in (0.5, 2.0):
            res = metric_step(sys, np.array([2.0]), sigma)
            assert res.minimizer[0] == pytest.approx(0.0, abs=1e-6)
            assert res.d_minus == pytest.approx(1.0, abs=1e-9)

    def test_truncated_tie_has_two_minimizers(self, truncated):
        # at the crossing both branches are optimal to ~1e-16, far below the
        # value tolerance, so the step must report both minimizers and the
        # distance spread [0.5, 1]
        sys = truncated.system
        res = metric_step(sys, np.array([2.0]), 1.0 / 3.0)
        assert len(res.minimizers) == 2
        args = sorted(m[0] for m in res.minimizers)
        assert args[0] == pytest.approx(0.0, abs=1e-6)
        assert args[1] == pytest.approx(1.5, abs=1e-6)
        assert res.d_minus == pytest.approx(0.5, abs=1e-6)
        assert res.d_plus == pytest.approx(1.0, abs=1e-6)


class TestSlopes:
    def test_metric_slope_quadratic(self):
        sys = MetricSystem(metric=euclidean_metric(1),
                           energy=QuadraticEnergy(1.0, n=1),
                           psi=quadratic_density(1.0), name="quad-metric")
        for u in (-2.0, 0.5, 3.0):
            assert metric_slope(sys, np.array([u])) == pytest.approx(abs(u),
                                                                     abs=1e-6)

    def test_metric_slope_hinge(self, hinge_metric):
        sys = hinge_metric.system
        assert metric_slope(sys, np.array([0.5])) == pytest.approx(1.0, abs=1e-6)
        assert metric_slope(sys, np.array([-1.0])) == pytest.approx(0.0, abs=1e-6)
        # at the kink the one-sided decrease vanishes: slope 0
        assert metric_slope(sys, np.array([0.0])) == pytest.approx(0.0, abs=1e-6)

    def test_distance_slope_saturation(self, truncated):
        sys = truncated.system
        u0 = np.array([2.0])
        # inside the cap the distance is locally Euclidean: slope 1
        assert distance_slope(sys, u0, np.array([1.6])) == pytest.approx(
            1.0, abs=1e-4)
        # beyond the cap it is flat: slope 0
        assert distance_slope(sys, u0, np.array([0.0])) == pytest.approx(
            0.0, abs=1e-6)

    def test_slope_estimate_gap(self, hinge_metric):
        sys = hinge_metric.system
        tight = slope_estimate_gap(sys, np.array([1.0]), 0.5)
        assert tight.gap == pytest.approx(0.0, abs=1e-6)
        # once parked at the kink the bound 1/(2) stays positive while the
        # slope drops to zero: the estimate is strict
        parked = slope_estimate_gap(sys, np.array([1.0]), 2.0)
        assert parked.bound == pytest.approx(0.5, abs=1e-6)
        assert parked.slope == pytest.approx(0.0, abs=1e-6)


class TestSweeps:
    def test_hinge_gap_table(self, hinge_metric, fast_spec):
        sys = hinge_metric.system
        targets = [0.25, 0.5, 1.0, 2.0, 4.0]
        trace = metric_sweep(sys, np.array([1.0]), targets, spec=fast_spec)
        for sigma in targets:
            row = trace_row(trace, sigma)
            expect = 0.0 if sigma <= 1.0 else 0.5 - 1.0 / (2.0 * sigma)
            assert row.gap == pytest.approx(expect, abs=1e-4)
            assert abs(row.identity_minus) <= 1e-4 + row.quad_error
            assert abs(row.identity_plus) <= 1e-4 + row.quad_error
            expect_cls = IDENTITY if sigma <= 1.0 else STRICT
            assert row.classification == expect_cls

    def test_truncated_gap_and_jump(self, truncated):
        sys = truncated.system
        targets = [0.1, 0.25, 0.5, 1.0, 2.0, 4.0]
        trace = metric_sweep(sys, np.array([2.0]), targets)
        golden = {0.1: 0.0, 0.25: 0.0, 0.5: 0.5, 1.0: 1.0, 2.0: 1.25,
                  4.0: 1.375}
        for sigma, expect in golden.items():
            row = trace_row(trace, sigma)
            assert row.gap == pytest.approx(expect, abs=1e-4)
        assert len(trace.jumps) == 1
        assert trace.jumps[0].sigma == pytest.approx(1.0 / 3.0, abs=1e-6)

    def test_identity_holds_at_minimizer_tie(self, truncated):
        # a target exactly at the crossing puts a minimizer tie on the grid;
        # both one-sided identity selections must still close the balance
        # (regression: the tie sample used to keep the wrong-side integrand)
        sys = truncated.system
        targets = [0.1, 0.25, 1.0 / 3.0, 0.5, 1.0, 2.0, 4.0]
        trace = metric_sweep(sys, np.array([2.0]), targets)
        for sigma in targets:
            row = trace_row(trace, sigma)
            assert abs(row.identity_minus) <= 1e-4 + row.quad_error, sigma
            assert abs(row.identity_plus) <= 1e-4 + row.quad_error, sigma

    def test_off_grid_jump_integral(self, truncated):
        # a target past the jump with the jump location strictly between
        # grid samples: the split integral must keep both one-sided pieces
        sys = truncated.system
        res = energy_identity_residual(sys, np.array([2.0]), 3.7)
        assert abs(res[0]) <= 1e-4 + res[2]
        assert abs(res[1]) <= 1e-4 + res[2]
        # E(2) = 2, phi = 1/(2 sigma), and the slope integral contributes
        # only 1/2 (all of it before the jump): gap = 3/2 - 1/(2 sigma)
        row = gap_report(sys, np.array([2.0]), [3.7]).rows[0]
        assert row.gap == pytest.approx(1.5 - 1.0 / (2.0 * 3.7), abs=1e-4)

    def test_gap_report_properties(self, hinge_metric, fast_spec):
        sys = hinge_metric.system
        rep = gap_report(sys, np.array([1.0]), [0.5, 2.0], spec=fast_spec)
        assert rep.kind == "metric"
        assert not rep.has_violation
        assert rep.worst_gap >= -1e-4
        assert rep.classifications == [IDENTITY, STRICT]


class TestUniformSlopeProbe:
    def test_hinge_linear_bound(self, hinge_metric):
        sys = hinge_metric.system
        pairs = [(np.array([a]), np.array([b]))
                 for a in (-1.0, 0.0, 0.5, 2.0) for b in (-2.0, 0.0, 1.0)]
        assert uniform_slope_probe(sys, pairs) <= 1e-9

    def test_convex_energy_closes_without_modulus(self):
        # the subgradient inequality makes the probe nonpositive for any
        # convex energy, with no quadratic modulus needed
        sys = MetricSystem(metric=euclidean_metric(1),
                           energy=QuadraticEnergy(1.0, n=1),
                           psi=quadratic_density(1.0), name="quad-metric")
        pairs = [(np.array([a]), np.array([b]))
                 for a in (-2.0, 1.0, 3.0) for b in (-3.0, 0.0, 2.0)]
        assert uniform_slope_probe(sys, pairs, curvature=0.0) <= 1e-9

    def test_smooth_local_max_flags_failure(self):
        # a smooth local maximum has slope ~0 while the energy still drops
        # to the global minimum: no curvature modulus can hide that
        class WavyEnergy(EnergyFunctional):
            n = 1
            name = "wavy"

            def value(self, u):
                x = float(np.atleast_1d(u)[0])
                return 0.005 * x * x + np.sin(2.0 * x)

            def subdifferential(self, u):
                x = float(np.atleast_1d(u)[0])
                return SubdifferentialSet.singleton(
                    np.array([0.01 * x + 2.0 * np.cos(2.0 * x)]))

            def lower_bound(self):
                return -2.0

        energy = WavyEnergy()
        sys = MetricSystem(metric=euclidean_metric(1), energy=energy,
                           psi=quadratic_density(1.0), name="wavy-metric")
        grid = np.linspace(0.0, 1.5, 3001)
        top = grid[np.argmax([energy.value(np.array([x])) for x in grid])]
        low = np.array([-np.pi / 4.0])
        assert metric_slope(sys, np.array([top])) <= 1e-2
        probe = uniform_slope_probe(sys, [(np.array([top]), low)],
                                    curvature=0.0)
        assert probe > 0.5


# ---------------------------------------------------------------------------
# Property suite: metric slope and dual rate slope agree on smooth flows
# ---------------------------------------------------------------------------

_METRIC_QUAD = MetricSystem(metric=euclidean_metric(1),
                            energy=QuadraticEnergy(1.0, n=1),
                            psi=quadratic_density(1.0), name="metric-twin")
_BANACH_QUAD = BanachSystem(
    dissipation=SeparablePotential(quadratic_density(1.0), n=1),
    energy=QuadraticEnergy(1.0, n=1), name="banach-twin")


@settings(max_examples=60, deadline=None)
@given(u=st.floats(-5.0, 5.0))
def test_slope_equivalence_quadratic(u):
    """psi*(|dE|) computed metrically equals the dual slope min R*(-xi)."""
    point = np.array([u])
    metric_side = 0.5 * metric_slope(_METRIC_QUAD, point) ** 2
    banach_side, _ = r_slope(_BANACH_QUAD, point)
    assert metric_side == pytest.approx(banach_side, abs=1e-8)
