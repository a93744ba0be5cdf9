"""Single-step certificates and identity machinery in the Banach setting.

Goldens for the two kinked 1D flows are solved by hand from the optimality
inclusion 0 in dR((u - u0)/sigma) + dE(u); the sweep and pipeline tests then
check the certified gap tables against those closed forms.
"""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from maxslope.banach import (
    BanachSystem,
    banach_step,
    chain_rule_validation,
    conditioned_slope,
    energy_dissipation_gap,
    euler_lagrange_gap,
    gap_report,
    integrand_derivative_check,
    interpolant_lipschitz_audit,
    interpolant_sweep,
    marginal_derivative_bounds,
    r_slope,
    selection_residual,
    yosida_pipeline,
)
from maxslope.common import IDENTITY, ModelError, SolverFailure
from maxslope.models import (
    QuadraticEnergy,
    SeparablePotential,
    quadratic_density,
)
from maxslope.quadrature import QuadratureSpec
from maxslope.solve import SolveConfig


def _sys(scn):
    return scn.system, scn.u0


# ---------------------------------------------------------------------------
# banach_step
# ---------------------------------------------------------------------------


class TestBanachStep:
    def test_hinge_step_trace(self, hinge_banach):
        # u~ = (1 - sigma)+, phi = 1 - sigma/2 before the hit, 1/(2 sigma) after
        sys, u0 = _sys(hinge_banach)
        for sigma in (0.25, 0.5, 1.0, 2.0, 4.0):
            res = banach_step(sys, u0, sigma, hinge_banach.solve)
            want_u = max(1.0 - sigma, 0.0)
            want_phi = 1.0 - sigma / 2.0 if sigma <= 1.0 else 1.0 / (2.0 * sigma)
            assert abs(res.minimizer[0] - want_u) <= 1e-6
            assert abs(res.value - want_phi) <= 1e-9

    def test_kinked_rate_three_regimes(self, kinked_rate):
        sys, u0 = _sys(kinked_rate)
        # outer branch, kink plateau, inner branch
        for sigma, want in ((1.0, 4.8), (3.0, 3.0), (6.0, 6.0 / 7.0)):
            res = banach_step(sys, u0, sigma, kinked_rate.solve)
            assert len(res.minimizers) == 1
            assert abs(res.minimizer[0] - want) <= 1e-6

    def test_kinked_rate_branch_crossover_point(self, kinked_rate):
        # sigma = 2 solves both the outer branch 24/(sigma+4) and the kink 6 - sigma
        sys, u0 = _sys(kinked_rate)
        res = banach_step(sys, u0, 2.0, kinked_rate.solve)
        assert abs(res.minimizer[0] - 4.0) <= 1e-6

    def test_step_value_decomposition(self, kinked_rate):
        sys, u0 = _sys(kinked_rate)
        res = banach_step(sys, u0, 3.0, kinked_rate.solve)
        u = res.minimizer
        v = (u - u0) / 3.0
        recon = 3.0 * sys.dissipation.value(v) + sys.energy.value(u)
        assert abs(recon - res.value) <= 1e-12 * max(1.0, abs(res.value))
        assert res.d_minus <= res.d_plus + 1e-15

    def test_small_sigma_nd_quadratic(self, rng):
        # sigma = 1e-6 stresses the velocity polish; the exact minimizer of
        # |u - u0|^2/(2 sigma) + u.Au/2 + b.u is (I + sigma A)^{-1} (u0 - sigma b)
        n = 4
        m = rng.normal(size=(n, n))
        a = m @ m.T / n + np.eye(n)
        b = rng.normal(size=n)
        sys = BanachSystem(SeparablePotential(quadratic_density(1.0), n=n),
                           QuadraticEnergy(a, b))
        u0 = rng.normal(size=n)
        sigma = 1e-6
        res = banach_step(sys, u0, sigma)
        want = np.linalg.solve(np.eye(n) + sigma * a, u0 - sigma * b)
        assert np.max(np.abs(res.minimizer - want)) <= 1e-9

    def test_rejects_nonpositive_sigma(self, hinge_banach):
        sys, u0 = _sys(hinge_banach)
        with pytest.raises(ModelError):
            banach_step(sys, u0, 0.0)


# ---------------------------------------------------------------------------
# dual slopes and optimality certificates
# ---------------------------------------------------------------------------


class TestDualSlopes:
    def test_hinge_r_slope_branches(self, hinge_banach):
        sys, _ = _sys(hinge_banach)
        val, xi = r_slope(sys, np.array([0.5]))
        assert abs(val - 0.5) <= 1e-10
        assert abs(xi[0] - 1.0) <= 1e-8
        # at the hinge the subdifferential box [0, 1] contains 0
        val0, xi0 = r_slope(sys, np.array([0.0]))
        assert abs(val0) <= 1e-12
        assert abs(xi0[0]) <= 1e-8

    def test_kinked_rate_r_slope(self, kinked_rate):
        sys, _ = _sys(kinked_rate)
        val, _ = r_slope(sys, np.array([4.0]))
        assert abs(val - 3.5) <= 1e-10
        val, _ = r_slope(sys, np.array([6.0 / 7.0]))
        assert abs(val - 18.0 / 49.0) <= 1e-10

    def test_conditioned_slope_hinge(self, hinge_banach):
        sys, u0 = _sys(hinge_banach)
        cs = conditioned_slope(sys, u0, 0.5)
        assert abs(cs.value - 0.5) <= 1e-8
        assert abs(cs.xi[0] - 1.0) <= 1e-6
        assert cs.h_min <= 1e-8
        assert cs.unique
        cs = conditioned_slope(sys, u0, 2.0)
        # past the hit u~ = 0 and the admissible selection is xi = 1/sigma
        assert abs(cs.value - 0.125) <= 1e-8
        assert abs(cs.xi[0] - 0.5) <= 1e-6

    def test_conditioned_slope_kinked_regimes(self, kinked_rate):
        sys, u0 = _sys(kinked_rate)
        cases = (
            (0.5, 91.0 / 18.0, 16.0 / 3.0),   # outer branch, R*(s) = s^2/8 + 3/2
            (2.0, 3.5, 4.0),                  # kink entry, R*(4) on the seam
            (6.0, 18.0 / 49.0, 6.0 / 7.0),    # inner branch, R*(s) = s^2/2
        )
        for sigma, want_c, want_xi in cases:
            cs = conditioned_slope(sys, u0, sigma)
            assert abs(cs.value - want_c) <= 1e-7 * max(1.0, want_c)
            assert abs(cs.xi[0] - want_xi) <= 1e-5
            assert cs.h_min <= 1e-8

    def test_euler_lagrange_gap(self, hinge_banach):
        sys, u0 = _sys(hinge_banach)
        good = euler_lagrange_gap(sys, u0, 0.5, np.array([0.5]), np.array([1.0]))
        assert good <= 1e-10
        # at the hinge the box [0, 1] absorbs xi = 0.8, so only the
        # dissipation side pays: h(0.8) = R(-1) + R*(-0.8) - 0.8 = 0.02
        off = euler_lagrange_gap(sys, u0, 1.0, np.array([0.0]), np.array([0.8]))
        assert abs(off - 0.02) <= 1e-12
        # away from the hinge dE(0.5) = {1} and the descriptor distance 0.2
        # dominates the Fenchel residual
        off = euler_lagrange_gap(sys, u0, 0.5, np.array([0.5]), np.array([0.8]))
        assert abs(off - 0.2) <= 1e-12
        # wrong point, admissible-looking selection
        off = euler_lagrange_gap(sys, u0, 0.5, np.array([0.7]), np.array([1.0]))
        assert off > 0.01


# ---------------------------------------------------------------------------
# marginal derivative brackets and the integrand identity
# ---------------------------------------------------------------------------


class TestMarginalAndIntegrand:
    def test_hinge_marginal_brackets(self, hinge_banach):
        sys, u0 = _sys(hinge_banach)
        mb = marginal_derivative_bounds(sys, u0, 0.5)
        assert abs(mb.delta_minus + 0.5) <= 1e-7
        assert abs(mb.delta_plus + 0.5) <= 1e-7
        assert mb.brackets_fd
        mb = marginal_derivative_bounds(sys, u0, 2.0)
        assert abs(mb.delta_minus + 0.125) <= 1e-7
        assert mb.brackets_fd

    def test_kinked_marginal_bracket_is_wide_at_the_kink(self, kinked_rate):
        # on the plateau u~ = 6 - sigma the radial profile has a true corner:
        # one-sided slopes -R*(4) = -3.5 and -R*(1) = -0.5, fd lands at -2.5
        sys, u0 = _sys(kinked_rate)
        mb = marginal_derivative_bounds(sys, u0, 3.0)
        assert abs(mb.delta_minus + 3.5) <= 1e-6
        assert abs(mb.delta_plus + 0.5) <= 1e-6
        assert abs(mb.fd + 2.5) <= 1e-4
        assert mb.brackets_fd

    def test_integrand_check_three_regimes(self, kinked_rate):
        sys, u0 = _sys(kinked_rate)
        chk = integrand_derivative_check(sys, u0, 0.5)
        assert chk.radially_differentiable and chk.matched
        assert abs(chk.conditioned - 91.0 / 18.0) <= 1e-6
        chk = integrand_derivative_check(sys, u0, 6.0)
        assert chk.matched
        assert abs(chk.conditioned - 18.0 / 49.0) <= 1e-7
        # at rho = 2 the velocity sits on the density kink: bracket only
        chk = integrand_derivative_check(sys, u0, 2.0)
        assert not chk.radially_differentiable
        assert not chk.matched
        assert chk.bracketed
        assert abs(chk.profile_lo - 0.5) <= 1e-6
        assert abs(chk.profile_hi - 3.5) <= 1e-6
        assert abs(chk.conditioned - 3.5) <= 1e-6


# ---------------------------------------------------------------------------
# sweeps, gap tables, selections
# ---------------------------------------------------------------------------


class TestSweeps:
    def test_hinge_identity_trace(self, hinge_banach):
        sys, u0 = _sys(hinge_banach)
        targets = [0.25, 0.5, 1.0, 2.0, 4.0]
        trace = interpolant_sweep(sys, u0, targets)
        assert trace.kind == "banach"
        assert not trace.jumps
        for sigma in targets:
            row = trace.row_at(sigma)
            assert row.classification == IDENTITY
            assert abs(row.gap) <= 1e-4
            want_phi = 1.0 - sigma / 2.0 if sigma <= 1.0 else 1.0 / (2.0 * sigma)
            assert abs(row.phi - want_phi) <= 1e-8
        # explicit dissipation column check: sigma R(v/sigma) at sigma = 2
        assert abs(trace.row_at(2.0).dissipation - 0.25) <= 1e-8

    def test_kinked_rate_identity_trace(self, kinked_rate):
        sys, u0 = _sys(kinked_rate)
        trace = interpolant_sweep(sys, u0, [0.5, 1.0, 2.0, 3.0, 6.0])
        for row in (trace.row_at(s) for s in (0.5, 1.0, 2.0, 3.0, 6.0)):
            assert row.classification == IDENTITY
        # closed-form marginals on each branch
        assert abs(trace.row_at(1.0).phi - 12.9) <= 1e-8
        assert abs(trace.row_at(3.0).phi - 6.0) <= 1e-8
        assert abs(trace.row_at(6.0).phi - 18.0 / 7.0) <= 1e-8

    def test_two_well_jump_split(self, two_well):
        # the interpolant leaves the shallow well at sigma = 7; the two
        # one-sided step values must agree there and the split integral
        # keeps every gap at identity level
        sys, u0 = _sys(two_well)
        spec = QuadratureSpec(uniform=192, per_octave=6)
        trace = interpolant_sweep(sys, u0, np.linspace(0.5, 12.0, 8), spec=spec)
        assert len(trace.jumps) == 1
        jump = trace.jumps[0]
        assert abs(jump.sigma - 7.0) <= 1e-4
        assert abs(jump.u_left[0] - 2.0) <= 1e-5
        assert abs(jump.u_right[0] + 1.5) <= 1e-5
        assert abs(jump.value_left - jump.value_right) <= 1e-6
        for row in trace.rows:
            assert row.classification == IDENTITY
        row = trace.row_at(12.0)
        assert abs(row.u[0] + 22.0 / 13.0) <= 1e-6
        assert abs(row.phi + 5.0 / 13.0) <= 1e-9

    def test_single_sigma_gap_row(self, hinge_banach):
        sys, u0 = _sys(hinge_banach)
        row = energy_dissipation_gap(sys, u0, 2.0)
        assert row.classification == IDENTITY
        assert abs(row.gap) <= row.quad_error + 1e-6

    def test_gap_report_shape(self, kinked_rate):
        sys, u0 = _sys(kinked_rate)
        rep = gap_report(sys, u0, [1.0, 3.0], name="kinked")
        assert rep.kind == "banach"
        assert rep.name == "kinked"
        assert rep.classifications == [IDENTITY, IDENTITY]
        assert not rep.has_violation
        assert rep.worst_gap >= -1e-4

    def test_selection_residual_sign(self, kinked_rate):
        sys, u0 = _sys(kinked_rate)
        spec = QuadratureSpec(uniform=128, per_octave=5)
        # dE(u) = {u} here, so returning u is the admissible selection
        good, err = selection_residual(sys, u0, 6.0, lambda rho, u, box: u,
                                       spec=spec)
        assert abs(good) <= 2e-4 + err
        # an inflated selection overshoots the energy drop
        bad, _ = selection_residual(sys, u0, 6.0, lambda rho, u, box: 1.5 * u,
                                    spec=spec)
        assert bad < -1.0


# ---------------------------------------------------------------------------
# interpolant regularity audits
# ---------------------------------------------------------------------------


class TestAudits:
    def test_quadratic_lipschitz_audit(self, quadratic_flow):
        sys, u0 = _sys(quadratic_flow)
        audit = interpolant_lipschitz_audit(sys, u0, (0.5, 8.0))
        # u~ = 1/(1 + sigma): the steepest of the 64 sampled chords is the
        # first one, 1/(1.5 * (1.5 + 7.5/63)) = 7/17
        assert abs(audit.empirical - 7.0 / 17.0) <= 1e-6
        assert abs(audit.bound - 1.332031) <= 1e-2
        assert audit.empirical <= audit.bound
        assert audit.lam == 1.0
        assert audit.jump_free

    def test_audit_needs_strong_convexity(self, hinge_banach):
        sys, u0 = _sys(hinge_banach)
        with pytest.raises(ModelError):
            interpolant_lipschitz_audit(sys, u0, (0.5, 4.0))

    def test_two_well_chain_rule(self, two_well):
        sys, u0 = _sys(two_well)
        rep = chain_rule_validation(sys, u0, (0.5, 12.0))
        assert len(rep.trace.jumps) == 1
        assert rep.worst_piece <= 1e-8
        assert rep.worst_matching <= 1e-6
        # gap at the window end, against its own quadrature error bar
        assert abs(rep.reconstruction) <= rep.reconstruction_error + 1e-6


# ---------------------------------------------------------------------------
# smoothing pipeline guards
# ---------------------------------------------------------------------------


class TestPipelineGuards:
    def test_short_schedule_fails_loudly(self, kinked_rate):
        sys, u0 = _sys(kinked_rate)
        spec = QuadratureSpec(uniform=48, per_octave=3)
        with pytest.raises(SolverFailure):
            yosida_pipeline(sys, u0, [3.0], etas=(0.25, 0.125, 0.0625),
                            spec=spec)

    def test_schedule_validation(self, kinked_rate):
        sys, u0 = _sys(kinked_rate)
        with pytest.raises(ModelError):
            yosida_pipeline(sys, u0, [3.0], etas=(0.25,))
        with pytest.raises(ModelError):
            yosida_pipeline(sys, u0, [3.0], etas=(2.0, 1.0, 0.5))


# ---------------------------------------------------------------------------
# structural property: the marginal is non-increasing in sigma
# ---------------------------------------------------------------------------


_PROP_SYS = BanachSystem(SeparablePotential(quadratic_density(1.0), n=1),
                         QuadraticEnergy(1.0, np.array([0.3]), n=1))
_PROP_CFG = SolveConfig(coarse=1001, multistart=4)


class TestMarginalMonotonicity:
    @settings(max_examples=40, deadline=None)
    @given(u0=st.floats(-3.0, 3.0),
           s1=st.floats(0.05, 8.0),
           s2=st.floats(0.05, 8.0))
    def test_phi_non_increasing(self, u0, s1, s2):
        # sigma R(v/sigma) is non-increasing in sigma for every fixed v,
        # hence so is the pointwise minimum over u
        lo, hi = sorted((s1, s2))
        phi_lo = banach_step(_PROP_SYS, np.array([u0]), lo, _PROP_CFG).value
        phi_hi = banach_step(_PROP_SYS, np.array([u0]), hi, _PROP_CFG).value
        assert phi_hi <= phi_lo + 1e-9
