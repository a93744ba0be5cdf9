"""Dissipation potentials, energies, and subdifferential descriptors.

Values and gradients are checked against hand-reduced closed forms and
central differences; descriptor geometry (boxes at kinks, singletons on
smooth branches) against the Fenchel gap characterization.
"""

import numpy as np
import pytest

from maxslope.common import ModelError
from maxslope.models import (
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

KINKED = piecewise_quadratic_density(1.0, 1.0, 4.0)


def central_diff(f, u, h=1e-6):
    u = np.asarray(u, float)
    g = np.empty_like(u)
    for i in range(len(u)):
        e = np.zeros_like(u)
        e[i] = h
        g[i] = (f(u + e) - f(u - e)) / (2.0 * h)
    return g


class TestDensities:
    @pytest.mark.parametrize("density", [
        quadratic_density(1.0),
        quadratic_density(3.0),
        power_density(3.0),
        power_density(4.0, 0.5),
        KINKED,
    ])
    def test_zero_at_zero_and_nonnegative(self, density):
        assert density.value(0.0) == 0.0
        for r in np.linspace(-6, 6, 41):
            assert density.value(r) >= 0.0

    @pytest.mark.parametrize("density", [
        quadratic_density(2.0), power_density(3.0), KINKED])
    def test_midpoint_convexity(self, density, rng):
        for _ in range(60):
            a, b = rng.uniform(-5, 5, size=2)
            mid = density.value(0.5 * (a + b))
            assert mid <= 0.5 * (density.value(a) + density.value(b)) + 1e-12

    def test_parameter_validation(self):
        with pytest.raises(ModelError):
            quadratic_density(-1.0)
        with pytest.raises(ModelError):
            power_density(1.0)
        with pytest.raises(ModelError):
            piecewise_quadratic_density(1.0, 4.0, 1.0)  # inner must be < outer

    def test_kinked_closed_forms(self):
        # value: r^2/2 inside, 2 r^2 - 3/2 outside; continuous at |r| = 1
        assert KINKED.value(0.5) == pytest.approx(0.125)
        assert KINKED.value(1.0) == pytest.approx(0.5)
        assert KINKED.value(2.0) == pytest.approx(6.5)
        assert KINKED.value(-2.0) == pytest.approx(6.5)


class TestSubdifferentialSet:
    def test_singleton(self):
        s = SubdifferentialSet.singleton(np.array([2.0, -1.0]))
        assert s.is_singleton
        np.testing.assert_allclose(s.vector, [2.0, -1.0])
        assert s.contains(np.array([2.0, -1.0]))
        assert not s.contains(np.array([2.0, -0.9]), tol=1e-6)

    def test_box(self):
        s = SubdifferentialSet.box(np.array([-4.0]), np.array([-1.0]))
        assert not s.is_singleton
        assert s.contains(np.array([-2.5]))
        assert s.distance(np.array([0.0])) == pytest.approx(1.0)
        np.testing.assert_allclose(s.clip(np.array([0.0])), [-1.0])

    def test_negated_and_intersect(self):
        a = SubdifferentialSet.box(np.array([1.0]), np.array([4.0]))
        b = SubdifferentialSet.box(np.array([-3.0]), np.array([-2.0])).negated()
        inter = a.intersect(b)
        assert inter is not None
        assert inter.contains(np.array([2.5]))
        assert not inter.contains(np.array([3.5]), tol=1e-9)

    def test_box_validation(self):
        with pytest.raises(ModelError):
            SubdifferentialSet.box(np.array([1.0]), np.array([0.0]))


class TestPotentials:
    def test_separable_value_and_gradient(self, rng):
        R = SeparablePotential(power_density(3.0), n=3)
        v = rng.uniform(-2, 2, size=3)
        assert R.value(v) == pytest.approx(np.sum(np.abs(v) ** 3) / 3.0)
        np.testing.assert_allclose(R.gradient(v), central_diff(R.value, v),
                                   atol=1e-7)

    def test_separable_weights(self):
        w = np.array([2.0, 0.5])
        R = SeparablePotential(quadratic_density(1.0), n=2, weights=w)
        v = np.array([1.0, 3.0])
        assert R.value(v) == pytest.approx(2.0 * 0.5 + 0.5 * 4.5)

    def test_separable_kink_descriptor(self):
        R = SeparablePotential(KINKED, n=1)
        sub = R.subdifferential(np.array([1.0]))
        assert sub.contains(np.array([1.0]))
        assert sub.contains(np.array([4.0]))
        assert sub.contains(np.array([2.3]))
        assert not sub.contains(np.array([4.5]), tol=1e-6)

    def test_norm_potential(self, rng):
        R = NormPotential(quadratic_density(1.0), n=2)
        v = rng.uniform(-2, 2, size=2)
        assert R.value(v) == pytest.approx(0.5 * np.sum(v * v))
        np.testing.assert_allclose(R.gradient(v), central_diff(R.value, v),
                                   atol=1e-7)

    def test_sum_potential(self):
        R = SumPotential([SeparablePotential(quadratic_density(1.0), n=1),
                          SeparablePotential(power_density(4.0), n=1)])
        assert R.value(np.array([2.0])) == pytest.approx(2.0 + 4.0)
        # numeric 1D conjugate of the sum against a dense grid
        s = 3.0
        r = np.arange(-8, 8, 1e-4)
        ref = np.max(s * r - (r * r / 2 + np.abs(r) ** 4 / 4))
        assert R.conjugate(np.array([s])) == pytest.approx(ref, abs=1e-6)

    def test_batch_matches_scalar(self, rng):
        for R in (SeparablePotential(KINKED, n=2),
                  NormPotential(power_density(3.0), n=2)):
            V = rng.uniform(-3, 3, size=(7, 2))
            np.testing.assert_allclose(R.value_batch(V),
                                       [R.value(v) for v in V], atol=1e-12)

    def test_dimension_validation(self):
        with pytest.raises(ModelError):
            SeparablePotential(quadratic_density(1.0))  # shared density, no n
        with pytest.raises(ModelError):
            SeparablePotential(quadratic_density(1.0), n=2,
                               weights=np.array([1.0, -1.0]))


class TestFenchelGap:
    def test_zero_on_subgradient_pairs(self):
        R = SeparablePotential(quadratic_density(1.0), n=1)
        for v in (-2.0, 0.0, 1.3):
            assert fenchel_gap(R, np.array([v]), np.array([v])) == pytest.approx(
                0.0, abs=1e-12)

    def test_quadratic_gap_closed_form(self):
        # R = |.|^2/2 is self-conjugate: gap(v, xi) = (xi - v)^2 / 2
        R = SeparablePotential(quadratic_density(1.0), n=1)
        g = fenchel_gap(R, np.array([1.0]), np.array([3.0]))
        assert g == pytest.approx(2.0, abs=1e-12)

    def test_interval_membership_at_kink(self):
        R = SeparablePotential(KINKED, n=1)
        for xi in (1.0, 2.0, 4.0):
            assert fenchel_gap(R, np.array([1.0]), np.array([xi])) == pytest.approx(
                0.0, abs=1e-9)
        assert fenchel_gap(R, np.array([1.0]), np.array([4.6])) > 1e-3


class TestEnergies:
    def test_quadratic_scalar(self):
        E = QuadraticEnergy(1.0, n=1)
        assert E.value(np.array([2.0])) == pytest.approx(2.0)
        np.testing.assert_allclose(E.gradient(np.array([2.0])), [2.0])
        assert E.lower_bound() <= 0.0

    def test_quadratic_matrix(self, rng):
        A = np.array([[2.0, 0.5], [0.5, 1.0]])
        b = np.array([1.0, -1.0])
        E = QuadraticEnergy(A, b, c=0.3, n=2)
        u = rng.uniform(-2, 2, size=2)
        assert E.value(u) == pytest.approx(0.5 * u @ A @ u + b @ u + 0.3)
        np.testing.assert_allclose(E.gradient(u), A @ u + b, atol=1e-12)
        np.testing.assert_allclose(E.gradient(u), central_diff(E.value, u),
                                   atol=1e-6)

    def test_quadratic_rejects_indefinite(self):
        with pytest.raises(ModelError):
            QuadraticEnergy(np.array([[1.0, 0.0], [0.0, -0.5]]), n=2)

    def test_hinge(self):
        E = HingeEnergy()
        assert E.value(np.array([2.0])) == pytest.approx(2.0)
        assert E.value(np.array([-3.0])) == pytest.approx(0.0)
        sub = E.subdifferential(np.array([0.0]))
        assert sub.contains(np.array([0.0])) and sub.contains(np.array([1.0]))
        assert not sub.contains(np.array([1.2]), tol=1e-9)

    def test_two_well(self):
        E = TwoWellEnergy(centers=[2.0, -2.0], offsets=[0.0, -1.0])
        assert E.value(np.array([2.0])) == pytest.approx(0.0)
        assert E.value(np.array([-2.0])) == pytest.approx(-1.0)
        assert E.lower_bound() <= -1.0
        # midpoint sits above the chord through the wells: genuinely nonconvex
        mid = E.value(np.array([0.0]))
        assert mid > 0.5 * (0.0 + -1.0)

    def test_perturbed_quadratic_gradient(self, rng):
        E = PerturbedQuadraticEnergy(np.array([[2.0, 0.0], [0.0, 1.5]]),
                                     np.array([0.5, -0.5]), 0.2,
                                     np.array([1.0, 2.0]))
        u = rng.uniform(-2, 2, size=2)
        np.testing.assert_allclose(E.gradient(u), central_diff(E.value, u),
                                   atol=1e-6)

    def test_grid_phase_field_gradient(self, rng):
        E = GridPhaseFieldEnergy(8)
        u = rng.uniform(-1, 1, size=8)
        np.testing.assert_allclose(E.gradient(u), central_diff(E.value, u),
                                   atol=1e-5)
        assert E.value(u) >= E.lower_bound() - 1e-12

    def test_zero_energy(self):
        E = ZeroEnergy(3)
        assert E.value(np.zeros(3)) == 0.0
        assert E.subdifferential(np.ones(3)).is_singleton

    def test_convex_subgradient_inequality(self, rng):
        # every descriptor element must support the energy from below
        E = QuadraticEnergy(np.array([[2.0, 0.3], [0.3, 1.0]]),
                            np.array([0.2, 0.1]), n=2)
        for _ in range(25):
            u, w = rng.uniform(-3, 3, size=(2, 2))
            xi = E.subdifferential(u).vector
            assert E.value(w) >= E.value(u) + xi @ (w - u) - 1e-9
