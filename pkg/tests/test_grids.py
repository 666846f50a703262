import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pps.grids import (
    Grid,
    Operator,
    apply_kinetic_phases,
    build_sine_dvr,
    default_grid,
    harmonic_potential,
    kinetic_matrix,
    kinetic_phase_factors,
    sine_transform,
    single_particle_eigenstates,
    trap_eigenstates,
    UnitSystem,
)


def box_levels(grid, mass, count):
    # closed-form particle-in-a-box spectrum, the exact sine-DVR kinetic spectrum
    n = np.arange(1, count + 1)
    return (n * np.pi / grid.length) ** 2 / (2 * mass)


class TestGridConstruction:
    def test_default_matches_production_grid(self):
        g = default_grid()
        assert g.m == 600 and g.x_min == -50 and g.x_max == 50

    def test_two_point_grid(self):
        g = build_sine_dvr(2, -1.0, 1.0)
        assert g.dx == pytest.approx(2.0 / 3.0, abs=1e-15)
        np.testing.assert_allclose(g.x, [-1 / 3, 1 / 3], atol=1e-15)

    def test_points_exclude_walls_uniform(self):
        g = build_sine_dvr(17, -3.0, 5.0)
        assert g.x[0] > g.x_min and g.x[-1] < g.x_max
        np.testing.assert_allclose(np.diff(g.x), g.dx, rtol=1e-14)

    def test_invalid_inputs(self):
        with pytest.raises(ValueError):
            build_sine_dvr(1, -1, 1)
        with pytest.raises(ValueError):
            build_sine_dvr(10, 2.0, -2.0)

    def test_grid_immutable(self):
        g = build_sine_dvr(8, -1, 1)
        with pytest.raises(ValueError):
            g.x[0] = 99.0


class TestKineticMatrix:
    def test_box_spectrum_exact(self):
        g = build_sine_dvr(10, -5.0, 5.0)
        t = kinetic_matrix(g, 1.0).matrix
        w = np.linalg.eigvalsh(t)
        np.testing.assert_allclose(w, box_levels(g, 1.0, 10), rtol=1e-12)

    def test_matches_sine_transform_construction(self):
        # independent route: U diag(T_n) U with the explicit sine matrix
        g = build_sine_dvr(40, -2.0, 7.0)
        mass = 1.7
        q = np.arange(1, g.m + 1)
        u = np.sqrt(2 / (g.m + 1)) * np.sin(np.pi * np.outer(q, q) / (g.m + 1))
        ref = u @ np.diag(g.kinetic_eigenvalues(mass)) @ u
        t = kinetic_matrix(g, mass).matrix
        np.testing.assert_allclose(t, ref, atol=1e-11)

    def test_exactly_symmetric(self):
        t = kinetic_matrix(build_sine_dvr(33, -4, 4), 0.5).matrix
        assert np.array_equal(t, t.T)

    def test_harmonic_spectrum(self):
        g = default_grid()
        h = kinetic_matrix(g, 1.0).matrix + np.diag(harmonic_potential(g, 1.0, 1.0).diagonal)
        w = np.linalg.eigvalsh(h)
        assert abs(w[0] - 0.5) < 1e-8
        n = np.arange(21)
        np.testing.assert_allclose(w[:21], n + 0.5, atol=1e-6)

    def test_nonpositive_mass_rejected(self):
        with pytest.raises(ValueError):
            kinetic_matrix(build_sine_dvr(4, -1, 1), 0.0)


class TestHarmonicPotential:
    def test_point_values(self):
        g = build_sine_dvr(99, -4.0, 4.0)
        v = harmonic_potential(g, 1.0, 1.0).diagonal
        i0 = np.argmin(np.abs(g.x))
        assert v[i0] == pytest.approx(0.5 * g.x[i0] ** 2, abs=1e-15)
        i2 = np.argmin(np.abs(g.x - 2.0))
        assert v[i2] == pytest.approx(0.5 * g.x[i2] ** 2)
        assert np.interp(2.0, g.x, v) == pytest.approx(2.0, abs=1e-3)

    def test_heavy_impurity_value(self):
        # m = 133/78 at x = 1 gives m/2 = 133/156; pick a grid with x=1 on a node
        g = build_sine_dvr(299, -3, 3)
        v = harmonic_potential(g, 133.0 / 78.0, 1.0).diagonal
        i = np.argmin(np.abs(g.x - 1.0))
        assert g.x[i] == pytest.approx(1.0, abs=1e-12)
        assert v[i] == pytest.approx(133.0 / 156.0, rel=1e-12)

    def test_rejects_bad_args(self):
        g = build_sine_dvr(4, -1, 1)
        with pytest.raises(ValueError):
            harmonic_potential(g, -1.0, 1.0)
        with pytest.raises(ValueError):
            harmonic_potential(g, 1.0, 0.0)


class TestTransformsAndPropagation:
    def test_sine_transform_involutive(self):
        rng = np.random.default_rng(7)
        x = rng.normal(size=101) + 1j * rng.normal(size=101)
        np.testing.assert_allclose(sine_transform(sine_transform(x)), x, atol=1e-13)

    def test_gaussian_completeness(self):
        # expand a Gaussian in the sine basis and re-sum the series by hand
        g = default_grid()
        psi = np.exp(-(g.x**2) / 2)
        coeff = sine_transform(psi)
        q = np.arange(1, g.m + 1)
        basis = np.sqrt(2 / (g.m + 1)) * np.sin(np.pi * np.outer(q, q) / (g.m + 1))
        rebuilt = basis @ coeff
        assert np.max(np.abs(rebuilt - psi)) < 1e-10

    @given(seed=st.integers(0, 2**31), dt=st.floats(1e-4, 0.01))
    @settings(max_examples=25, deadline=None)
    def test_unitary_step_preserves_norm(self, seed, dt):
        g = build_sine_dvr(64, -6, 6)
        rng = np.random.default_rng(seed)
        psi = rng.normal(size=g.m) + 1j * rng.normal(size=g.m)
        psi /= g.norm(psi)
        ph_k = kinetic_phase_factors(g, 1.0, dt)
        v = harmonic_potential(g, 1.0, 1.0).diagonal
        out = apply_kinetic_phases(psi, [ph_k]) * np.exp(-1j * dt * v)
        assert abs(g.norm(out) - 1.0) < 1e-12

    def test_apply_kinetic_phases_2d(self):
        g = build_sine_dvr(24, -3, 3)
        rng = np.random.default_rng(3)
        f = rng.normal(size=(2, g.m, g.m)) + 1j * rng.normal(size=(2, g.m, g.m))
        ph = kinetic_phase_factors(g, 1.0, 0.004)
        out = apply_kinetic_phases(f, [ph, ph])
        assert out.shape == f.shape
        assert np.sum(np.abs(out) ** 2) == pytest.approx(np.sum(np.abs(f) ** 2), rel=1e-12)


class TestEigenstates:
    def test_trap_ground_state_shape(self):
        g = build_sine_dvr(400, -20, 20)
        w, orbs = trap_eigenstates(g, 1.0, 1.0, 3)
        np.testing.assert_allclose(w[:3], [0.5, 1.5, 2.5], atol=1e-9)
        ref = np.pi**-0.25 * np.exp(-(g.x**2) / 2)
        assert np.max(np.abs(orbs[0] - ref)) < 1e-8
        # orthonormal under dx quadrature
        overlap = orbs @ orbs.T * g.dx
        np.testing.assert_allclose(overlap, np.eye(3), atol=1e-10)

    def test_generic_potential(self):
        g = build_sine_dvr(300, -10, 10)
        w, _ = single_particle_eigenstates(g, 2.0, np.zeros(g.m), count=4)
        np.testing.assert_allclose(w, box_levels(g, 2.0, 4), atol=1e-12)


class TestOperatorAndUnits:
    def test_operator_validation(self):
        with pytest.raises(ValueError):
            Operator()
        op = Operator(diagonal=np.arange(3.0))
        np.testing.assert_allclose(op.apply(np.ones(3)), [0, 1, 2])
        np.testing.assert_allclose(op.dense(), np.diag([0.0, 1, 2]))

    def test_unit_system_derived(self):
        u = UnitSystem()
        assert u.length == 1.0 and u.energy == 1.0 and u.coupling == 1.0
        si = UnitSystem(hbar=1.054571817e-34, mass_ref=1.44316e-25, omega=2 * np.pi * 100)
        assert si.length == pytest.approx(1.0784e-6, rel=1e-3)
        assert si.coupling == pytest.approx(7.1457e-38, rel=1e-3)
