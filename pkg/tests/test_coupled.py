import numpy as np
import pytest

from pps.coupled import (
    CoupledState,
    CouplingMap,
    ImpurityState,
    PulseSpec,
    apply_blast_dissipative,
    blast_project,
    build_rf_hamiltonian,
    coupled_energies,
    dark_pulse,
    evolve_coupled,
    impurity_ground_state,
    initial_coupled_state,
)
from pps.grids import build_sine_dvr, default_grid
from pps.meanfield import BathField, SystemParams, relax_ground_state

from oracles import rabi_transfer

SMALL_GRID = build_sine_dvr(127, -12, 12)


def free_params(n_imp=1, statistics="boson"):
    return SystemParams(n_bath=1, n_imp=n_imp, g_bb=0.0, g_bi=0.0, statistics=statistics)


def free_state(n_imp=1, statistics="boson", grid=SMALL_GRID):
    params = free_params(n_imp, statistics)
    bath, _ = relax_ground_state(params, grid)
    imp = impurity_ground_state(grid, params, "down")
    return CoupledState(bath, imp, 0.0), params


class TestPulseSpec:
    def test_validation(self):
        with pytest.raises(ValueError):
            PulseSpec("pump", 10.0, 0.0, -1.0)
        with pytest.raises(ValueError):
            PulseSpec("dark", 1.0, 0.0, 5.0)
        with pytest.raises(ValueError):
            PulseSpec("blast", 1.0, 0.0, 5.0)
        assert dark_pulse(3.0).rabi == 0.0


class TestRfHamiltonian:
    def test_single_impurity_matrix(self):
        h = build_rf_hamiltonian(PulseSpec("pump", 10.0, 0.0, 1.0), 1)
        assert h[0, 1] == pytest.approx(5.0)
        assert h[0, 0] == 0.0

    def test_dark_is_zero(self):
        h = build_rf_hamiltonian(dark_pulse(1.0), 1)
        assert np.all(h == 0.0)

    def test_detuned_undriven_diagonal(self):
        h = build_rf_hamiltonian(PulseSpec("probe", 0.0, 3.0, 1.0), 1)
        np.testing.assert_allclose(np.diag(h), [-1.5, 1.5])
        assert h[0, 1] == 0.0

    def test_collective_two_impurity(self):
        pulse = PulseSpec("pump", 4.0, 2.0, 1.0)
        h1 = build_rf_hamiltonian(pulse, 1)
        h2 = build_rf_hamiltonian(pulse, 2)
        expected = np.kron(h1, np.eye(2)) + np.kron(np.eye(2), h1)
        np.testing.assert_allclose(h2, expected)


class TestImpurityState:
    def test_single_ground_state(self):
        params = free_params()
        imp = impurity_ground_state(SMALL_GRID, params, "down")
        assert imp.norm() == pytest.approx(1.0, abs=1e-10)
        assert imp.spin_populations() == (pytest.approx(0.0), pytest.approx(1.0))

    def test_pair_boson_symmetric(self):
        params = free_params(2, "boson")
        imp = impurity_ground_state(SMALL_GRID, params, "down")
        assert imp.norm() == pytest.approx(1.0, abs=1e-10)
        assert imp.symmetry_residual() < 1e-12
        n_up, n_dn = imp.spin_populations()
        assert n_up == pytest.approx(0.0) and n_dn == pytest.approx(2.0)

    def test_pair_fermion_antisymmetric(self):
        params = free_params(2, "fermion")
        imp = impurity_ground_state(SMALL_GRID, params, "down")
        assert imp.symmetry_residual() < 1e-12
        f = imp.amps[1, 1]
        assert np.max(np.abs(f + f.T)) < 1e-12  # spatially antisymmetric
        # density integrates to 2 and matches |phi0|^2 + |phi1|^2
        rho = imp.density("down")
        assert np.sum(rho) * SMALL_GRID.dx == pytest.approx(2.0, abs=1e-10)

    def test_density_units(self):
        params = free_params(2, "boson")
        imp = impurity_ground_state(SMALL_GRID, params, "down")
        assert np.sum(imp.density("down")) * SMALL_GRID.dx == pytest.approx(2.0)
        assert np.all(imp.density("up") == 0.0)


class TestTwoLevelLimit:
    @pytest.mark.parametrize("detuning", [0.0, 3.0, -7.0, 10.0])
    def test_single_rabi_oscillation(self, detuning):
        state, params = free_state()
        pulse = PulseSpec("pump", 10.0, detuning, 0.9)
        final, snaps = evolve_coupled(state, params, pulse, dt=0.002, record_stride=0.05)
        times = np.array([s.t for s in snaps])
        nup = np.array([s.n_up for s in snaps])
        np.testing.assert_allclose(nup, rabi_transfer(times, 10.0, detuning), atol=1e-4)

    def test_resonant_pi_pulse_full_transfer(self):
        state, params = free_state()
        pulse = PulseSpec("pump", 10.0, 0.0, np.pi / 10.0)
        final, _ = evolve_coupled(state, params, pulse, dt=0.001)
        n_up, n_dn = final.imp.spin_populations()
        assert n_up == pytest.approx(1.0, abs=1e-3)

    def test_detuned_half_transfer_formula(self):
        # Delta = Omega gives effective frequency sqrt(2) Omega, amplitude 1/2
        state, params = free_state()
        omega_r = 5.0
        pulse = PulseSpec("pump", omega_r, omega_r, 1.2)
        _, snaps = evolve_coupled(state, params, pulse, dt=0.002, record_stride=0.02)
        times = np.array([s.t for s in snaps])
        nup = np.array([s.n_up for s in snaps])
        ref = 0.5 * np.sin(np.sqrt(2) * omega_r * times / 2) ** 2
        np.testing.assert_allclose(nup, ref, atol=1e-4)

    @pytest.mark.parametrize("statistics", ["boson", "fermion"])
    def test_two_impurity_collective_rabi(self, statistics):
        state, params = free_state(2, statistics, build_sine_dvr(63, -9, 9))
        pulse = PulseSpec("pump", 6.0, 2.5, 0.8)
        _, snaps = evolve_coupled(state, params, pulse, dt=0.002, record_stride=0.05)
        times = np.array([s.t for s in snaps])
        nup = np.array([s.n_up for s in snaps])
        # independent spins: <N_up> = 2 * single-particle transfer
        np.testing.assert_allclose(nup, 2 * rabi_transfer(times, 6.0, 2.5), atol=1e-4)


class TestBlast:
    def test_projector_on_superposition(self):
        state, params = free_state()
        phi = state.imp.amps[1].copy()
        state.imp.amps[0] = phi / np.sqrt(2)
        state.imp.amps[1] = phi / np.sqrt(2)
        out = blast_project(state)
        assert out.imp.spin_populations()[0] == pytest.approx(1.0, abs=1e-12)
        overlap = np.abs(np.vdot(out.imp.amps[0], phi)) * SMALL_GRID.dx
        assert overlap == pytest.approx(1.0, abs=1e-10)

    def test_projector_all_down_errors(self):
        state, _ = free_state()
        with pytest.raises(ValueError, match="blast failed"):
            blast_project(state)

    def test_projector_idempotent_on_pure_up(self):
        state, params = free_state()
        pulse = PulseSpec("pump", 10.0, 0.0, np.pi / 10.0)
        final, _ = evolve_coupled(state, params, pulse, dt=0.001)
        out = blast_project(final)
        # already ~pure up: projection leaves the up component unchanged
        ratio = out.imp.amps[0] / final.imp.amps[0]
        np.testing.assert_allclose(np.abs(ratio), np.full(SMALL_GRID.m, np.abs(ratio[0])), atol=1e-6)

    def test_dissipative_decay_factor(self):
        state, params = free_state()
        phi = state.imp.amps[1].copy()
        state.imp.amps[0] = phi / np.sqrt(2)
        state.imp.amps[1] = phi / np.sqrt(2)
        gamma, t_b = 100.0, 0.1
        before_dn = state.imp.sector_norms()["down"]
        out = apply_blast_dissipative(state, gamma, t_b)
        # population factor e^{-2 gamma t_b} = e^{-20} before renormalization
        raw_dn = before_dn * np.exp(-2 * gamma * t_b)
        raw_up = state.imp.sector_norms()["up"]
        assert out.imp.sector_norms()["down"] == pytest.approx(raw_dn / (raw_up + raw_dn), rel=1e-10)

    def test_dissipative_matches_projector_for_large_gamma(self):
        state, params = free_state()
        pulse = PulseSpec("pump", 10.0, 1.5, np.pi / 10.0)  # slightly detuned: residual down
        final, _ = evolve_coupled(state, params, pulse, dt=0.001)
        a = blast_project(final)
        b = apply_blast_dissipative(final, 100.0, 0.1)
        overlap = np.abs(np.vdot(a.imp.amps, b.imp.amps)) * SMALL_GRID.dx
        assert overlap > 0.999

    def test_dissipative_input_validation(self):
        state, _ = free_state()
        with pytest.raises(ValueError):
            apply_blast_dissipative(state, -1.0, 0.1)

    def test_pair_blast_keeps_only_uu(self):
        state, params = free_state(2, "boson", build_sine_dvr(63, -9, 9))
        pulse = PulseSpec("pump", 8.0, 0.0, 0.25)  # partial transfer
        final, _ = evolve_coupled(state, params, pulse, dt=0.002)
        out = blast_project(final)
        sect = out.imp.sector_norms()
        assert sect["uu"] == pytest.approx(1.0, abs=1e-10)
        assert sect["ud"] == sect["du"] == sect["dd"] == 0.0


class TestCoupledEvolution:
    def test_unitarity_and_energy_conservation_dark(self):
        params = SystemParams(n_bath=20, n_imp=1, g_bb=0.5, g_bi=1.5)
        grid = build_sine_dvr(255, -16, 16)
        bath, _ = relax_ground_state(params, grid)
        imp = impurity_ground_state(grid, params, "up")
        state = CoupledState(bath, imp, 0.0)
        final, snaps = evolve_coupled(state, params, dark_pulse(20.0), dt=0.005, record_stride=1.0)
        norms_b = np.array([s.bath_norm for s in snaps])
        norms_i = np.array([s.imp_norm for s in snaps])
        assert np.max(np.abs(norms_b - norms_b[0])) < 1e-9 * norms_b[0]
        assert np.max(np.abs(norms_i - 1.0)) < 1e-9
        e = np.array([s.energies["total"] for s in snaps])
        assert np.max(np.abs(e - e[0])) < 1e-5 * abs(e[0])

    def test_exchange_symmetry_preserved_through_pulse(self):
        params = SystemParams(n_bath=10, n_imp=2, g_bb=0.5, g_bi=1.0, statistics="fermion")
        grid = build_sine_dvr(95, -10, 10)
        bath, _ = relax_ground_state(params, grid)
        imp = impurity_ground_state(grid, params, "down")
        state = CoupledState(bath, imp, 0.0)
        pulse = PulseSpec("pump", 10.0, 5.0, np.pi / 10)
        final, _ = evolve_coupled(state, params, pulse, dt=0.002)
        assert final.imp.symmetry_residual() < 1e-8
        # singlet-triplet mixing through the up-barrier populates ud asymmetry
        final2, _ = evolve_coupled(final, params, dark_pulse(2.0), dt=0.002)
        assert final2.imp.symmetry_residual() < 1e-8

    def test_frozen_bath_switch(self):
        params = SystemParams(n_bath=20, n_imp=1, g_bb=0.5, g_bi=1.5)
        grid = build_sine_dvr(127, -12, 12)
        bath, _ = relax_ground_state(params, grid)
        imp = impurity_ground_state(grid, params, "up")
        state = CoupledState(bath, imp, 0.0)
        final, _ = evolve_coupled(state, params, dark_pulse(5.0), dt=0.005, frozen_bath=True)
        np.testing.assert_allclose(final.bath.density(), bath.density(), atol=1e-12)

    def test_backaction_transfers_energy_to_bath(self):
        params = SystemParams(n_bath=50, n_imp=1, g_bb=0.5, g_bi=1.5)
        grid = build_sine_dvr(255, -16, 16)
        bath, _ = relax_ground_state(params, grid)
        imp = impurity_ground_state(grid, params, "up")
        state = CoupledState(bath, imp, 0.0)
        _, snaps = evolve_coupled(state, params, dark_pulse(30.0), dt=0.005, record_stride=2.0)
        e_int = np.array([s.energies["interaction"] for s in snaps])
        assert e_int[-1] < e_int[0]  # impurity sheds interaction energy

    def test_spin_populations_conserved_dark(self):
        state, params = free_state()
        state.imp.amps[0] = state.imp.amps[1] * np.sqrt(0.3 / 0.7)
        state.imp.amps[1] *= 1.0
        state.imp = state.imp.renormalized()
        n0 = state.imp.spin_populations()
        final, _ = evolve_coupled(state, params, dark_pulse(5.0), dt=0.005)
        n1 = final.imp.spin_populations()
        assert n1[0] == pytest.approx(n0[0], abs=1e-10)

    def test_dt_guard(self):
        state, params = free_state()
        with pytest.raises(ValueError, match="sanity"):
            evolve_coupled(state, params, dark_pulse(1.0), dt=0.1)


class TestCouplingMap:
    def test_identity_on_same_grid(self):
        cmap = CouplingMap(SMALL_GRID, SMALL_GRID)
        rho = np.random.default_rng(0).random(SMALL_GRID.m)
        assert cmap.to_imp(rho) is rho

    def test_adjoint_quadrature_identity(self):
        bath = build_sine_dvr(255, -16, 16)
        imp = build_sine_dvr(127, -16, 16)
        cmap = CouplingMap(bath, imp)
        rng = np.random.default_rng(1)
        a, b = rng.random(bath.m), rng.random(imp.m)
        lhs = np.sum(cmap.to_imp(a) * b) * imp.dx
        rhs = np.sum(a * cmap.to_bath(b)) * bath.dx
        assert lhs == pytest.approx(rhs, rel=1e-12)

    def test_interpolation_accuracy(self):
        bath = build_sine_dvr(511, -16, 16)
        imp = build_sine_dvr(255, -16, 16)
        cmap = CouplingMap(bath, imp)
        f = np.exp(-bath.x**2)
        err = np.max(np.abs(cmap.to_imp(f) - np.exp(-imp.x**2)))
        assert err < 1e-3


class TestInitialState:
    def test_initial_coupled_state(self):
        params = SystemParams(n_bath=10, g_bb=0.5, g_bi=1.0)
        grid = build_sine_dvr(127, -12, 12)
        state = initial_coupled_state(params, grid)
        assert state.bath.norm() == pytest.approx(10.0, rel=1e-9)
        assert state.imp.spin_populations()[1] == pytest.approx(1.0)
        # interaction energy vanishes in the all-down state
        assert coupled_energies(state, params)["interaction"] == 0.0
