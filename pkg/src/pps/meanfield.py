"""Gross-Pitaevskii bath: ground-state relaxation, real-time propagation,
and the Thomas-Fermi analytic oracle.

The order parameter is stored as complex amplitudes psi(x_q) with the norm
convention sum |psi|^2 dx = N_B, so |psi|^2 is directly the density.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .grids import Grid, Operator, harmonic_potential, kinetic_matrix, sine_transform

STATISTICS = ("boson", "fermion")


@dataclass(frozen=True)
class SystemParams:
    """Physical parameters of the mixture in harmonic units.

    Couplings are measured in sqrt(hbar^3 omega / m); masses in units of the
    bath mass.  g_bi couples the bath to spin-up impurities only; spin-down
    impurities are noninteracting.
    """

    n_bath: int
    n_imp: int = 1
    g_bb: float = 0.5
    g_bi: float = 0.0
    g_ii: float = 0.0
    m_bath: float = 1.0
    m_imp: float = 1.0
    omega: float = 1.0
    statistics: str = "boson"

    def __post_init__(self):
        if self.n_bath < 1:
            raise ValueError("n_bath must be >= 1")
        if self.n_imp not in (1, 2):
            raise ValueError("n_imp must be 1 or 2")
        if self.statistics not in STATISTICS:
            raise ValueError(f"statistics must be one of {STATISTICS}")
        if self.g_bb < 0:
            raise ValueError("g_bb must be non-negative")
        if self.m_bath <= 0 or self.m_imp <= 0 or self.omega <= 0:
            raise ValueError("masses and omega must be positive")


@dataclass
class BathField:
    """Mean-field condensate order parameter on a sine-DVR grid."""

    grid: Grid
    psi: np.ndarray
    n_bath: int

    def density(self) -> np.ndarray:
        return np.abs(self.psi) ** 2

    def norm(self) -> float:
        return float(np.sum(np.abs(self.psi) ** 2) * self.grid.dx)

    def renormalized(self) -> "BathField":
        return BathField(self.grid, self.psi * np.sqrt(self.n_bath / self.norm()), self.n_bath)

    def copy(self) -> "BathField":
        return BathField(self.grid, self.psi.copy(), self.n_bath)


def thomas_fermi_profile(params: SystemParams):
    """Analytic Thomas-Fermi chemical potential and density profile.

    Dropping the kinetic term in the stationary GP equation gives the
    inverted parabola rho(x) = (mu - m w^2 x^2/2)/g on its support; fixing
    the norm to N_B yields

        mu_TF = (3 N_B g_BB sqrt(m w^2) / (4 sqrt(2)))**(2/3).

    Returns (mu_TF, rho_TF) with rho_TF a callable; rho integrates to N_B
    exactly by construction.
    """
    if params.g_bb <= 0:
        raise ValueError("Thomas-Fermi profile requires g_bb > 0")
    m, w, g, n = params.m_bath, params.omega, params.g_bb, params.n_bath
    mu = (3.0 * n * g * np.sqrt(m * w**2) / (4.0 * np.sqrt(2.0))) ** (2.0 / 3.0)

    def rho(x):
        return np.maximum(0.0, (mu - 0.5 * m * w**2 * np.asarray(x) ** 2) / g)

    return mu, rho


def _trap(params: SystemParams, grid: Grid) -> np.ndarray:
    return 0.5 * params.m_bath * params.omega**2 * grid.x**2


def gp_energy(state: BathField, params: SystemParams, extra_potential: np.ndarray | None = None) -> float:
    """Total mean-field energy <T> + <V> + (g/2) int rho^2."""
    grid = state.grid
    rho = state.density()
    tpsi = _apply_kinetic(state.psi, grid, params.m_bath)
    e_kin = np.real(np.vdot(state.psi, tpsi)) * grid.dx
    v = _trap(params, grid)
    if extra_potential is not None:
        v = v + extra_potential
    e_pot = np.sum(v * rho) * grid.dx
    e_int = 0.5 * params.g_bb * np.sum(rho**2) * grid.dx
    return float(e_kin + e_pot + e_int)


def chemical_potential(state: BathField, params: SystemParams, extra_potential: np.ndarray | None = None) -> float:
    """mu = <h_GP> per particle, with the full nonlinear term."""
    grid = state.grid
    rho = state.density()
    tpsi = _apply_kinetic(state.psi, grid, params.m_bath)
    v = _trap(params, grid)
    if extra_potential is not None:
        v = v + extra_potential
    num = np.real(np.vdot(state.psi, tpsi)) * grid.dx + np.sum((v + params.g_bb * rho) * rho) * grid.dx
    return float(num / state.norm())


def gp_residual(state: BathField, params: SystemParams, extra_potential: np.ndarray | None = None) -> float:
    """Stationarity residual ||h_GP psi - mu psi|| / ||psi||."""
    grid = state.grid
    mu = chemical_potential(state, params, extra_potential)
    v = _trap(params, grid)
    if extra_potential is not None:
        v = v + extra_potential
    hpsi = _apply_kinetic(state.psi, grid, params.m_bath) + (v + params.g_bb * state.density()) * state.psi
    r = hpsi - mu * state.psi
    return float(np.sqrt(np.sum(np.abs(r) ** 2)) / np.sqrt(np.sum(np.abs(state.psi) ** 2)))


def _apply_kinetic(psi: np.ndarray, grid: Grid, mass: float) -> np.ndarray:
    tk = grid.kinetic_eigenvalues(mass)
    return sine_transform(tk * sine_transform(psi))


def relax_ground_state(
    params: SystemParams,
    grid: Grid,
    extra_potential: Operator | np.ndarray | None = None,
    tol: float = 1e-10,
    dtau: float = 0.01,
    max_iter: int = 200_000,
    polish: bool = True,
):
    """Imaginary-time relaxation of the GP ground state.

    Split-step imaginary-time propagation with renormalization after every
    step; stops when the energy change per step drops below `tol`.  A final
    self-consistent diagonalization polish (repeated lowest-eigenvector
    solves of h_GP[rho] with density mixing) pushes the stationarity
    residual to near machine precision, so that mu satisfies
    ||h_GP psi - mu psi||/||psi|| << tol-level accuracy.

    Returns (BathField, mu).  Raises RuntimeError with the residual if the
    energy has not converged after max_iter steps.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    extra = _extra_array(extra_potential, grid)
    v = _trap(params, grid)
    if extra is not None:
        v = v + extra

    # Gaussian seed at the trap length of the bath
    sigma = 1.0 / np.sqrt(params.m_bath * params.omega)
    psi = np.exp(-grid.x**2 / (2 * sigma**2)).astype(complex)
    state = BathField(grid, psi, params.n_bath).renormalized()

    decay = np.exp(-dtau * grid.kinetic_eigenvalues(params.m_bath))
    half = np.exp(-0.5 * dtau * grid.kinetic_eigenvalues(params.m_bath))

    e_prev = gp_energy(state, params, extra)
    energy_history = [e_prev]
    converged = False
    for _ in range(max_iter):
        psi = state.psi
        psi = sine_transform(half * sine_transform(psi))
        psi = psi * np.exp(-dtau * (v + params.g_bb * np.abs(psi) ** 2))
        psi = sine_transform(half * sine_transform(psi))
        state = BathField(grid, psi, params.n_bath).renormalized()
        e = gp_energy(state, params, extra)
        energy_history.append(e)
        if abs(e - e_prev) < tol:
            converged = True
            break
        e_prev = e
    if not converged:
        raise RuntimeError(
            f"imaginary-time relaxation did not converge after {max_iter} steps; "
            f"last energy change {abs(e - e_prev):.3e}, residual {gp_residual(state, params, extra):.3e}"
        )

    if polish:
        state = _newton_polish(state, params, v)
    state.energy_history = energy_history
    return state, chemical_potential(state, params, extra)


def _newton_polish(state: BathField, params: SystemParams, v: np.ndarray, n_iter: int = 12) -> BathField:
    """Newton iteration on the stationary GP system to machine residual.

    The ground state is real up to a global phase, so we solve the bordered
    real system for (psi, mu) with the norm constraint; quadratic convergence
    from the imaginary-time seed.  Falls back to the input if Newton fails to
    improve the residual (e.g. a poor seed).
    """
    grid = state.grid
    tmat = kinetic_matrix(grid, params.m_bath).matrix
    g = params.g_bb
    n = params.n_bath
    psi = np.abs(state.psi)
    best = psi.copy()

    def residual_vec(p):
        h_psi = tmat @ p + (v + g * p**2) * p
        mu = (p @ h_psi) * grid.dx / n
        return h_psi - mu * p, mu

    r, mu = residual_vec(psi)
    best_res = np.linalg.norm(r)
    m = grid.m
    for _ in range(n_iter):
        jac = np.zeros((m + 1, m + 1))
        jac[:m, :m] = tmat + np.diag(v + 3 * g * psi**2) - mu * np.eye(m)
        jac[:m, m] = -psi
        jac[m, :m] = 2 * psi * grid.dx
        rhs = np.concatenate([-r, [n - np.sum(psi**2) * grid.dx]])
        try:
            delta = np.linalg.solve(jac, rhs)
        except np.linalg.LinAlgError:
            break
        psi = psi + delta[:m]
        mu = mu + delta[m]
        r, mu = residual_vec(psi)
        res = np.linalg.norm(r)
        if res < best_res:
            best_res = res
            best = psi.copy()
        if res < 1e-13 * max(1.0, abs(mu)) * np.sqrt(np.sum(psi**2)):
            break
    seed_r, _ = residual_vec(np.abs(state.psi))
    if best_res > np.linalg.norm(seed_r):
        return state
    return BathField(grid, best.astype(complex), n).renormalized()


def _extra_array(extra, grid: Grid):
    if extra is None:
        return None
    if isinstance(extra, Operator):
        if extra.diagonal is None:
            raise ValueError("extra_potential must be diagonal")
        arr = extra.diagonal
    else:
        arr = np.asarray(extra, dtype=float)
    if arr.shape != (grid.m,):
        raise ValueError("extra_potential shape does not match grid")
    return arr


@dataclass
class GPTrajectory:
    times: np.ndarray
    densities: np.ndarray  # (n_samples, M)
    norms: np.ndarray
    energies: np.ndarray
    final: BathField


def propagate_gp(
    state: BathField,
    external_potential_series=None,
    dt: float = 0.005,
    duration: float = 1.0,
    params: SystemParams | None = None,
    record_stride: float = 0.1,
    max_dt: float = 0.01,
    norm_tol: float = 1e-6,
) -> GPTrajectory:
    """Real-time GP propagation under trap + g_BB|psi|^2 + optional extra potential.

    Second-order Strang splitting; the kinetic half-step is exact in the
    sine-DVR eigenbasis, so the norm is conserved to machine precision.
    `external_potential_series` may be None, a static array on the grid, or
    a callable t -> array.  Aborts with a step report if the norm drifts
    beyond `norm_tol`.
    """
    if params is None:
        raise ValueError("params required")
    if dt <= 0:
        raise ValueError("dt must be positive")
    if dt > max_dt:
        raise ValueError(f"dt={dt} exceeds sanity bound {max_dt} (override max_dt to force)")
    grid = state.grid
    n_steps = max(1, int(np.ceil(duration / dt - 1e-12)))
    dt_eff = duration / n_steps
    sample_every = max(1, int(round(record_stride / dt_eff)))

    v_static = _trap(params, grid)
    time_dep = callable(external_potential_series)
    if external_potential_series is not None and not time_dep:
        v_static = v_static + _extra_array(external_potential_series, grid)

    half = np.exp(-0.5j * dt_eff * grid.kinetic_eigenvalues(params.m_bath))
    psi = state.psi.copy()
    norm0 = state.norm()

    times, densities, norms, energies = [], [], [], []

    def record(t, psi_t):
        s = BathField(grid, psi_t, state.n_bath)
        times.append(t)
        densities.append(np.abs(psi_t) ** 2)
        norms.append(s.norm())
        extra_now = None
        if time_dep:
            extra_now = np.asarray(external_potential_series(t), dtype=float)
        elif external_potential_series is not None:
            extra_now = _extra_array(external_potential_series, grid)
        energies.append(gp_energy(s, params, extra_now))

    record(0.0, psi)
    for step in range(n_steps):
        t_mid = (step + 0.5) * dt_eff
        v = v_static + external_potential_series(t_mid) if time_dep else v_static
        psi = sine_transform(half * sine_transform(psi))
        psi = psi * np.exp(-1j * dt_eff * (v + params.g_bb * np.abs(psi) ** 2))
        psi = sine_transform(half * sine_transform(psi))
        t_now = (step + 1) * dt_eff
        if (step + 1) % sample_every == 0 or step == n_steps - 1:
            cur = float(np.sum(np.abs(psi) ** 2) * grid.dx)
            if abs(cur - norm0) > norm_tol * norm0:
                raise RuntimeError(
                    f"norm drift {cur - norm0:.3e} at step {step + 1}/{n_steps} (t={t_now:.3f})"
                )
            record(t_now, psi)

    final = BathField(grid, psi, state.n_bath)
    return GPTrajectory(
        times=np.asarray(times),
        densities=np.asarray(densities),
        norms=np.asarray(norms),
        energies=np.asarray(energies),
        final=final,
    )
