"""Spinor impurities coupled to the GP bath: radiofrequency pulses, optical
blast, and self-consistent two-way evolution.

Single impurities are exact spinor wavefunctions (psi_up, psi_down) on the
bath grid.  Two impurities live on the full (x1, x2) grid per spin sector,
stored as amps[s1, s2, x1, x2] with s=0 for up, s=1 for down; exchange
symmetry amps[s1,s2,x1,x2] = eps * amps[s2,s1,x2,x1] (eps = +1 bosons,
-1 fermions) is an invariant of the dynamics and monitored, not imposed.
Both the symmetric and antisymmetric spin-0 projections of the up-down
sector are reachable because the bath barrier acts on spin-up coordinates
only, so all four sector amplitudes are kept explicitly.

Spin-up impurities feel trap + g_bi * rho_B(x,t); spin-down feel the trap
only; the bath feels the up-density back-action g_bi * rho_up(x,t).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .grids import Grid, sine_transform
from .meanfield import BathField, SystemParams, relax_ground_state, _apply_kinetic

PULSE_LABELS = ("pump", "dark", "probe")


@dataclass(frozen=True)
class PulseSpec:
    """One rectangular radiofrequency pulse in the rotating frame.

    rabi is the bare Rabi frequency Omega_R0 (units of omega), detuning the
    drive offset from the bare transition.  Dark segments carry no field:
    rabi must be 0 and the spin Hamiltonian vanishes identically.
    """

    label: str
    rabi: float
    detuning: float
    duration: float

    def __post_init__(self):
        if self.label not in PULSE_LABELS:
            raise ValueError(f"pulse label must be one of {PULSE_LABELS}")
        if self.duration <= 0:
            raise ValueError("pulse duration must be positive")
        if self.label == "dark" and self.rabi != 0.0:
            raise ValueError("dark pulses must have rabi = 0")


def dark_pulse(duration: float) -> PulseSpec:
    return PulseSpec("dark", 0.0, 0.0, duration)


def build_rf_hamiltonian(pulse: PulseSpec, n_imp: int) -> np.ndarray:
    """Collective spin Hamiltonian (Omega/2) Sx - (Delta/2) Sz.

    Returns the 2x2 single-impurity matrix for n_imp=1 or the 4x4 collective
    two-impurity matrix (kron sum) for n_imp=2.  Dark segments have no field
    at all, hence a zero operator regardless of the stored detuning.
    """
    if pulse.label == "dark":
        h1 = np.zeros((2, 2))
    else:
        h1 = 0.5 * np.array([[-pulse.detuning, pulse.rabi], [pulse.rabi, pulse.detuning]])
    if n_imp == 1:
        return h1
    if n_imp == 2:
        eye = np.eye(2)
        return np.kron(h1, eye) + np.kron(eye, h1)
    raise ValueError("n_imp must be 1 or 2")


def _spin_rotation(pulse: PulseSpec, dt: float) -> np.ndarray:
    """Exact 2x2 exp(-i h dt) for the single-particle drive matrix."""
    if pulse.label == "dark":
        return np.eye(2, dtype=complex)
    nx, nz = 0.5 * pulse.rabi, -0.5 * pulse.detuning
    n = np.hypot(nx, nz)
    if n == 0.0:
        return np.eye(2, dtype=complex)
    c, s = np.cos(n * dt), np.sin(n * dt)
    return np.array(
        [[c - 1j * s * nz / n, -1j * s * nx / n], [-1j * s * nx / n, c + 1j * s * nz / n]]
    )


@dataclass
class ImpurityState:
    """Spinor impurity wavefunction: (2, M) for one impurity, (2,2,M2,M2) for two."""

    grid: Grid
    n_imp: int
    statistics: str
    amps: np.ndarray

    @property
    def exchange_sign(self) -> float:
        return -1.0 if self.statistics == "fermion" else 1.0

    def _weight(self) -> float:
        return self.grid.dx**self.n_imp

    def norm(self) -> float:
        return float(np.sqrt(np.sum(np.abs(self.amps) ** 2) * self._weight()))

    def sector_norms(self) -> dict:
        w = self._weight()
        if self.n_imp == 1:
            return {
                "up": float(np.sum(np.abs(self.amps[0]) ** 2) * w),
                "down": float(np.sum(np.abs(self.amps[1]) ** 2) * w),
            }
        names = {(0, 0): "uu", (0, 1): "ud", (1, 0): "du", (1, 1): "dd"}
        return {
            name: float(np.sum(np.abs(self.amps[s]) ** 2) * w) for s, name in names.items()
        }

    def spin_populations(self) -> tuple[float, float]:
        """(<N_up>, <N_down>); sums to n_imp for a normalized state."""
        s = self.sector_norms()
        if self.n_imp == 1:
            return s["up"], s["down"]
        n_up = 2 * s["uu"] + s["ud"] + s["du"]
        n_dn = 2 * s["dd"] + s["ud"] + s["du"]
        return n_up, n_dn

    def density(self, spin: str = "up") -> np.ndarray:
        """One-body density of the given spin component on the grid."""
        i = 0 if spin == "up" else 1
        if self.n_imp == 1:
            return np.abs(self.amps[i]) ** 2
        dx = self.grid.dx
        first = np.sum(np.abs(self.amps[i, :, :, :]) ** 2, axis=(0, 2)) * dx
        second = np.sum(np.abs(self.amps[:, i, :, :]) ** 2, axis=(0, 1)) * dx
        return first + second

    def symmetry_residual(self) -> float:
        """Max deviation from amps[s1,s2,x1,x2] = eps*amps[s2,s1,x2,x1]."""
        if self.n_imp == 1:
            return 0.0
        swapped = self.exchange_sign * np.transpose(self.amps, (1, 0, 3, 2))
        scale = np.max(np.abs(self.amps)) or 1.0
        return float(np.max(np.abs(self.amps - swapped)) / scale)

    def renormalized(self) -> "ImpurityState":
        return ImpurityState(self.grid, self.n_imp, self.statistics, self.amps / self.norm())

    def copy(self) -> "ImpurityState":
        return ImpurityState(self.grid, self.n_imp, self.statistics, self.amps.copy())


@dataclass
class CoupledState:
    bath: BathField
    imp: ImpurityState
    t: float = 0.0

    def copy(self) -> "CoupledState":
        return CoupledState(self.bath.copy(), self.imp.copy(), self.t)


def impurity_ground_state(grid: Grid, params: SystemParams, spin: str = "down") -> ImpurityState:
    """Noninteracting impurity ground state, spin polarized.

    One impurity: trap ground orbital.  Two bosons: both in the ground
    orbital; two fermions: Slater determinant of the two lowest orbitals.
    """
    from .grids import trap_eigenstates

    idx = 0 if spin == "up" else 1
    _, orbs = trap_eigenstates(grid, params.m_imp, params.omega, 2)
    if params.n_imp == 1:
        amps = np.zeros((2, grid.m), dtype=complex)
        amps[idx] = orbs[0]
        return ImpurityState(grid, 1, params.statistics, amps)
    amps = np.zeros((2, 2, grid.m, grid.m), dtype=complex)
    if params.statistics == "boson":
        amps[idx, idx] = np.outer(orbs[0], orbs[0])
    else:
        amps[idx, idx] = (np.outer(orbs[0], orbs[1]) - np.outer(orbs[1], orbs[0])) / np.sqrt(2)
    return ImpurityState(grid, 2, params.statistics, amps)


def initial_coupled_state(
    params: SystemParams,
    grid: Grid,
    imp_grid: Grid | None = None,
    relax_tol: float = 1e-10,
) -> CoupledState:
    """Pre-pump ground state: relaxed GP bath x spin-down impurities."""
    bath, _ = relax_ground_state(params, grid, tol=relax_tol)
    imp = impurity_ground_state(imp_grid if imp_grid is not None else grid, params, "down")
    return CoupledState(bath, imp, 0.0)


class CouplingMap:
    """Density exchange between the bath grid and a coarser impurity grid.

    `to_imp` interpolates the bath density onto the impurity grid; `to_bath`
    is its quadrature adjoint (spreading), so that both force terms derive
    from the single functional E = g int rho_imp * P rho_bath dx_imp and the
    semidiscrete coupled flow conserves energy.
    """

    def __init__(self, bath_grid: Grid, imp_grid: Grid):
        self.identical = (
            bath_grid.m == imp_grid.m
            and bath_grid.x_min == imp_grid.x_min
            and bath_grid.x_max == imp_grid.x_max
        )
        self.bath_grid = bath_grid
        self.imp_grid = imp_grid
        if self.identical:
            return
        pos = (imp_grid.x - bath_grid.x[0]) / bath_grid.dx
        i0 = np.clip(np.floor(pos).astype(int), 0, bath_grid.m - 2)
        self.i0 = i0
        self.w1 = pos - i0
        self.w0 = 1.0 - self.w1
        self.ratio = imp_grid.dx / bath_grid.dx

    def to_imp(self, rho_bath: np.ndarray) -> np.ndarray:
        if self.identical:
            return rho_bath
        return self.w0 * rho_bath[self.i0] + self.w1 * rho_bath[self.i0 + 1]

    def to_bath(self, rho_imp: np.ndarray) -> np.ndarray:
        if self.identical:
            return rho_imp
        out = np.zeros(self.bath_grid.m)
        np.add.at(out, self.i0, self.w0 * rho_imp * self.ratio)
        np.add.at(out, self.i0 + 1, self.w1 * rho_imp * self.ratio)
        return out


@dataclass
class Snapshot:
    """Per-stride record of the coupled evolution."""

    t: float
    n_up: float
    n_down: float
    bath_norm: float
    imp_norm: float
    sector_norms: dict
    bath_density: np.ndarray
    up_density: np.ndarray
    down_density: np.ndarray
    energies: dict


def coupled_energies(state: CoupledState, params: SystemParams, pulse: PulseSpec | None = None) -> dict:
    """Mean-field energy bookkeeping: bath, impurity, interaction, spin, total."""
    bath, imp = state.bath, state.imp
    gb, gi = bath.grid, imp.grid
    rho_b = bath.density()

    t_psi = _apply_kinetic(bath.psi, gb, params.m_bath)
    vb = 0.5 * params.m_bath * params.omega**2 * gb.x**2
    e_bath = float(
        np.real(np.vdot(bath.psi, t_psi)) * gb.dx
        + np.sum(vb * rho_b) * gb.dx
        + 0.5 * params.g_bb * np.sum(rho_b**2) * gb.dx
    )

    w = imp._weight()
    tk = gi.kinetic_eigenvalues(params.m_imp)
    vi = 0.5 * params.m_imp * params.omega**2 * gi.x**2
    if imp.n_imp == 1:
        ft = sine_transform(imp.amps, axes=(1,))
        e_kin = np.sum(tk[None, :] * np.abs(ft) ** 2) * w
        e_trap = np.sum(vi[None, :] * np.abs(imp.amps) ** 2) * w
        e_ii = 0.0
    else:
        ft = sine_transform(imp.amps, axes=(2, 3))
        e_kin = np.sum((tk[:, None] + tk[None, :]) * np.abs(ft) ** 2) * w
        e_trap = np.sum((vi[:, None] + vi[None, :]) * np.abs(imp.amps) ** 2) * w
        diag = np.abs(np.diagonal(imp.amps, axis1=2, axis2=3)) ** 2  # (2,2,M2)
        spin_factor = np.array([[2.0, 1.0], [1.0, 2.0]])
        e_ii = params.g_ii * float(np.sum(spin_factor[:, :, None] * diag) * gi.dx)

    cmap = CouplingMap(gb, gi)
    rho_up = imp.density("up")
    e_int = params.g_bi * float(np.sum(cmap.to_imp(rho_b) * rho_up) * gi.dx)

    e_spin = 0.0
    if pulse is not None and pulse.label != "dark":
        h1 = build_rf_hamiltonian(pulse, 1).astype(complex)
        if imp.n_imp == 1:
            e_spin = float(np.real(np.einsum("ax,ab,bx->", imp.amps.conj(), h1, imp.amps)) * w)
        else:
            e_spin = float(
                np.real(
                    np.einsum("abxy,ac,cbxy->", imp.amps.conj(), h1, imp.amps)
                    + np.einsum("abxy,bd,adxy->", imp.amps.conj(), h1, imp.amps)
                )
                * w
            )

    e_imp = float(e_kin + e_trap)
    return {
        "bath": e_bath,
        "impurity": e_imp,
        "interaction": e_int,
        "impurity_impurity": float(e_ii),
        "spin": e_spin,
        "total": e_bath + e_imp + e_int + float(e_ii) + e_spin,
    }


def _take_snapshot(state: CoupledState, params: SystemParams, pulse: PulseSpec) -> Snapshot:
    n_up, n_dn = state.imp.spin_populations()
    return Snapshot(
        t=state.t,
        n_up=n_up,
        n_down=n_dn,
        bath_norm=state.bath.norm(),
        imp_norm=state.imp.norm(),
        sector_norms=state.imp.sector_norms(),
        bath_density=state.bath.density().copy(),
        up_density=state.imp.density("up"),
        down_density=state.imp.density("down"),
        energies=coupled_energies(state, params, pulse),
    )


class _CoupledStepper:
    """Strang-split propagator for bath + spinor impurity with two-way coupling."""

    def __init__(self, params: SystemParams, bath_grid: Grid, imp_grid: Grid, pulse: PulseSpec, dt: float, frozen_bath: bool = False):
        self.params = params
        self.pulse = pulse
        self.dt = dt
        self.frozen_bath = frozen_bath
        self.gb, self.gi = bath_grid, imp_grid
        self.cmap = CouplingMap(bath_grid, imp_grid)
        self.vb = 0.5 * params.m_bath * params.omega**2 * bath_grid.x**2
        self.vi = 0.5 * params.m_imp * params.omega**2 * imp_grid.x**2
        tb = bath_grid.kinetic_eigenvalues(params.m_bath)
        ti = imp_grid.kinetic_eigenvalues(params.m_imp)
        self.kb_half, self.kb_full = np.exp(-0.5j * dt * tb), np.exp(-1j * dt * tb)
        self.ki_half, self.ki_full = np.exp(-0.5j * dt * ti), np.exp(-1j * dt * ti)
        self.rot_full = _spin_rotation(pulse, dt)
        self.driven = pulse.label != "dark" and pulse.rabi != 0.0
        # detuning phase for undriven but detuned segments (probe/pump with rabi=0)
        self.detuning_phases = None
        if pulse.label != "dark" and pulse.rabi == 0.0 and pulse.detuning != 0.0:
            self.detuning_phases = np.exp(
                -1j * dt * 0.5 * pulse.detuning * np.array([-1.0, 1.0])
            )

    # --- kinetic substeps -------------------------------------------------
    def kinetic(self, psi_b, f, phases_b, phases_i):
        if not self.frozen_bath:
            psi_b = sine_transform(phases_b * sine_transform(psi_b))
        if f.ndim == 2:
            f = sine_transform(f, axes=(1,))
            f *= phases_i[None, :]
            f = sine_transform(f, axes=(1,))
        else:
            f = sine_transform(f, axes=(2, 3))
            f *= phases_i[None, None, :, None]
            f *= phases_i[None, None, None, :]
            f = sine_transform(f, axes=(2, 3))
        return psi_b, f

    # --- potential + spin substep (full dt) -------------------------------
    def potential(self, psi_b, f):
        p = self.params
        dt = self.dt
        rho_b = np.abs(psi_b) ** 2
        w_imp = p.g_bi * self.cmap.to_imp(rho_b)

        if f.ndim == 2:
            rho_up = np.abs(f[0]) ** 2
        else:
            dx = self.gi.dx
            rho_up = (
                np.sum(np.abs(f[0, :, :, :]) ** 2, axis=(0, 2))
                + np.sum(np.abs(f[:, 0, :, :]) ** 2, axis=(0, 1))
            ) * dx

        if not self.frozen_bath:
            v_bath = self.vb + p.g_bb * rho_b + p.g_bi * self.cmap.to_bath(rho_up)
            psi_b = psi_b * np.exp(-1j * dt * v_bath)

        if f.ndim == 2:
            f = self._potential_single(f, w_imp, dt)
        else:
            f = self._potential_pair(f, w_imp, dt)
        return psi_b, f

    def _potential_single(self, f, w_imp, dt):
        pulse = self.pulse
        if self.driven:
            # exact 2x2 exponential of [[vi+w-D/2, O/2],[O/2, vi+D/2]] per point
            c = self.vi + 0.5 * w_imp
            nz = 0.5 * (w_imp - pulse.detuning)
            nx = 0.5 * pulse.rabi
            n = np.hypot(nx, nz)
            cos, sinc = np.cos(n * dt), np.where(n > 0, np.sin(n * dt) / np.where(n > 0, n, 1.0), dt)
            phase = np.exp(-1j * dt * c)
            up = phase * ((cos - 1j * sinc * nz) * f[0] - 1j * sinc * nx * f[1])
            dn = phase * (-1j * sinc * nx * f[0] + (cos + 1j * sinc * nz) * f[1])
            return np.stack([up, dn])
        f = f * np.exp(
            -1j
            * dt
            * np.stack([self.vi + w_imp, self.vi])
        )
        if self.detuning_phases is not None:
            f = f * self.detuning_phases[:, None]
        return f

    def _potential_pair(self, f, w_imp, dt):
        p = self.params
        vi, gi = self.vi, self.gi
        # diagonal part per sector: trap + up-barrier + contact
        scalar = vi[:, None] + vi[None, :]
        wu = w_imp
        diag = np.empty((2, 2, gi.m, gi.m))
        diag[0, 0] = scalar + wu[:, None] + wu[None, :]
        diag[0, 1] = scalar + wu[:, None]
        diag[1, 0] = scalar + wu[None, :]
        diag[1, 1] = scalar
        if p.g_ii != 0.0:
            idx = np.arange(gi.m)
            contact = p.g_ii / gi.dx
            diag[0, 0][idx, idx] += 2 * contact
            diag[1, 1][idx, idx] += 2 * contact
            diag[0, 1][idx, idx] += contact
            diag[1, 0][idx, idx] += contact
        if self.driven:
            half = np.exp(-0.5j * dt * diag)
            f = half * f
            r = self.rot_full
            f = np.einsum("ac,bd,cdxy->abxy", r, r, f, optimize=True)
            f = half * f
        else:
            f = f * np.exp(-1j * dt * diag)
            if self.detuning_phases is not None:
                ph = self.detuning_phases
                f = f * (ph[:, None] * ph[None, :])[:, :, None, None]
        return f


def evolve_coupled(
    state: CoupledState,
    params: SystemParams,
    pulse: PulseSpec,
    dt: float = 0.005,
    duration: float | None = None,
    record_stride: float | None = None,
    observers=(),
    norm_tol: float = 1e-7,
    symmetry_tol: float = 1e-8,
    frozen_bath: bool = False,
    max_dt: float = 0.0100001,
):
    """Propagate the coupled bath-impurity system through one pulse segment.

    Strang splitting with kinetic half-steps merged inside sampling blocks.
    Records a Snapshot every `record_stride` (None: first and last only) and
    calls each observer(state) at the same instants.  Aborts on norm drift
    beyond `norm_tol` or exchange-symmetry violation beyond `symmetry_tol`.

    Returns (final CoupledState, list of Snapshots).
    """
    if duration is None:
        duration = pulse.duration
    if dt <= 0:
        raise ValueError("dt must be positive")
    if dt > max_dt:
        raise ValueError(f"dt={dt} exceeds sanity bound {max_dt}")
    n_steps = max(1, int(np.ceil(duration / dt - 1e-12)))
    dt_eff = duration / n_steps
    sample_every = n_steps if record_stride is None else max(1, int(round(record_stride / dt_eff)))

    stepper = _CoupledStepper(params, state.bath.grid, state.imp.grid, pulse, dt_eff, frozen_bath)
    psi_b = state.bath.psi.copy()
    f = state.imp.amps.copy()
    t0 = state.t
    norm_b0 = state.bath.norm()
    norm_i0 = state.imp.norm()

    def wrap(t, psi_b, f):
        return CoupledState(
            BathField(state.bath.grid, psi_b, state.bath.n_bath),
            ImpurityState(state.imp.grid, state.imp.n_imp, state.imp.statistics, f),
            t,
        )

    snapshots = [_take_snapshot(wrap(t0, psi_b, f), params, pulse)]
    for obs in observers:
        obs(wrap(t0, psi_b, f))

    step = 0
    while step < n_steps:
        block = min(sample_every, n_steps - step)
        psi_b, f = stepper.kinetic(psi_b, f, stepper.kb_half, stepper.ki_half)
        psi_b, f = stepper.potential(psi_b, f)
        for _ in range(block - 1):
            psi_b, f = stepper.kinetic(psi_b, f, stepper.kb_full, stepper.ki_full)
            psi_b, f = stepper.potential(psi_b, f)
        psi_b, f = stepper.kinetic(psi_b, f, stepper.kb_half, stepper.ki_half)
        step += block
        t_now = t0 + step * dt_eff

        cur = wrap(t_now, psi_b, f)
        nb, ni = cur.bath.norm(), cur.imp.norm()
        if abs(nb - norm_b0) > norm_tol * norm_b0 or abs(ni - norm_i0) > norm_tol * max(norm_i0, 1e-30):
            raise RuntimeError(
                f"norm drift at step {step}/{n_steps} (t={t_now:.3f}): "
                f"bath {nb - norm_b0:.3e}, impurity {ni - norm_i0:.3e}"
            )
        res = cur.imp.symmetry_residual()
        if res > symmetry_tol:
            raise RuntimeError(f"exchange-symmetry violation {res:.3e} at t={t_now:.3f}")
        snapshots.append(_take_snapshot(cur, params, pulse))
        for obs in observers:
            obs(cur)

    return wrap(t0 + duration, psi_b, f), snapshots


def blast_project(state: CoupledState, min_up_norm: float = 1e-10) -> CoupledState:
    """Project out all spin-down population and renormalize.

    Idealized optical blast: for two impurities only the all-up sector
    survives.  Raises if the pump left (numerically) no spin-up population.
    """
    imp = state.imp
    amps = imp.amps.copy()
    if imp.n_imp == 1:
        up_norm = np.sum(np.abs(amps[0]) ** 2) * imp._weight()
        amps[1] = 0.0
    else:
        up_norm = np.sum(np.abs(amps[0, 0]) ** 2) * imp._weight()
        amps[0, 1] = 0.0
        amps[1, 0] = 0.0
        amps[1, 1] = 0.0
    if up_norm < min_up_norm:
        raise ValueError(f"blast failed: spin-up norm {up_norm:.3e} below {min_up_norm:.0e}")
    new = ImpurityState(imp.grid, imp.n_imp, imp.statistics, amps).renormalized()
    return CoupledState(state.bath.copy(), new, state.t)


def apply_blast_dissipative(state: CoupledState, gamma: float, t_b: float) -> CoupledState:
    """Anti-Hermitian blast: decay exp(-gamma t_b) per spin-down atom, renormalize.

    Matches blast_project in the gamma*t_b -> infinity limit; for
    gamma >= 100 omega and t_b << 1/omega the two agree to ~1e-3 overlap.
    """
    if gamma <= 0 or t_b <= 0:
        raise ValueError("gamma and t_b must be positive")
    imp = state.imp
    amps = imp.amps.copy()
    decay = np.exp(-gamma * t_b)
    if imp.n_imp == 1:
        amps[1] *= decay
    else:
        amps[0, 1] *= decay
        amps[1, 0] *= decay
        amps[1, 1] *= decay**2
    new = ImpurityState(imp.grid, imp.n_imp, imp.statistics, amps).renormalized()
    return CoupledState(state.bath.copy(), new, state.t)
