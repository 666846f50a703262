"""Sine-DVR spatial grids, elementary operators and the harmonic unit system.

Everything downstream works in harmonic-oscillator units of the bath:
hbar = 1, energies in hbar*omega, lengths in sqrt(hbar/(m*omega)), couplings
in sqrt(hbar^3*omega/m).  Conversion to/from SI happens only in `dimred`
and in the I/O layer.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.fft import dst, dstn

DEFAULT_POINTS = 600
DEFAULT_X_MIN = -50.0
DEFAULT_X_MAX = 50.0


@dataclass(frozen=True)
class UnitSystem:
    """Harmonic unit system: hbar=1, reference (bath) mass, trap frequency.

    Carries the SI magnitudes of the derived units so headers and the
    dimensional-reduction layer can convert; for the dimensionless internal
    default all three fields are 1.
    """

    hbar: float = 1.0
    mass_ref: float = 1.0
    omega: float = 1.0

    @property
    def length(self) -> float:
        return np.sqrt(self.hbar / (self.mass_ref * self.omega))

    @property
    def energy(self) -> float:
        return self.hbar * self.omega

    @property
    def time(self) -> float:
        return 1.0 / self.omega

    @property
    def coupling(self) -> float:
        # 1D contact coupling scale sqrt(hbar^3 omega / m)
        return np.sqrt(self.hbar**3 * self.omega / self.mass_ref)


@dataclass(frozen=True)
class Grid:
    """Interior points of a sine-DVR box with hard walls at x_min, x_max.

    The M points are uniformly spaced and exclude the wall positions, where
    every represented wavefunction vanishes.  dx = (x_max-x_min)/(M+1).
    """

    m: int
    x_min: float
    x_max: float
    x: np.ndarray = field(repr=False, compare=False, default=None)
    dx: float = field(default=None, compare=False)

    def __post_init__(self):
        length = self.x_max - self.x_min
        dx = length / (self.m + 1)
        x = self.x_min + dx * np.arange(1, self.m + 1)
        x.setflags(write=False)
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "dx", dx)

    @property
    def length(self) -> float:
        return self.x_max - self.x_min

    def kinetic_eigenvalues(self, mass: float) -> np.ndarray:
        """Exact kinetic spectrum of the box, (n pi / L)^2 / (2 m), n=1..M."""
        n = np.arange(1, self.m + 1)
        k = n * np.pi / self.length
        return k**2 / (2.0 * mass)

    def norm(self, psi: np.ndarray) -> float:
        """Discrete L2 norm with dx quadrature weight."""
        return float(np.sqrt(np.sum(np.abs(psi) ** 2) * self.dx))


@dataclass(frozen=True)
class Operator:
    """Matrix acting on grid values: dense or diagonal, with Hermitian flag."""

    matrix: np.ndarray = None
    diagonal: np.ndarray = None
    hermitian: bool = True

    def __post_init__(self):
        if (self.matrix is None) == (self.diagonal is None):
            raise ValueError("exactly one of matrix/diagonal must be given")

    def dense(self) -> np.ndarray:
        if self.matrix is not None:
            return self.matrix
        return np.diag(self.diagonal)

    def apply(self, psi: np.ndarray) -> np.ndarray:
        if self.diagonal is not None:
            return self.diagonal * psi
        return self.matrix @ psi


def build_sine_dvr(m: int, x_min: float, x_max: float) -> Grid:
    """Construct a sine-DVR grid with m interior points on (x_min, x_max)."""
    if m < 2:
        raise ValueError(f"need at least 2 grid points, got {m}")
    if not x_max > x_min:
        raise ValueError(f"inverted box bounds: [{x_min}, {x_max}]")
    return Grid(int(m), float(x_min), float(x_max))


def default_grid() -> Grid:
    return build_sine_dvr(DEFAULT_POINTS, DEFAULT_X_MIN, DEFAULT_X_MAX)


def kinetic_matrix(grid: Grid, mass: float) -> Operator:
    """Exact sine-DVR kinetic matrix -d^2/dx^2 / (2 m).

    Analytic matrix elements for the particle-in-a-box basis (not a finite
    difference stencil); the eigenvalues are exactly n^2 pi^2/(2 m L^2).
    """
    if mass <= 0:
        raise ValueError(f"mass must be positive, got {mass}")
    m = grid.m
    n_box = m + 1
    q = np.arange(1, m + 1)
    dq = q[:, None] - q[None, :]
    sq = q[:, None] + q[None, :]
    pref = np.pi**2 / (4.0 * mass * grid.length**2)
    with np.errstate(divide="ignore"):
        off = 1.0 / np.sin(np.pi * dq / (2 * n_box)) ** 2 - 1.0 / np.sin(
            np.pi * sq / (2 * n_box)
        ) ** 2
    t = pref * (-1.0) ** dq * off
    diag = pref * ((2 * n_box**2 + 1) / 3.0 - 1.0 / np.sin(np.pi * q / n_box) ** 2)
    t[np.arange(m), np.arange(m)] = diag
    # symmetrize exactly against roundoff in the two sin evaluations
    t = 0.5 * (t + t.T)
    return Operator(matrix=t, hermitian=True)


def harmonic_potential(grid: Grid, mass: float, omega: float) -> Operator:
    """Diagonal trap potential m omega^2 x^2 / 2 on the grid."""
    if mass <= 0 or omega <= 0:
        raise ValueError("mass and omega must be positive")
    return Operator(diagonal=0.5 * mass * omega**2 * grid.x**2, hermitian=True)


def sine_transform(values: np.ndarray, axes=None) -> np.ndarray:
    """Orthonormal DST-I, the unitary that diagonalizes the kinetic matrix.

    Involutive (its own inverse).  Works along the given axes for
    multidimensional wavefunctions; complex input transforms both parts.
    """
    if values.ndim == 1:
        return dst(values, type=1, norm="ortho")
    if axes is None:
        axes = tuple(range(values.ndim))
    return dstn(values, type=1, norm="ortho", axes=axes)


def kinetic_phase_factors(grid: Grid, mass: float, dt: float) -> np.ndarray:
    """exp(-i T dt) eigenphases for split-step propagation via sine_transform."""
    return np.exp(-1j * dt * grid.kinetic_eigenvalues(mass))


def apply_kinetic_phases(psi: np.ndarray, phases_per_axis) -> np.ndarray:
    """Apply exp(-i T dt) along each axis: DST -> phases -> DST.

    `phases_per_axis` is a sequence with one phase vector per trailing axis
    of `psi` (leading axes are spectator spin indices).
    """
    nax = len(phases_per_axis)
    axes = tuple(range(psi.ndim - nax, psi.ndim))
    out = sine_transform(psi, axes=axes)
    for ax, ph in zip(axes, phases_per_axis):
        shape = [1] * psi.ndim
        shape[ax] = -1
        out = out * ph.reshape(shape)
    return sine_transform(out, axes=axes)


def single_particle_eigenstates(
    grid: Grid, mass: float, potential: np.ndarray, count: int | None = None
):
    """Lowest eigenpairs of T/2m + diag(potential) on the grid.

    Returns (energies, orbitals) with orbitals of shape (count, M) normalized
    to sum |phi|^2 dx = 1 and a deterministic sign convention (largest
    amplitude positive).
    """
    h = kinetic_matrix(grid, mass).matrix + np.diag(potential)
    w, vecs = np.linalg.eigh(h)
    if count is not None:
        w, vecs = w[:count], vecs[:, :count]
    orbitals = vecs.T / np.sqrt(grid.dx)
    for phi in orbitals:
        if phi[np.argmax(np.abs(phi))] < 0:
            phi *= -1.0
    return w, orbitals


def trap_eigenstates(grid: Grid, mass: float, omega: float, count: int):
    """Lowest harmonic-trap eigenstates for the given mass."""
    v = 0.5 * mass * omega**2 * grid.x**2
    return single_particle_eigenstates(grid, mass, v, count)
