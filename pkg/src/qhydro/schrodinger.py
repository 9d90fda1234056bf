"""Reference states and Strang split-step evolution of the Schroedinger equation.

    i hbar dpsi/dt + (hbar^2 / 2m) lap psi - V psi = 0

on a periodic grid with a static potential.
"""
from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import fieldio
from .errors import DomainTooSmallError, EvolutionDiverged, ValidationError
from .fields import Constants, Grid, gradient, laplacian, masked_rms, node_mask

BOUNDARY_TOLERANCE = 1e-8


@dataclass(frozen=True)
class Potential:
    """Static external potential sampled on the grid (energy units)."""

    grid: Grid
    values: np.ndarray = field(repr=False)
    kind: str = "custom"
    params: dict = field(default_factory=dict)
    analytic_gradient: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        if self.values.shape != self.grid.shape:
            raise ValidationError("potential shape does not match grid")
        if not np.all(np.isfinite(self.values)):
            raise ValidationError("potential must be finite")

    @classmethod
    def free(cls, grid: Grid) -> "Potential":
        return cls(grid, np.zeros(grid.shape), "free", {}, np.zeros((grid.dim,) + grid.shape))

    @classmethod
    def harmonic(cls, grid: Grid, omega, constants: Constants, center=None) -> "Potential":
        omega = _per_axis(omega, grid.dim, "omega")
        if np.any(omega <= 0):
            raise ValidationError("omega must be positive")
        center = np.zeros(grid.dim) if center is None else _per_axis(center, grid.dim, "center")
        m = constants.mass
        disp = [X - c for X, c in zip(grid.mesh, center)]
        values = sum(0.5 * m * w ** 2 * d ** 2 for w, d in zip(omega, disp))
        grad = np.stack([m * w ** 2 * d for w, d in zip(omega, disp)])
        params = {"omega": omega.tolist(), "center": center.tolist()}
        return cls(grid, values, "harmonic", params, grad)

    @classmethod
    def custom(cls, grid: Grid, values: np.ndarray) -> "Potential":
        return cls(grid, np.asarray(values, dtype=float), "custom", {})

    @property
    def gradient(self) -> np.ndarray:
        # Wrapped harmonic wells have a derivative kink at the box edge; use the
        # closed form where it exists.
        if self.analytic_gradient is not None:
            return self.analytic_gradient
        return gradient(self.values, self.grid)

    def to_dict(self) -> dict:
        return {"kind": self.kind, **self.params}


@dataclass
class WaveField:
    psi: np.ndarray = field(repr=False)
    grid: Grid
    constants: Constants = field(default_factory=Constants)
    time: float = 0.0
    energy: float | None = None

    def __post_init__(self):
        self.psi = np.asarray(self.psi, dtype=complex)
        if self.psi.shape != self.grid.shape:
            raise ValidationError("psi shape does not match grid")
        if not np.all(np.isfinite(self.psi)):
            raise ValidationError("psi contains non-finite values")

    def norm(self) -> float:
        return float(np.sqrt(np.sum(np.abs(self.psi) ** 2) * self.grid.cell_volume))

    def normalized(self) -> "WaveField":
        n = self.norm()
        if n == 0:
            raise ValidationError("cannot normalise the zero state")
        return WaveField(self.psi / n, self.grid, self.constants, self.time, self.energy)

    def with_constants(self, constants: Constants) -> "WaveField":
        return WaveField(self.psi.copy(), self.grid, constants, self.time, self.energy)

    def density(self) -> np.ndarray:
        return np.abs(self.psi) ** 2

    def expectation_position(self) -> np.ndarray:
        dens = self.density()
        total = dens.sum()
        return np.array([np.sum(X * dens) / total for X in self.grid.mesh])

    def position_variance(self) -> np.ndarray:
        dens = self.density()
        total = dens.sum()
        mean = self.expectation_position()
        return np.array([np.sum((X - m) ** 2 * dens) / total for X, m in zip(self.grid.mesh, mean)])


def _per_axis(value, dim: int, name: str) -> np.ndarray:
    arr = np.atleast_1d(np.asarray(value, dtype=float))
    if arr.size == 1:
        arr = np.full(dim, float(arr[0]))
    if arr.size != dim:
        raise ValidationError(f"{name} needs {dim} components")
    return arr


def _check_support(psi: np.ndarray, grid: Grid):
    peak = np.abs(psi).max()
    for a in range(grid.dim):
        edge = max(np.abs(np.take(psi, 0, axis=a)).max(), np.abs(np.take(psi, -1, axis=a)).max())
        if edge > BOUNDARY_TOLERANCE * peak:
            raise DomainTooSmallError()


def _normalize(psi: np.ndarray, grid: Grid) -> np.ndarray:
    n = np.sqrt(np.sum(np.abs(psi) ** 2) * grid.cell_volume)
    if n == 0 or not np.isfinite(n):
        raise ValidationError("state has zero or non-finite norm")
    return psi / n


def hermite_function(n: int, xi: np.ndarray) -> np.ndarray:
    """Normalised Hermite function of order n (stable three-term recurrence)."""
    prev = np.zeros_like(xi)
    cur = np.pi ** -0.25 * np.exp(-0.5 * xi ** 2)
    for k in range(n):
        prev, cur = cur, np.sqrt(2.0 / (k + 1)) * xi * cur - np.sqrt(k / (k + 1)) * prev
    return cur


def harmonic_eigenstate(grid: Grid, n, omega, constants: Constants | None = None, center=None) -> WaveField:
    """Hermite-Gaussian eigenstate of the (anisotropic) harmonic oscillator."""
    constants = constants or Constants()
    n = np.atleast_1d(np.asarray(n, dtype=int))
    if n.size == 1:
        n = np.full(grid.dim, int(n[0]))
    if n.size != grid.dim or np.any(n < 0):
        raise ValidationError("quantum numbers must be non-negative, one per axis")
    omega = _per_axis(omega, grid.dim, "omega")
    if np.any(omega <= 0):
        raise ValidationError("omega must be positive")
    center = np.zeros(grid.dim) if center is None else _per_axis(center, grid.dim, "center")
    hbar, m = constants.hbar, constants.mass
    psi = np.ones(grid.shape, dtype=complex)
    for X, na, w, c in zip(grid.mesh, n, omega, center):
        scale = np.sqrt(m * w / hbar)
        psi = psi * hermite_function(int(na), scale * (X - c))
    _check_support(psi, grid)
    energy = float(np.sum(hbar * omega * (n + 0.5)))
    return WaveField(_normalize(psi, grid), grid, constants, 0.0, energy)


def plane_wave(grid: Grid, k, constants: Constants | None = None, amplitude: float | None = None) -> WaveField:
    """``exp(i k.x)``; every component of k must be a multiple of 2 pi / L.

    With ``amplitude=None`` the state is normalised to unit norm.
    """
    constants = constants or Constants()
    k = _per_axis(k, grid.dim, "k")
    modes = k * np.array(grid.extent) / (2 * np.pi)
    if np.any(np.abs(modes - np.round(modes)) > 1e-9 * np.maximum(1.0, np.abs(modes))):
        raise ValidationError("non-periodic mode")
    phase = sum(kk * (X - o) for kk, X, o in zip(k, grid.mesh, grid.origin))
    psi = np.exp(1j * phase)
    psi = _normalize(psi, grid) if amplitude is None else amplitude * psi
    energy = float(constants.hbar ** 2 * np.sum(k ** 2) / (2 * constants.mass))
    return WaveField(psi, grid, constants, 0.0, energy)


def gaussian_packet(grid: Grid, x0, p0, sigma, constants: Constants | None = None) -> WaveField:
    """Minimum-uncertainty packet with density ``exp(-(x-x0)^2 / (2 sigma^2))``."""
    constants = constants or Constants()
    x0 = _per_axis(x0, grid.dim, "x0")
    p0 = _per_axis(p0, grid.dim, "p0")
    sigma = _per_axis(sigma, grid.dim, "sigma")
    if np.any(sigma <= 0):
        raise ValidationError("sigma must be positive")
    log_psi = sum(
        -((X - c) ** 2) / (4 * s ** 2) + 1j * p * (X - c) / constants.hbar
        for X, c, p, s in zip(grid.mesh, x0, p0, sigma)
    )
    psi = np.exp(log_psi)
    _check_support(psi, grid)
    return WaveField(_normalize(psi, grid), grid, constants, 0.0)


def coherent_state(grid: Grid, x0, p0, omega, constants: Constants | None = None) -> WaveField:
    """Displaced ground state of the harmonic well with frequency ``omega``."""
    constants = constants or Constants()
    omega = _per_axis(omega, grid.dim, "omega")
    sigma = np.sqrt(constants.hbar / (2 * constants.mass * omega))
    return gaussian_packet(grid, x0, p0, sigma, constants)


def superpose(states, coefficients) -> WaveField:
    states = list(states)
    coefficients = np.asarray(coefficients, dtype=complex)
    if not states or len(states) != coefficients.size:
        raise ValidationError("need one coefficient per state")
    if np.all(coefficients == 0):
        raise ValidationError("coefficients are all zero")
    grid = states[0].grid
    for s in states[1:]:
        if s.grid != grid:
            raise ValidationError("states live on different grids")
    psi = sum(c * s.psi for c, s in zip(coefficients, states))
    return WaveField(_normalize(psi, grid), grid, states[0].constants, states[0].time)


def energy_expectation(wf: WaveField, potential: Potential) -> float:
    grid, c = wf.grid, wf.constants
    F = np.fft.fftn(wf.psi)
    # Parseval: sum |psi|^2 == sum |F|^2 / N
    kinetic = c.hbar ** 2 / (2 * c.mass) * np.sum(grid.k_squared * np.abs(F) ** 2) / grid.size
    pot = np.sum(potential.values * np.abs(wf.psi) ** 2)
    return float((kinetic + pot) / np.sum(np.abs(wf.psi) ** 2))


@dataclass
class Trajectory:
    """Snapshots of an evolution at a uniform stride of ``stride`` time steps."""

    psi: np.ndarray = field(repr=False)
    times: np.ndarray
    dt: float
    stride: int
    potential: Potential
    grid: Grid
    constants: Constants

    def __post_init__(self):
        if len(self.times) != len(self.psi):
            raise ValidationError("times and snapshots differ in length")
        if len(self.times) > 1 and np.any(np.diff(self.times) <= 0):
            raise ValidationError("snapshot times must be strictly increasing")

    def __len__(self) -> int:
        return len(self.times)

    @property
    def snapshot_dt(self) -> float:
        return self.dt * self.stride

    def snapshot(self, i: int) -> WaveField:
        return WaveField(self.psi[i], self.grid, self.constants, float(self.times[i]))

    def norms(self) -> np.ndarray:
        return np.sqrt(np.sum(np.abs(self.psi) ** 2, axis=tuple(range(1, self.psi.ndim))) * self.grid.cell_volume)

    def norm_drift(self) -> float:
        n = self.norms()
        return float(np.max(np.abs(n - n[0])) / n[0])

    def energies(self) -> np.ndarray:
        return np.array([energy_expectation(self.snapshot(i), self.potential) for i in range(len(self))])

    def export(self, directory) -> Path:
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        files = []
        for i in range(len(self)):
            stem = f"psi_{i:05d}"
            fieldio.write_field(directory / stem, self.psi[i], self.grid, "complex", {"time": float(self.times[i])})
            files.append(stem + ".json")
        fieldio.write_field(directory / "potential", self.potential.values, self.grid, "scalar")
        manifest = {
            "format_version": fieldio.FORMAT_VERSION,
            "times": [float(t) for t in self.times],
            "dt": self.dt,
            "stride": self.stride,
            "potential": self.potential.to_dict(),
            "constants": self.constants.to_dict(),
            "grid": self.grid.to_dict(),
            "snapshots": files,
            "potential_file": "potential.json",
        }
        path = directory / "manifest.json"
        path.write_text(json.dumps(manifest, indent=2, sort_keys=True))
        return path

    @classmethod
    def load(cls, directory) -> "Trajectory":
        directory = Path(directory)
        manifest = json.loads((directory / "manifest.json").read_text())
        grid = Grid.from_dict(manifest["grid"])
        constants = Constants(**manifest["constants"])
        psi = np.stack([fieldio.read_field(directory / f)[0] for f in manifest["snapshots"]])
        values = fieldio.read_field(directory / manifest["potential_file"])[0]
        pspec = dict(manifest["potential"])
        kind = pspec.pop("kind")
        if kind == "harmonic":
            pot = Potential.harmonic(grid, pspec["omega"], constants, pspec["center"])
        elif kind == "free":
            pot = Potential.free(grid)
        else:
            pot = Potential.custom(grid, values)
        return cls(psi, np.array(manifest["times"]), manifest["dt"], manifest["stride"], pot, grid, constants)


def default_stride(n_steps: int, max_snapshots: int = 200) -> int:
    return max(1, math.ceil(n_steps / (max_snapshots - 1)))


def evolve(psi0: WaveField, potential: Potential, dt: float, n_steps: int, stride: int | None = None) -> Trajectory:
    """Strang split-step propagation (half kick, exact kinetic step, half kick)."""
    if dt <= 0:
        raise ValidationError("dt must be positive")
    if n_steps < 1:
        raise ValidationError("n_steps must be at least 1")
    if potential.grid != psi0.grid:
        raise ValidationError("potential and state live on different grids")
    c = psi0.constants
    vmax = float(np.abs(potential.values).max())
    if dt * vmax / c.hbar >= 0.5:
        warnings.warn(f"dt*max|V|/hbar = {dt * vmax / c.hbar:.3g} exceeds 0.5; phase kicks are under-resolved", stacklevel=2)
    stride = default_stride(n_steps) if stride is None else int(stride)
    if stride < 1:
        raise ValidationError("stride must be >= 1")

    half_kick = np.exp(-0.5j * dt * potential.values / c.hbar)
    kinetic = np.exp(-0.5j * dt * c.hbar * psi0.grid.k_squared / c.mass)
    psi = psi0.psi.copy()
    snaps = [psi.copy()]
    times = [psi0.time]
    for step in range(1, n_steps + 1):
        psi = half_kick * np.fft.ifftn(kinetic * np.fft.fftn(half_kick * psi))
        if step % stride == 0:
            if not np.all(np.isfinite(psi)):
                raise EvolutionDiverged()
            snaps.append(psi.copy())
            times.append(psi0.time + step * dt)
    if not np.all(np.isfinite(psi)):
        raise EvolutionDiverged()
    return Trajectory(np.stack(snaps), np.array(times), dt, stride, potential, psi0.grid, c)


EXACT_MAX_POINTS = 4096
EVOLUTION_METHODS = ("split-step", "exact")


def hamiltonian_matrix(grid: Grid, potential: Potential, constants: Constants) -> np.ndarray:
    """Dense spectral Hamiltonian in the position basis (Hermitian)."""
    n = grid.size
    if n > EXACT_MAX_POINTS:
        raise ValidationError(f"exact propagation limited to {EXACT_MAX_POINTS} grid points")
    eye = np.eye(n).reshape((n,) + grid.shape)
    axes = tuple(range(1, grid.dim + 1))
    kin = np.fft.ifftn(grid.k_squared * np.fft.fftn(eye, axes=axes), axes=axes).reshape(n, n).T
    H = constants.hbar ** 2 / (2 * constants.mass) * kin + np.diag(potential.values.reshape(-1))
    return 0.5 * (H + H.conj().T)


def evolve_exact(psi0: WaveField, potential: Potential, dt: float, n_steps: int, stride: int | None = None) -> Trajectory:
    """Propagate by diagonalising the discrete Hamiltonian; no time-stepping error.

    Same snapshot layout as :func:`evolve`.  Each snapshot is computed
    independently from the eigenbasis, so roundoff does not accumulate.
    """
    if dt <= 0:
        raise ValidationError("dt must be positive")
    if n_steps < 1:
        raise ValidationError("n_steps must be at least 1")
    if potential.grid != psi0.grid:
        raise ValidationError("potential and state live on different grids")
    stride = default_stride(n_steps) if stride is None else int(stride)
    if stride < 1:
        raise ValidationError("stride must be >= 1")
    c, grid = psi0.constants, psi0.grid
    w, W = np.linalg.eigh(hamiltonian_matrix(grid, potential, c))
    coeff = W.conj().T @ psi0.psi.reshape(-1)
    steps = np.arange(0, n_steps + 1, stride)
    times = psi0.time + steps * dt
    snaps = np.stack([(W @ (np.exp(-1j * w * (t - psi0.time) / c.hbar) * coeff)).reshape(grid.shape) for t in times])
    if not np.all(np.isfinite(snaps)):
        raise EvolutionDiverged()
    return Trajectory(snaps, times, dt, stride, potential, grid, c)


def propagate(psi0: WaveField, potential: Potential, dt: float, n_steps: int, stride: int | None = None, method: str = "split-step") -> Trajectory:
    if method == "split-step":
        return evolve(psi0, potential, dt, n_steps, stride)
    if method == "exact":
        return evolve_exact(psi0, potential, dt, n_steps, stride)
    raise ValidationError(f"unknown evolution method {method!r}; expected one of {EVOLUTION_METHODS}")


def relax_ground_state(psi_guess: WaveField, potential: Potential, dtau: float, max_steps: int = 200_000, tol: float = 1e-12) -> WaveField:
    """Imaginary-time split-step (dt -> -i dtau) with renormalisation every step.

    Stops once the energy changes by less than ``tol`` between steps.
    """
    if dtau <= 0:
        raise ValidationError("dtau must be positive")
    c, grid = psi_guess.constants, psi_guess.grid
    half = np.exp(-0.5 * dtau * potential.values / c.hbar)
    kinetic = np.exp(-0.5 * dtau * c.hbar * grid.k_squared / c.mass)
    psi = _normalize(psi_guess.psi, grid)
    e_old = energy_expectation(WaveField(psi, grid, c), potential)
    for _ in range(max_steps):
        psi = half * np.fft.ifftn(kinetic * np.fft.fftn(half * psi))
        if not np.all(np.isfinite(psi)):
            raise EvolutionDiverged()
        psi = _normalize(psi, grid)
        e = energy_expectation(WaveField(psi, grid, c), potential)
        if abs(e - e_old) < tol:
            return WaveField(psi, grid, c, psi_guess.time, e)
        e_old = e
    raise EvolutionDiverged("imaginary-time relaxation did not converge")


def central_difference_indices(traj: Trajectory) -> range:
    if len(traj) < 3:
        raise ValidationError("need at least 3 snapshots for a central time difference")
    return range(1, len(traj) - 1)


def schrodinger_residual_series(traj: Trajectory, epsilon_node: float | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Per-snapshot masked residual of the Schroedinger equation, relative to hbar*|psi|."""
    from .fields import DEFAULT_EPSILON_NODE

    eps = DEFAULT_EPSILON_NODE if epsilon_node is None else epsilon_node
    c, grid = traj.constants, traj.grid
    h2m = c.hbar ** 2 / (2 * c.mass)
    delta = traj.snapshot_dt
    times, values = [], []
    for i in central_difference_indices(traj):
        psi = traj.psi[i]
        dpsi = (traj.psi[i + 1] - traj.psi[i - 1]) / (2 * delta)
        r = 1j * c.hbar * dpsi + h2m * laplacian(psi, grid) - traj.potential.values * psi
        mask = node_mask(psi, grid, eps)
        values.append(masked_rms(r, mask) / (c.hbar * masked_rms(psi, mask)))
        times.append(traj.times[i])
    return np.array(times), np.array(values)


def schrodinger_residual(traj: Trajectory, epsilon_node: float | None = None) -> float:
    return float(np.max(schrodinger_residual_series(traj, epsilon_node)[1]))
