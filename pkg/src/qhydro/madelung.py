"""Madelung decomposition psi = psi0 * exp(S + i*Iact/hbar) and the fluid fields.

All spatial derivatives of S and of the phase are taken pointwise from the
spectral derivatives of psi itself, through the logarithmic derivatives of
L = log(psi):

    L_i   = psi_i / psi
    L_ij  = psi_ij / psi - L_i L_j
    L_ijk = psi_ijk / psi - L_ij L_k - L_ik L_j - L_jk L_i - L_i L_j L_k

so Re L gives derivatives of S and Im L derivatives of the dimensionless phase
without ever unwrapping arg(psi) or differentiating a field that is singular at
the nodes.  Off-mask samples are NaN.
"""
from __future__ import annotations

import itertools
import warnings
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from . import kernels
from .errors import PhaseNotSingleValued, ValidationError
from .fields import (
    DEFAULT_EPSILON_NODE,
    Constants,
    Grid,
    Mask,
    derivative_from_fft,
    masked_max,
    masked_rms,
    node_mask,
)
from .schrodinger import Trajectory, WaveField, central_difference_indices

FORMS_TOLERANCE = 1e-6
SCALE_FLOOR = 1e-10


def _orders(index: tuple[int, ...], dim: int) -> list[int]:
    o = [0] * dim
    for a in index:
        o[a] += 1
    return o


class LogJet:
    """Derivatives of log(psi) up to third order on a grid."""

    def __init__(self, psi: np.ndarray, grid: Grid):
        self.grid = grid
        self.psi = psi
        self._F = np.fft.fftn(psi)
        with np.errstate(divide="ignore", invalid="ignore"):
            self._inv = 1.0 / psi

    def _d(self, index) -> np.ndarray:
        return derivative_from_fft(self._F, self.grid, _orders(index, self.grid.dim))

    @cached_property
    def first(self) -> np.ndarray:
        with np.errstate(invalid="ignore", over="ignore"):
            return np.stack([self._d((i,)) * self._inv for i in range(self.grid.dim)])

    @cached_property
    def second(self) -> dict:
        L1 = self.first
        out = {}
        with np.errstate(invalid="ignore", over="ignore"):
            for i, j in itertools.combinations_with_replacement(range(self.grid.dim), 2):
                out[(i, j)] = self._d((i, j)) * self._inv - L1[i] * L1[j]
        return out

    @cached_property
    def third(self) -> dict:
        L1, L2 = self.first, self.second
        out = {}
        with np.errstate(invalid="ignore", over="ignore"):
            for i, j, k in itertools.combinations_with_replacement(range(self.grid.dim), 3):
                out[(i, j, k)] = (
                    self._d((i, j, k)) * self._inv
                    - L2[(i, j)] * L1[k] - L2[(i, k)] * L1[j] - L2[(j, k)] * L1[i]
                    - L1[i] * L1[j] * L1[k]
                )
        return out

    def L2(self, i, j):
        return self.second[tuple(sorted((i, j)))]

    def L3(self, i, j, k):
        return self.third[tuple(sorted((i, j, k)))]

    def laplacian_L(self) -> np.ndarray:
        return sum(self.L2(i, i) for i in range(self.grid.dim))

    def grad_laplacian_L(self) -> np.ndarray:
        d = self.grid.dim
        return np.stack([sum(self.L3(i, i, k) for i in range(d)) for k in range(d)])


def _masked(values: np.ndarray, mask: Mask) -> np.ndarray:
    out = np.array(values, dtype=float, copy=True)
    out[..., ~mask.active] = np.nan
    return out


@dataclass
class MadelungFields:
    """Hydrodynamic fields of one snapshot; NaN off the node mask.

    S is the dimensionless entropy ln|psi/psi0|, A = exp(S), grad_action the
    gradient of the action phase, v = grad_action / m, U the quantum potential
    and rho = m |psi|^2 the mass density (defined everywhere).
    """

    grid: Grid
    constants: Constants
    psi: np.ndarray = field(repr=False)
    mask: Mask = field(repr=False)
    S: np.ndarray = field(repr=False)
    A: np.ndarray = field(repr=False)
    grad_action: np.ndarray = field(repr=False)
    v: np.ndarray = field(repr=False)
    U: np.ndarray = field(repr=False)
    rho: np.ndarray = field(repr=False)
    jet: LogJet = field(repr=False)
    time: float = 0.0
    forms_discrepancy: float = 0.0

    @property
    def psi0(self) -> float:
        return self.constants.psi0_amplitude(self.grid.dim)

    @cached_property
    def grad_S(self) -> np.ndarray:
        return _masked(self.jet.first.real, self.mask)

    @cached_property
    def grad_phase(self) -> np.ndarray:
        """Gradient of the dimensionless phase I = Iact / hbar."""
        return _masked(self.jet.first.imag, self.mask)

    @cached_property
    def laplacian_S(self) -> np.ndarray:
        return _masked(self.jet.laplacian_L().real, self.mask)

    @cached_property
    def curvature(self) -> np.ndarray:
        """(grad S)^2 + lap S."""
        return np.sum(self.grad_S ** 2, axis=0) + self.laplacian_S

    @cached_property
    def laplacian_action(self) -> np.ndarray:
        return self.constants.hbar * _masked(self.jet.laplacian_L().imag, self.mask)

    @cached_property
    def velocity_gradient(self) -> np.ndarray:
        """``out[i, j] = d_j v_i``."""
        d = self.grid.dim
        c = self.constants
        arr = np.stack([np.stack([self.jet.L2(i, j).imag for j in range(d)]) for i in range(d)])
        return _masked(c.hbar / c.mass * arr, self.mask)

    @cached_property
    def laplacian_v(self) -> np.ndarray:
        c = self.constants
        return _masked(c.hbar / c.mass * self.jet.grad_laplacian_L().imag, self.mask)

    @cached_property
    def grad_U(self) -> np.ndarray:
        c, d = self.constants, self.grid.dim
        gS = self.jet.first.real
        lap_grad = self.jet.grad_laplacian_L().real
        with np.errstate(invalid="ignore", over="ignore"):
            grad_sq = np.stack([sum(2 * gS[i] * self.jet.L2(i, k).real for i in range(d)) for k in range(d)])
            out = -c.hbar ** 2 / (2 * c.mass) * (grad_sq + lap_grad)
        return _masked(out, self.mask)

    @cached_property
    def convective(self) -> np.ndarray:
        """(v . grad) v."""
        d = self.grid.dim
        G = self.velocity_gradient
        return np.stack([sum(self.v[j] * G[i, j] for j in range(d)) for i in range(d)])


def _quantum_potential_density_route(psi: np.ndarray, grid: Grid, c: Constants, mask: Mask) -> np.ndarray:
    """-(hbar^2/2m) lap(A)/A evaluated through the smooth density n = |psi|^2."""
    n = np.abs(psi) ** 2
    F = np.fft.fftn(n)
    d = grid.dim
    lap = sum(derivative_from_fft(F, grid, _orders((a, a), d), real=True) for a in range(d))
    grad_sq = sum(derivative_from_fft(F, grid, _orders((a,), d), real=True) ** 2 for a in range(d))
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = lap / (2 * n) - grad_sq / (4 * n ** 2)
    return _masked(-c.hbar ** 2 / (2 * c.mass) * ratio, mask)


def decompose(wf: WaveField, epsilon_node: float = DEFAULT_EPSILON_NODE) -> MadelungFields:
    grid, c = wf.grid, wf.constants
    psi = wf.psi
    mask = node_mask(psi, grid, epsilon_node)
    jet = LogJet(psi, grid)
    psi0 = c.psi0_amplitude(grid.dim)
    with np.errstate(divide="ignore"):
        S = _masked(np.log(np.abs(psi)) - np.log(psi0), mask)
    A = np.exp(S)
    grad_action = c.hbar * _masked(jet.first.imag, mask)
    v = grad_action / c.mass
    gS = jet.first.real
    with np.errstate(over="ignore", invalid="ignore"):  # off-mask values are discarded
        K = np.sum(gS ** 2, axis=0) + jet.laplacian_L().real
    U = _masked(-c.hbar ** 2 / (2 * c.mass) * K, mask)
    rho = c.mass * np.abs(psi) ** 2
    fields = MadelungFields(grid, c, psi, mask, S, A, grad_action, v, U, rho, jet, wf.time)
    return fields


@dataclass(frozen=True)
class QuantumPotentialReport:
    U: np.ndarray = field(repr=False)
    U_amplitude_form: np.ndarray = field(repr=False)
    max_relative_discrepancy: float
    forms_agree: bool


def quantum_potential(fields: MadelungFields, tolerance: float = FORMS_TOLERANCE) -> QuantumPotentialReport:
    """Quantum potential by its entropy form and, independently, its amplitude form.

    The entropy form -(hbar^2/2m)[(grad S)^2 + lap S] comes from the log jet;
    the amplitude form -(hbar^2/2m) lap(A)/A is differentiated through the
    density.  A large discrepancy means the state is under-resolved.
    """
    c = fields.constants
    U_A = _quantum_potential_density_route(fields.psi, fields.grid, c, fields.mask)
    natural = c.hbar ** 2 / (2 * c.mass * c.l ** 2)
    scale = masked_max(fields.U, fields.mask)
    if scale <= SCALE_FLOOR * natural:  # U vanishes up to roundoff
        scale = natural
    disc = masked_max(fields.U - U_A, fields.mask) / scale
    agree = disc <= tolerance
    if not agree:
        warnings.warn(f"forms disagree: relative discrepancy {disc:.3g}", stacklevel=2)
    fields.forms_discrepancy = disc
    return QuantumPotentialReport(fields.U, U_A, float(disc), bool(agree))


@dataclass
class PhaseField:
    """Unwrapped dimensionless phase I = Iact / hbar (NaN off mask / unreachable)."""

    I: np.ndarray = field(repr=False)
    nonintegrability: float
    reference: tuple[int, ...]
    grid: Grid


def _integrate_along(psi, grad, mask, h, axis, ref_index, seed):
    # move the integration axis last and flatten the rest into lines
    P = np.moveaxis(psi, axis, -1)
    shape = P.shape
    n = shape[-1]
    lines = kernels.integrate_lines(
        P.reshape(-1, n),
        np.moveaxis(grad, axis, -1).reshape(-1, n),
        np.moveaxis(mask, axis, -1).reshape(-1, n),
        h,
        ref_index,
        seed.reshape(-1),
    )
    return np.moveaxis(lines.reshape(shape), -1, axis)


def _path_integrate(psi, grad_phase, mask, grid: Grid, ref, axis_order) -> np.ndarray:
    # Start with the single reference point, then sweep axis by axis: each
    # sweep extends the known set from a hyperplane to the next dimension.
    known = np.full(grid.shape, np.nan)
    known[ref] = 0.0
    g = np.nan_to_num(grad_phase)
    for axis in axis_order:
        seed = np.ascontiguousarray(np.take(known, ref[axis], axis=axis))
        known = _integrate_along(psi, g[axis], mask, grid.spacing[axis], axis, ref[axis], seed)
    return known


def unwrap_phase(wf: WaveField, reference=None, epsilon_node: float = DEFAULT_EPSILON_NODE) -> PhaseField:
    """Line-integrate the phase gradient along grid axes from ``reference``.

    ``reference`` is a grid index tuple (default: the density maximum).  The
    phase is integrated along two opposite axis orderings; their largest
    disagreement divided by 2 pi is the nonintegrability (1 per enclosed vortex).
    """
    grid = wf.grid
    mask = node_mask(wf.psi, grid, epsilon_node)
    if reference is None:
        reference = np.unravel_index(int(np.argmax(np.abs(wf.psi))), grid.shape)
    reference = tuple(int(r) for r in reference)
    if len(reference) != grid.dim:
        raise ValidationError("reference index has wrong dimension")
    if not mask.active[reference]:
        raise ValidationError("reference point lies off the node mask")
    jet = LogJet(wf.psi, grid)
    grad_phase = _masked(jet.first.imag, mask)
    order = list(range(grid.dim))
    I_fwd = _path_integrate(wf.psi, grad_phase, mask.active, grid, reference, order)
    if grid.dim == 1:
        return PhaseField(I_fwd, 0.0, reference, grid)
    I_rev = _path_integrate(wf.psi, grad_phase, mask.active, grid, reference, order[::-1])
    both = np.isfinite(I_fwd) & np.isfinite(I_rev)
    defect = float(np.max(np.abs(I_fwd[both] - I_rev[both]))) / (2 * np.pi) if np.any(both) else 0.0
    I = np.where(np.isfinite(I_fwd), I_fwd, I_rev)
    return PhaseField(I, defect, reference, grid)


def reconstruct(fields: MadelungFields, phase: PhaseField, tolerance: float = 1e-8) -> WaveField:
    """psi' = psi0 * exp(S) * exp(i I) on the mask, zero elsewhere."""
    if phase.nonintegrability >= tolerance:
        raise PhaseNotSingleValued()
    ok = fields.mask.active & np.isfinite(phase.I)
    psi = np.zeros(fields.grid.shape, dtype=complex)
    psi[ok] = fields.psi0 * np.exp(fields.S[ok] + 1j * phase.I[ok])
    return WaveField(psi, fields.grid, fields.constants, fields.time)


def roundtrip_error(original: WaveField, rebuilt: WaveField, mask: Mask) -> float:
    """Masked max deviation relative to max|psi|, after removing one global phase."""
    a = original.psi[mask.active]
    b = rebuilt.psi[mask.active]
    overlap = np.vdot(b, a)
    phase = overlap / abs(overlap) if abs(overlap) > 0 else 1.0
    return float(np.max(np.abs(b * phase - a)) / np.max(np.abs(original.psi)))


def born_boltzmann_gap(fields: MadelungFields) -> float:
    """max | ln|psi/psi0|^2 - 2 S | on the mask."""
    m = fields.mask.active
    two_s = np.log(np.abs(fields.psi[m] / fields.psi0) ** 2)
    return float(np.max(np.abs(two_s - 2 * fields.S[m])))


def curl_defect(fields: MadelungFields) -> float:
    """Masked max of the antisymmetric part of grad v."""
    G = fields.velocity_gradient
    d = fields.grid.dim
    if d == 1:
        return 0.0
    worst = 0.0
    for i in range(d):
        for j in range(i + 1, d):
            worst = max(worst, masked_max(G[i, j] - G[j, i], fields.mask))
    return worst


def snapshot_fields(traj: Trajectory, epsilon_node: float = DEFAULT_EPSILON_NODE) -> list[MadelungFields]:
    return [decompose(traj.snapshot(i), epsilon_node) for i in range(len(traj))]


def continuity_residual_series(traj: Trajectory, epsilon_node: float = DEFAULT_EPSILON_NODE):
    """dS/dt + (1/m) grad S . grad Iact + (1/2m) lap Iact per interior snapshot."""
    c = traj.constants
    delta = traj.snapshot_dt
    times, values = [], []
    for i in central_difference_indices(traj):
        f = decompose(traj.snapshot(i), epsilon_node)
        mask = f.mask & node_mask(traj.psi[i - 1], traj.grid, epsilon_node) & node_mask(traj.psi[i + 1], traj.grid, epsilon_node)
        with np.errstate(divide="ignore"):
            dS = (np.log(np.abs(traj.psi[i + 1])) - np.log(np.abs(traj.psi[i - 1]))) / (2 * delta)
        r = dS + np.sum(f.grad_S * f.grad_action, axis=0) / c.mass + f.laplacian_action / (2 * c.mass)
        values.append(masked_rms(r, mask))
        times.append(traj.times[i])
    return np.array(times), np.array(values)


def continuity_residual(traj: Trajectory, epsilon_node: float = DEFAULT_EPSILON_NODE) -> float:
    return float(np.max(continuity_residual_series(traj, epsilon_node)[1]))
