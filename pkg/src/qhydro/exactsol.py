"""Exact viscous states from a Poisson equation for the phase.

Given an entropy profile S, the compensation condition

    (1/m) grad U + (eta/rho) lap v = 0,   v = grad(Iact) / m,

integrates (for eta/rho = C3 constant) to U + C3 lap(Iact) = C0, and with
U = -(hbar^2 / 2m) [(grad S)^2 + lap S] this is a Poisson equation

    C3 lap(Iact) = C0 + (hbar^2 / 2m) K,   K = (grad S)^2 + lap S.

On a periodic box the right-hand side must have zero mean, which fixes C0.
The constructed state is the ground truth for the viscosity fit.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ValidationError
from .fields import (
    DEFAULT_EPSILON_NODE,
    Constants,
    Grid,
    gradient,
    laplacian,
    masked_max,
    masked_mean,
)
from .madelung import PhaseField, decompose
from .schrodinger import WaveField

VISCOSITY_MODELS = ("proportional", "uniform")
SOLVABILITY_TOLERANCE = 1e-10
SCALE_FLOOR = 1e-10


@dataclass(frozen=True)
class Mode:
    """One Fourier mode a * cos(2 pi k.x / L + phase) with integer k."""

    amplitude: float
    k: tuple[int, ...]
    phase: float = 0.0

    def evaluate(self, grid: Grid) -> np.ndarray:
        arg = sum(2 * np.pi * kk * x / L for kk, x, L in zip(self.k, grid.mesh, grid.extent))
        return self.amplitude * np.cos(arg + self.phase)

    def to_dict(self) -> dict:
        return {"amplitude": self.amplitude, "k": list(self.k), "phase": self.phase}


def mode_profile(grid: Grid, modes, offset: float = 0.0) -> np.ndarray:
    """offset + sum of cosine modes; integer wavenumbers keep S periodic and band-limited."""
    S = np.full(grid.shape, float(offset))
    for md in modes:
        if isinstance(md, dict):
            md = Mode(float(md["amplitude"]), tuple(int(k) for k in md["k"]), float(md.get("phase", 0.0)))
        if len(md.k) != grid.dim:
            raise ValidationError("mode wavevector has wrong dimension")
        S += md.evaluate(grid)
    return S


def random_profile(grid: Grid, n_modes: int, amplitude: float, k_max: int, seed: int) -> tuple[np.ndarray, list[Mode]]:
    """Seeded random sum of low modes; the total amplitude is bounded by ``amplitude``."""
    if n_modes < 1 or k_max < 1:
        raise ValidationError("need n_modes >= 1 and k_max >= 1")
    rng = np.random.default_rng(seed)
    modes = []
    for _ in range(n_modes):
        k = tuple(int(v) for v in rng.integers(-k_max, k_max + 1, size=grid.dim))
        if not any(k):
            k = (1,) + (0,) * (grid.dim - 1)
        a = amplitude * float(rng.uniform(0.2, 1.0)) / n_modes
        modes.append(Mode(a, k, float(rng.uniform(0, 2 * np.pi))))
    return mode_profile(grid, modes), modes


def curvature_density(S: np.ndarray, grid: Grid) -> np.ndarray:
    """(grad S)^2 + lap S, computed spectrally."""
    S = np.asarray(S, dtype=float)
    if not np.all(np.isfinite(S)):
        raise ValidationError("S must be finite")
    g = gradient(S, grid)
    return np.sum(g * g, axis=0) + laplacian(S, grid)


@dataclass
class ViscousStateSpec:
    """Input of the construction.

    ``C0`` is the integration constant: ``"auto"`` picks the unique value that
    makes the periodic Poisson problem solvable; a number is checked against
    that requirement.  ``model`` chooses eta/rho = eta_in / rho_mean
    (``proportional``, exact) or eta/rho = eta_in / rho(x) (``uniform``).
    """

    S_profile: np.ndarray = field(repr=False)
    grid: Grid
    eta_in: float
    constants: Constants = field(default_factory=Constants)
    C0: float | str = "auto"
    model: str = "proportional"

    def __post_init__(self):
        self.S_profile = np.asarray(self.S_profile, dtype=float)
        if self.S_profile.shape != self.grid.shape:
            raise ValidationError("S profile does not match grid")
        if not self.eta_in > 0:
            raise ValidationError("eta_in must be positive")
        if self.model not in VISCOSITY_MODELS:
            raise ValidationError(f"unknown viscosity model {self.model!r}")
        if not (self.C0 == "auto" or isinstance(self.C0, (int, float))):
            raise ValidationError("C0 must be a number or 'auto'")


def spec_from_factor(S_profile, grid: Grid, factor: float, constants: Constants | None = None, **kw) -> ViscousStateSpec:
    """Spec with eta_in = factor * hbar * rho_mean / m.

    For fixed S and dimensionless factor the phase Iact / hbar does not depend
    on hbar, so the family is self-similar and eta scales as hbar.
    """
    c = constants or Constants()
    rho_bar = c.mass * c.psi0_amplitude(grid.dim) ** 2 * float(np.mean(np.exp(2 * np.asarray(S_profile))))
    return ViscousStateSpec(S_profile, grid, factor * c.hbar * rho_bar / c.mass, c, **kw)


@dataclass
class ConstructedState:
    wavefunction: WaveField
    phase: PhaseField
    action: np.ndarray = field(repr=False)
    C0: float = 0.0
    source_mean: float = 0.0
    spec: ViscousStateSpec | None = field(default=None, repr=False)


def construct_viscous_state(spec: ViscousStateSpec) -> ConstructedState:
    """Solve the phase Poisson equation spectrally and assemble psi = psi0 exp(S + i Iact / hbar)."""
    c, grid, S = spec.constants, spec.grid, spec.S_profile
    K = curvature_density(S, grid)
    psi0 = c.psi0_amplitude(grid.dim)
    rho = c.mass * psi0 ** 2 * np.exp(2 * S)
    rho_bar = float(np.mean(rho))
    U_part = c.hbar ** 2 / (2 * c.mass) * K  # equals -U
    if spec.model == "proportional":
        # C3 lap(Iact) = C0 + U_part
        weight = np.ones(grid.shape)
        C3 = spec.eta_in / rho_bar
    else:
        # (eta_in / rho) lap(Iact) = C0 + U_part
        weight = rho / rho_bar
        C3 = spec.eta_in / rho_bar
    auto_C0 = -float(np.mean(weight * U_part) / np.mean(weight))
    if spec.C0 == "auto":
        C0 = auto_C0
    else:
        C0 = float(spec.C0)
        scale = max(float(np.max(np.abs(U_part))), c.hbar ** 2 / (2 * c.mass * c.l ** 2))
        if abs(C0 - auto_C0) > SOLVABILITY_TOLERANCE * scale:
            raise ValidationError(f"incompatible S profile: Poisson source mean {np.mean(weight * (C0 + U_part)):.3g} is not zero")
    source = weight * (C0 + U_part) / C3
    source_mean = float(np.mean(source))
    F = np.fft.fftn(source - source_mean)
    k2 = grid.k_squared
    F[k2 == 0] = 0.0
    with np.errstate(divide="ignore", invalid="ignore"):
        F = np.where(k2 > 0, -F / k2, 0.0)
    action = np.fft.ifftn(F).real
    phase = action / c.hbar
    psi = psi0 * np.exp(S + 1j * phase)
    wf = WaveField(psi, grid, c)
    pf = PhaseField(phase, 0.0, tuple(int(i) for i in np.unravel_index(int(np.argmax(S)), grid.shape)), grid)
    return ConstructedState(wf, pf, action, C0, source_mean, spec)


@dataclass(frozen=True)
class CompensationReport:
    differential: float
    integrated: float
    C0: float
    fallback_scale: bool

    @property
    def worst(self) -> float:
        return max(self.differential, self.integrated)

    def to_dict(self) -> dict:
        return {"differential": self.differential, "integrated": self.integrated, "C0": self.C0, "fallback_scale": self.fallback_scale}


def verify_compensation(psi: WaveField, eta: float, model: str = "proportional", epsilon_node: float = DEFAULT_EPSILON_NODE) -> CompensationReport:
    """Masked max discrepancy of the differential and integrated compensation conditions.

    The differential form is normalised by max|(1/m) grad U|, the integrated
    form (with C0 the mask mean) by max|U|.  When U vanishes (below 1e-10 of the natural scale) both are
    normalised by hbar^2 / (2 m l^2) and its gradient scale, and the
    ``fallback_scale`` flag is set.
    """
    if model not in VISCOSITY_MODELS:
        raise ValidationError(f"unknown viscosity model {model!r}")
    f = decompose(psi, epsilon_node)
    c, mask = f.constants, f.mask
    if model == "proportional":
        nu = eta / masked_mean(f.rho, mask)
    else:
        with np.errstate(divide="ignore"):
            nu = eta / f.rho
    force = f.grad_U / c.mass
    diff = force + nu * f.laplacian_v
    lap_action = c.hbar * f.jet.laplacian_L().imag
    integ = f.U + nu * lap_action
    C0 = masked_mean(integ, mask)
    natural = c.hbar ** 2 / (2 * c.mass * c.l ** 2)
    U_scale = masked_max(f.U, mask)
    F_scale = masked_max(force, mask)
    # U at roundoff level counts as vanishing
    fallback = not (U_scale > SCALE_FLOOR * natural and F_scale > SCALE_FLOOR * natural / (c.mass * c.l))
    if fallback:
        U_scale = natural
        F_scale = natural / (c.mass * c.l)
    return CompensationReport(
        float(masked_max(diff, mask) / F_scale),
        float(masked_max(integ - C0, mask) / U_scale),
        float(C0),
        fallback,
    )
