"""Navier-Stokes diagnostics of the quantum probability fluid.

Residuals of the Euler-form momentum equation and of its viscous counterpart,
a least-squares viscosity fit of the compensation condition

    (1/m) grad U + (eta/rho) lap v = 0,

entropy density, eta/s, the entropy rate and the Boltzmann time.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ValidationError
from .fields import (
    DEFAULT_EPSILON_NODE,
    Grid,
    Mask,
    integrate,
    masked_mean,
    masked_rms,
    node_mask,
    spectral_derivative,
)
from .madelung import LogJet, MadelungFields, decompose, quantum_potential
from .schrodinger import Trajectory, WaveField, central_difference_indices

DEGENERACY_TOLERANCE = 1e-6
FORCE_FLOOR = 1e-10
NODE_GUARD = 1.0
FIT_MODELS = ("proportional", "uniform")
FIT_WEIGHTS = ("density", "flat")


def _velocity(psi: np.ndarray, traj: Trajectory) -> np.ndarray:
    c = traj.constants
    return c.hbar / c.mass * LogJet(psi, traj.grid).first.imag


@dataclass
class _Window:
    """Central snapshot of a three-point stencil with its time derivative of v."""

    time: float
    fields: MadelungFields
    dvdt: np.ndarray
    mask: Mask


def _windows(traj: Trajectory, epsilon_node: float):
    delta = traj.snapshot_dt
    grid = traj.grid
    for i in central_difference_indices(traj):
        f = decompose(traj.snapshot(i), epsilon_node)
        with np.errstate(invalid="ignore", divide="ignore", over="ignore"):
            dvdt = (_velocity(traj.psi[i + 1], traj) - _velocity(traj.psi[i - 1], traj)) / (2 * delta)
        mask = f.mask & node_mask(traj.psi[i - 1], grid, epsilon_node) & node_mask(traj.psi[i + 1], grid, epsilon_node)
        yield _Window(float(traj.times[i]), f, dvdt, mask)


def _reduce(values, how: str) -> float:
    values = np.asarray(values)
    if how == "max":
        return float(np.max(values))
    if how == "rms":
        return float(np.sqrt(np.mean(values ** 2)))
    raise ValidationError(f"unknown reduction {how!r}")


def euler_residual_series(traj: Trajectory, epsilon_node: float = DEFAULT_EPSILON_NODE, include_quantum: bool = True):
    """Masked RMS of dv/dt + (v.grad)v + (1/m) grad U + (1/m) grad V per interior snapshot.

    With ``include_quantum=False`` the grad U term is dropped (the inviscid,
    classical-force-only residual).
    """
    m = traj.constants.mass
    gradV = traj.potential.gradient
    times, values = [], []
    for w in _windows(traj, epsilon_node):
        r = w.dvdt + w.fields.convective + gradV / m
        if include_quantum:
            r = r + w.fields.grad_U / m
        values.append(masked_rms(r, w.mask))
        times.append(w.time)
    return np.array(times), np.array(values)


def euler_residual(traj: Trajectory, epsilon_node: float = DEFAULT_EPSILON_NODE, reduce: str = "max") -> float:
    return _reduce(euler_residual_series(traj, epsilon_node)[1], reduce)


def _kinematic_viscosity(fields: MadelungFields, eta: float, model: str):
    """eta / rho under the chosen viscosity model."""
    if model == "proportional":
        return eta / masked_mean(fields.rho, fields.mask)
    if model == "uniform":
        with np.errstate(divide="ignore"):
            return eta / fields.rho
    raise ValidationError(f"unknown viscosity model {model!r}; expected one of {FIT_MODELS}")


def ns_residual_series(traj: Trajectory, eta: float, epsilon_node: float = DEFAULT_EPSILON_NODE, model: str = "proportional"):
    """Masked RMS of dv/dt + (v.grad)v - (eta/rho) lap v + (1/m) grad V.

    The pressure term uses (1/rho) grad p = (1/m) grad V.
    """
    m = traj.constants.mass
    gradV = traj.potential.gradient
    times, values = [], []
    for w in _windows(traj, epsilon_node):
        nu = _kinematic_viscosity(w.fields, eta, model)
        r = w.dvdt + w.fields.convective - nu * w.fields.laplacian_v + gradV / m
        values.append(masked_rms(r, w.mask))
        times.append(w.time)
    return np.array(times), np.array(values)


def ns_residual(traj: Trajectory, eta: float, epsilon_node: float = DEFAULT_EPSILON_NODE, model: str = "proportional", reduce: str = "max") -> float:
    return _reduce(ns_residual_series(traj, eta, epsilon_node, model)[1], reduce)


def ns_residual_instant(fields: MadelungFields, eta: float, model: str = "proportional") -> float:
    """Viscous residual of a single snapshot with dv/dt eliminated through the Euler identity.

    For a Schroedinger state dv/dt + (v.grad)v + (1/m) grad V = -(1/m) grad U,
    so the viscous residual reduces to -[(1/m) grad U + (eta/rho) lap v].
    """
    _require_mask(fields.mask)
    nu = _kinematic_viscosity(fields, eta, model)
    r = fields.grad_U / fields.constants.mass + nu * fields.laplacian_v
    return masked_rms(r, fields.mask)


def _require_mask(mask: Mask):
    if mask.count == 0:
        raise ValidationError("empty mask")


@dataclass
class ViscosityFit:
    """Scalar least-squares viscosity of the compensation condition."""

    eta: float
    residual_ratio: float
    degenerate: bool
    C3: float
    f: float
    model: str
    a_norm: float
    b_norm: float
    local_eta: np.ndarray | None = field(default=None, repr=False)

    @property
    def negative(self) -> bool:
        return (not self.degenerate) and self.eta < 0

    def to_dict(self) -> dict:
        return {
            "eta": self.eta, "residual_ratio": self.residual_ratio, "degenerate": self.degenerate,
            "C3": self.C3, "f": self.f, "model": self.model, "negative": self.negative,
        }


def fit_viscosity(
    fields,
    model: str = "proportional",
    weight: str = "density",
    node_guard: float = NODE_GUARD,
    degeneracy_tolerance: float = DEGENERACY_TOLERANCE,
) -> ViscosityFit:
    """Fit eta in (1/m) grad U + eta * b = 0 over the mask(s).

    ``model="proportional"`` takes eta(x) = eta * rho(x) / rho_mean, i.e.
    b = lap v / rho_mean, so the fitted eta is the mask-mean viscosity and
    C3 = eta / rho_mean is the density-proportionality constant.
    ``model="uniform"`` takes a spatially constant eta with b = lap v / rho.

    ``weight="density"`` minimises the rho-weighted norm (the force-density
    balance), which keeps ill-conditioned samples next to nodes from
    dominating; ``weight="flat"`` gives every mask point equal weight.

    Samples whose distance to a node, estimated as |psi| / |grad psi|, is
    below ``node_guard`` grid spacings are left out: there the third-order
    log-derivatives amplify roundoff by (h / distance)^3.  0 keeps every
    mask point.

    ``fields`` may be one snapshot or a sequence of snapshots (pooled sums).
    The fit is degenerate when the quantum force vanishes, or when the
    viscous term at the natural viscosity scale hbar |psi0|^2 is below
    ``degeneracy_tolerance`` times the quantum force; eta is then 0.
    """
    if model not in FIT_MODELS:
        raise ValidationError(f"unknown viscosity model {model!r}")
    if weight not in FIT_WEIGHTS:
        raise ValidationError(f"unknown fit weight {weight!r}")
    snaps = [fields] if isinstance(fields, MadelungFields) else list(fields)
    if not snaps:
        raise ValidationError("need at least one snapshot")
    c = snaps[0].constants
    aa = ab = bb = total = 0.0
    rho_means = []
    local = None
    for f in snaps:
        _require_mask(f.mask)
        m = f.mask.active
        rho_bar = masked_mean(f.rho, f.mask)
        rho_means.append(rho_bar)
        a = f.grad_U[:, m] / c.mass
        lap_v = f.laplacian_v[:, m]
        b = lap_v / rho_bar if model == "proportional" else lap_v / f.rho[m]
        w = f.rho[m] / rho_bar if weight == "density" else np.ones(lap_v.shape[1])
        ok = np.all(np.isfinite(a), axis=0) & np.all(np.isfinite(b), axis=0)
        if node_guard > 0:
            inv_dist = np.sqrt(np.sum(np.abs(f.jet.first[:, m]) ** 2, axis=0))
            ok &= inv_dist * min(f.grid.spacing) * node_guard < 1.0
        a, b, w = a[:, ok], b[:, ok], w[ok]
        aa += float(np.sum(w * a * a))
        ab += float(np.sum(w * a * b))
        bb += float(np.sum(w * b * b))
        total += float(np.sum(w))
        if local is None:
            bu = f.laplacian_v / f.rho
            au = f.grad_U / c.mass
            with np.errstate(divide="ignore", invalid="ignore"):
                local = -np.sum(au * bu, axis=0) / np.sum(bu * bu, axis=0)
            local[~m] = np.nan
    a_norm, b_norm = np.sqrt(aa / total), np.sqrt(bb / total)
    dim = snaps[0].grid.dim
    eta_scale = c.hbar * c.psi0_amplitude(dim) ** 2
    force_scale = c.hbar ** 2 / (c.mass ** 2 * c.l ** 3)
    rho_bar = float(np.mean(rho_means))
    no_force = a_norm <= FORCE_FLOOR * force_scale
    if no_force or eta_scale * b_norm <= degeneracy_tolerance * a_norm:
        return ViscosityFit(0.0, 0.0 if no_force else 1.0, True, 0.0, 0.0, model, float(a_norm), float(b_norm), local)
    eta = -ab / bb
    resid_sq = max(aa + 2 * eta * ab + eta ** 2 * bb, 0.0)
    ratio = float(np.sqrt(resid_sq / aa))
    C3 = eta / rho_bar
    return ViscosityFit(float(eta), ratio, False, float(C3), float(C3 * c.mass / c.hbar), model, float(a_norm), float(b_norm), local)


def viscous_force_gap(v: np.ndarray, grid: Grid, eta: float, zeta: float, mask: Mask | None = None) -> float:
    """Spectral check that div(sigma') equals (zeta + 4 eta / 3) lap v.

    sigma'_ik = eta (d_k v_i + d_i v_k - 2/3 delta_ik div v) + zeta delta_ik div v.
    Returns the masked max gap relative to the larger of the two force norms
    (0 when both vanish).
    """
    d = grid.dim
    if v.shape != (d,) + grid.shape:
        raise ValidationError("velocity field shape does not match grid")
    D = np.empty((d, d) + grid.shape)  # D[i, k] = d_k v_i
    for i in range(d):
        for k in range(d):
            o = [0] * d
            o[k] = 1
            D[i, k] = spectral_derivative(v[i], grid, o)
    div = sum(D[i, i] for i in range(d))
    force = np.zeros((d,) + grid.shape)
    for i in range(d):
        for k in range(d):
            sigma_ik = eta * (D[i, k] + D[k, i]) + (zeta - 2.0 * eta / 3.0) * div * (i == k)
            o = [0] * d
            o[k] = 1
            force[i] += spectral_derivative(sigma_ik, grid, o)
    eta_prime = zeta + 4.0 * eta / 3.0
    lap_v = np.stack([sum(spectral_derivative(v[i], grid, [2 if a == b else 0 for b in range(d)]) for a in range(d)) for i in range(d)])
    reduced = eta_prime * lap_v
    mask = mask or Mask.full(grid)
    gap = np.sqrt(np.sum((force - reduced) ** 2, axis=0))[mask.active]
    scale = max(np.sqrt(np.sum(force ** 2, axis=0))[mask.active].max(), np.sqrt(np.sum(reduced ** 2, axis=0))[mask.active].max())
    if scale == 0.0:
        return 0.0
    return float(gap.max() / scale)


def stress_tensor_check(fields, eta: float = 1.0, zeta: float = 0.0, grid: Grid | None = None) -> float:
    """Gap between the divergence of the viscous stress tensor and eta' lap v.

    Accepts a MadelungFields (velocity from the state, derivatives from the log
    jet on the mask) or a raw velocity array together with ``grid``.
    """
    if isinstance(fields, MadelungFields):
        f = fields
        d = f.grid.dim
        # d_k d_j v_i from the jet, kept per index order so the reduction is
        # tested rather than assumed
        c = f.constants
        def dd(i, j, k):
            return c.hbar / c.mass * f.jet.L3(i, j, k).imag
        force = np.zeros((d,) + f.grid.shape)
        for i in range(d):
            for k in range(d):
                force[i] += eta * (dd(i, k, k) + dd(k, i, k))
                if i == k:
                    force[i] += (zeta - 2.0 * eta / 3.0) * sum(dd(l, l, k) for l in range(d))
        reduced = (zeta + 4.0 * eta / 3.0) * f.laplacian_v
        m = f.mask.active
        gap = np.sqrt(np.sum((force - reduced) ** 2, axis=0))[m]
        scale = max(np.nanmax(np.sqrt(np.sum(force ** 2, axis=0))[m]), np.nanmax(np.sqrt(np.sum(reduced ** 2, axis=0))[m]))
        if not scale > 0:
            return 0.0
        return float(np.nanmax(gap) / scale)
    if grid is None:
        raise ValidationError("grid is required for a raw velocity field")
    return viscous_force_gap(np.asarray(fields, dtype=float), grid, eta, zeta)


@dataclass
class ThermoDiagnostics:
    s_field: np.ndarray | None = field(default=None, repr=False)
    s_total: float | None = None
    volume: float | None = None
    eta_over_s: float | None = None
    kss_ratio: float | None = None
    kss_satisfied: bool | None = None
    ratio_defined: bool | None = None
    tau_B: float | None = None
    temperature: float | None = None
    dsdt_norm: float | None = None
    heat_rhs_norm: float | None = None

    def to_dict(self) -> dict:
        out = {}
        for k, v in self.__dict__.items():
            if k == "s_field":
                continue
            out[k] = v
        return out


ENTROPY_WEIGHTS = ("probability", "fiducial")


def entropy_field(fields: MadelungFields, weight: str = "probability") -> np.ndarray:
    """Entropy per volume; 0 off the mask (its limit at the nodes).

    ``probability``: s = |psi|^2 * 2 k_B S.  ``fiducial``: s = |psi0|^2 * 2 k_B S.
    """
    c = fields.constants
    m = fields.mask.active
    s = np.zeros(fields.grid.shape)
    if weight == "probability":
        w = np.abs(fields.psi[m]) ** 2
    elif weight == "fiducial":
        w = fields.psi0 ** 2
    else:
        raise ValidationError(f"unknown entropy weight {weight!r}")
    s[m] = w * 2 * c.k_B * fields.S[m]
    return s


def entropy_density(fields: MadelungFields, weight: str = "probability") -> ThermoDiagnostics:
    s = entropy_field(fields, weight)
    return ThermoDiagnostics(s_field=s, s_total=integrate(s, fields.grid), volume=fields.grid.volume)


@dataclass(frozen=True)
class EtaOverS:
    value: float
    kss_ratio: float
    defined: bool
    kss_satisfied: bool | None


def eta_over_s(fit: ViscosityFit, thermo: ThermoDiagnostics, hbar: float, k_B: float) -> EtaOverS:
    """eta / (|s_total| / volume) and its ratio to hbar / (4 pi k_B); reported, not enforced."""
    if fit.degenerate or not thermo.s_total:
        return EtaOverS(float("nan"), float("nan"), False, None)
    ratio = fit.eta / (abs(thermo.s_total) / thermo.volume)
    kss = ratio * 4 * np.pi * k_B / hbar
    thermo.eta_over_s = float(ratio)
    thermo.kss_ratio = float(kss)
    thermo.kss_satisfied = bool(kss >= 1.0)
    thermo.ratio_defined = True
    return EtaOverS(float(ratio), float(kss), True, bool(kss >= 1.0))


@dataclass
class EntropyRate:
    times: np.ndarray
    dsdt: np.ndarray
    heat_rhs: np.ndarray
    heat_rhs_gap: np.ndarray

    @property
    def dsdt_norm(self) -> float:
        return float(np.max(self.dsdt))

    @property
    def heat_rhs_norm(self) -> float:
        return float(np.max(self.heat_rhs))


def entropy_rate(traj: Trajectory, epsilon_node: float = DEFAULT_EPSILON_NODE, weight: str = "probability") -> EntropyRate:
    """Material derivative of s and the conduction term (kappa/rho) lap T / T with T = T0 A.

    ``heat_rhs_gap`` compares the entropy-form curvature with lap A / A taken
    through the density (the pointwise T = T0 A check).
    """
    c = traj.constants
    delta = traj.snapshot_dt
    times, dsdt, heat, gaps = [], [], [], []
    for i in central_difference_indices(traj):
        f = decompose(traj.snapshot(i), epsilon_node)
        prev = decompose(traj.snapshot(i - 1), epsilon_node)
        nxt = decompose(traj.snapshot(i + 1), epsilon_node)
        mask = f.mask & prev.mask & nxt.mask
        ds = (entropy_field(nxt, weight) - entropy_field(prev, weight)) / (2 * delta)
        if weight == "probability":
            # grad(|psi|^2 2 k_B S) = 2 k_B |psi|^2 grad S (2 S + 1)
            grad_s = 2 * c.k_B * np.abs(f.psi) ** 2 * f.grad_S * (2 * f.S + 1)
        else:
            grad_s = 2 * c.k_B * f.psi0 ** 2 * f.grad_S
        material = ds + np.sum(f.v * grad_s, axis=0)
        lapA_over_A = f.curvature
        with np.errstate(divide="ignore"):
            rhs = c.kappa / f.rho * lapA_over_A
        qp = quantum_potential(f, tolerance=np.inf)
        lapA_density = -2 * c.mass / c.hbar ** 2 * qp.U_amplitude_form
        dsdt.append(masked_rms(material, mask))
        heat.append(masked_rms(rhs, mask))
        gaps.append(masked_rms(lapA_over_A - lapA_density, mask))
        times.append(float(traj.times[i]))
    return EntropyRate(np.array(times), np.array(dsdt), np.array(heat), np.array(gaps))


@dataclass(frozen=True)
class BoltzmannTime:
    tau_B: float
    temperature: float
    amplitude: float


def boltzmann_time(psi_eq: WaveField, epsilon_node: float = DEFAULT_EPSILON_NODE) -> BoltzmannTime:
    """tau_B = hbar / (k_B T) with T = T0 * RMS(A) over the mask of the equilibrium state."""
    c = psi_eq.constants
    mask = node_mask(psi_eq.psi, psi_eq.grid, epsilon_node)
    A = np.abs(psi_eq.psi[mask.active]) / c.psi0_amplitude(psi_eq.grid.dim)
    A_bar = float(np.sqrt(np.mean(A ** 2)))
    if A_bar == 0.0:
        raise ValidationError("equilibrium amplitude vanishes")
    T = c.T0 * A_bar
    return BoltzmannTime(c.hbar / (c.k_B * T), T, A_bar)
