"""Periodic grids, physical constants, spectral differential operators and node masks.

Fields are plain numpy arrays whose trailing axes match ``Grid.shape``.  A vector
field carries its components on a leading axis of length ``grid.dim``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .errors import NullStateError, ValidationError

DEFAULT_EPSILON_NODE = 1e-6


@dataclass(frozen=True)
class Grid:
    """Uniform periodic grid in 1, 2 or 3 dimensions.

    ``origin`` is the coordinate of the first sample along each axis; by default
    the box is centred on zero, i.e. ``x in [-L/2, L/2)``.
    """

    shape: tuple[int, ...]
    extent: tuple[float, ...]
    origin: tuple[float, ...] | None = None

    def __post_init__(self):
        shape = tuple(int(n) for n in np.atleast_1d(self.shape))
        extent = tuple(float(L) for L in np.atleast_1d(self.extent))
        if len(shape) not in (1, 2, 3):
            raise ValidationError(f"grid dimension must be 1, 2 or 3, got {len(shape)}")
        if len(extent) != len(shape):
            raise ValidationError("extent and shape must have the same length")
        if any(n < 2 for n in shape):
            raise ValidationError("need at least 2 points per axis")
        if any(not np.isfinite(L) or L <= 0 for L in extent):
            raise ValidationError("grid extents must be positive and finite")
        if self.origin is None:
            origin = tuple(-L / 2 for L in extent)
        else:
            origin = tuple(float(o) for o in np.atleast_1d(self.origin))
            if len(origin) != len(shape):
                raise ValidationError("origin and shape must have the same length")
        object.__setattr__(self, "shape", shape)
        object.__setattr__(self, "extent", extent)
        object.__setattr__(self, "origin", origin)

    @classmethod
    def cube(cls, dim: int, n: int, length: float, origin=None) -> "Grid":
        o = None if origin is None else (origin,) * dim
        return cls((n,) * dim, (length,) * dim, o)

    @property
    def dim(self) -> int:
        return len(self.shape)

    @property
    def spacing(self) -> tuple[float, ...]:
        return tuple(L / n for L, n in zip(self.extent, self.shape))

    @property
    def size(self) -> int:
        return int(np.prod(self.shape))

    @property
    def cell_volume(self) -> float:
        return float(np.prod(self.spacing))

    @property
    def volume(self) -> float:
        return float(np.prod(self.extent))

    @cached_property
    def axes(self) -> tuple[np.ndarray, ...]:
        return tuple(o + h * np.arange(n) for o, h, n in zip(self.origin, self.spacing, self.shape))

    @cached_property
    def mesh(self) -> tuple[np.ndarray, ...]:
        return tuple(np.meshgrid(*self.axes, indexing="ij"))

    @cached_property
    def wavenumbers(self) -> tuple[np.ndarray, ...]:
        """Angular wavenumbers per axis, broadcastable against the grid shape."""
        out = []
        for a, (n, h) in enumerate(zip(self.shape, self.spacing)):
            k = 2 * np.pi * np.fft.fftfreq(n, d=h)
            bshape = [1] * self.dim
            bshape[a] = n
            out.append(k.reshape(bshape))
        return tuple(out)

    @cached_property
    def derivative_wavenumbers(self) -> tuple[np.ndarray, ...]:
        # Nyquist mode dropped so that every derivative order is a power of one
        # real-symmetric multiplier; keeps laplacian == divergence(gradient) exact.
        out = []
        for k, n in zip(self.wavenumbers, self.shape):
            k = k.copy()
            if n % 2 == 0:
                k.reshape(-1)[n // 2] = 0.0
            out.append(k)
        return tuple(out)

    @cached_property
    def k_squared(self) -> np.ndarray:
        """Full |k|^2 including the Nyquist mode (kinetic propagator)."""
        return sum(k ** 2 for k in self.wavenumbers)

    def index_of(self, point) -> tuple[int, ...]:
        """Nearest grid index to a physical point (with periodic wrapping)."""
        point = np.atleast_1d(point).astype(float)
        if point.size != self.dim:
            raise ValidationError("point dimension does not match grid")
        idx = []
        for p, o, h, n in zip(point, self.origin, self.spacing, self.shape):
            idx.append(int(np.round((p - o) / h)) % n)
        return tuple(idx)

    def to_dict(self) -> dict:
        return {"shape": list(self.shape), "extent": list(self.extent), "origin": list(self.origin)}

    @classmethod
    def from_dict(cls, d: dict) -> "Grid":
        return cls(tuple(d["shape"]), tuple(d["extent"]), tuple(d["origin"]) if d.get("origin") is not None else None)


@dataclass(frozen=True)
class Constants:
    """Physical constants of a run; natural units (all 1) by default.

    ``l`` is the fiducial length scale.  The zero-entropy reference amplitude in
    ``d`` dimensions is ``|psi0| = l**(-d/2)``.
    """

    hbar: float = 1.0
    mass: float = 1.0
    k_B: float = 1.0
    l: float = 1.0
    T0: float = 1.0
    kappa: float = 1.0

    def __post_init__(self):
        for name in ("hbar", "mass", "k_B", "l", "T0", "kappa"):
            val = getattr(self, name)
            if not np.isfinite(val) or val <= 0:
                raise ValidationError(f"constant {name} must be strictly positive, got {val}")

    def psi0_amplitude(self, dim: int) -> float:
        return float(self.l ** (-dim / 2.0))

    def replace(self, **kw) -> "Constants":
        d = self.to_dict()
        d.update(kw)
        return Constants(**d)

    def to_dict(self) -> dict:
        return {k: float(getattr(self, k)) for k in ("hbar", "mass", "k_B", "l", "T0", "kappa")}


@dataclass(frozen=True)
class Mask:
    grid: Grid
    active: np.ndarray = field(repr=False)

    @property
    def fraction_active(self) -> float:
        return float(np.count_nonzero(self.active)) / self.active.size

    @property
    def count(self) -> int:
        return int(np.count_nonzero(self.active))

    def __and__(self, other: "Mask") -> "Mask":
        return Mask(self.grid, self.active & other.active)

    @classmethod
    def full(cls, grid: Grid) -> "Mask":
        return cls(grid, np.ones(grid.shape, dtype=bool))


def _check_shape(f: np.ndarray, grid: Grid, vector: bool = False):
    expected = ((grid.dim,) + grid.shape) if vector else grid.shape
    if f.shape != expected:
        raise ValidationError(f"field shape {f.shape} does not match grid {expected}")
    if not np.all(np.isfinite(f)):
        raise ValidationError("field contains non-finite values")


def _fft(f: np.ndarray) -> np.ndarray:
    return np.fft.fftn(f)


def _ifft(F: np.ndarray, real: bool) -> np.ndarray:
    out = np.fft.ifftn(F)
    return out.real if real else out


def spectral_derivative(f: np.ndarray, grid: Grid, orders) -> np.ndarray:
    """Partial derivative of ``f`` with per-axis derivative ``orders``."""
    _check_shape(f, grid)
    return derivative_from_fft(_fft(f), grid, orders, real=not np.iscomplexobj(f))


def derivative_from_fft(F: np.ndarray, grid: Grid, orders, real: bool = False) -> np.ndarray:
    mult = 1.0
    for k, o in zip(grid.derivative_wavenumbers, orders):
        if o:
            mult = mult * (1j * k) ** o
    return _ifft(F * mult, real)


def gradient(f: np.ndarray, grid: Grid) -> np.ndarray:
    """Spectral gradient; returns an array of shape ``(dim, *grid.shape)``."""
    _check_shape(f, grid)
    F = _fft(f)
    real = not np.iscomplexobj(f)
    return np.stack([_ifft(F * (1j * k), real) for k in grid.derivative_wavenumbers])


def divergence(v: np.ndarray, grid: Grid) -> np.ndarray:
    _check_shape(v, grid, vector=True)
    real = not np.iscomplexobj(v)
    F = sum(_fft(v[a]) * (1j * k) for a, k in enumerate(grid.derivative_wavenumbers))
    return _ifft(F, real)


def laplacian(f: np.ndarray, grid: Grid) -> np.ndarray:
    _check_shape(f, grid)
    k2 = sum(k ** 2 for k in grid.derivative_wavenumbers)
    return _ifft(-k2 * _fft(f), not np.iscomplexobj(f))


def vector_laplacian(v: np.ndarray, grid: Grid) -> np.ndarray:
    return np.stack([laplacian(v[a], grid) for a in range(grid.dim)])


def curl_components(v: np.ndarray, grid: Grid) -> np.ndarray:
    """Antisymmetrised derivatives d_i v_j - d_j v_i for all i < j."""
    _check_shape(v, grid, vector=True)
    d = grid.dim
    if d == 1:
        return np.zeros((0,) + grid.shape)
    comps = []
    for i in range(d):
        for j in range(i + 1, d):
            oi = [0] * d
            oj = [0] * d
            oi[i] = 1
            oj[j] = 1
            comps.append(spectral_derivative(v[j], grid, oi) - spectral_derivative(v[i], grid, oj))
    return np.stack(comps)


def node_mask(psi: np.ndarray, grid: Grid, epsilon_node: float = DEFAULT_EPSILON_NODE) -> Mask:
    """Points where ``|psi|^2 >= epsilon_node * max|psi|^2``."""
    if not 0.0 < epsilon_node < 1.0:
        raise ValidationError("epsilon_node must lie in (0, 1)")
    if psi.shape != grid.shape:
        raise ValidationError("psi shape does not match grid")
    dens = np.abs(psi) ** 2
    peak = dens.max()
    if not np.isfinite(peak):
        raise ValidationError("psi contains non-finite values")
    if peak == 0.0:
        raise NullStateError()
    return Mask(grid, dens >= epsilon_node * peak)


def _pointwise_magnitude(values: np.ndarray, grid: Grid) -> np.ndarray:
    values = np.asarray(values)
    if values.shape == grid.shape:
        return np.abs(values)
    if values.shape[1:] == grid.shape:
        return np.sqrt(np.sum(np.abs(values) ** 2, axis=0))
    raise ValidationError(f"values of shape {values.shape} incompatible with grid {grid.shape}")


def masked_rms(values: np.ndarray, mask: Mask) -> float:
    """Root-mean-square of the pointwise magnitude over active points."""
    if mask.count == 0:
        raise ValidationError("empty mask")
    mag = _pointwise_magnitude(values, mask.grid)[mask.active]
    return float(np.sqrt(np.mean(mag ** 2)))


def masked_max(values: np.ndarray, mask: Mask) -> float:
    if mask.count == 0:
        raise ValidationError("empty mask")
    return float(np.max(_pointwise_magnitude(values, mask.grid)[mask.active]))


def masked_mean(values: np.ndarray, mask: Mask) -> float:
    if mask.count == 0:
        raise ValidationError("empty mask")
    return float(np.mean(np.asarray(values)[mask.active]))


def integrate(values: np.ndarray, grid: Grid) -> float:
    """Riemann sum over the periodic box (spectrally accurate for smooth fields)."""
    return float(np.sum(values) * grid.cell_volume)
