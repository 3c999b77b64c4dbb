"""
Periodic-box fields
===================

Discretization of R^3 vector fields on the periodic box [-L/2, L/2)^3,
spectral transforms, Leray projection and the Navier-Stokes rescaling.

Normalization: the forward transform is unnormalized and the inverse divides
by n^3, so Parseval reads  sum |f|^2 dx^3 = sum |f_hat|^2 dx^3 / n^3.

Derivative wavenumbers have the Nyquist entry set to zero (odd-derivative
convention). The projector uses the same wavenumbers, so a projected field is
divergence free exactly in the discrete sense. Modes whose derivative
wavevector vanishes (the mean and pure-Nyquist modes) pass through unchanged.
"""

import json
import logging
import math
from functools import cached_property
from pathlib import Path
from typing import Tuple

import numpy as np
import scipy.fft as sfft
from pydantic import BaseModel, ConfigDict, field_validator, model_validator

from .errors import InvalidInputError
from .reports import atomic_write_bytes, atomic_write_text
from .settings import fft_workers

logger = logging.getLogger(__name__)

SNAPSHOT_SCHEMA_VERSION = 1

# =============================================================================
# GRID
# =============================================================================


class Grid(BaseModel):
    """Uniform periodic grid with n points per axis on a box of side L."""

    model_config = ConfigDict(frozen=True, ignored_types=(cached_property,))

    n: int
    L: float = 2 * math.pi

    @field_validator("n")
    @classmethod
    def _check_n(cls, n: int) -> int:
        if n < 8:
            raise ValueError(f"n must be >= 8 (got {n})")
        if n % 2:
            raise ValueError(f"n must be even (got {n})")
        if n & (n - 1):
            raise ValueError(f"n must be a power of two (got {n})")
        return n

    @field_validator("L")
    @classmethod
    def _check_L(cls, L: float) -> float:
        if not math.isfinite(L) or L <= 0:
            raise ValueError(f"L must be positive and finite (got {L})")
        return L

    @property
    def dx(self) -> float:
        return self.L / self.n

    @property
    def cell_volume(self) -> float:
        return self.dx**3

    @property
    def measure(self) -> float:
        return self.L**3

    @property
    def shape(self) -> Tuple[int, int, int]:
        return (self.n, self.n, self.n)

    @cached_property
    def coords(self) -> np.ndarray:
        """Cell coordinates along one axis, -L/2 + i dx."""
        return -0.5 * self.L + self.dx * np.arange(self.n)

    @cached_property
    def mesh(self) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        x = self.coords
        return (x[:, None, None], x[None, :, None], x[None, None, :])

    @cached_property
    def radius(self) -> np.ndarray:
        X, Y, Z = self.mesh
        return np.sqrt(X**2 + Y**2 + Z**2)

    @cached_property
    def wavenumbers(self) -> np.ndarray:
        """Interpolation wavenumbers 2 pi m / L, m in fftfreq order."""
        return 2 * np.pi * sfft.fftfreq(self.n, d=self.dx)

    @cached_property
    def derivative_wavenumbers(self) -> np.ndarray:
        k = self.wavenumbers.copy()
        k[self.n // 2] = 0.0
        return k

    @cached_property
    def kvec(self) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        k = self.derivative_wavenumbers
        return (k[:, None, None], k[None, :, None], k[None, None, :])

    @cached_property
    def k2(self) -> np.ndarray:
        kx, ky, kz = self.kvec
        return kx**2 + ky**2 + kz**2

    @cached_property
    def k2_safe(self) -> np.ndarray:
        k2 = self.k2.copy()
        k2[k2 == 0] = 1.0
        return k2

    @cached_property
    def dealias_mask(self) -> np.ndarray:
        """2/3 rule: keep |m| < n/3 on every axis."""
        m = np.abs(sfft.fftfreq(self.n, d=1.0 / self.n))
        keep = m < self.n / 3.0
        return keep[:, None, None] & keep[None, :, None] & keep[None, None, :]

    @cached_property
    def nyquist_free_mask(self) -> np.ndarray:
        keep = np.ones(self.n, dtype=bool)
        keep[self.n // 2] = False
        return keep[:, None, None] & keep[None, :, None] & keep[None, None, :]


# =============================================================================
# FIELD TYPES
# =============================================================================


def _frozen_array(value, shape, dtype) -> np.ndarray:
    arr = np.ascontiguousarray(value, dtype=dtype)
    if arr.shape != shape:
        raise ValueError(f"expected array of shape {shape}, got {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError("field samples must be finite (found NaN/Inf)")
    arr.flags.writeable = False
    return arr


class GridField(BaseModel):
    """Real 3-component field sampled on a Grid, data[c, ix, iy, iz]."""

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    grid: Grid
    data: np.ndarray

    @model_validator(mode="after")
    def _check_data(self):
        object.__setattr__(self, "data", _frozen_array(self.data, (3,) + self.grid.shape, np.float64))
        return self

    @classmethod
    def zeros(cls, grid: Grid) -> "GridField":
        return cls(grid=grid, data=np.zeros((3,) + grid.shape))

    @classmethod
    def from_components(cls, grid: Grid, components) -> "GridField":
        comps = [np.broadcast_to(np.asarray(c, dtype=np.float64), grid.shape) for c in components]
        return cls(grid=grid, data=np.stack(comps))

    def magnitude(self) -> np.ndarray:
        return np.sqrt(np.sum(self.data**2, axis=0))

    def sup_norm(self) -> float:
        return float(self.magnitude().max())

    def __add__(self, other: "GridField") -> "GridField":
        _check_same_grid(self, other)
        return GridField(grid=self.grid, data=self.data + other.data)

    def __sub__(self, other: "GridField") -> "GridField":
        _check_same_grid(self, other)
        return GridField(grid=self.grid, data=self.data - other.data)

    def scale(self, c: float) -> "GridField":
        return GridField(grid=self.grid, data=c * self.data)


class ScalarField(BaseModel):
    """Real scalar field on a Grid (pressures and test-function slices)."""

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    grid: Grid
    samples: np.ndarray

    @model_validator(mode="after")
    def _check_samples(self):
        object.__setattr__(self, "samples", _frozen_array(self.samples, self.grid.shape, np.float64))
        return self

    def magnitude(self) -> np.ndarray:
        return np.abs(self.samples)

    def sup_norm(self) -> float:
        return float(self.magnitude().max())


class SpectralField(BaseModel):
    """Fourier coefficients of a GridField in fftfreq order."""

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    grid: Grid
    coefficients: np.ndarray

    @model_validator(mode="after")
    def _check_coefficients(self):
        object.__setattr__(
            self, "coefficients", _frozen_array(self.coefficients, (3,) + self.grid.shape, np.complex128)
        )
        return self

    def hermitian_defect(self) -> float:
        """max |c(-k) - conj(c(k))|, zero for a real field."""
        c = self.coefficients
        mirrored = np.roll(np.flip(c, axis=(1, 2, 3)), shift=1, axis=(1, 2, 3))
        return float(np.max(np.abs(mirrored - np.conj(c))))


def _check_same_grid(a, b) -> None:
    if a.grid != b.grid:
        raise InvalidInputError(f"grid mismatch: {a.grid} vs {b.grid}")


def require_finite(f) -> None:
    values = f.data if isinstance(f, GridField) else f.samples
    if not np.all(np.isfinite(values)):
        raise InvalidInputError("field contains non-finite samples")


# =============================================================================
# TRANSFORMS
# =============================================================================

_AXES = (-3, -2, -1)


def fft3(a: np.ndarray) -> np.ndarray:
    return sfft.fftn(a, axes=_AXES, workers=fft_workers())


def ifft3(a: np.ndarray) -> np.ndarray:
    """Inverse transform, real part (inputs are Hermitian)."""
    return sfft.ifftn(a, axes=_AXES, workers=fft_workers()).real


def to_spectral(f: GridField) -> SpectralField:
    return SpectralField(grid=f.grid, coefficients=fft3(f.data))


def to_physical(s: SpectralField) -> GridField:
    return GridField(grid=s.grid, data=ifft3(s.coefficients))


def project_hat(grid: Grid, fhat: np.ndarray) -> np.ndarray:
    """Apply I - k k^T / |k|^2 to spectral vector data of shape (3, n, n, n)."""
    kx, ky, kz = grid.kvec
    kdot = (kx * fhat[0] + ky * fhat[1] + kz * fhat[2]) / grid.k2_safe
    return np.stack([fhat[0] - kx * kdot, fhat[1] - ky * kdot, fhat[2] - kz * kdot])


def divergence_hat(grid: Grid, fhat: np.ndarray) -> np.ndarray:
    kx, ky, kz = grid.kvec
    return 1j * (kx * fhat[0] + ky * fhat[1] + kz * fhat[2])


def tensor_divergence_hat(grid: Grid, Fhat: np.ndarray) -> np.ndarray:
    """(div F)_i = d_j F_ij for spectral tensor data of shape (3, 3, n, n, n)."""
    kx, ky, kz = grid.kvec
    return np.stack([1j * (kx * Fhat[i, 0] + ky * Fhat[i, 1] + kz * Fhat[i, 2]) for i in range(3)])


def filter_mean_and_nyquist(f: GridField) -> GridField:
    fhat = fft3(f.data) * f.grid.nyquist_free_mask
    fhat[:, 0, 0, 0] = 0.0
    return GridField(grid=f.grid, data=ifft3(fhat))


# =============================================================================
# OPERATIONS
# =============================================================================


def leray_project(f: GridField) -> GridField:
    """Project onto divergence-free fields; the mean mode passes through."""
    require_finite(f)
    return GridField(grid=f.grid, data=ifft3(project_hat(f.grid, fft3(f.data))))


def divergence(f: GridField) -> ScalarField:
    return ScalarField(grid=f.grid, samples=ifft3(divergence_hat(f.grid, fft3(f.data))))


def divergence_sup(f: GridField) -> float:
    """Largest pointwise magnitude of the spectral divergence."""
    require_finite(f)
    return float(np.max(np.abs(divergence(f).samples)))


def gradient(p: ScalarField) -> GridField:
    phat = fft3(p.samples)
    kx, ky, kz = p.grid.kvec
    return GridField(grid=p.grid, data=ifft3(np.stack([1j * kx * phat, 1j * ky * phat, 1j * kz * phat])))


def vector_gradient(f: GridField) -> np.ndarray:
    """Array G[i, j] = d_j f_i of shape (3, 3, n, n, n)."""
    fhat = fft3(f.data)
    kx, ky, kz = f.grid.kvec
    return np.stack([ifft3(np.stack([1j * kx * fhat[i], 1j * ky * fhat[i], 1j * kz * fhat[i]])) for i in range(3)])


def laplacian(f: GridField) -> GridField:
    return GridField(grid=f.grid, data=ifft3(-f.grid.k2 * fft3(f.data)))


def curl(f: GridField) -> GridField:
    fhat = fft3(f.data)
    kx, ky, kz = f.grid.kvec
    cx = 1j * (ky * fhat[2] - kz * fhat[1])
    cy = 1j * (kz * fhat[0] - kx * fhat[2])
    cz = 1j * (kx * fhat[1] - ky * fhat[0])
    return GridField(grid=f.grid, data=ifft3(np.stack([cx, cy, cz])))


def dealias(f: GridField) -> GridField:
    return GridField(grid=f.grid, data=ifft3(fft3(f.data) * f.grid.dealias_mask))


def lebesgue_norm(f, s: float, mask: np.ndarray | None = None) -> float:
    """Grid L_s quadrature of |f|; s = inf gives the sup norm."""
    mag = f.magnitude() if hasattr(f, "magnitude") else np.abs(np.asarray(f))
    if mask is not None:
        mag = mag[mask]
    if mag.size == 0:
        return 0.0
    if math.isinf(s):
        return float(mag.max())
    grid = f.grid
    return float((np.sum(mag**s) * grid.cell_volume) ** (1.0 / s))


def l2_inner(f: GridField, g: GridField) -> float:
    _check_same_grid(f, g)
    return float(np.sum(f.data * g.data) * f.grid.cell_volume)


def spectral_l2_squared(s: SpectralField) -> float:
    """Parseval partner of lebesgue_norm(f, 2)**2."""
    n3 = s.grid.n**3
    return float(np.sum(np.abs(s.coefficients) ** 2) * s.grid.cell_volume / n3)


def _interpolation_matrix(grid: Grid, points: np.ndarray) -> np.ndarray:
    shift = np.asarray(points, dtype=np.float64) + 0.5 * grid.L
    return np.exp(1j * np.outer(shift, grid.wavenumbers)) / grid.n


def interpolate_samples(grid: Grid, samples: np.ndarray, points: np.ndarray) -> np.ndarray:
    """Trigonometric interpolant of samples[..., n, n, n] on the tensor grid points^3.

    The real part is taken, which averages the two foldings of the Nyquist modes.
    """
    E = _interpolation_matrix(grid, points)
    flat = np.asarray(samples).reshape((-1,) + grid.shape)
    out = []
    for comp in fft3(flat):
        t = np.tensordot(E, comp, axes=([1], [0]))
        t = np.tensordot(t, E, axes=([1], [1]))
        t = np.tensordot(t, E, axes=([1], [1]))
        out.append(t.real)
    m = len(points)
    return np.stack(out).reshape(np.shape(samples)[:-3] + (m, m, m))


def evaluate_tensor_grid(f: GridField, points: np.ndarray) -> np.ndarray:
    """Trigonometric interpolant of f on the tensor grid points^3, shape (3, m, m, m)."""
    return interpolate_samples(f.grid, f.data, points)


def refine_samples(grid: Grid, samples: np.ndarray, factor: int = 2) -> Tuple[Grid, np.ndarray]:
    """Resample samples[..., n, n, n] onto the grid with factor * n points per axis."""
    fine = Grid(n=factor * grid.n, L=grid.L)
    return fine, interpolate_samples(grid, samples, fine.coords)


def spectral_tail_fraction(f: GridField, cutoff: float) -> float:
    """Share of ||f||_2^2 carried by modes with some |m_i| >= cutoff."""
    power = np.sum(np.abs(fft3(f.data)) ** 2, axis=0)
    total = float(np.sum(power))
    if total == 0.0:
        return 0.0
    m = np.abs(sfft.fftfreq(f.grid.n, d=1.0 / f.grid.n))
    low = m < cutoff
    keep = low[:, None, None] & low[None, :, None] & low[None, None, :]
    return float(np.sum(power[~keep])) / total


def ns_rescale(f: GridField, lam: float, rtol: float = 1e-8) -> GridField:
    """x -> lam * f(lam x), by trigonometric interpolation.

    lam <= 1 samples inside the box and is always accepted. lam > 1 reads f
    outside the box, where f is taken to vanish: the box faces must carry at
    most rtol * sup|f| and the modes with some |m_i| >= n / (2 lam), which
    the compression pushes past the Nyquist limit, at most rtol of ||f||_2^2.
    Otherwise InvalidInputError.
    """
    require_finite(f)
    if not (lam > 0 and math.isfinite(lam)):
        raise InvalidInputError(f"lambda must be positive (got {lam})")
    if lam == 1.0:
        return GridField(grid=f.grid, data=f.data.copy())
    if lam < 1.0:
        return GridField(grid=f.grid, data=lam * evaluate_tensor_grid(f, lam * f.grid.coords))
    peak = f.sup_norm()
    if peak == 0.0:
        return GridField.zeros(f.grid)
    mag = f.magnitude()
    face = max(float(mag[0].max()), float(mag[:, 0].max()), float(mag[:, :, 0].max()))
    if face > rtol * peak:
        raise InvalidInputError(
            f"lambda={lam}: f does not vanish on the box faces (|f| up to {face:.3g} there), "
            "so lam*x would read unknown values outside the box"
        )
    tail = spectral_tail_fraction(f, f.grid.n / (2.0 * lam))
    if tail > rtol:
        raise InvalidInputError(
            f"lambda={lam}: {tail:.3g} of the energy sits at |m| >= n/(2 lam) and is lost by the compression"
        )
    points = lam * f.grid.coords
    inside = np.abs(points) < 0.5 * f.grid.L
    values = np.zeros((3,) + f.grid.shape)
    sub = evaluate_tensor_grid(f, points[inside])
    values[np.ix_([0, 1, 2], inside, inside, inside)] = sub
    return GridField(grid=f.grid, data=lam * values)


# =============================================================================
# SNAPSHOTS
# =============================================================================


def save_snapshot(f: GridField, stem: Path) -> Tuple[Path, Path]:
    """Write <stem>.json header + <stem>.bin payload (x-fastest, f64-le)."""
    stem = Path(stem)
    header = {
        "schema_version": SNAPSHOT_SCHEMA_VERSION,
        "n": f.grid.n,
        "L": f.grid.L,
        "components": 3,
        "dtype": "f64-le",
        "layout": "x-fastest",
        "normalization": "forward-unnormalized",
    }
    payload = np.ascontiguousarray(f.data.transpose(0, 3, 2, 1)).astype("<f8").tobytes()
    bin_path = stem.with_suffix(".bin")
    json_path = stem.with_suffix(".json")
    atomic_write_bytes(bin_path, payload)
    atomic_write_text(json_path, json.dumps(header, sort_keys=True, indent=2))
    return json_path, bin_path


def load_snapshot(stem: Path) -> GridField:
    stem = Path(stem)
    header = json.loads(stem.with_suffix(".json").read_text())
    if header.get("schema_version") != SNAPSHOT_SCHEMA_VERSION or header.get("dtype") != "f64-le":
        raise InvalidInputError(f"unsupported snapshot header: {header}")
    grid = Grid(n=header["n"], L=header["L"])
    raw = np.frombuffer(stem.with_suffix(".bin").read_bytes(), dtype="<f8")
    if raw.size != 3 * grid.n**3:
        raise InvalidInputError(f"snapshot payload has {raw.size} values, expected {3 * grid.n ** 3}")
    data = raw.reshape(3, grid.n, grid.n, grid.n).transpose(0, 3, 2, 1).astype(np.float64)
    return GridField(grid=grid, data=data)
