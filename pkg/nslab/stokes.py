"""
Linear Stokes solves used by the iteration.

duhamel_solve integrates  d_t u - Laplacian u = g,  u(0) = 0,  g = P f  mode by
mode: the factor exp(-|k|^2 (t - s)) is integrated exactly and g is
interpolated linearly on each time interval, which is second order in the
step and unconditionally stable on any (uniform or geometric) time grid.

Sign conventions: a forcing tensor F enters as f = -div F with
(div F)_i = d_j F_ij; the nonlinear source of a and b is f = -(a . grad) b
written in conservative form -d_i (a_i b_j).
"""

import logging
import math
from typing import Dict, List, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from .errors import InvalidInputError, NumericalError
from .field import (
    Grid,
    GridField,
    ScalarField,
    fft3,
    ifft3,
    project_hat,
    tensor_divergence_hat,
)
from .timegrid import FieldTrace, TimeGrid

logger = logging.getLogger(__name__)

PRESSURE_EXPONENTS = {"p1": (9 / 8, 3 / 2), "p2": (11 / 7, 11 / 7), "p3": (5 / 4, 3 / 2)}


# =============================================================================
# FORCING SOURCES
# =============================================================================


def outer_divergence_hat(a: np.ndarray, b: np.ndarray, grid: Grid) -> np.ndarray:
    """Dealiased spectrum of (a . grad) b = d_i (a_i b_j), shape (3, n, n, n)."""
    kvec = grid.kvec
    mask = grid.dealias_mask
    out = np.zeros((3,) + grid.shape, dtype=np.complex128)
    symmetric = a is b
    cache: Dict[Tuple[int, int], np.ndarray] = {}
    for i in range(3):
        for j in range(3):
            key = (min(i, j), max(i, j)) if symmetric else (i, j)
            if key not in cache:
                cache[key] = fft3(a[i] * b[j]) * mask
            out[j] += 1j * kvec[i] * cache[key]
    return out


class ForcingTensor(BaseModel):
    """Explicit 3x3 forcing tensor on every time node, data[t, i, j, x, y, z]."""

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    grid: Grid
    timegrid: TimeGrid
    data: np.ndarray

    @model_validator(mode="after")
    def _check(self):
        expected = (len(self.timegrid.nodes), 3, 3) + self.grid.shape
        arr = np.asarray(self.data, dtype=np.float64)
        if arr.shape != expected:
            raise ValueError(f"forcing tensor has shape {arr.shape}, expected {expected}")
        if not np.all(np.isfinite(arr)):
            raise ValueError("forcing tensor contains non-finite entries")
        object.__setattr__(self, "data", arr)
        return self

    def projected_hat(self, j: int) -> np.ndarray:
        return project_hat(self.grid, -tensor_divergence_hat(self.grid, fft3(self.data[j])))


class VectorForcing(BaseModel):
    """Explicit vector forcing f; the solve uses P f."""

    model_config = ConfigDict(frozen=True)

    trace: FieldTrace

    @property
    def grid(self) -> Grid:
        return self.trace.grid

    @property
    def timegrid(self) -> TimeGrid:
        return self.trace.timegrid

    def projected_hat(self, j: int) -> np.ndarray:
        return project_hat(self.grid, fft3(self.trace.data[j]))

    def raw_hat(self, j: int) -> np.ndarray:
        return fft3(self.trace.data[j])


class OuterProductForcing(BaseModel):
    """f = -(a . grad) b built lazily per node from two aligned traces.

    Several (a, b) pairs may be summed; the 3x3xn^3 tensors are never stored.
    """

    model_config = ConfigDict(frozen=True)

    pairs: List[Tuple[FieldTrace, FieldTrace]]

    @model_validator(mode="after")
    def _check(self):
        if not self.pairs:
            raise ValueError("need at least one (a, b) pair")
        first = self.pairs[0][0]
        for a, b in self.pairs:
            first.require_aligned(a)
            first.require_aligned(b)
        return self

    @classmethod
    def square(cls, v: FieldTrace) -> "OuterProductForcing":
        return cls(pairs=[(v, v)])

    @property
    def grid(self) -> Grid:
        return self.pairs[0][0].grid

    @property
    def timegrid(self) -> TimeGrid:
        return self.pairs[0][0].timegrid

    def raw_hat(self, j: int) -> np.ndarray:
        total = np.zeros((3,) + self.grid.shape, dtype=np.complex128)
        for a, b in self.pairs:
            da = a.data[j]
            db = da if b is a else b.data[j]
            total -= outer_divergence_hat(da, db, self.grid)
        return total

    def projected_hat(self, j: int) -> np.ndarray:
        return project_hat(self.grid, self.raw_hat(j))


# =============================================================================
# DUHAMEL SOLVE
# =============================================================================


def etd_weights(z: np.ndarray, h: float) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Decay exp(-z) and the weights of g_j, g_{j+1} for one step of length h.

    With z = |k|^2 h:  w_new = h (phi1 - psi),  w_old = h psi,
    phi1 = (1 - e^-z)/z,  psi = (1 - (1 + z) e^-z)/z^2.
    """
    decay = np.exp(-z)
    small = z < 1e-3
    zs = np.where(small, 1.0, z)
    phi1 = np.where(small, 1.0 - z / 2.0 + z**2 / 6.0 - z**3 / 24.0, -np.expm1(-zs) / zs)
    psi = np.where(small, 0.5 - z / 3.0 + z**2 / 8.0 - z**3 / 30.0, (1.0 - (1.0 + zs) * decay) / zs**2)
    return decay, h * psi, h * (phi1 - psi)


def duhamel_solve(forcing, timegrid: Optional[TimeGrid] = None) -> FieldTrace:
    """u(t) = int_0^t exp((t - s) Laplacian) P f(s) ds on the forcing's time nodes.

    The result is divergence free and vanishes at t = 0.
    """
    grid: Grid = forcing.grid
    tg: TimeGrid = timegrid or forcing.timegrid
    if tg != forcing.timegrid:
        raise InvalidInputError("forcing is not sampled on the requested time grid")
    nodes = tg.nodes
    data = np.zeros((len(nodes), 3) + grid.shape)
    u_hat = np.zeros((3,) + grid.shape, dtype=np.complex128)
    g_old = forcing.projected_hat(0)
    if not np.all(np.isfinite(g_old)):
        raise InvalidInputError("forcing at t=0 is not finite")
    for j in range(1, len(nodes)):
        h = nodes[j] - nodes[j - 1]
        g_new = forcing.projected_hat(j)
        decay, w_old, w_new = etd_weights(grid.k2 * h, h)
        u_hat = decay * u_hat + w_old * g_old + w_new * g_new
        if not np.all(np.isfinite(u_hat)):
            raise NumericalError(f"Duhamel step blew up at t={nodes[j]:.3g}")
        data[j] = ifft3(u_hat)
        g_old = g_new
    return FieldTrace(grid=grid, timegrid=tg, data=data)


# =============================================================================
# PRESSURE
# =============================================================================


def pressure_hat_from_vector(grid: Grid, f_hat: np.ndarray) -> np.ndarray:
    """Solve Laplacian p = div f spectrally; zero mean."""
    kx, ky, kz = grid.kvec
    p_hat = -1j * (kx * f_hat[0] + ky * f_hat[1] + kz * f_hat[2]) / grid.k2_safe
    p_hat[grid.k2 == 0] = 0.0
    return p_hat


def nonlinear_hat(v: GridField) -> np.ndarray:
    """Dealiased spectrum of div(v (x) v)."""
    return outer_divergence_hat(v.data, v.data, v.grid)


def pressure_from_velocity(v: GridField) -> ScalarField:
    """q = (-Laplacian)^{-1} div div (v (x) v); div(v (x) v) + grad q is solenoidal."""
    return ScalarField(grid=v.grid, samples=ifft3(pressure_hat_from_vector(v.grid, -nonlinear_hat(v))))


def pressure_from_forcing(grid: Grid, f_hat: np.ndarray) -> ScalarField:
    """Pressure that removes the gradient part of a vector forcing f."""
    return ScalarField(grid=grid, samples=ifft3(pressure_hat_from_vector(grid, f_hat)))


def pressure_gradient_magnitude(p: np.ndarray, grid: Grid) -> np.ndarray:
    p_hat = fft3(p)
    kx, ky, kz = grid.kvec
    return np.sqrt(sum(ifft3(1j * k * p_hat) ** 2 for k in (kx, ky, kz)))


def spacetime_norm(per_node: np.ndarray, timegrid: TimeGrid, l: float) -> float:
    """(int_0^T ||.||^l dt)^{1/l} from per-node spatial norms."""
    return float(timegrid.cumulative(np.asarray(per_node) ** l)[-1] ** (1.0 / l))


def _spatial_norm(mag: np.ndarray, grid: Grid, s: float) -> float:
    return float((np.sum(mag**s) * grid.cell_volume) ** (1.0 / s))


class PressureDecomposition(BaseModel):
    """q = p1 + p2 + p3 on every node with the space-time norms of grad p_i."""

    model_config = ConfigDict(arbitrary_types_allowed=True)

    grid: Grid
    timegrid: TimeGrid
    p1: np.ndarray
    p2: np.ndarray
    p3: np.ndarray
    q: np.ndarray
    exponents: Dict[str, Tuple[float, float]] = Field(default_factory=lambda: dict(PRESSURE_EXPONENTS))
    grad_norms: Dict[str, float] = Field(default_factory=dict)
    split_defect: float = 0.0

    def piece(self, name: str, j: int) -> ScalarField:
        return ScalarField(grid=self.grid, samples=getattr(self, name)[j])


def pressure_decompose(u_trace: FieldTrace, V_trace: FieldTrace) -> PressureDecomposition:
    """Pressures of the forcings -u.grad u, -V.grad V and -(V.grad u + u.grad V)."""
    u_trace.require_aligned(V_trace)
    grid, tg = u_trace.grid, u_trace.timegrid
    shape = (len(tg.nodes),) + grid.shape
    pieces = {name: np.zeros(shape) for name in ("p1", "p2", "p3")}
    q = np.zeros(shape)
    norms = {name: np.zeros(len(tg.nodes)) for name in pieces}
    for j in range(len(tg.nodes)):
        u, V = u_trace.data[j], V_trace.data[j]
        forcings = {
            "p1": -outer_divergence_hat(u, u, grid),
            "p2": -outer_divergence_hat(V, V, grid),
            "p3": -(outer_divergence_hat(V, u, grid) + outer_divergence_hat(u, V, grid)),
        }
        for name, f_hat in forcings.items():
            p = ifft3(pressure_hat_from_vector(grid, f_hat))
            pieces[name][j] = p
            s = PRESSURE_EXPONENTS[name][0]
            norms[name][j] = _spatial_norm(pressure_gradient_magnitude(p, grid), grid, s)
        q[j] = pressure_from_velocity(GridField(grid=grid, data=u + V)).samples
    grad_norms = {name: spacetime_norm(norms[name], tg, PRESSURE_EXPONENTS[name][1]) for name in pieces}
    defect = float(np.max(np.abs(q - pieces["p1"] - pieces["p2"] - pieces["p3"])))
    logger.info(f"🧮 STOKES: pressure split defect {defect:.2e}, grad norms {grad_norms}")
    return PressureDecomposition(
        grid=grid, timegrid=tg, q=q, grad_norms=grad_norms, split_defect=defect, **pieces
    )


# =============================================================================
# INTEGRABILITY OF THE NONLINEAR TERMS
# =============================================================================


class IntegrabilityNorms(BaseModel):
    """Grid space-time norms of the three nonlinear terms and their majorants."""

    vv_l11_7: float
    cross_l5_4_3_2: float
    vuu_l1: float
    majorants: Dict[str, float] = Field(default_factory=dict)


def _advect_magnitude(a: np.ndarray, b: np.ndarray, grid: Grid) -> np.ndarray:
    return np.sqrt(np.sum(ifft3(outer_divergence_hat(a, b, grid)) ** 2, axis=0))


def integrability_surrogates(u_trace: FieldTrace, V_trace: FieldTrace, weak_norm_u0: float) -> IntegrabilityNorms:
    """||V.grad V||_{L_11/7(Q_T)}, ||V.grad u + u.grad V||_{L_5/4,3/2(Q_T)}, int int |V(x)u : grad u|.

    The majorants are the Hoelder-side bounds with unit constants:
      (int_0^T ||u0||^{22/7} t^{-6/7} dt)^{7/11},
      ||u0|| ||u||_{2,oo} (int t^{-33/40})^{2/3} + ||grad u||_{L_2(Q_T)} ||u0|| (int t^{-3/10})^{1/6},
      ||u0|| ||grad u||^2_{L_2(Q_T)}.
    """
    u_trace.require_aligned(V_trace)
    grid, tg = u_trace.grid, u_trace.timegrid
    T = tg.T
    kvec = grid.kvec
    vv, cross, vuu, grad_sq, l2 = [], [], [], [], []
    for j in range(len(tg.nodes)):
        u, V = u_trace.data[j], V_trace.data[j]
        vv.append(_spatial_norm(_advect_magnitude(V, V, grid), grid, 11 / 7))
        c_hat = outer_divergence_hat(V, u, grid) + outer_divergence_hat(u, V, grid)
        cross.append(_spatial_norm(np.sqrt(np.sum(ifft3(c_hat) ** 2, axis=0)), grid, 5 / 4))
        u_hat = fft3(u)
        grad = np.stack([ifft3(1j * kvec[i] * u_hat) for i in range(3)])  # grad[i, j] = d_i u_j
        contraction = np.einsum("ixyz,jxyz,ijxyz->xyz", V, u, grad)
        vuu.append(float(np.sum(np.abs(contraction)) * grid.cell_volume))
        grad_sq.append(float(np.sum(grad**2) * grid.cell_volume))
        l2.append(float(np.sqrt(np.sum(u**2) * grid.cell_volume)))
    grad_l2 = math.sqrt(tg.cumulative(np.array(grad_sq))[-1])
    u_2inf = max(l2)
    a = weak_norm_u0
    majorants = {
        "vv_l11_7": (7.0 * T ** (1 / 7) * a ** (22 / 7)) ** (7 / 11),
        "cross_l5_4_3_2": a * u_2inf * (40 / 7 * T ** (7 / 40)) ** (2 / 3)
        + grad_l2 * a * (10 / 7 * T ** (7 / 10)) ** (1 / 6),
        "vuu_l1": a * grad_l2**2,
    }
    return IntegrabilityNorms(
        vv_l11_7=spacetime_norm(np.array(vv), tg, 11 / 7),
        cross_l5_4_3_2=spacetime_norm(np.array(cross), tg, 3 / 2),
        vuu_l1=float(tg.cumulative(np.array(vuu))[-1]),
        majorants=majorants,
    )
