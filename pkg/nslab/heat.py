"""
Heat semigroup S(t) = exp(t Laplacian) on the periodic box.

The multiplier exp(-|k|^2 t) uses the derivative wavenumbers, so the discrete
heat energy balance ||S(t)f||^2 + 2 int_0^t ||grad S(s)f||^2 ds = ||f||^2 holds
mode by mode.
"""

import itertools
import logging
import math
from typing import List, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, Field
from scipy.integrate import trapezoid

from .bumps import TestFunction
from .errors import InvalidInputError
from .field import Grid, GridField, fft3, ifft3, lebesgue_norm
from .lorentz import weak_l3
from .reports import VerifierReport
from .timegrid import FieldTrace, TimeGrid, weighted_sup

logger = logging.getLogger(__name__)


def heat_multiplier(grid: Grid, t: float) -> np.ndarray:
    return np.exp(-grid.k2 * t)


def heat_evolve(u0: GridField, t: float) -> GridField:
    """S(t)u0; t = 0 returns a copy."""
    if not (t >= 0 and math.isfinite(t)):
        raise InvalidInputError(f"heat time must be nonnegative (got {t})")
    if t == 0:
        return GridField(grid=u0.grid, data=u0.data.copy())
    return GridField(grid=u0.grid, data=ifft3(fft3(u0.data) * heat_multiplier(u0.grid, t)))


def heat_trace(u0: GridField, timegrid: TimeGrid) -> FieldTrace:
    """S(t)u0 on every node of the time grid, one forward transform."""
    u_hat = fft3(u0.data)
    data = np.empty((len(timegrid.nodes), 3) + u0.grid.shape)
    for j, t in enumerate(timegrid.nodes):
        data[j] = u0.data if t == 0 else ifft3(u_hat * heat_multiplier(u0.grid, t))
    return FieldTrace(grid=u0.grid, timegrid=timegrid, data=data)


# =============================================================================
# DECAY ESTIMATES
# =============================================================================


def _norm_of_magnitude(mag: np.ndarray, grid: Grid, r: float) -> float:
    if math.isinf(r):
        return float(mag.max())
    return float((np.sum(mag**r) * grid.cell_volume) ** (1.0 / r))


def derivative_magnitude(u_hat: np.ndarray, grid: Grid, t: float, m: int, k: int) -> np.ndarray:
    """Pointwise |d_t^m grad^k S(t)u| with d_t S = Laplacian S applied on the multiplier."""
    base = u_hat * heat_multiplier(grid, t) * (-grid.k2) ** m
    kvec = grid.kvec
    total = np.zeros(grid.shape)
    for axes in itertools.product(range(3), repeat=k):
        factor = np.ones(1)
        for a in axes:
            factor = factor * (1j * kvec[a])
        for comp in base:
            total += ifft3(comp * factor) ** 2
    return np.sqrt(total)


class SemigroupEstimateReport(BaseModel):
    r: float
    m: int
    k: int
    weight_exponent: float
    samples: List[Tuple[float, float]] = Field(default_factory=list)
    weak_norm_u0: float = 0.0
    sup_ratio: float = 0.0
    variation: float = 0.0
    weak_ratios: List[Tuple[float, float]] = Field(default_factory=list)
    weak_bound_constant: float = 0.0
    flags: List[str] = Field(default_factory=lambda: ["empirical"])


def semigroup_decay_report(
    u0: GridField, r: float, m: int, k: int, times: Sequence[float]
) -> SemigroupEstimateReport:
    """Weighted samples t^{m + k/2 + 3/2 (1/3 - 1/r)} ||d_t^m grad^k S(t)u0||_{L_r}.

    Also carries the weak-norm ratios ||S(t)u0||_{L^{3,oo}} / ||u0||_{L^{3,oo}}.
    """
    if not r > 3:
        raise InvalidInputError(f"r must exceed 3 (got {r})")
    if m < 0 or k < 0:
        raise InvalidInputError("derivative orders must be nonnegative")
    times = sorted(float(t) for t in times)
    if not times or times[0] <= 0:
        raise InvalidInputError("sample times must be positive")
    power = m + k / 2.0 + 1.5 * (1.0 / 3.0 - (0.0 if math.isinf(r) else 1.0 / r))
    grid = u0.grid
    u_hat = fft3(u0.data)
    weak0 = weak_l3(u0)
    samples, weak_ratios = [], []
    for t in times:
        value = t**power * _norm_of_magnitude(derivative_magnitude(u_hat, grid, t, m, k), grid, r)
        samples.append((t, value))
        if weak0 > 0:
            weak_ratios.append((t, weak_l3(heat_evolve(u0, t)) / weak0))
    values = np.array([v for _, v in samples])
    peak = float(values.max()) if values.size else 0.0
    report = SemigroupEstimateReport(
        r=r,
        m=m,
        k=k,
        weight_exponent=power,
        samples=samples,
        weak_norm_u0=weak0,
        sup_ratio=peak / weak0 if weak0 > 0 else 0.0,
        variation=float((values.max() - values.min()) / peak) if peak > 0 else 0.0,
        weak_ratios=weak_ratios,
        weak_bound_constant=max((w for _, w in weak_ratios), default=0.0),
    )
    logger.info(
        f"📈 HEAT: decay (r={r}, m={m}, k={k}) sup_ratio={report.sup_ratio:.4g} variation={report.variation:.3f}"
    )
    return report


def kato_norm(V_trace: FieldTrace, T: Optional[float] = None) -> float:
    """<V>_{Q_T} = max over trace samples t in (0, T] of t^{1/5} ||V(t)||_{L_5}."""
    if len(V_trace) < 2:
        raise InvalidInputError("kato norm needs a trace with positive sample times")
    return weighted_sup(V_trace, 5.0, 0.2, upto=T)


# =============================================================================
# INITIAL-TIME BEHAVIOUR
# =============================================================================


def uniform_local_norm(f: GridField, q: float, stride: int = 1, radius: float = 1.0) -> float:
    """sup over centers x0 on the stride-sublattice of ||f||_{L_q(B(x0, radius))}.

    Ball integrals for all centers come from one periodic FFT convolution; the
    sublattice sup is a lower bound for the continuum sup.
    """
    grid = f.grid
    if 2 * radius >= grid.L:
        raise InvalidInputError(f"unit balls need L > {2 * radius} (got L={grid.L})")
    X, Y, Z = grid.mesh
    # periodic distance to the origin node at index n/2
    ball = (X**2 + Y**2 + Z**2 < radius**2).astype(float)
    ball = np.fft.ifftshift(ball)
    dens = f.magnitude() ** q
    local = ifft3(fft3(dens) * np.conj(fft3(ball))) * grid.cell_volume
    local = np.maximum(local, 0.0)[::stride, ::stride, ::stride]
    return float(local.max() ** (1.0 / q))


class InitialConvergenceReport(BaseModel):
    q: float
    values: List[Tuple[float, float]] = Field(default_factory=list)
    weak_gaps: List[Tuple[float, float]] = Field(default_factory=list)
    monotone: bool = True
    stride: int = 1
    note: str = "lattice sup over ball centers, a lower bound for the continuum sup"


def initial_convergence_check(
    u0: GridField, q: float, times: Sequence[float], stride: int = 1, weak_gap: bool = True
) -> InitialConvergenceReport:
    """||S(t)u0 - u0||_{L_q,unif} per t, with the L^{3,oo} gap next to it."""
    if not (1 <= q < 3):
        raise InvalidInputError(f"q must lie in [1, 3) (got {q})")
    values, gaps = [], []
    for t in sorted(float(t) for t in times):
        diff = heat_evolve(u0, t) - u0
        values.append((t, uniform_local_norm(diff, q, stride)))
        if weak_gap:
            gaps.append((t, weak_l3(diff)))
    seq = [v for _, v in values]
    monotone = all(a <= b * (1 + 1e-9) + 1e-14 for a, b in zip(seq, seq[1:]))
    return InitialConvergenceReport(q=q, values=values, weak_gaps=gaps, monotone=monotone, stride=stride)


def _spectral_pairing_weights(u0: GridField, psi_vec: np.ndarray) -> np.ndarray:
    grid = u0.grid
    u_hat = fft3(u0.data)
    p_hat = fft3(psi_vec)
    return np.real(np.sum(u_hat * np.conj(p_hat), axis=0)) * grid.cell_volume / grid.n**3


def pairing_at_times(u0: GridField, psi_vec: np.ndarray, times: np.ndarray) -> np.ndarray:
    """int S(t)u0 . psi dx for each t, from one product of spectra."""
    w = _spectral_pairing_weights(u0, psi_vec)
    k2 = u0.grid.k2
    return np.array([float(np.sum(w * np.exp(-k2 * t))) for t in times])


def weakstar_pairing_trace(
    u0_sequence: Sequence[GridField],
    phi: TestFunction,
    direction=(1.0, 0.0, 0.0),
    T: Optional[float] = None,
    time_points: int = 65,
) -> List[float]:
    """int int S(t)u0^(k) . phi dx dt for every member; grid sum x trapezoid in t."""
    if not u0_sequence:
        return []
    grid = u0_sequence[0].grid
    phi.require_inside(grid, T)
    e = np.asarray(direction, dtype=float)
    psi = phi.space(grid)
    psi_vec = np.stack([e[0] * psi, e[1] * psi, e[2] * psi])
    ts = np.linspace(phi.t_on, phi.t_off, time_points)
    eta = phi.time(ts)
    out = []
    for u0 in u0_sequence:
        out.append(float(trapezoid(pairing_at_times(u0, psi_vec, ts) * eta, ts)))
    logger.debug(f"🔍 HEAT: weak-* pairings {['%.4g' % p for p in out]}")
    return out


def initial_weakstar_trace(
    u0: GridField, phi: TestFunction, times: Sequence[float], direction=(1.0, 0.0, 0.0)
) -> List[Tuple[float, float]]:
    """(t, |int (S(t)u0 - u0) . psi dx|) against the spatial part of phi."""
    grid = u0.grid
    phi.require_inside(grid)
    e = np.asarray(direction, dtype=float)
    psi = phi.space(grid)
    psi_vec = np.stack([e[0] * psi, e[1] * psi, e[2] * psi])
    ts = np.asarray(sorted(float(t) for t in times))
    base = float(np.sum(u0.data * psi_vec) * grid.cell_volume)
    return [(float(t), abs(p - base)) for t, p in zip(ts, pairing_at_times(u0, psi_vec, ts))]


# =============================================================================
# HEAT ENERGY BALANCE
# =============================================================================


def heat_energy_terms(f: GridField, t: float) -> Tuple[float, float, float]:
    """(||S(t)f||^2, 2 int_0^t ||grad S f||^2, ||f||^2) in closed form per mode."""
    grid = f.grid
    power = np.sum(np.abs(fft3(f.data)) ** 2, axis=0) * grid.cell_volume / grid.n**3
    decay = np.exp(-2.0 * grid.k2 * t)
    return float(np.sum(power * decay)), float(np.sum(power * (1.0 - decay))), float(np.sum(power))


def dissipation_trace(trace: FieldTrace) -> np.ndarray:
    """Cumulative 2 int_0^t ||grad u||^2 by trapezoid on the trace nodes."""
    grid = trace.grid
    k2 = grid.k2
    rate = np.array(
        [2.0 * float(np.sum(k2 * np.abs(fft3(f.data)) ** 2)) * grid.cell_volume / grid.n**3 for f in trace]
    )
    return trace.timegrid.cumulative(rate)


def heat_energy_identity(f: GridField, t: float, timegrid: Optional[TimeGrid] = None, safety: float = 4.0):
    """||S(t)f||^2 + 2 int_0^t ||grad S f||^2 = ||f||^2 as a two-sided check.

    Without a time grid the dissipation is integrated exactly per mode; with
    one it is the trapezoid on the grid and the tolerance is the Richardson
    estimate against the nested refinement.
    """
    kinetic, exact_diss, initial = heat_energy_terms(f, t)
    if timegrid is None:
        diss = exact_diss
        tol = 1e-12 * max(initial, 1e-300)
        flags: List[str] = []
    else:
        grid_t = timegrid.with_T(t)
        coarse = dissipation_trace(heat_trace(f, grid_t))[-1]
        fine = dissipation_trace(heat_trace(f, grid_t.refine()))[-1]
        diss = fine
        tol = safety * abs(fine - coarse) / 3.0 + 1e-12 * initial
        flags = ["quadrature"]
    lhs = kinetic + diss
    return VerifierReport(
        inequality_id="heat_energy_identity",
        lhs=lhs,
        rhs=initial,
        tolerance=tol,
        passed=abs(lhs - initial) <= tol,
        flags=flags,
        params={"t": t},
        details={"kinetic": kinetic, "dissipation": diss, "exact_dissipation": exact_diss},
    )
