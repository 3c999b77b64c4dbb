"""
Divergence-free initial data.

Every generated field is cleaned the same way: mean and Nyquist planes
removed, then Leray-projected, so it is solenoidal and mean-free to rounding.
"""

import logging
from typing import Iterator, List, Literal, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, PositiveFloat, PositiveInt, field_validator

from .bumps import TestFunction
from .errors import InvalidInputError
from .field import Grid, GridField, ScalarField, curl, fft3, filter_mean_and_nyquist, ifft3, leray_project
from .lorentz import weak_l3

logger = logging.getLogger(__name__)

DataKind = Literal[
    "zero",
    "single_mode",
    "taylor_green",
    "curl_bump",
    "vortex_homogeneous",
    "mollified_sequence",
    "oscillatory_sequence",
]
SEQUENCE_KINDS = ("mollified_sequence", "oscillatory_sequence")


class InitialDataSpec(BaseModel):
    """Recipe for u0; serialized inside the run manifest."""

    model_config = ConfigDict(frozen=True)

    kind: DataKind = "taylor_green"
    amplitude: float = 1.0
    width: PositiveFloat = 1.0
    frequency: PositiveInt = 1
    mode: Tuple[int, int, int] = (0, 0, 1)
    direction: Tuple[float, float, float] = (1.0, 0.0, 0.0)
    excision_cells: float = 2.0
    bumps: PositiveInt = 3
    seed: int = 0
    base: Optional[DataKind] = None
    oscillation_amplitude: float = 0.5

    @field_validator("amplitude", "oscillation_amplitude")
    @classmethod
    def _finite(cls, v: float) -> float:
        if not np.isfinite(v):
            raise ValueError("amplitudes must be finite")
        return v

    @field_validator("excision_cells")
    @classmethod
    def _excision(cls, v: float) -> float:
        if v < 0:
            raise ValueError(f"excision radius must be nonnegative (got {v})")
        return v

    @field_validator("base")
    @classmethod
    def _base_not_sequence(cls, v: Optional[str]) -> Optional[str]:
        if v in SEQUENCE_KINDS:
            raise ValueError("a sequence cannot be built on another sequence")
        return v

    def base_spec(self) -> "InitialDataSpec":
        return self.model_copy(update={"kind": self.base or "vortex_homogeneous", "base": None})


def clean(f: GridField) -> GridField:
    """Drop the mean and Nyquist planes, then project."""
    return leray_project(filter_mean_and_nyquist(f))


# =============================================================================
# SINGULAR PROFILES
# =============================================================================


def excision_mask(grid: Grid, cells: float) -> np.ndarray:
    """True outside the ball of radius cells * dx about the origin."""
    return grid.radius >= max(cells, 0.0) * grid.dx if cells > 0 else grid.radius > 0


def inverse_distance(grid: Grid, excision_cells: float = 2.0) -> ScalarField:
    """1/|x| with the excised cells set to zero."""
    keep = excision_mask(grid, excision_cells)
    r = np.where(keep, grid.radius, 1.0)
    return ScalarField(grid=grid, samples=np.where(keep, 1.0 / r, 0.0))


def vortex_profile(grid: Grid, sigma: float = 1.0, excision_cells: float = 2.0) -> GridField:
    """sigma (-y, x, 0) / |x|^2, the excised core set to zero; not yet projected."""
    X, Y, Z = grid.mesh
    keep = excision_mask(grid, excision_cells)
    r2 = np.where(keep, grid.radius**2, 1.0)
    shape = grid.shape
    data = np.stack(
        [
            np.where(keep, -sigma * np.broadcast_to(Y, shape) / r2, 0.0),
            np.where(keep, sigma * np.broadcast_to(X, shape) / r2, 0.0),
            np.zeros(shape),
        ]
    )
    return GridField(grid=grid, data=data)


# =============================================================================
# SMOOTH PROFILES
# =============================================================================


def _single_mode(grid: Grid, amplitude: float, mode, direction) -> GridField:
    m = np.asarray(mode, dtype=float)
    if not np.any(m):
        raise InvalidInputError("single mode needs a nonzero wave vector")
    if np.max(np.abs(m)) >= grid.n // 2:
        raise InvalidInputError(f"mode {tuple(mode)} is at or beyond the Nyquist limit n/2={grid.n // 2}")
    e = np.asarray(direction, dtype=float)
    a = e - (e @ m) / (m @ m) * m
    if np.linalg.norm(a) == 0:
        raise InvalidInputError("direction is parallel to the wave vector")
    a = a / np.linalg.norm(a)
    X, Y, Z = grid.mesh
    phase = 2 * np.pi / grid.L * (m[0] * X + m[1] * Y + m[2] * Z)
    s = np.broadcast_to(np.sin(phase), grid.shape)
    return GridField(grid=grid, data=amplitude * np.stack([a[0] * s, a[1] * s, a[2] * s]))


def _taylor_green(grid: Grid, amplitude: float, frequency: int) -> GridField:
    if frequency >= grid.n // 2:
        raise InvalidInputError(f"frequency {frequency} is at or beyond the Nyquist limit")
    c = 2 * np.pi * frequency / grid.L
    X, Y, Z = grid.mesh
    u = np.sin(c * X) * np.cos(c * Y) * np.cos(c * Z)
    v = -np.cos(c * X) * np.sin(c * Y) * np.cos(c * Z)
    return GridField(grid=grid, data=amplitude * np.stack([u, v, np.zeros(grid.shape)]))


def _curl_bump(grid: Grid, spec: InitialDataSpec) -> GridField:
    """Curl of a random sum of compactly supported bumps, scaled to sup norm |amplitude|."""
    half = 0.5 * grid.L
    if spec.width >= half:
        raise InvalidInputError(f"bump width {spec.width} does not fit in the box (half-width {half:.4g})")
    rng = np.random.default_rng(spec.seed)
    room = half - spec.width - 2 * grid.dx
    if room <= 0:
        raise InvalidInputError(f"bump width {spec.width} leaves no room for the support inside the box")
    potential = np.zeros((3,) + grid.shape)
    for _ in range(spec.bumps):
        center = tuple(float(c) for c in rng.uniform(-0.5 * room, 0.5 * room, size=3))
        weights = rng.normal(size=3)
        bump = TestFunction(kind="bump", center=center, radius=spec.width, t_on=0.5, t_off=1.0)
        bump.require_inside(grid)
        psi = bump.space(grid)
        potential += weights[:, None, None, None] * psi[None]
    u = curl(GridField(grid=grid, data=potential))
    peak = u.sup_norm()
    if peak == 0.0:
        return GridField.zeros(grid)
    return u.scale(spec.amplitude / peak)


def make_initial_data(spec: InitialDataSpec, grid: Grid) -> GridField:
    """Build u0 from its recipe; sequence kinds yield their base field."""
    if spec.kind in SEQUENCE_KINDS:
        return make_initial_data(spec.base_spec(), grid)
    if spec.kind == "zero" or spec.amplitude == 0.0:
        return GridField.zeros(grid)
    if spec.kind == "single_mode":
        raw = _single_mode(grid, spec.amplitude, spec.mode, spec.direction)
    elif spec.kind == "taylor_green":
        raw = _taylor_green(grid, spec.amplitude, spec.frequency)
    elif spec.kind == "curl_bump":
        raw = _curl_bump(grid, spec)
    else:
        raw = vortex_profile(grid, spec.amplitude, spec.excision_cells)
    u0 = clean(raw)
    logger.debug(f"🌀 INITDATA: {spec.kind} on n={grid.n}, sup={u0.sup_norm():.4g}")
    return u0


# =============================================================================
# SEQUENCES
# =============================================================================


class DataSequence(BaseModel):
    """Members u0^(k), k = 1..count, and sup_k ||u0^(k)||_{L^{3,oo}}."""

    model_config = ConfigDict(arbitrary_types_allowed=True)

    base: GridField
    members: List[GridField] = Field(default_factory=list)
    weak_bound: float = 0.0
    note: Optional[str] = None

    def __len__(self) -> int:
        return len(self.members)

    def __iter__(self) -> Iterator[GridField]:
        return iter(self.members)

    def __getitem__(self, k: int) -> GridField:
        return self.members[k]


def mollify(f: GridField, width: float) -> GridField:
    """Gaussian mollification exp(-|k|^2 width^2 / 2) applied to the spectrum."""
    return GridField(grid=f.grid, data=ifft3(fft3(f.data) * np.exp(-0.5 * f.grid.k2 * width**2)))


def make_sequence(spec: InitialDataSpec, grid: Grid, count: int) -> DataSequence:
    """Mollified members at widths width/k, or base plus a mode at frequency frequency + k."""
    if spec.kind not in SEQUENCE_KINDS:
        raise InvalidInputError(f"{spec.kind} is not a sequence kind")
    if count < 1:
        raise InvalidInputError("count must be positive")
    base = make_initial_data(spec.base_spec(), grid)
    members: List[GridField] = []
    note = None
    for k in range(1, count + 1):
        if spec.kind == "mollified_sequence":
            members.append(mollify(base, spec.width / k))
            continue
        m = spec.frequency + k
        if m >= grid.n // 2:
            note = f"truncated at {len(members)} members: frequency {m} reaches the Nyquist limit {grid.n // 2}"
            logger.warning(f"⚠️ INITDATA: {note}")
            break
        wave = _single_mode(grid, spec.oscillation_amplitude, (0, 0, m), spec.direction)
        members.append(clean(base + wave))
    bound = max((weak_l3(f) for f in members), default=0.0)
    logger.info(f"🌀 INITDATA: {spec.kind} with {len(members)} members, sup_k weak norm {bound:.4g}")
    return DataSequence(base=base, members=members, weak_bound=bound, note=note)
