"""
Lorentz-space analysis on grid fields.

Distribution functions are answered from one sorted magnitude table per field.
The weak-type quasinorm sup_a a * d(a)**(1/s) is evaluated with the closed
superlevel sets {|f| >= a_i} at every distinct magnitude a_i, which is the
supremum of the right-continuous step function d approached from below.
"""

import logging
import math
from functools import cached_property
from typing import List, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, PositiveFloat, model_validator

from .errors import InvalidInputError, require
from .field import Grid, GridField, ScalarField, leray_project, lebesgue_norm
from .reports import VerifierReport, check, merge_reports, trivial_pass

logger = logging.getLogger(__name__)


# =============================================================================
# CONFIGURATION
# =============================================================================


class Thresholds(BaseModel):
    """Smallness constants and verifier tolerances; all strictly positive."""

    model_config = ConfigDict(frozen=True)

    eps0: PositiveFloat = 0.5
    eps: PositiveFloat = 0.5
    eps3: PositiveFloat = 0.25
    c_kato: PositiveFloat = 1.0
    kt_constant: PositiveFloat = 1.0
    blowup_ceiling: PositiveFloat = 1e6
    energy_rel_tol: PositiveFloat = 0.02
    split_tol: PositiveFloat = 1e-12
    interpolation_drift: PositiveFloat = 0.10
    richardson_safety: PositiveFloat = 4.0
    quadrature_floor: PositiveFloat = 1e-5
    monotone_slack: PositiveFloat = 0.10

    def provenance(self, *names: str) -> dict:
        data = self.model_dump()
        return {name: data[name] for name in names} | {"source": "configured"}


# =============================================================================
# DISTRIBUTION FUNCTION
# =============================================================================


def magnitudes(f) -> np.ndarray:
    if isinstance(f, (GridField, ScalarField)):
        return f.magnitude()
    return np.abs(np.asarray(f, dtype=np.float64))


class LorentzProfile(BaseModel):
    """Level/measure table of d(a) = |{|f| > a}|.

    levels are the distinct nonzero magnitudes, descending. measures[i] is
    d(levels[i]) (strict superlevel set); closed[i] is |{|f| >= levels[i]}|.
    """

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True, ignored_types=(cached_property,))

    levels: np.ndarray
    counts: np.ndarray
    cell_volume: float
    domain_measure: float

    @model_validator(mode="after")
    def _check(self):
        if self.levels.shape != self.counts.shape:
            raise ValueError("levels and counts must align")
        if self.levels.size > 1 and not np.all(np.diff(self.levels) < 0):
            raise ValueError("levels must be strictly descending")
        return self

    @classmethod
    def from_values(cls, values: np.ndarray, cell_volume: float, domain_measure: Optional[float] = None):
        mags = np.asarray(values, dtype=np.float64).ravel()
        if domain_measure is None:
            domain_measure = mags.size * cell_volume
        nonzero = mags[mags > 0]
        levels, counts = np.unique(nonzero, return_counts=True)
        return cls(
            levels=levels[::-1].copy(),
            counts=counts[::-1].copy(),
            cell_volume=cell_volume,
            domain_measure=domain_measure,
        )

    @classmethod
    def of(cls, f, mask: Optional[np.ndarray] = None) -> "LorentzProfile":
        mags = magnitudes(f)
        grid: Grid = f.grid
        if mask is not None:
            mags = mags[mask]
            return cls.from_values(mags, grid.cell_volume, mags.size * grid.cell_volume)
        return cls.from_values(mags, grid.cell_volume, grid.measure)

    @cached_property
    def closed(self) -> np.ndarray:
        return np.cumsum(self.counts) * self.cell_volume

    @cached_property
    def measures(self) -> np.ndarray:
        return self.closed - self.counts * self.cell_volume

    @property
    def empty(self) -> bool:
        return self.levels.size == 0

    @property
    def max_level(self) -> float:
        return float(self.levels[0]) if self.levels.size else 0.0

    @property
    def support_measure(self) -> float:
        return float(self.closed[-1]) if self.levels.size else 0.0

    def distribution(self, alpha) -> np.ndarray:
        """d(alpha) for scalar or array alpha (right-continuous)."""
        a = np.asarray(alpha, dtype=np.float64)
        ascending = self.levels[::-1]
        # cells with magnitude > a sit strictly below position searchsorted(right)
        above = np.searchsorted(ascending, a, side="right")
        cum_from_top = np.concatenate([[0.0], self.closed])
        return cum_from_top[ascending.size - above]

    def weak_values(self, s: float) -> np.ndarray:
        """a_i * |{|f| >= a_i}|**(1/s) at every level."""
        return self.levels * self.closed ** (1.0 / s)

    def restrict(self, lo: float = 0.0, hi: float = math.inf) -> "LevelWindow":
        return LevelWindow(profile=self, lo=lo, hi=hi)


class LevelWindow(BaseModel):
    """A profile with the level variable restricted to [lo, hi]."""

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    profile: LorentzProfile
    lo: float = 0.0
    hi: float = math.inf

    def weak_sup(self, s: float) -> float:
        p = self.profile
        if p.empty or self.hi < self.lo:
            return 0.0
        # on [a_{i+1}, a_i) the function a * d(a)^{1/s} increases towards a_i
        below = np.concatenate([p.levels[1:], [0.0]])
        hit = (below <= self.hi) & (p.levels > self.lo)
        if not np.any(hit):
            return 0.0
        tops = np.minimum(p.levels[hit], self.hi)
        return float(np.max(tops * p.closed[hit] ** (1.0 / s)))


def distribution_function(f, alpha: float) -> float:
    """Measure of {|f| > alpha} in volume units."""
    if not alpha > 0:
        raise InvalidInputError(f"alpha must be positive (got {alpha})")
    mags = magnitudes(f)
    return float(np.count_nonzero(mags > alpha) * f.grid.cell_volume)


def lorentz_quasinorm(
    f,
    s: float,
    l: float = math.inf,
    mask: Optional[np.ndarray] = None,
    window: Optional[Tuple[float, float]] = None,
    profile: Optional[LorentzProfile] = None,
) -> float:
    """L^{s,l} quasinorm over the box (or the masked cells).

    For l < inf the integral s * int a^l d(a)^{l/s} da/a is summed in closed
    form over the constant pieces of d. window restricts the level variable of
    the l = inf supremum.
    """
    if not (0 < s < math.inf):
        raise InvalidInputError(f"s must lie in (0, inf) (got {s})")
    if not l > 0:
        raise InvalidInputError(f"l must be positive (got {l})")
    p = profile if profile is not None else LorentzProfile.of(f, mask)
    if p.empty:
        return 0.0
    if math.isinf(l):
        if window is not None:
            return p.restrict(*window).weak_sup(s)
        return float(np.max(p.weak_values(s)))
    below = np.concatenate([p.levels[1:], [0.0]])
    pieces = p.closed ** (l / s) * (p.levels**l - below**l)
    return float((s / l * np.sum(pieces)) ** (1.0 / l))


def weak_l3(f, **kwargs) -> float:
    return lorentz_quasinorm(f, 3.0, math.inf, **kwargs)


def radial_window(grid: Grid, sigma: float = 1.0, inner_cells: float = 6.0, outer_fraction: float = 0.45):
    """Level window for sigma/|x|-type fields.

    Keeps levels whose superlevel sets are balls of radius between
    inner_cells * dx (lattice counting is coarse below that) and
    outer_fraction * L (the set still fits in the box).
    """
    return (abs(sigma) / (outer_fraction * grid.L), abs(sigma) / (inner_cells * grid.dx))


# =============================================================================
# CALDERON SPLITTING
# =============================================================================


class SplitPair(BaseModel):
    """f = minus + plus with |minus| <= N; projected when divfree is set."""

    model_config = ConfigDict(frozen=True)

    cutoff: PositiveFloat
    minus: GridField
    plus: GridField
    divfree: bool = False

    @property
    def whole(self) -> GridField:
        return self.minus + self.plus


def calderon_split(f: GridField, N: float, divfree: bool = False) -> SplitPair:
    """Cut f at level N into a bounded part and a tail.

    The divfree variant projects the bounded part and takes the tail as the
    projected field minus it, so both pieces are solenoidal and still sum to
    the projected original.
    """
    if not N > 0:
        raise InvalidInputError(f"cutoff N must be positive (got {N})")
    low = f.magnitude() <= N
    minus = np.where(low, f.data, 0.0)
    plus = np.where(low, 0.0, f.data)
    if not divfree:
        return SplitPair(cutoff=N, minus=GridField(grid=f.grid, data=minus), plus=GridField(grid=f.grid, data=plus))
    whole = leray_project(f)
    bar = leray_project(GridField(grid=f.grid, data=minus))
    return SplitPair(cutoff=N, minus=bar, plus=whole - bar, divfree=True)


def tail_energy_ratio(f, N: float, weak_norm: float) -> float:
    """||f+_N||_2^2 / (3 N^-1 ||f||^3_{L^{3,oo}}), the tail bound at t = 2, r = 3 as a ratio.

    The bound is attained by sigma/|x|, so the ratio is 1 there up to lattice
    quadrature near the origin.
    """
    if not N > 0:
        raise InvalidInputError(f"cutoff N must be positive (got {N})")
    if weak_norm == 0.0:
        return 0.0
    mag = magnitudes(f)
    tail_sq = float(np.sum(np.where(mag > N, mag, 0.0) ** 2) * f.grid.cell_volume)
    return tail_sq / (3.0 * weak_norm**3 / N)


def verify_split_bounds(pair: SplitPair, r: float, s: float, t: float, tol: float = 1e-12) -> VerifierReport:
    """Lebesgue bounds on both pieces in terms of ||f||_{L^{r,oo}}.

    bounded part: ||f-||_s^s <= s/(s-r) N^(s-r) ||f||^r - N^s d_f(N)  (s < inf)
                  ||f-||_oo <= N                                     (s = inf)
    tail:         ||f+||_t^t <= r/(r-t) N^(t-r) ||f||^r
    The divfree variant fits the multiplicative constants instead and adds
    ||bar||_{r,oo} + ||tilde||_{r,oo} <= c(r) ||f||_{r,oo}.
    """
    if not (1 < t < r < s):
        raise InvalidInputError(f"need 1 < t < r < s (got t={t}, r={r}, s={s})")
    N = pair.cutoff
    f = pair.whole
    norm_r = lorentz_quasinorm(f, r)
    params = {"N": N, "r": r, "s": s, "t": t, "divfree": pair.divfree}
    if norm_r == 0.0:
        return trivial_pass("calderon_split_bounds", "zero field", params=params)

    scale_t = N ** (t - r) * norm_r**r
    tail_t = lebesgue_norm(pair.plus, t) ** t
    parts: List[VerifierReport] = []

    if math.isinf(s):
        sup_minus = lebesgue_norm(pair.minus, math.inf)
        bounded = check("bounded_part_sup", sup_minus, N, tolerance=tol * N, fitted_constant=sup_minus / N)
        if pair.divfree:
            bounded = bounded.model_copy(update={"passed": math.isfinite(sup_minus), "flags": ["empirical"]})
        parts.append(bounded)
    else:
        scale_s = N ** (s - r) * norm_r**r
        minus_s = lebesgue_norm(pair.minus, s) ** s
        coeff_s = s / (s - r)
        if pair.divfree:
            fitted = minus_s / (coeff_s * scale_s)
            parts.append(
                VerifierReport(
                    inequality_id="bounded_part_divfree",
                    lhs=minus_s,
                    rhs=coeff_s * scale_s,
                    fitted_constant=fitted,
                    passed=math.isfinite(fitted),
                    flags=["empirical"],
                )
            )
        else:
            correction = N**s * distribution_function(f, N)
            rhs = coeff_s * scale_s - correction
            parts.append(
                check(
                    "bounded_part",
                    minus_s,
                    rhs,
                    tolerance=tol * coeff_s * scale_s,
                    fitted_constant=(minus_s + correction) / scale_s,
                    details={"stated_coefficient": coeff_s, "correction": correction},
                )
            )

    coeff_t = r / (r - t)
    if pair.divfree:
        fitted = tail_t / (coeff_t * scale_t)
        parts.append(
            VerifierReport(
                inequality_id="tail_part_divfree",
                lhs=tail_t,
                rhs=coeff_t * scale_t,
                fitted_constant=fitted,
                passed=math.isfinite(fitted),
                flags=["empirical"],
            )
        )
        pieces = lorentz_quasinorm(pair.minus, r) + lorentz_quasinorm(pair.plus, r)
        c_r = pieces / norm_r
        parts.append(
            VerifierReport(
                inequality_id="split_pieces_weak_norm",
                lhs=pieces,
                rhs=norm_r,
                fitted_constant=c_r,
                passed=math.isfinite(c_r),
                flags=["empirical"],
            )
        )
    else:
        parts.append(
            check(
                "tail_part",
                tail_t,
                coeff_t * scale_t,
                tolerance=tol * coeff_t * scale_t,
                fitted_constant=tail_t / scale_t,
                details={"stated_coefficient": coeff_t},
            )
        )

    report = merge_reports("calderon_split_bounds", parts, params=params)
    logger.debug(f"🔍 LORENTZ: split bounds N={N} (t,r,s)=({t},{r},{s}) pass={report.passed}")
    return report


# =============================================================================
# SMALLNESS DIAGNOSTICS
# =============================================================================


class TailProfile(BaseModel):
    """a * d(a)^{1/3} over the top decade of levels, plus its max."""

    levels: List[float] = Field(default_factory=list)
    values: List[float] = Field(default_factory=list)
    surrogate: float = 0.0
    note: str = "upper estimate of the limsup; any bounded grid field has limsup 0"


def tail_profile(f, decades: float = 1.0) -> TailProfile:
    p = LorentzProfile.of(f)
    if p.empty:
        return TailProfile()
    top = p.max_level
    keep = p.levels >= top * 10.0 ** (-decades)
    values = p.weak_values(3.0)[keep]
    return TailProfile(levels=p.levels[keep].tolist(), values=values.tolist(), surrogate=float(values.max()))


def tail_smallness(f) -> float:
    """Scalar surrogate for limsup_{a -> oo} a d(a)^{1/3}: max over the top decade."""
    return tail_profile(f).surrogate


def ball_mask(grid: Grid, x0, R: float) -> np.ndarray:
    x0 = np.asarray(x0, dtype=np.float64)
    if np.any(np.abs(x0) + R > 0.5 * grid.L):
        raise InvalidInputError(f"ball B({x0.tolist()}, {R}) exits the box of side {grid.L}")
    X, Y, Z = grid.mesh
    return (X - x0[0]) ** 2 + (Y - x0[1]) ** 2 + (Z - x0[2]) ** 2 < R**2


def local_concentration(f, x0, radii) -> List[Tuple[float, float]]:
    """(R, ||f||_{L^{3,oo}(B(x0,R))}) for each radius."""
    out = []
    for R in radii:
        require(R > 0, f"radius must be positive (got {R})")
        out.append((float(R), weak_l3(f, mask=ball_mask(f.grid, x0, R))))
    return out


def ball_shrinking_check(g: GridField, N: float, x0, radii) -> VerifierReport:
    """||g||_{L^{3,oo}(B(x0,R))} <= C R N over a radius ladder, C fitted.

    g is the heat flow of the bounded split piece at cutoff N.
    """
    values = local_concentration(g, x0, radii)
    ratios = [v / (R * N) for R, v in values]
    fitted = max(ratios) if ratios else 0.0
    return VerifierReport(
        inequality_id="ball_shrinking",
        lhs=max((v for _, v in values), default=0.0),
        rhs=fitted * max(radii) * N if radii else 0.0,
        fitted_constant=fitted,
        passed=math.isfinite(fitted),
        flags=["empirical"],
        params={"N": N},
        details={"radii": [R for R, _ in values], "values": [v for _, v in values]},
    )
