"""
Nonnegative space-time test functions with closed-form derivatives.

bump:   psi(x) = exp(-1 / (1 - |x - c|^2 / rho^2)) inside B(c, rho), 0 outside.
cutoff: phi_R(x) = 1 on B(c, R), 0 outside B(c, 2R), radial quintic
        smoothstep in between (C^2, |grad| <= c/R, |hess| <= c/R^2).
Both carry the time bump eta(t) = exp(-1 / (1 - s^2)) on (t_on, t_off).
"""

from typing import Literal, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, PositiveFloat, model_validator

from .errors import InvalidInputError
from .field import Grid


class TestFunction(BaseModel):
    __test__ = False  # keep pytest from collecting the class

    model_config = ConfigDict(frozen=True)

    kind: Literal["bump", "cutoff"] = "bump"
    center: Tuple[float, float, float] = (0.0, 0.0, 0.0)
    radius: PositiveFloat = 1.0
    t_on: float
    t_off: float

    @model_validator(mode="after")
    def _check_window(self):
        if not (0.0 < self.t_on < self.t_off):
            raise ValueError(f"time window must satisfy 0 < t_on < t_off (got {self.t_on}, {self.t_off})")
        return self

    @property
    def support_radius(self) -> float:
        return self.radius if self.kind == "bump" else 2.0 * self.radius

    def require_inside(self, grid: Grid, T: float | None = None) -> None:
        reach = float(np.max(np.abs(self.center))) + self.support_radius
        if reach >= 0.5 * grid.L:
            raise InvalidInputError(f"test-function support reaches {reach:.4g}, box half-width is {grid.L / 2:.4g}")
        if T is not None and self.t_off >= T:
            raise InvalidInputError(f"test-function time support ends at {self.t_off} >= T={T}")

    # -------------------------------------------------------------- space part

    def _offsets(self, grid: Grid):
        X, Y, Z = grid.mesh
        c = self.center
        d = (X - c[0], Y - c[1], Z - c[2])
        r2 = d[0] ** 2 + d[1] ** 2 + d[2] ** 2
        return d, r2

    def _bump_parts(self, grid: Grid):
        d, r2 = self._offsets(grid)
        rho2 = self.radius**2
        q = r2 / rho2
        inside = q < 1.0
        one_minus = np.where(inside, 1.0 - q, 1.0)
        g = np.where(inside, np.exp(-1.0 / one_minus), 0.0)
        g1 = -g / one_minus**2
        g2 = g * (2.0 * q - 1.0) / one_minus**4
        return d, q, rho2, g, g1, g2

    def _cutoff_parts(self, grid: Grid):
        d, r2 = self._offsets(grid)
        R = self.radius
        r = np.sqrt(r2)
        s = np.clip((r - R) / R, 0.0, 1.0)
        ramp = (s > 0) & (s < 1)
        chi = 1.0 - (6 * s**5 - 15 * s**4 + 10 * s**3)
        dchi = np.where(ramp, -(30 * s**4 - 60 * s**3 + 30 * s**2) / R, 0.0)
        d2chi = np.where(ramp, -(120 * s**3 - 180 * s**2 + 60 * s) / R**2, 0.0)
        return d, r, chi, dchi, d2chi

    def space(self, grid: Grid) -> np.ndarray:
        if self.kind == "bump":
            return self._bump_parts(grid)[3]
        return self._cutoff_parts(grid)[2]

    def space_gradient(self, grid: Grid) -> np.ndarray:
        if self.kind == "bump":
            d, _, rho2, _, g1, _ = self._bump_parts(grid)
            return np.stack([g1 * 2.0 * di / rho2 for di in d])
        d, r, _, dchi, _ = self._cutoff_parts(grid)
        safe_r = np.where(r > 0, r, 1.0)
        return np.stack([dchi * di / safe_r for di in d])

    def space_laplacian(self, grid: Grid) -> np.ndarray:
        if self.kind == "bump":
            _, q, rho2, _, g1, g2 = self._bump_parts(grid)
            return 4.0 * q / rho2 * g2 + 6.0 / rho2 * g1
        _, r, _, dchi, d2chi = self._cutoff_parts(grid)
        safe_r = np.where(r > 0, r, 1.0)
        return d2chi + 2.0 * dchi / safe_r

    # --------------------------------------------------------------- time part

    def _s(self, t):
        return (2.0 * np.asarray(t, dtype=float) - self.t_on - self.t_off) / (self.t_off - self.t_on)

    def time(self, t) -> np.ndarray:
        s = self._s(t)
        inside = np.abs(s) < 1.0
        return np.where(inside, np.exp(-1.0 / np.where(inside, 1.0 - s**2, 1.0)), 0.0)

    def time_derivative(self, t) -> np.ndarray:
        s = self._s(t)
        inside = np.abs(s) < 1.0
        den = np.where(inside, 1.0 - s**2, 1.0)
        return np.where(inside, self.time(t) * (-2.0 * s / den**2) * 2.0 / (self.t_off - self.t_on), 0.0)


def random_tests(grid: Grid, T: float, count: int, seed: int = 0, kind: str = "bump") -> list:
    """count admissible test functions with support inside the box and (0, T)."""
    rng = np.random.default_rng(seed)
    half = 0.5 * grid.L
    tests = []
    while len(tests) < count:
        radius = float(rng.uniform(0.15, 0.35) * half)
        reach = radius if kind == "bump" else 2 * radius
        room = half - reach - 2 * grid.dx
        if room <= 0:
            continue
        center = tuple(float(c) for c in rng.uniform(-room, room, size=3))
        a, b = np.sort(rng.uniform(0.05 * T, 0.95 * T, size=2))
        if b - a < 0.2 * T:
            continue
        tests.append(TestFunction(kind=kind, center=center, radius=radius, t_on=float(a), t_off=float(b)))
    return tests
