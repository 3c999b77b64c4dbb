"""
Time grids and field traces.

A TimeGrid lists positive sample times t_1 < ... < t_m = T; traces are stored
on the nodes (0, t_1, ..., t_m) so every trace carries its initial value.
Geometric grids put t_j = T * ratio**(m - j) and resolve the t -> 0 end where
the weighted norms are singular.
"""

import json
import logging
from functools import cached_property
from pathlib import Path
from typing import Callable, Iterator, List, Literal, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, field_validator, model_validator
from scipy.integrate import cumulative_trapezoid

from .errors import InvalidInputError
from .field import Grid, GridField, lebesgue_norm, load_snapshot, save_snapshot
from .reports import write_json

logger = logging.getLogger(__name__)


class TimeGrid(BaseModel):
    model_config = ConfigDict(frozen=True, ignored_types=(cached_property,))

    kind: Literal["uniform", "geometric"] = "geometric"
    T: float = 1.0
    samples: int = 16
    ratio: float = 0.8

    @field_validator("T")
    @classmethod
    def _check_T(cls, T: float) -> float:
        if not (T > 0 and np.isfinite(T)):
            raise ValueError(f"T must be positive and finite (got {T})")
        return T

    @field_validator("samples")
    @classmethod
    def _check_samples(cls, m: int) -> int:
        if m < 2:
            raise ValueError(f"need at least 2 time samples (got {m})")
        return m

    @model_validator(mode="after")
    def _check_ratio(self):
        if self.kind == "geometric" and not (0.0 < self.ratio < 1.0):
            raise ValueError(f"geometric ratio must lie in (0, 1) (got {self.ratio})")
        return self

    @cached_property
    def times(self) -> np.ndarray:
        """Positive sample times, ascending, last one equal to T."""
        j = np.arange(1, self.samples + 1)
        if self.kind == "uniform":
            return self.T * j / self.samples
        return self.T * self.ratio ** (self.samples - j).astype(float)

    @cached_property
    def nodes(self) -> np.ndarray:
        return np.concatenate([[0.0], self.times])

    @property
    def steps(self) -> np.ndarray:
        return np.diff(self.nodes)

    def refine(self) -> "TimeGrid":
        """Nested refinement: every old node is a node of the result."""
        if self.kind == "uniform":
            return self.model_copy(update={"samples": 2 * self.samples})
        return self.model_copy(update={"samples": 2 * self.samples - 1, "ratio": float(np.sqrt(self.ratio))})

    def with_T(self, T: float) -> "TimeGrid":
        return TimeGrid(kind=self.kind, T=T, samples=self.samples, ratio=self.ratio)

    def index_of(self, t: float) -> int:
        """Node index of t; t must be a node up to rounding."""
        idx = int(np.argmin(np.abs(self.nodes - t)))
        if not np.isclose(self.nodes[idx], t, rtol=1e-12, atol=1e-15):
            raise InvalidInputError(f"t={t} is not a node of the time grid")
        return idx

    def cumulative(self, values: np.ndarray) -> np.ndarray:
        """Trapezoid integral from 0 to every node (first entry 0)."""
        return cumulative_trapezoid(np.asarray(values, dtype=float), self.nodes, axis=0, initial=0.0)

    def manifest(self) -> dict:
        return {
            "kind": self.kind,
            "T": self.T,
            "samples": self.samples,
            "ratio": self.ratio,
            "times": self.times.tolist(),
        }


class FieldTrace(BaseModel):
    """Fields on the nodes of a TimeGrid, data[j] sampled at nodes[j]."""

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    grid: Grid
    timegrid: TimeGrid
    data: np.ndarray

    @model_validator(mode="after")
    def _check_data(self):
        expected = (len(self.timegrid.nodes), 3) + self.grid.shape
        arr = np.ascontiguousarray(self.data, dtype=np.float64)
        if arr.shape != expected:
            raise ValueError(f"trace data has shape {arr.shape}, expected {expected}")
        if not np.all(np.isfinite(arr)):
            raise ValueError("trace contains non-finite samples")
        arr.flags.writeable = False
        object.__setattr__(self, "data", arr)
        return self

    @classmethod
    def zeros(cls, grid: Grid, timegrid: TimeGrid) -> "FieldTrace":
        return cls(grid=grid, timegrid=timegrid, data=np.zeros((len(timegrid.nodes), 3) + grid.shape))

    @classmethod
    def from_function(cls, grid: Grid, timegrid: TimeGrid, fn: Callable[[float], GridField]) -> "FieldTrace":
        return cls(grid=grid, timegrid=timegrid, data=np.stack([fn(float(t)).data for t in timegrid.nodes]))

    @classmethod
    def constant(cls, f: GridField, timegrid: TimeGrid) -> "FieldTrace":
        data = np.broadcast_to(f.data, (len(timegrid.nodes),) + f.data.shape)
        return cls(grid=f.grid, timegrid=timegrid, data=data)

    @property
    def times(self) -> np.ndarray:
        return self.timegrid.nodes

    def __len__(self) -> int:
        return self.data.shape[0]

    def __iter__(self) -> Iterator[GridField]:
        for j in range(len(self)):
            yield self.at(j)

    def at(self, j: int) -> GridField:
        return GridField(grid=self.grid, data=self.data[j])

    def at_time(self, t: float) -> GridField:
        return self.at(self.timegrid.index_of(t))

    def aligned_with(self, other: "FieldTrace") -> bool:
        return self.grid == other.grid and np.array_equal(self.times, other.times)

    def require_aligned(self, other: "FieldTrace") -> None:
        if not self.aligned_with(other):
            raise InvalidInputError("traces are not aligned on the same grid and time nodes")

    def __add__(self, other: "FieldTrace") -> "FieldTrace":
        self.require_aligned(other)
        return FieldTrace(grid=self.grid, timegrid=self.timegrid, data=self.data + other.data)

    def __sub__(self, other: "FieldTrace") -> "FieldTrace":
        self.require_aligned(other)
        return FieldTrace(grid=self.grid, timegrid=self.timegrid, data=self.data - other.data)

    def scale(self, c: float) -> "FieldTrace":
        return FieldTrace(grid=self.grid, timegrid=self.timegrid, data=c * self.data)

    def norms(self, s: float) -> np.ndarray:
        """Grid L_s norm at every node."""
        return np.array([lebesgue_norm(f, s) for f in self])

    def save(self, directory: Path, prefix: str = "snap") -> Path:
        directory = Path(directory)
        for j, f in enumerate(self):
            save_snapshot(f, directory / f"{prefix}_{j:04d}")
        write_json(directory / "timegrid.json", self.timegrid.manifest())
        logger.debug(f"💾 TRACE: wrote {len(self)} snapshots to {directory}")
        return directory

    @classmethod
    def load(cls, directory: Path, prefix: str = "snap") -> "FieldTrace":
        directory = Path(directory)
        meta = json.loads((directory / "timegrid.json").read_text())
        timegrid = TimeGrid(kind=meta["kind"], T=meta["T"], samples=meta["samples"], ratio=meta["ratio"])
        fields: List[GridField] = [
            load_snapshot(directory / f"{prefix}_{j:04d}") for j in range(len(timegrid.nodes))
        ]
        return cls(grid=fields[0].grid, timegrid=timegrid, data=np.stack([f.data for f in fields]))


def weighted_sup(trace: FieldTrace, s: float, power: float, upto: Optional[float] = None) -> float:
    """max over positive nodes t <= upto of t**power * ||trace(t)||_{L_s}."""
    times = trace.times[1:]
    keep = times <= (upto if upto is not None else times[-1]) * (1 + 1e-12)
    if not np.any(keep):
        raise InvalidInputError("no trace samples inside the requested window")
    values = [times[j] ** power * lebesgue_norm(trace.at(j + 1), s) for j in np.flatnonzero(keep)]
    return float(max(values))
