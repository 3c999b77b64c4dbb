"""
Run manifest: the single JSON file that fixes a run.

    {
      "schema_version": 1,
      "experiment": "kato",
      "grid": {"n": 32, "L": 6.283185307179586},
      "timegrid": {"kind": "geometric", "T": 0.5, "samples": 24, "ratio": 0.8},
      "initial_data": {"kind": "taylor_green", "amplitude": 0.5},
      "thresholds": {"eps0": 0.5},
      "seed": 0
    }
"""

import hashlib
import json
from pathlib import Path
from typing import List, Literal, Optional, Tuple

from pydantic import BaseModel, ConfigDict, Field, PositiveFloat, PositiveInt, ValidationError, field_validator

from .errors import ManifestError
from .field import Grid
from .initdata import InitialDataSpec
from .lorentz import Thresholds
from .reports import dumps
from .timegrid import TimeGrid

SCHEMA_VERSION = 1

Experiment = Literal["semigroup", "split", "kato", "energy", "scaling", "stability", "kozono_yamazaki", "all"]


class ExperimentOptions(BaseModel):
    """Knobs of the experiment suites; defaults keep a run at desk scale."""

    model_config = ConfigDict(frozen=True)

    kmax: PositiveInt = 20
    tol: PositiveFloat = 1e-8
    cutoffs: List[PositiveFloat] = Field(default_factory=lambda: [0.5, 1.0, 2.0])
    split_fields: PositiveInt = 4
    exponent_triples: List[Tuple[float, float, float]] = Field(
        default_factory=lambda: [(2.0, 3.0, 4.0), (2.0, 3.0, 6.0), (1.5, 3.0, 5.0)]
    )
    test_functions: PositiveInt = 10
    sequence_count: PositiveInt = 10
    amplitude_ladder: List[PositiveFloat] = Field(default_factory=lambda: [0.5, 1.0, 2.0])
    sweep_start: PositiveFloat = 0.25
    sweep_bisections: int = 3
    radii: List[PositiveFloat] = Field(default_factory=list)
    refine: bool = True
    sweep: bool = False
    save_traces: bool = True


class RunManifest(BaseModel):
    model_config = ConfigDict(frozen=True)

    schema_version: int = SCHEMA_VERSION
    experiment: Experiment
    grid: Grid
    timegrid: TimeGrid = Field(default_factory=TimeGrid)
    initial_data: InitialDataSpec = Field(default_factory=InitialDataSpec)
    thresholds: Thresholds = Field(default_factory=Thresholds)
    options: ExperimentOptions = Field(default_factory=ExperimentOptions)
    output_dir: Optional[str] = None
    seed: int = 0
    label: Optional[str] = None
    deterministic_summary: bool = True

    @field_validator("schema_version")
    @classmethod
    def _check_schema(cls, v: int) -> int:
        if v != SCHEMA_VERSION:
            raise ValueError(f"unsupported schema_version {v} (expected {SCHEMA_VERSION})")
        return v

    def canonical_json(self) -> str:
        return dumps(self.model_dump(mode="json"))

    @property
    def digest(self) -> str:
        """sha256 of the canonical JSON; every summary carries it."""
        return hashlib.sha256(self.canonical_json().encode("utf-8")).hexdigest()

    def run_label(self) -> str:
        return self.label or f"{self.experiment}-{self.digest[:12]}"


def load_manifest(path: Path) -> RunManifest:
    """Parse and validate a manifest file; pydantic errors pass through unchanged."""
    path = Path(path)
    try:
        raw = json.loads(path.read_text())
    except FileNotFoundError as e:
        raise ManifestError(f"manifest not found: {path}") from e
    except json.JSONDecodeError as e:
        raise ManifestError(f"manifest is not valid JSON: {e.msg} (line {e.lineno})") from e
    if not isinstance(raw, dict):
        raise ManifestError("manifest must be a JSON object")
    return RunManifest.model_validate(raw)


def describe_validation_error(error: ValidationError) -> List[dict]:
    """Compact, JSON-ready list of the violated invariants."""
    return [
        {"location": ".".join(str(p) for p in item["loc"]), "message": item["msg"]}
        for item in error.errors(include_url=False)
    ]
