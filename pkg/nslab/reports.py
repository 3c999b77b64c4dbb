"""
Verifier reports and artifact writers.

Every inequality check in the lab returns a VerifierReport. Batches become
pandas frames and land on disk as CSV; summaries are JSON with sorted keys so
identical runs produce identical bytes.
"""

import json
import math
import os
import tempfile
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional

import numpy as np
import pandas as pd
from pydantic import BaseModel, ConfigDict, Field, field_validator

REPORT_COLUMNS = ["inequality_id", "lhs", "rhs", "fitted_constant", "tolerance", "pass"]


class VerifierReport(BaseModel):
    """One inequality evaluated once: lhs <= rhs + tolerance."""

    model_config = ConfigDict(populate_by_name=True)

    inequality_id: str
    lhs: float
    rhs: float
    fitted_constant: Optional[float] = None
    tolerance: float = 0.0
    passed: bool = Field(alias="pass")
    counted: bool = True
    flags: List[str] = Field(default_factory=list)
    params: Dict[str, Any] = Field(default_factory=dict)
    provenance: Dict[str, Any] = Field(default_factory=dict)
    details: Dict[str, Any] = Field(default_factory=dict)

    @field_validator("lhs", "rhs", "tolerance", "fitted_constant", mode="before")
    @classmethod
    def _plain_float(cls, v):
        return None if v is None else float(v)

    @property
    def residual(self) -> float:
        return self.rhs - self.lhs

    def row(self) -> Dict[str, Any]:
        out: Dict[str, Any] = dict(self.params)
        out.update(
            {
                "inequality_id": self.inequality_id,
                "lhs": self.lhs,
                "rhs": self.rhs,
                "residual": self.residual,
                "fitted_constant": self.fitted_constant,
                "tolerance": self.tolerance,
                "pass": self.passed,
                "flags": ";".join(self.flags),
            }
        )
        return out

    def as_json(self) -> Dict[str, Any]:
        return to_jsonable(self.model_dump(by_alias=True))


def check(
    inequality_id: str,
    lhs: float,
    rhs: float,
    tolerance: float = 0.0,
    fitted_constant: Optional[float] = None,
    **extra,
) -> VerifierReport:
    """Build a report with the one-sided verdict lhs <= rhs + tolerance."""
    passed = bool(math.isfinite(lhs) and lhs <= rhs + tolerance)
    return VerifierReport(
        inequality_id=inequality_id,
        lhs=lhs,
        rhs=rhs,
        tolerance=tolerance,
        fitted_constant=fitted_constant,
        passed=passed,
        **extra,
    )


def trivial_pass(inequality_id: str, reason: str, **extra) -> VerifierReport:
    """0 <= 0 style boundary cases, passed by convention and flagged."""
    flags = list(extra.pop("flags", [])) + ["pass_by_convention"]
    details = dict(extra.pop("details", {}))
    details["reason"] = reason
    return VerifierReport(
        inequality_id=inequality_id, lhs=0.0, rhs=0.0, passed=True, flags=flags, details=details, **extra
    )


def merge_reports(inequality_id: str, parts: List[VerifierReport], **extra) -> VerifierReport:
    """Fold several sub-checks into one report keyed on the worst lhs/rhs ratio."""
    counted = [p for p in parts if p.counted]
    worst = 0.0
    for p in counted:
        if p.rhs > 0:
            worst = max(worst, p.lhs / p.rhs)
        elif p.lhs > p.tolerance:
            worst = math.inf
    flags = sorted({f for p in parts for f in p.flags})
    details = dict(extra.pop("details", {}))
    details["checks"] = [p.as_json() for p in parts]
    return VerifierReport(
        inequality_id=inequality_id,
        lhs=worst,
        rhs=1.0,
        passed=all(p.passed for p in counted),
        flags=flags + list(extra.pop("flags", [])),
        details=details,
        **extra,
    )


def tally(reports: Iterable[VerifierReport]) -> Dict[str, int]:
    counted = [r for r in reports if r.counted]
    passed = sum(1 for r in counted if r.passed)
    return {"pass_count": passed, "fail_count": len(counted) - passed}


# =============================================================================
# SERIALIZATION
# =============================================================================


def to_jsonable(value: Any) -> Any:
    """numpy scalars/arrays and nested containers to plain JSON types."""
    if isinstance(value, dict):
        return {str(k): to_jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [to_jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return to_jsonable(value.tolist())
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, BaseModel):
        return to_jsonable(value.model_dump(by_alias=True))
    if isinstance(value, Path):
        return str(value)
    return value


def dumps(payload: Any) -> str:
    return json.dumps(to_jsonable(payload), sort_keys=True, indent=2)


def atomic_write_bytes(path: Path, payload: bytes) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(payload)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def atomic_write_text(path: Path, text: str) -> Path:
    return atomic_write_bytes(path, text.encode("utf-8"))


def write_json(path: Path, payload: Any) -> Path:
    return atomic_write_text(path, dumps(payload) + "\n")


def write_frame(path: Path, frame: pd.DataFrame, append: bool = False) -> Path:
    """Write a DataFrame as CSV; append re-reads and concatenates first."""
    path = Path(path)
    if append and path.exists():
        frame = pd.concat([pd.read_csv(path), frame], ignore_index=True)
    return atomic_write_text(path, frame.to_csv(index=False))


def reports_frame(reports: Iterable[VerifierReport]) -> pd.DataFrame:
    rows = [r.row() for r in reports]
    if not rows:
        return pd.DataFrame(columns=REPORT_COLUMNS)
    frame = pd.DataFrame(rows)
    leading = [c for c in frame.columns if c not in REPORT_COLUMNS + ["residual", "flags"]]
    return frame[leading + REPORT_COLUMNS + ["residual", "flags"]]


def write_reports_csv(path: Path, reports: Iterable[VerifierReport], append: bool = False) -> Path:
    return write_frame(path, reports_frame(reports), append=append)
