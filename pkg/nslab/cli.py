"""
Command-line surface.

    python -m nslab run manifests/kato_taylor_green.json --output-dir runs/
    python -m nslab run manifest.json --dry-run
    python -m nslab compare runs/a/summary.json runs/b/summary.json --output table.csv

Exit codes: 0 every counted check passed, 1 a check failed, 2 a run failed
(no contraction, divergence), 3 invalid input.
"""

import json
import logging
import math
import sys
import time
from pathlib import Path
from typing import Any, Dict, List, Optional

import pandas as pd
import typer
from pydantic import ValidationError

from .errors import InvalidInputError, LabError
from .experiments import ExperimentResult, run_experiment
from .manifest import RunManifest, describe_validation_error, load_manifest
from .reports import VerifierReport, dumps, tally, write_frame, write_json, write_reports_csv
from .settings import configure_logging, default_output_dir

logger = logging.getLogger(__name__)

EXIT_PASS = 0
EXIT_CHECK_FAILURE = 1
EXIT_RUN_FAILURE = 2
EXIT_INVALID_INPUT = 3

COMPARE_COLUMNS = ["run", "inequality_id", "index", "lhs", "rhs", "fitted_constant", "pass"]

app = typer.Typer(add_completion=False, help="Numerical lab for Navier-Stokes with weak L3 initial data.")


def _finite_or_none(value: Any) -> Any:
    if isinstance(value, float) and not math.isfinite(value):
        return None
    return value


def error_payload(error: Exception) -> Dict[str, Any]:
    """Machine-readable {error, type, details} for the invalid-input exit."""
    if isinstance(error, ValidationError):
        return {"error": "invalid manifest", "type": "ValidationError", "details": describe_validation_error(error)}
    return {"error": str(error), "type": type(error).__name__, "details": []}


def _fail_input(error: Exception) -> None:
    logger.error(f"❌ CLI: invalid input ({type(error).__name__})")
    typer.echo(json.dumps(error_payload(error), sort_keys=True))
    raise typer.Exit(code=EXIT_INVALID_INPUT)


def check_row(report: VerifierReport) -> Dict[str, Any]:
    return {
        "inequality_id": report.inequality_id,
        "lhs": _finite_or_none(report.lhs),
        "rhs": _finite_or_none(report.rhs),
        "fitted_constant": _finite_or_none(report.fitted_constant),
        "pass": report.passed,
        "counted": report.counted,
        "flags": list(report.flags),
        "params": report.params,
    }


def build_summary(manifest: RunManifest, result: ExperimentResult) -> Dict[str, Any]:
    counts = tally(result.reports)
    return {
        "experiment": manifest.experiment,
        "label": manifest.run_label(),
        "manifest_hash": manifest.digest,
        "pass_count": counts["pass_count"],
        "fail_count": counts["fail_count"],
        "fitted_constants": {k: _finite_or_none(v) for k, v in result.fitted_constants.items()},
        "run_failures": list(result.run_failures),
        "flags": result.flags,
        "checks": [check_row(r) for r in result.reports],
    }


def exit_code_for(result: ExperimentResult) -> int:
    if result.run_failures:
        return EXIT_RUN_FAILURE
    if tally(result.reports)["fail_count"]:
        return EXIT_CHECK_FAILURE
    return EXIT_PASS


def write_artifacts(out_dir: Path, manifest: RunManifest, result: ExperimentResult, wall_time: float) -> Dict[str, Any]:
    """Reports CSV, plot series, traces, summary.json and timing; every file via atomic rename."""
    out_dir.mkdir(parents=True, exist_ok=True)
    write_json(out_dir / "manifest.json", manifest.model_dump(mode="json"))
    write_reports_csv(out_dir / f"{manifest.experiment}_reports.csv", result.reports)
    for name, frame in sorted(result.series.items()):
        write_frame(out_dir / "series" / f"{name}.csv", frame)
    for name, trace in sorted(result.traces.items()):
        trace.save(out_dir / "traces" / name)
    summary = build_summary(manifest, result)
    if manifest.deterministic_summary:
        write_json(out_dir / "timing.json", {"wall_time": wall_time})
    else:
        summary["wall_time"] = wall_time
    write_json(out_dir / "summary.json", summary)
    return summary


@app.command()
def run(
    manifest_path: Path = typer.Argument(..., help="Run manifest JSON"),
    output_dir: Optional[Path] = typer.Option(None, "--output-dir", help="Overrides the manifest output_dir"),
    dry_run: bool = typer.Option(False, "--dry-run", help="Validate and print the normalized manifest only"),
    log_level: Optional[str] = typer.Option(None, "--log-level", help="Overrides NSLAB_LOG_LEVEL"),
) -> None:
    """Run the experiment a manifest names and write its artifacts."""
    configure_logging(log_level)
    try:
        manifest = load_manifest(manifest_path)
    except (ValidationError, InvalidInputError) as e:
        _fail_input(e)

    if dry_run:
        typer.echo(manifest.canonical_json())
        logger.info(f"✅ CLI: manifest valid ({manifest.digest[:12]})")
        return

    out_dir = Path(output_dir or manifest.output_dir or default_output_dir()) / manifest.run_label()
    logger.info(f"🚀 CLI: {manifest.experiment} on n={manifest.grid.n} -> {out_dir}")
    started = time.perf_counter()
    try:
        result = run_experiment(manifest)
    except (ValidationError, InvalidInputError) as e:
        _fail_input(e)
    except LabError as e:
        logger.error(f"❌ CLI: run failed: {e}")
        result = ExperimentResult(experiment=manifest.experiment, run_failures=[f"{type(e).__name__}: {e}"])
    except Exception as e:
        logger.exception(f"💥 CLI: unexpected {type(e).__name__} during run")
        result = ExperimentResult(experiment=manifest.experiment, run_failures=[f"unexpected {type(e).__name__}: {e}"])
    wall_time = time.perf_counter() - started

    summary = write_artifacts(out_dir, manifest, result, wall_time)
    code = exit_code_for(result)
    marker = "✅" if code == EXIT_PASS else "⚠️"
    logger.info(
        f"{marker} CLI: {summary['pass_count']} passed, {summary['fail_count']} failed, "
        f"{len(summary['run_failures'])} run failures in {wall_time:.1f}s"
    )
    typer.echo(str(out_dir / "summary.json"))
    raise typer.Exit(code=code)


def compare_frame(summaries: List[Dict[str, Any]]) -> pd.DataFrame:
    """One row per (run, check); index numbers repeated ids within a run."""
    kinds = {s.get("experiment") for s in summaries}
    if len(kinds) != 1:
        raise InvalidInputError(f"summaries mix experiment kinds: {sorted(str(k) for k in kinds)}")
    rows = []
    for s in summaries:
        seen: Dict[str, int] = {}
        for c in s.get("checks", []):
            idx = seen.get(c["inequality_id"], 0)
            seen[c["inequality_id"]] = idx + 1
            rows.append(
                {
                    "run": s.get("label"),
                    "inequality_id": c["inequality_id"],
                    "index": idx,
                    "lhs": c.get("lhs"),
                    "rhs": c.get("rhs"),
                    "fitted_constant": c.get("fitted_constant"),
                    "pass": c.get("pass"),
                }
            )
    return pd.DataFrame(rows, columns=COMPARE_COLUMNS)


@app.command()
def compare(
    paths: List[Path] = typer.Argument(..., help="Two or more summary.json files"),
    output: Optional[Path] = typer.Option(None, "--output", help="CSV destination; stdout when omitted"),
) -> None:
    """Align the checks of several runs of one experiment in a long table."""
    configure_logging()
    try:
        if len(paths) < 2:
            raise InvalidInputError("compare needs at least two summaries")
        summaries = []
        for p in paths:
            try:
                summaries.append(json.loads(Path(p).read_text()))
            except (OSError, json.JSONDecodeError) as e:
                raise InvalidInputError(f"cannot read summary {p}: {e}") from e
        frame = compare_frame(summaries)
    except InvalidInputError as e:
        _fail_input(e)

    if output is None:
        typer.echo(frame.to_csv(index=False), nl=False)
    else:
        write_frame(output, frame)
        logger.info(f"📊 CLI: compared {len(paths)} runs into {output}")


@app.command()
def schema() -> None:
    """Print the manifest JSON schema."""
    typer.echo(dumps(RunManifest.model_json_schema()))


def main() -> None:
    app()


if __name__ == "__main__":
    sys.exit(main())
