"""
Tests for the experiment suites.

Validates:
- Sequence gap bookkeeping (shrink factor, monotonicity, coinciding members)
- Stability pairings over short sequences
- Contraction at the predicted horizon for two cutoffs and two amplitudes
- Every suite end to end on desk-scale manifests
- The shipped manifests, with the scaling exponent band on the vortex ladder
"""

from pathlib import Path

import pytest

from nslab.experiments import (
    SEQUENCE_TESTS,
    Context,
    _sequence_reports,
    horizon_contraction,
    run_experiment,
    sequence_gap_report,
)
from nslab.manifest import RunManifest, load_manifest

MANIFESTS = Path(__file__).resolve().parents[1] / "manifests"

SMALL = {
    "schema_version": 1,
    "grid": {"n": 16, "L": 6.283185307179586},
    "timegrid": {"kind": "geometric", "T": 0.2, "samples": 8, "ratio": 0.7},
    "initial_data": {"kind": "taylor_green", "amplitude": 0.2},
    "options": {"save_traces": False, "test_functions": 2, "split_fields": 1, "sequence_count": 3},
    "seed": 0,
}


def _manifest(experiment: str, **overrides) -> RunManifest:
    return RunManifest.model_validate(SMALL | {"experiment": experiment} | overrides)


def _ids(result) -> set:
    return {r.inequality_id for r in result.reports}


class TestSequenceGapReport:
    def test_shrinking_sequence_passes(self):
        report = sequence_gap_report("gap", [2, 6, 10], [1.0, 0.6, 0.3], slack=0.1, shrink=0.5)
        assert report.passed
        assert report.rhs == pytest.approx(0.5)
        assert report.fitted_constant == pytest.approx(0.3)
        assert report.flags == []

    def test_insufficient_shrink_fails(self):
        report = sequence_gap_report("gap", [2, 6, 10], [1.0, 0.8, 0.7], slack=0.1, shrink=0.5)
        assert not report.passed

    def test_rise_beyond_slack_fails(self):
        """The last gap alone is small, but a member in between jumps back up."""
        report = sequence_gap_report("gap", [1, 2, 3, 4], [1.0, 0.4, 0.9, 0.2], slack=0.1)
        assert not report.passed
        assert "not_monotone" in report.flags
        assert report.details["worst_rise"] == pytest.approx(0.5)

    def test_rise_within_slack_passes(self):
        report = sequence_gap_report("gap", [1, 2, 3], [1.0, 0.5, 0.55], slack=0.1)
        assert report.passed

    def test_two_members(self):
        report = sequence_gap_report("gap", [1, 2], [1.0, 0.4], slack=0.1, shrink=0.5)
        assert report.passed
        assert report.details["k"] == [1, 2]

    def test_coinciding_members_pass_by_convention(self):
        report = sequence_gap_report("gap", [1, 2], [0.0, 0.0], slack=0.1)
        assert report.passed
        assert "pass_by_convention" in report.flags


class TestStabilityPairings:
    def test_every_member_is_paired_against_fixed_tests(self):
        ctx = Context.build(_manifest("stability"))
        result = _sequence_reports(ctx, "mollified_sequence")
        assert not result.run_failures
        assert result.series["semigroup_pairings"]["k"].tolist() == [1, 2, 3]
        assert result.series["solution_pairings"]["k"].tolist() == [2, 3]
        semigroup = next(r for r in result.reports if r.inequality_id == "semigroup_pairing_gap")
        assert semigroup.params["tests"] == SEQUENCE_TESTS

    def test_two_member_sequence_keeps_both_runs(self):
        options = SMALL["options"] | {"sequence_count": 2}
        ctx = Context.build(_manifest("stability", options=options))
        result = _sequence_reports(ctx, "mollified_sequence")
        assert result.series["solution_pairings"]["k"].tolist() == [1, 2]
        solution = next(r for r in result.reports if r.inequality_id == "solution_pairing_gap")
        assert solution.details["k"] == [1, 2]


class TestHorizonContraction:
    def test_contracts_at_two_cutoffs_and_two_amplitudes(self):
        ctx = Context.build(_manifest("kozono_yamazaki", thresholds={"eps3": 10.0}))
        N = 0.5 * ctx.u0.sup_norm()
        result = horizon_contraction(ctx, N)
        cases = [r for r in result.reports if r.inequality_id == "horizon_contraction"]
        assert len(cases) == 4
        assert {r.params["N"] for r in cases} == {N, 2 * N}
        assert {r.params["amplitude_factor"] for r in cases} == {1, 2}
        assert all(r.passed for r in cases)
        assert all(r.fitted_constant < 1.0 for r in cases)
        assert not result.run_failures
        formula = next(r for r in result.reports if r.inequality_id == "horizon_scaling")
        assert not formula.counted
        assert "formula" in formula.flags


class TestSuitesEndToEnd:
    """Each suite on n = 16; verdicts depend on resolution, so only the shape is pinned."""

    def test_semigroup(self):
        data = {"kind": "vortex_homogeneous", "amplitude": 0.2}
        result = run_experiment(_manifest("semigroup", initial_data=data))
        assert {"semigroup_decay", "semigroup_weak_bound", "initial_convergence"} <= _ids(result)
        assert "decay" in result.series

    def test_split(self):
        result = run_experiment(_manifest("split"))
        assert {"inverse_distance_weak_norm", "inverse_distance_tail_l2"} <= _ids(result)
        tail = next(r for r in result.reports if r.inequality_id == "inverse_distance_tail_l2")
        assert not tail.counted and "coarse_grid" in tail.flags

    def test_energy(self):
        result = run_experiment(_manifest("energy"))
        assert not result.run_failures
        assert {"energy_inequality", "split_energy"} <= _ids(result)
        assert "transport" in result.series["energy"].columns

    def test_scaling(self):
        result = run_experiment(_manifest("scaling"))
        assert not result.run_failures
        assert "apriori_scaling" in _ids(result)
        assert len(result.series["ladder"]) == 3

    def test_stability(self):
        result = run_experiment(_manifest("stability"))
        assert not result.run_failures
        sequences = {r.params["sequence"] for r in result.reports}
        assert sequences == {"mollified_sequence", "oscillatory_sequence"}

    def test_kozono_yamazaki(self):
        result = run_experiment(_manifest("kozono_yamazaki", thresholds={"eps3": 10.0}))
        assert not result.run_failures
        assert "horizon_contraction" in _ids(result)
        assert "horizon.max_contraction_gain" in result.fitted_constants


class TestShippedManifests:
    @pytest.mark.parametrize("path", sorted(MANIFESTS.glob("*.json")), ids=lambda p: p.stem)
    def test_loads(self, path):
        assert load_manifest(path).schema_version == 1

    def test_energy_cutoffs(self):
        m = load_manifest(MANIFESTS / "energy_taylor_green.json")
        assert m.options.cutoffs == [0.5, 1.0, 2.0]
        assert m.initial_data.amplitude > 1.0

    def test_stability_sequence_count(self):
        assert load_manifest(MANIFESTS / "stability_sequences.json").options.sequence_count == 10

    @pytest.mark.slow
    def test_scaling_exponent_on_vortex_ladder(self):
        m = load_manifest(MANIFESTS / "scaling_ladder.json")
        assert m.initial_data.kind == "vortex_homogeneous"
        result = run_experiment(m)
        assert not result.run_failures
        betas = result.series["ladder"]["beta"].tolist()
        assert len(betas) == 3
        assert all(0.4 <= b <= 0.6 for b in betas)
