"""
Tests for time grids and field traces.
"""

import numpy as np
import pytest
from pydantic import ValidationError

from nslab.errors import InvalidInputError
from nslab.field import GridField
from nslab.timegrid import FieldTrace, TimeGrid, weighted_sup


class TestTimeGrid:
    """Sample times and nodes."""

    def test_geometric_times(self):
        tg = TimeGrid(kind="geometric", T=1.0, samples=4, ratio=0.5)
        assert np.allclose(tg.times, [0.125, 0.25, 0.5, 1.0])
        assert tg.nodes[0] == 0.0
        assert len(tg.nodes) == 5

    def test_uniform_times(self):
        tg = TimeGrid(kind="uniform", T=2.0, samples=4)
        assert np.allclose(tg.times, [0.5, 1.0, 1.5, 2.0])
        assert np.allclose(tg.steps, 0.5)

    @pytest.mark.parametrize(
        "kwargs",
        [{"T": 0.0}, {"T": float("inf")}, {"samples": 1}, {"kind": "geometric", "ratio": 1.0}],
    )
    def test_invalid_grids_rejected(self, kwargs):
        with pytest.raises(ValidationError):
            TimeGrid(**kwargs)

    @pytest.mark.parametrize("kind", ["uniform", "geometric"])
    def test_refinement_is_nested(self, kind):
        tg = TimeGrid(kind=kind, T=0.5, samples=6, ratio=0.7)
        fine = tg.refine()
        for t in tg.nodes:
            assert np.min(np.abs(fine.nodes - t)) <= 1e-14
        assert len(fine.nodes) > len(tg.nodes)

    def test_index_of(self):
        tg = TimeGrid(kind="uniform", T=1.0, samples=4)
        assert tg.index_of(0.75) == 3
        with pytest.raises(InvalidInputError):
            tg.index_of(0.6)

    def test_cumulative_integrates_linear_exactly(self):
        tg = TimeGrid(kind="geometric", T=2.0, samples=10, ratio=0.6)
        integral = tg.cumulative(3.0 * tg.nodes)
        assert integral[0] == 0.0
        assert integral[-1] == pytest.approx(6.0, rel=1e-12)

    def test_manifest_lists_times(self):
        tg = TimeGrid(kind="uniform", T=1.0, samples=2)
        assert tg.manifest() == {"kind": "uniform", "T": 1.0, "samples": 2, "ratio": 0.8, "times": [0.5, 1.0]}


class TestFieldTrace:
    """Fields on the nodes of a time grid."""

    def test_shape_checked(self, grid16, short_times):
        with pytest.raises(ValidationError):
            FieldTrace(grid=grid16, timegrid=short_times, data=np.zeros((2, 3) + grid16.shape))

    def test_arithmetic_requires_alignment(self, grid16, short_times):
        a = FieldTrace.zeros(grid16, short_times)
        b = FieldTrace.zeros(grid16, short_times.refine())
        with pytest.raises(InvalidInputError):
            a + b

    def test_constant_trace(self, taylor_green16, short_times):
        trace = FieldTrace.constant(taylor_green16, short_times)
        assert len(trace) == len(short_times.nodes)
        assert np.array_equal(trace.at_time(short_times.T).data, taylor_green16.data)

    def test_save_and_load(self, tmp_path, taylor_green16, short_times):
        trace = FieldTrace.from_function(taylor_green16.grid, short_times, lambda t: taylor_green16.scale(1.0 + t))
        trace.save(tmp_path / "trace")
        loaded = FieldTrace.load(tmp_path / "trace")
        assert loaded.timegrid == short_times
        assert np.array_equal(loaded.data, trace.data)

    def test_weighted_sup(self, grid16, short_times):
        one = GridField.from_components(grid16, [1.0, 0.0, 0.0])
        trace = FieldTrace.constant(one, short_times)
        norm = trace.norms(5.0)[1]
        assert weighted_sup(trace, 5.0, 0.2) == pytest.approx(short_times.T**0.2 * norm)
        with pytest.raises(InvalidInputError):
            weighted_sup(trace, 5.0, 0.2, upto=short_times.times[0] / 2)
