"""
Tests for the heat semigroup.

Validates:
- Closed-form Gaussian and single-mode evolution
- Semigroup law and the heat energy identity
- Decay report bookkeeping
- Initial-time convergence and weak-* pairings
- Scale invariance of the Kato norm and of the vortex decay profile
"""

import math

import numpy as np
import pytest

from nslab.bumps import TestFunction, random_tests
from nslab.errors import InvalidInputError
from nslab.field import Grid, GridField, ns_rescale
from nslab.heat import (
    heat_energy_identity,
    heat_energy_terms,
    heat_evolve,
    heat_trace,
    initial_convergence_check,
    initial_weakstar_trace,
    kato_norm,
    semigroup_decay_report,
    uniform_local_norm,
    weakstar_pairing_trace,
)
from nslab.initdata import InitialDataSpec, inverse_distance, make_initial_data, make_sequence, vortex_profile
from nslab.lorentz import calderon_split, weak_l3
from nslab.timegrid import TimeGrid


class TestHeatEvolution:
    """S(t) = exp(t Laplacian)."""

    def test_single_mode_decays_exactly(self, grid16):
        X, _, _ = grid16.mesh
        f = GridField.from_components(grid16, [0.0, np.sin(2 * X), 0.0])
        out = heat_evolve(f, 0.3)
        assert np.allclose(out.data, math.exp(-4 * 0.3) * f.data, atol=1e-13)

    def test_gaussian_closed_form(self, grid32):
        """Periodic images of the Gaussian stay below 1e-7 on this box."""
        a, t = 0.1, 0.05
        X, Y, Z = grid32.mesh
        r2 = X**2 + Y**2 + Z**2
        f = GridField.from_components(grid32, [np.exp(-r2 / (4 * a)), 0.0, 0.0])
        expected = (a / (a + t)) ** 1.5 * np.exp(-r2 / (4 * (a + t)))
        assert np.max(np.abs(heat_evolve(f, t).data[0] - expected)) < 1e-6

    def test_semigroup_law(self, taylor_green16):
        once = heat_evolve(heat_evolve(taylor_green16, 0.1), 0.2)
        both = heat_evolve(taylor_green16, 0.3)
        assert np.max(np.abs(once.data - both.data)) < 1e-12

    def test_time_zero_is_identity(self, taylor_green16):
        assert np.array_equal(heat_evolve(taylor_green16, 0.0).data, taylor_green16.data)

    def test_negative_time_rejected(self, taylor_green16):
        with pytest.raises(InvalidInputError):
            heat_evolve(taylor_green16, -0.1)

    def test_trace_matches_pointwise_evolution(self, taylor_green16, short_times):
        trace = heat_trace(taylor_green16, short_times)
        j = len(short_times.nodes) // 2
        assert np.allclose(trace.data[j], heat_evolve(taylor_green16, short_times.nodes[j]).data, atol=1e-14)


class TestHeatEnergy:
    """||S(t)f||^2 + 2 int ||grad S f||^2 = ||f||^2."""

    def test_closed_form_terms_balance(self, taylor_green16):
        kinetic, diss, initial = heat_energy_terms(taylor_green16, 0.4)
        assert kinetic + diss == pytest.approx(initial, rel=1e-13)

    def test_exact_identity_passes(self, taylor_green16):
        report = heat_energy_identity(taylor_green16, 0.4)
        assert report.passed
        assert report.flags == []

    def test_quadrature_identity_within_richardson_tolerance(self, taylor_green16):
        report = heat_energy_identity(taylor_green16, 0.4, timegrid=TimeGrid(kind="uniform", T=0.4, samples=16))
        assert report.passed
        assert "quadrature" in report.flags

    def test_rough_piece_balances_in_closed_form(self, grid16):
        """A split tail with a rough spectrum balances to rounding."""
        u0 = make_initial_data(InitialDataSpec(kind="curl_bump", width=1.0, seed=3), grid16)
        tail = calderon_split(u0, 0.5 * u0.sup_norm()).plus
        assert heat_energy_identity(tail, 0.2).passed


class TestDecayReport:
    """Weighted samples t^a ||d_t^m grad^k S(t)u0||_r."""

    def test_rejects_small_r(self, taylor_green16):
        with pytest.raises(InvalidInputError):
            semigroup_decay_report(taylor_green16, 3.0, 0, 0, [0.1])

    def test_rejects_nonpositive_times(self, taylor_green16):
        with pytest.raises(InvalidInputError):
            semigroup_decay_report(taylor_green16, 5.0, 0, 0, [0.0, 0.1])

    def test_ratio_bookkeeping(self, taylor_green16):
        times = [0.01, 0.03, 0.1, 0.3]
        report = semigroup_decay_report(taylor_green16, 5.0, 0, 0, times)
        peak = max(v for _, v in report.samples)
        assert report.weight_exponent == pytest.approx(1.5 * (1 / 3 - 1 / 5))
        assert report.sup_ratio == pytest.approx(peak / weak_l3(taylor_green16))
        assert 0.0 <= report.variation <= 1.0
        assert "empirical" in report.flags

    def test_weak_norm_does_not_grow(self, taylor_green16):
        """The single-shell datum decays monotonically in every norm."""
        report = semigroup_decay_report(taylor_green16, 5.0, 0, 0, [0.05, 0.2])
        assert report.weak_bound_constant <= 1.0 + 1e-12

    def test_gradient_sample_of_single_mode(self, grid16):
        """|grad S(t) f| for f = e_y sin(x) is e^-t |cos x|, weighted by t."""
        f = make_initial_data(InitialDataSpec(kind="single_mode", mode=(1, 0, 0), direction=(0, 1, 0)), grid16)
        report = semigroup_decay_report(f, math.inf, 0, 1, [0.25])
        (_, value), = report.samples
        assert value == pytest.approx(0.25**1.0 * math.exp(-0.25), rel=1e-10)

    def test_zero_data(self, grid16):
        report = semigroup_decay_report(GridField.zeros(grid16), 5.0, 0, 0, [0.1])
        assert report.sup_ratio == 0.0

    def test_kato_norm_of_heat_flow(self, taylor_green16, short_times):
        V = heat_trace(taylor_green16, short_times)
        value = kato_norm(V)
        assert value > 0.0
        assert kato_norm(V, T=short_times.times[2]) <= value

    def test_kato_norm_is_scale_invariant(self):
        """lam f(lam x) over (0, T) and f over (0, lam^2 T) share one Kato norm."""
        grid = Grid(n=64, L=2 * math.pi)
        g = np.exp(-grid.radius**2 / (2 * 0.35**2))
        f = GridField.from_components(grid, [g, np.zeros(grid.shape), np.zeros(grid.shape)])
        lam, T = 1.5, 0.05
        scaled = kato_norm(heat_trace(ns_rescale(f, lam), TimeGrid(kind="uniform", T=T, samples=8)))
        plain = kato_norm(heat_trace(f, TimeGrid(kind="uniform", T=lam**2 * T, samples=8)))
        assert scaled == pytest.approx(plain, rel=1e-4)

    @pytest.mark.slow
    def test_vortex_weighted_l5_is_flat(self):
        """t^{1/5} ||S(t)u0||_5 is constant in t for -1 homogeneous data."""
        grid = Grid(n=128, L=2 * math.pi)
        report = semigroup_decay_report(vortex_profile(grid, 1.0), 5.0, 0, 0, np.geomspace(0.1, 1.0, 5))
        assert report.variation <= 0.10


class TestInitialTime:
    """S(t)u0 -> u0 as t -> 0."""

    def test_uniform_local_norm_of_constant(self, grid32):
        f = GridField.from_components(grid32, [1.0, 0.0, 0.0])
        cells = int(np.count_nonzero(grid32.radius < 1.0))
        assert uniform_local_norm(f, 2.0) == pytest.approx(math.sqrt(cells * grid32.cell_volume), rel=1e-10)

    def test_uniform_local_norm_needs_room(self, grid16):
        with pytest.raises(InvalidInputError):
            uniform_local_norm(GridField.zeros(grid16), 2.0, radius=4.0)

    def test_convergence_is_monotone(self, taylor_green16):
        report = initial_convergence_check(taylor_green16, 2.0, [0.001, 0.01, 0.1], stride=2)
        assert report.monotone
        assert [t for t, _ in report.values] == [0.001, 0.01, 0.1]
        assert report.values[0][1] < report.values[-1][1]

    def test_q_range(self, taylor_green16):
        with pytest.raises(InvalidInputError):
            initial_convergence_check(taylor_green16, 3.0, [0.1])

    def test_weakstar_trace_shrinks(self, taylor_green16):
        phi = TestFunction(center=(0.5, 0.0, 0.0), radius=1.0, t_on=0.1, t_off=1.0)
        gaps = initial_weakstar_trace(taylor_green16, phi, [0.001, 0.1])
        assert gaps[0][1] <= gaps[1][1]

    def test_smooth_data_weak_gap_vanishes(self, taylor_green16):
        report = initial_convergence_check(taylor_green16, 2.0, [0.001, 0.1], stride=2)
        assert report.weak_gaps[0][1] < 0.1 * report.weak_gaps[1][1]

    @pytest.mark.slow
    def test_inverse_distance_weak_gap_stays_away_from_zero(self):
        """Local L2 convergence holds while the L^{3,oo} gap of 1/|x| keeps a floor."""
        grid = Grid(n=64, L=2 * math.pi)
        zero = np.zeros(grid.shape)
        u0 = GridField.from_components(grid, [inverse_distance(grid).samples, zero, zero])
        report = initial_convergence_check(u0, 2.0, [0.1, 0.2, 0.4, 0.8], stride=2)
        assert report.values[0][1] < report.values[-1][1]
        floor = 0.25 * weak_l3(u0)
        assert all(gap >= floor for _, gap in report.weak_gaps)


class TestWeakStarPairings:
    """int int S(t)u0^(k) . phi over a test-function window."""

    def test_identical_members_pair_identically(self, taylor_green16):
        phi = TestFunction(center=(0.3, -0.2, 0.1), radius=1.2, t_on=0.1, t_off=0.5)
        values = weakstar_pairing_trace([taylor_green16, taylor_green16], phi, T=1.0)
        assert values[0] == values[1]

    def test_empty_sequence(self):
        phi = TestFunction(t_on=0.1, t_off=0.5)
        assert weakstar_pairing_trace([], phi) == []

    def test_mollified_sequence_converges(self, grid16):
        spec = InitialDataSpec(kind="mollified_sequence", base="taylor_green", width=0.5)
        seq = make_sequence(spec, grid16, 6)
        phi = TestFunction(center=(0.3, 0.2, -0.4), radius=1.5, t_on=0.05, t_off=0.4)
        values = weakstar_pairing_trace(seq.members, phi, T=0.5)
        target = weakstar_pairing_trace([seq.base], phi, T=0.5)[0]
        gaps = [abs(v - target) for v in values]
        assert gaps[-1] < gaps[0]

    def test_oscillatory_sequence_converges(self, grid16):
        """Members base + a sin(m z) e_x pair against the base ever more closely as m grows."""
        spec = InitialDataSpec(kind="oscillatory_sequence", base="taylor_green", amplitude=0.2)
        seq = make_sequence(spec, grid16, 10)
        assert len(seq) == 6
        gaps = np.zeros(len(seq))
        for phi in random_tests(grid16, 0.5, 5, seed=0):
            target = weakstar_pairing_trace([seq.base], phi, T=0.5)[0]
            values = weakstar_pairing_trace(seq.members, phi, T=0.5)
            gaps = np.maximum(gaps, [abs(v - target) for v in values])
        assert gaps[0] > 0.0
        assert gaps[-1] < 0.5 * gaps[0]

    def test_support_after_horizon_rejected(self, taylor_green16):
        phi = TestFunction(t_on=0.1, t_off=0.5)
        with pytest.raises(InvalidInputError):
            weakstar_pairing_trace([taylor_green16], phi, T=0.4)
