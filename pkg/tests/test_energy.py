"""
Tests for the energy verifiers.

Validates:
- Singular time integrals and power-law fits
- Global and split energy balance on converged runs
- Tail L2 bound and cross-term constants
- Local energy inequality, pressure-tail ladder and integrability
- Zero-data conventions
"""

import math

import numpy as np
import pytest
from pydantic import ValidationError
from scipy.integrate import cumulative_trapezoid

from nslab.bumps import TestFunction
from nslab.energy import (
    EnergyTrace,
    apriori_scaling_check,
    cross_term_bounds,
    energy_inequality_residual,
    fit_power_law,
    integrability_report,
    local_energy_residual,
    pressure_tail_ladder,
    scaled_energy_majorant,
    singular_time_integral,
    split_energy_check,
    split_traces,
    tail_l2_bound,
)
from nslab.errors import InvalidInputError
from nslab.field import Grid
from nslab.initdata import InitialDataSpec, make_initial_data
from nslab.kato import kato_iterate
from nslab.stokes import pressure_decompose
from nslab.timegrid import FieldTrace, TimeGrid

TIMES = TimeGrid(kind="uniform", T=0.2, samples=32)


@pytest.fixture(scope="module")
def tg_data():
    grid = Grid(n=16, L=2 * math.pi)
    return make_initial_data(InitialDataSpec(kind="taylor_green", amplitude=0.2), grid)


@pytest.fixture(scope="module")
def tg_run(tg_data):
    return kato_iterate(tg_data, TIMES, kmax=30, tol=1e-10)


@pytest.fixture(scope="module")
def tg_fine(tg_data):
    return kato_iterate(tg_data, TIMES.refine(), kmax=30, tol=1e-10)


class TestSingularTimeIntegral:
    """Exact product integration of piecewise-linear data against t^-p."""

    def test_power_zero_is_trapezoid(self):
        nodes = np.array([0.0, 0.1, 0.25, 0.5, 1.0])
        values = np.array([1.0, 3.0, -2.0, 0.5, 4.0])
        expected = cumulative_trapezoid(values, nodes, initial=0.0)
        assert np.allclose(singular_time_integral(values, nodes, 0.0), expected, atol=1e-14)

    def test_constant_against_inverse_square_root(self):
        nodes = np.array([0.0, 0.01, 0.04, 0.2, 1.0])
        out = singular_time_integral(np.ones_like(nodes), nodes, 0.5)
        assert out[0] == 0.0
        assert np.allclose(out, 2.0 * np.sqrt(nodes), rtol=1e-12)

    @pytest.mark.parametrize("power", [1.0, 1.5, -0.1])
    def test_exponent_outside_range_rejected(self, power):
        nodes = np.array([0.0, 0.5, 1.0])
        with pytest.raises(InvalidInputError):
            singular_time_integral(np.ones(3), nodes, power)


class TestPowerLawFit:
    def test_recovers_exponent_and_prefactor(self):
        t = np.geomspace(1e-3, 1.0, 12)
        fit = fit_power_law(t, 3.0 * t**0.5)
        assert fit.beta == pytest.approx(0.5, abs=1e-10)
        assert fit.prefactor == pytest.approx(3.0, rel=1e-10)
        assert fit.samples == 12

    def test_nonpositive_samples_are_dropped(self):
        t = np.array([0.0, 0.1, 0.2, 0.4])
        fit = fit_power_law(t, t**2)
        assert fit.samples == 3
        assert fit.beta == pytest.approx(2.0, abs=1e-10)

    def test_needs_two_samples(self):
        with pytest.raises(InvalidInputError):
            fit_power_law([0.0, 1.0], [0.0, 1.0])

    def test_scaled_majorant_vanishes_at_zero(self):
        assert scaled_energy_majorant(0.0) == 0.0
        assert scaled_energy_majorant(0.5) > scaled_energy_majorant(0.25)


class TestEnergyTrace:
    def test_negative_kinetic_energy_rejected(self):
        with pytest.raises(ValidationError):
            EnergyTrace(
                timegrid=TIMES,
                kinetic=-np.ones(len(TIMES.nodes)),
                dissipation=np.zeros(len(TIMES.nodes)),
                rhs_work=np.zeros(len(TIMES.nodes)),
            )

    def test_dissipation_accumulates_monotonically(self, tg_run):
        trace = EnergyTrace.of(tg_run.u, tg_run.V)
        assert trace.dissipation[0] == 0.0
        assert trace.dissipation_monotone
        assert trace.kinetic[0] == 0.0


class TestGlobalBalance:
    """Converged mild solutions satisfy the balance up to quadrature."""

    def test_zero_perturbation_passes_by_convention(self, tg_data):
        zero = FieldTrace.zeros(tg_data.grid, TIMES)
        report = energy_inequality_residual(zero, zero, 0.2)
        assert report.passed
        assert "pass_by_convention" in report.flags

    def test_converged_run_balances(self, tg_run, tg_fine):
        assert tg_run.converged and tg_fine.converged
        report = energy_inequality_residual(tg_run.u, tg_run.V, 0.2, refined=(tg_fine.u, tg_fine.V))
        assert report.passed
        assert "quadrature" in report.flags
        assert report.lhs > 0
        assert report.tolerance < 0.01 * report.lhs
        assert abs(report.details["transport"]) < 1e-6 * report.lhs

    def test_inflated_perturbation_fails(self, tg_run, tg_fine):
        """One percent too much u breaks the balance by far more than quadrature error."""
        report = energy_inequality_residual(
            tg_run.u.scale(1.01), tg_run.V, 0.2, refined=(tg_fine.u.scale(1.01), tg_fine.V)
        )
        assert not report.passed
        assert report.lhs > report.rhs + report.tolerance

    def test_without_refinement_falls_back_to_relative_floor(self, tg_run):
        report = energy_inequality_residual(tg_run.u, tg_run.V, 0.2)
        assert "no_refinement" in report.flags
        assert report.tolerance == pytest.approx(0.02 * max(report.lhs, report.rhs))
        assert "energy_rel_tol" in report.provenance

    def test_time_must_be_a_node(self, tg_run):
        with pytest.raises(InvalidInputError):
            energy_inequality_residual(tg_run.u, tg_run.V, 0.123)


class TestSplitBalance:
    def test_tail_bound_holds(self, tg_data):
        for N in (0.05, 0.1, 0.15):
            report = tail_l2_bound(tg_data, N)
            assert report.passed
            assert report.fitted_constant <= 3.0

    def test_pointwise_tail_bound_holds(self, tg_data):
        assert tail_l2_bound(tg_data, 0.1, divfree=False).passed

    def test_zero_data_tail_bound(self, tg_data):
        report = tail_l2_bound(tg_data.scale(0.0), 1.0)
        assert "pass_by_convention" in report.flags

    def test_cutoff_above_sup_reduces_to_global_balance(self, tg_data, tg_run):
        """N >= max|u0| leaves no tail, so w = u and V_bar = V."""
        split = split_energy_check(tg_run.u, tg_data, 1.0, 0.2)
        whole = energy_inequality_residual(tg_run.u, tg_run.V, 0.2)
        balance = split.details["checks"][0]
        assert balance["inequality_id"] == "split_energy"
        assert balance["lhs"] == pytest.approx(whole.lhs, rel=1e-8)
        assert balance["rhs"] == pytest.approx(whole.rhs, rel=1e-8)

    def test_tail_parts_pass(self, tg_data, tg_run):
        split = split_energy_check(tg_run.u, tg_data, 0.1, 0.2)
        by_id = {c["inequality_id"]: c for c in split.details["checks"]}
        assert by_id["heat_energy_identity"]["pass"]
        assert by_id["tail_l2_bound"]["pass"]

    def test_nonpositive_cutoff_rejected(self, tg_data, tg_run):
        with pytest.raises(InvalidInputError):
            split_energy_check(tg_run.u, tg_data, 0.0, 0.2)


class TestCrossTerms:
    def test_zero_w_passes_by_convention(self, tg_data, tg_run):
        zero = FieldTrace.zeros(tg_data.grid, TIMES)
        report = cross_term_bounds(zero, tg_run.V, tg_data, 0.1, 0.2)
        assert "pass_by_convention" in report.flags

    def test_constants_are_finite(self, tg_data, tg_run):
        split = split_traces(tg_run.u, tg_data, 0.1)
        report = cross_term_bounds(split.w, split.V_bar, tg_data, 0.1, 0.2)
        assert report.passed
        assert math.isfinite(report.fitted_constant)
        assert {c["inequality_id"] for c in report.details["checks"]} == {"cross_mixed", "cross_bounded"}


class TestLocalEnergy:
    def test_smooth_solution_satisfies_inequality(self, tg_run, tg_fine):
        phi = TestFunction(kind="bump", radius=2.5, t_on=0.02, t_off=0.18)
        report = local_energy_residual(
            tg_run.v, tg_run.pressure, phi, 0.2, refined=(tg_fine.v, tg_fine.pressure)
        )
        assert report.passed
        assert report.details["scale"] > 0
        assert report.details["spatial"] >= 0.0

    def test_test_function_must_end_before_t(self, tg_run):
        phi = TestFunction(kind="bump", radius=2.5, t_on=0.05, t_off=0.3)
        with pytest.raises(InvalidInputError):
            local_energy_residual(tg_run.v, tg_run.pressure, phi, 0.2)

    def test_pressure_shape_checked(self, tg_run):
        phi = TestFunction(kind="bump", radius=2.5, t_on=0.02, t_off=0.18)
        with pytest.raises(InvalidInputError):
            local_energy_residual(tg_run.v, tg_run.pressure[:-1], phi, 0.2)

    def test_support_must_fit_the_box(self, tg_run):
        phi = TestFunction(kind="bump", radius=3.5, t_on=0.02, t_off=0.18)
        with pytest.raises(InvalidInputError):
            local_energy_residual(tg_run.v, tg_run.pressure, phi, 0.2)


class TestPressureTail:
    def test_zero_w_passes_by_convention(self, tg_data, tg_run):
        pressure = pressure_decompose(tg_run.u, tg_run.V)
        zero = FieldTrace.zeros(tg_data.grid, TIMES)
        report = pressure_tail_ladder(zero, pressure, [0.5, 1.0], 0.02, 0.18)
        assert report.passed
        assert "pass_by_convention" in report.flags

    def test_ladder_reports_every_piece(self, tg_run, random_field):
        """An asymmetric w so the annulus pairings do not cancel."""
        pressure = pressure_decompose(tg_run.u, tg_run.V)
        w = FieldTrace.constant(random_field(3), TIMES)
        report = pressure_tail_ladder(w, pressure, [1.0, 0.5], 0.02, 0.18)
        ids = [c["inequality_id"] for c in report.details["checks"]]
        assert ids == ["pressure_tail_p1", "pressure_tail_p2", "pressure_tail_p3"]
        assert report.details["radii"] == [0.5, 1.0]


class TestIntegrabilityAndScaling:
    def test_integrability_constants_finite(self, tg_data, tg_run):
        report = integrability_report(tg_run.u, tg_run.V, tg_data)
        assert report.passed
        assert len(report.details["checks"]) == 3

    def test_zero_heat_flow_passes_by_convention(self, tg_data):
        zero = FieldTrace.zeros(tg_data.grid, TIMES)
        assert "pass_by_convention" in integrability_report(zero, zero).flags

    def test_zero_data_skips_exponent(self, tg_data):
        zero = FieldTrace.zeros(tg_data.grid, TIMES)
        report = apriori_scaling_check(zero, zero, tg_data.scale(0.0))
        assert report.passed
        assert "exponent_skipped" in report.flags

    def test_unconverged_run_is_excluded(self, tg_data, tg_run):
        report = apriori_scaling_check(tg_run.u, tg_run.V, tg_data, converged=False)
        assert not report.counted
        assert "excluded" in report.flags

    def test_scaling_fit_reports_exponent(self, tg_data, tg_run):
        report = apriori_scaling_check(tg_run.u, tg_run.V, tg_data)
        assert report.fitted_constant == pytest.approx(report.details["beta"])
        assert report.details["samples"] == len(TIMES.times)
