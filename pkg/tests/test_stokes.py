"""
Tests for the linear Stokes layer.

Validates:
- Duhamel solve against manufactured solutions (exactness and order)
- Divergence of every Duhamel output
- Pressure recovery and the three-way pressure split
- Integrability surrogates
"""

import math

import numpy as np
import pytest

from nslab.errors import InvalidInputError
from nslab.field import GridField, ScalarField, divergence, divergence_sup, gradient, ifft3
from nslab.heat import heat_trace
from nslab.initdata import InitialDataSpec, make_initial_data
from nslab.lorentz import weak_l3
from nslab.stokes import (
    ForcingTensor,
    OuterProductForcing,
    VectorForcing,
    duhamel_solve,
    etd_weights,
    integrability_surrogates,
    nonlinear_hat,
    pressure_decompose,
    pressure_from_velocity,
)
from nslab.timegrid import FieldTrace, TimeGrid


def _shear(grid, profile):
    """e_y sin(x) scaled by profile(t)."""
    X, _, _ = grid.mesh
    shape = grid.shape

    def build(t: float) -> GridField:
        return GridField.from_components(grid, [np.zeros(shape), profile(t) * np.broadcast_to(np.sin(X), shape), 0.0])

    return build


class TestEtdWeights:
    """Exact exponential integration of linear forcing."""

    def test_small_argument_branch_is_continuous(self):
        h = 0.1
        z = np.array([0.999e-3, 1.001e-3])
        decay, w_old, w_new = etd_weights(z, h)
        assert w_old[0] == pytest.approx(w_old[1], rel=1e-3)
        assert w_new[0] == pytest.approx(w_new[1], rel=1e-3)

    def test_zero_mode_is_trapezoid(self):
        decay, w_old, w_new = etd_weights(np.array([0.0]), 0.2)
        assert decay[0] == 1.0
        assert w_old[0] == pytest.approx(0.1)
        assert w_new[0] == pytest.approx(0.1)


class TestDuhamelSolve:
    """u_t - Laplacian u = P f, u(0) = 0."""

    def test_linear_in_time_forcing_is_exact(self, grid16):
        """u = t e_y sin x solves the problem with f = (1 + t) e_y sin x."""
        tg = TimeGrid(kind="geometric", T=0.5, samples=6, ratio=0.6)
        forcing = VectorForcing(trace=FieldTrace.from_function(grid16, tg, _shear(grid16, lambda t: 1.0 + t)))
        u = duhamel_solve(forcing)
        exact = FieldTrace.from_function(grid16, tg, _shear(grid16, lambda t: t))
        assert np.max(np.abs(u.data - exact.data)) < 1e-12

    def test_second_order_under_halving(self, grid16):
        """f = t^2 e_y sin x; three-level observed order lies in [1.8, 2.2]."""
        exact_T = 1.0 - 2.0 + 2.0 - 2.0 * math.exp(-1.0)
        errors = []
        for samples in (8, 16, 32):
            tg = TimeGrid(kind="uniform", T=1.0, samples=samples)
            forcing = VectorForcing(trace=FieldTrace.from_function(grid16, tg, _shear(grid16, lambda t: t * t)))
            u = duhamel_solve(forcing)
            amplitude = float(np.max(np.abs(u.data[-1, 1])))
            errors.append(abs(amplitude - exact_T))
        orders = [math.log2(errors[i] / errors[i + 1]) for i in range(2)]
        for order in orders:
            assert 1.8 <= order <= 2.2

    def test_output_is_solenoidal_for_gradient_forcing(self, grid16, short_times):
        """A pure gradient forcing is projected away entirely."""
        X, Y, Z = grid16.mesh
        shape = grid16.shape
        p = np.broadcast_to(np.sin(X) * np.cos(Y) * np.sin(2 * Z), shape)

        def grad_p(t: float) -> GridField:
            return gradient(ScalarField(grid=grid16, samples=(1 + t) * p))

        u = duhamel_solve(VectorForcing(trace=FieldTrace.from_function(grid16, short_times, grad_p)))
        assert np.max(np.abs(u.data)) < 1e-12

    def test_outer_product_forcing_is_divergence_free(self, taylor_green16, short_times):
        v = heat_trace(taylor_green16, short_times)
        u = duhamel_solve(OuterProductForcing.square(v))
        assert np.all(u.data[0] == 0.0)
        assert max(divergence_sup(f) for f in u) < 1e-10

    def test_tensor_forcing_matches_outer_product(self, taylor_green16, short_times):
        v = heat_trace(taylor_green16, short_times)
        tensor = np.einsum("tixyz,tjxyz->tijxyz", v.data, v.data)
        via_tensor = duhamel_solve(ForcingTensor(grid=v.grid, timegrid=short_times, data=tensor))
        via_pairs = duhamel_solve(OuterProductForcing.square(v))
        # the outer-product source is dealiased, the explicit tensor is not;
        # Taylor-Green products only reach |m| = 2 so both agree
        assert np.max(np.abs(via_tensor.data - via_pairs.data)) < 1e-12

    def test_time_grid_mismatch_rejected(self, taylor_green16, short_times):
        v = heat_trace(taylor_green16, short_times)
        with pytest.raises(InvalidInputError):
            duhamel_solve(OuterProductForcing.square(v), timegrid=short_times.refine())


class TestPressure:
    """q = (-Laplacian)^{-1} div div (v (x) v)."""

    def test_pressure_removes_gradient_part(self, taylor_green16):
        q = pressure_from_velocity(taylor_green16)
        total = GridField(grid=taylor_green16.grid, data=ifft3(nonlinear_hat(taylor_green16))) + gradient(q)
        assert np.max(np.abs(divergence(total).samples)) < 1e-12

    def test_taylor_green_pressure_closed_form(self, grid16):
        """For amplitude A the pressure is A^2/16 (cos 2x + cos 2y)(cos 2z + 2), minus its mean."""
        u0 = make_initial_data(InitialDataSpec(kind="taylor_green", amplitude=1.0), grid16)
        X, Y, Z = grid16.mesh
        expected = np.broadcast_to((np.cos(2 * X) + np.cos(2 * Y)) * (np.cos(2 * Z) + 2.0) / 16.0, grid16.shape)
        expected = expected - expected.mean()
        assert np.max(np.abs(pressure_from_velocity(u0).samples - expected)) < 1e-12

    def test_split_defect_is_rounding(self, taylor_green16, short_times):
        V = heat_trace(taylor_green16, short_times)
        u = V.scale(0.3)
        decomposition = pressure_decompose(u, V)
        assert decomposition.split_defect < 1e-12
        assert set(decomposition.grad_norms) == {"p1", "p2", "p3"}
        assert decomposition.piece("p2", 1).samples.shape == taylor_green16.grid.shape


class TestIntegrability:
    """Grid surrogates of the nonlinear-term integrability."""

    def test_norms_are_finite_and_majorants_present(self, taylor_green16, short_times):
        V = heat_trace(taylor_green16, short_times)
        u = V.scale(0.1)
        norms = integrability_surrogates(u, V, weak_l3(taylor_green16))
        for value in (norms.vv_l11_7, norms.cross_l5_4_3_2, norms.vuu_l1):
            assert math.isfinite(value) and value >= 0.0
        assert set(norms.majorants) == {"vv_l11_7", "cross_l5_4_3_2", "vuu_l1"}

    def test_zero_perturbation_has_zero_cross_terms(self, taylor_green16, short_times):
        V = heat_trace(taylor_green16, short_times)
        norms = integrability_surrogates(FieldTrace.zeros(V.grid, short_times), V, 1.0)
        assert norms.cross_l5_4_3_2 == 0.0
        assert norms.vuu_l1 == 0.0
