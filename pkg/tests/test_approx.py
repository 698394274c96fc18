import json
import math

import numpy as np
import pytest

from fields import smooth_height, smooth_velocity
from rotlab.approx import (
    approximate_solution,
    build_u2,
    duhamel_velocity,
    exp_entropy_ratio,
    require_subcritical,
    residual_R,
    transport_h2_exact,
    transport_h2_numeric,
    transport_S2,
    vacuum_guard,
    velocity_correction,
)
from rotlab.data import make_data
from rotlab.errors import CFLError, SubcriticalityError, VacuumError
from rotlab.params import FlowParams
from rotlab.pressureless import PressurelessFlow
from rotlab.spectral import ScalarField, TorusGrid, VectorField, load_snapshot
from rotlab.transforms import height_to_density, normalize_height

FAMILIES = [
    FlowParams(tau=0.5, sigma=0.8),
    FlowParams(tau=0.5, sigma=0.8, gamma=1.4, family="isentropic"),
    FlowParams(tau=0.5, sigma=0.8, gamma=1.4, family="ideal"),
]


@pytest.fixture(scope="module")
def setup():
    # n = 64 resolves the data to round-off; n = 32 leaves 1e-6 aliasing errors
    g = TorusGrid(64)
    u0 = smooth_velocity(g)
    h0 = smooth_height(g)
    return h0, u0, PressurelessFlow(u0, 0.5)


def momentum_defect(g, approx_at, t, params, eps=1e-3):
    """``u2_t + u1.grad u2 + (E/sigma) grad h2 - J u2/tau`` by central differences in time."""
    A = [approx_at(t + k * eps) for k in (-2, -1, 0, 1, 2)]
    du = (-A[4].u2.values + 8 * A[3].u2.values - 8 * A[1].u2.values + A[0].u2.values) / (12 * eps)
    a = A[2]
    u1, u2 = a.u1.values, a.u2.values
    M = g.jacobian(u2)
    adv = np.array([u1[0] * M[0, 0] + u1[1] * M[0, 1], u1[0] * M[1, 0] + u1[1] * M[1, 1]])
    E = np.exp(params.sigma * a.S2.values) if a.S2 is not None else 1.0
    gh = E * np.array(g.grad(a.h2.values))
    return du + adv + gh / params.sigma - np.array([u2[1], -u2[0]]) / params.tau, a


class TestExactTransport:
    @pytest.mark.parametrize("params", FAMILIES, ids=lambda p: p.family)
    def test_initial_value_and_closure(self, setup, params):
        h0, u0, flow = setup
        assert np.max(np.abs(transport_h2_exact(h0, u0, params, 0.0, flow=flow).values - h0.values)) < 1e-14
        hT = transport_h2_exact(h0, u0, params, params.period, flow=flow)
        assert np.max(np.abs(hT.values - h0.values)) < 1e-10

    @pytest.mark.parametrize("params", FAMILIES[:2], ids=lambda p: p.family)
    def test_matches_numeric_transport(self, setup, params):
        h0, u0, flow = setup
        ts = [params.period / 16, params.period / 8]
        num = transport_h2_numeric(h0, u0, params, ts[-1], dt=params.tau / 200, flow=flow, times=ts)
        for t, hn in zip(ts, num):
            he = transport_h2_exact(h0, u0, params, t, flow=flow)
            assert np.max(np.abs(he.values - hn.values)) < 1e-7

    def test_rsw_mass(self, setup):
        h0, u0, flow = setup
        p = FAMILIES[0]
        g = h0.grid
        h = transport_h2_exact(h0, u0, p, 0.9, flow=flow)
        assert abs(g.quadrature(h.values) - g.quadrature(h0.values)) < 1e-10

    def test_isentropic_mass(self, setup):
        h0, u0, flow = setup
        p = FAMILIES[1]
        g = h0.grid
        rho0 = height_to_density(h0.values, p.sigma, p.gamma)
        rho = height_to_density(transport_h2_exact(h0, u0, p, 0.9, flow=flow).values, p.sigma, p.gamma)
        assert abs(g.quadrature(rho) - g.quadrature(rho0)) < 1e-9

    def test_entropy_is_carried(self, setup):
        h0, u0, flow = setup
        p = FAMILIES[2]
        S0 = ScalarField(h0.grid, 0.5 * h0.values)
        S = transport_S2(S0, u0, p, 0.9, flow=flow)
        assert np.max(np.abs(S.values)) <= np.max(np.abs(S0.values)) * (1 + 1e-9)
        assert np.max(np.abs(transport_S2(S0, u0, p, p.period, flow=flow).values - S0.values)) < 1e-10

    def test_numeric_fixed_point_without_flow(self, grid32):
        h0 = smooth_height(grid32)
        zero = VectorField.from_array(grid32, np.zeros((2, 32, 32)))
        h = transport_h2_numeric(h0, zero, FAMILIES[0], 0.3, dt=0.05)
        assert np.array_equal(h.values, h0.values)

    def test_numeric_mean_drift_per_period(self, grid32):
        h0, u0 = smooth_height(grid32), smooth_velocity(grid32)
        p = FAMILIES[0]
        h = transport_h2_numeric(h0, u0, p, p.period, dt=p.tau / 50)
        total = grid32.quadrature(1 / p.sigma + h0.values)
        assert abs(grid32.quadrature(h.values - h0.values)) / total <= 1e-8

    def test_cfl_guard(self, setup):
        h0, u0, flow = setup
        with pytest.raises(CFLError):
            transport_h2_numeric(h0, u0, FAMILIES[0], 1.0, dt=10.0, flow=flow)

    def test_decreasing_times_rejected(self, setup):
        h0, u0, flow = setup
        with pytest.raises(ValueError):
            transport_h2_numeric(h0, u0, FAMILIES[0], 1.0, flow=flow, times=[0.2, 0.1])


class TestCorrectedVelocity:
    @pytest.mark.parametrize("params", FAMILIES, ids=lambda p: p.family)
    def test_residual_is_the_momentum_defect(self, setup, params):
        h0, u0, flow = setup
        g = h0.grid
        S0 = ScalarField(g, 0.3 * h0.values)

        def at(t):
            return approximate_solution(h0, u0, params, t, S0=S0, flow=flow)

        defect, a = momentum_defect(g, at, 0.6, params)
        R = residual_R(a.u1, a.h2, params, 0.6, a.S2).values
        assert np.max(np.abs(R)) > 1e-3
        assert np.max(np.abs(defect - R)) < 1e-8 * (1 + np.max(np.abs(R)))

    def test_opposite_sign_fails_the_defect(self, setup):
        h0, u0, flow = setup
        p = FAMILIES[0]
        g = h0.grid

        def flipped(t):
            a = approximate_solution(h0, u0, p, t, flow=flow)
            corr = a.u2.values - a.u1.values
            return type(a)(a.h2, a.p2, VectorField.from_array(g, a.u1.values - corr), a.u1, t, p)

        defect, a = momentum_defect(g, flipped, 0.6, p)
        R = residual_R(a.u1, a.h2, p, 0.6).values
        assert np.max(np.abs(defect - R)) > 1e-2

    def test_correction_vanishes_at_period(self, setup):
        h0, u0, flow = setup
        p = FAMILIES[0]
        a = approximate_solution(h0, u0, p, p.period, flow=flow)
        assert np.max(np.abs(a.u2.values - u0.values)) < 1e-10

    def test_correction_formula(self, grid32):
        p = FlowParams(tau=0.5, sigma=2.0)
        gh = np.stack([np.ones((32, 32)), np.zeros((32, 32))])
        theta = 0.3 / p.tau
        corr = velocity_correction(gh, p, 0.3)
        expected = -(p.tau / p.sigma) * np.array([math.sin(theta), -(1 - math.cos(theta))])
        assert np.allclose(corr[:, 0, 0], expected, atol=1e-15)

    def test_build_u2_adds_correction(self, grid32):
        p = FlowParams(tau=0.5, sigma=2.0)
        u1 = smooth_velocity(grid32)
        gh = VectorField.from_array(grid32, 0.1 * u1.values)
        u2 = build_u2(u1, gh, p, 0.4)
        assert np.allclose(u2.values, u1.values + velocity_correction(gh.values, p, 0.4), atol=1e-15)

    def test_duhamel_reduces_to_rotation_without_pressure(self, grid32):
        p = FlowParams(tau=0.5, sigma=1.0)
        u0 = smooth_velocity(grid32)
        zero = VectorField.from_array(grid32, np.zeros((2, 32, 32)))
        v = duhamel_velocity(u0, zero, p, p.period / 4).values
        assert np.allclose(v, np.stack([u0.values[1], -u0.values[0]]), atol=1e-15)


class TestAssembly:
    def test_pressure_variable(self, setup):
        h0, u0, flow = setup
        p = FAMILIES[1]
        a = approximate_solution(h0, u0, p, 0.4, flow=flow)
        assert np.allclose(a.p2.values, normalize_height(a.h2.values, p.sigma, p.family, p.gamma), atol=0)
        assert a.S2 is None

    def test_ideal_defaults_to_zero_entropy(self, setup):
        h0, u0, flow = setup
        a = approximate_solution(h0, u0, FAMILIES[2], 0.4, flow=flow)
        assert np.all(a.S2.values == 0)

    def test_vacuum_refused(self, grid32):
        h0 = ScalarField(grid32, np.full((32, 32), -2.0))
        with pytest.raises(VacuumError):
            approximate_solution(h0, smooth_velocity(grid32), FAMILIES[0], 0.1)

    def test_save(self, setup, tmp_path):
        h0, u0, flow = setup
        a = approximate_solution(h0, u0, FAMILIES[2], 0.4, flow=flow)
        bin_path, json_path = a.save(tmp_path / "snap")
        grid, comps = load_snapshot(bin_path)
        assert comps.shape == (5, 64, 64)
        assert np.array_equal(comps[0], a.h2.values)
        assert np.array_equal(comps[3], a.u2.values[1])
        meta = json.loads(json_path.read_text())
        assert meta["components"][-1] == "S2"
        assert meta["t"] == 0.4 and meta["family"] == "ideal"


class TestGuards:
    def test_vacuum_guard_series(self, setup):
        h0, u0, flow = setup
        p = FAMILIES[0]
        series = [(t, transport_h2_exact(h0, u0, p, t, flow=flow)) for t in np.linspace(0, p.period, 5)]
        rep = vacuum_guard(series, p)
        assert rep.alpha0 == pytest.approx(1 - p.sigma * 0.2, rel=1e-2)
        assert not rep.vacuum_reached
        assert 0 < rep.minimum <= rep.alpha0 + 1e-12
        assert len(rep.p2_inf_ratio) == 5 and all(np.isfinite(rep.p2_sobolev_ratio))

    def test_vacuum_guard_flags_vacuum(self, grid32):
        p = FAMILIES[0]
        ok = ScalarField(grid32, np.zeros((32, 32)))
        bad = ScalarField(grid32, np.full((32, 32), -2.0))
        rep = vacuum_guard([(0.0, ok), (1.0, bad)], p)
        assert rep.vacuum_reached
        assert math.isnan(rep.p2_inf_ratio[1])

    def test_vacuum_guard_rejects_initial_vacuum(self, grid32):
        with pytest.raises(VacuumError):
            vacuum_guard([(0.0, ScalarField(grid32, np.full((32, 32), -2.0)))], FAMILIES[0])

    def test_require_subcritical(self):
        u = make_data("shear", 32).u
        require_subcritical(u, 0.4)
        with pytest.raises(SubcriticalityError):
            require_subcritical(u, 0.5)
        with pytest.raises(SubcriticalityError):
            require_subcritical(u, 1.5)

    @pytest.mark.parametrize("sigma", [0.1, 0.5, 1.0])
    def test_entropy_ratio_bounded(self, grid32, sigma):
        S = ScalarField.from_function(grid32, lambda X, Y: 0.5 * np.sin(X) * np.cos(2 * Y))
        r = exp_entropy_ratio(S, sigma, 2.0)
        assert 0.5 < r < math.exp(0.5 * sigma) * 3
