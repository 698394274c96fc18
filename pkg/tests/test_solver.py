import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fields import smooth_height, smooth_velocity
from rotlab.approx import approximate_solution
from rotlab.data import make_data
from rotlab.errors import CFLError, GridMismatchError, NonFiniteFieldError, VacuumError
from rotlab.params import FlowParams
from rotlab.solver import (
    FlowState,
    SolverOptions,
    admissible_dt,
    breakdown_time,
    compare_to_approx,
    diagnostics,
    inner,
    integrate,
    integrate_height,
    rhs,
    rhs_array,
    rhs_height,
    skew_operator,
    step,
    wave_coefficients,
    wave_speed,
)
from rotlab.spectral import ScalarField, TorusGrid, VectorField


def random_state(grid, params, seed, amp=0.3):
    rng = np.random.default_rng(seed)
    k = 4 if params.has_entropy else 3
    U = np.stack([grid.dealias(rng.standard_normal((grid.n, grid.n))) for _ in range(k)])
    return amp * U / np.max(np.abs(U))


class TestState:
    def test_shape_checked(self, grid32):
        with pytest.raises(GridMismatchError):
            FlowState(np.zeros((4, 32, 32)), 0.0, FlowParams(tau=0.1, sigma=1.0))
        with pytest.raises(GridMismatchError):
            FlowState(np.zeros((3, 32, 16)), 0.0, FlowParams(tau=0.1, sigma=1.0))

    def test_non_finite_refused(self):
        U = np.zeros((3, 16, 16))
        U[1, 2, 3] = np.nan
        with pytest.raises(NonFiniteFieldError):
            FlowState(U, 0.0, FlowParams(tau=0.1, sigma=1.0))

    def test_from_height_round_trip(self, grid32):
        p = FlowParams(tau=0.1, sigma=0.7, gamma=1.4, family="ideal")
        h0, u0 = smooth_height(grid32), smooth_velocity(grid32)
        s = FlowState.from_height(h0, u0, p, ScalarField(grid32, 0.1 * h0.values))
        assert s.U.shape == (4, 32, 32)
        assert np.max(np.abs(s.h.values - h0.values)) < 1e-15
        assert np.array_equal(s.u.values, u0.values)
        assert np.allclose(s.S.values, 0.1 * h0.values)
        with pytest.raises(ValueError):
            s.U[0, 0, 0] = 1.0

    def test_vacuum_refused(self, grid32):
        with pytest.raises(VacuumError):
            FlowState.from_height(ScalarField(grid32, np.full((32, 32), -3.0)), smooth_velocity(grid32),
                                  FlowParams(tau=0.1, sigma=0.5))

    def test_grid_mismatch(self, grid32):
        with pytest.raises(GridMismatchError):
            FlowState.from_height(smooth_height(TorusGrid(16)), smooth_velocity(grid32),
                                  FlowParams(tau=0.1, sigma=0.5))


class TestRightHandSide:
    @settings(max_examples=10, deadline=None)
    @given(st.integers(0, 2**31 - 1), st.floats(0.2, 2.0), st.floats(0.05, 1.0))
    def test_rsw_is_isentropic_gamma_two(self, seed, sigma, tau):
        g = TorusGrid(32)
        p = FlowParams(tau=tau, sigma=sigma)
        U = random_state(g, p, seed)
        a = rhs_array(g, U, p)
        b = rhs_array(g, U, p.with_(family="isentropic"))
        assert np.max(np.abs(a - b)) <= 1e-12

    @settings(max_examples=10, deadline=None)
    @given(st.integers(0, 2**31 - 1), st.floats(1.1, 3.0))
    def test_ideal_without_entropy_is_isentropic(self, seed, gamma):
        g = TorusGrid(32)
        p = FlowParams(tau=0.3, sigma=0.8, gamma=gamma, family="isentropic")
        U = random_state(g, p, seed)
        Ui = np.concatenate([U, np.zeros((1, 32, 32))])
        a = rhs_array(g, U, p)
        b = rhs_array(g, Ui, p.with_(family="ideal"))
        assert np.max(np.abs(a - b[:3])) <= 1e-14
        assert np.all(b[3] == 0)

    @settings(max_examples=10, deadline=None)
    @given(st.integers(0, 2**31 - 1))
    def test_skew_operator(self, seed):
        g = TorusGrid(32)
        p = FlowParams(tau=0.2, sigma=0.6)
        U = random_state(g, p, seed, amp=1.0)
        assert abs(inner(g, skew_operator(g, U, p), U)) < 1e-13

    def test_height_and_pressure_forms_agree(self, grid32):
        # d/dt h(p) computed two ways: chain rule through the transform and the height form
        p = FlowParams(tau=0.3, sigma=0.6, gamma=1.4, family="isentropic")
        st = FlowState.from_height(smooth_height(grid32, 0.1), smooth_velocity(grid32), p)
        a = p.a_gamma
        dp = rhs(st)[0]
        dh_chain = 2 * a * (1 + a * p.sigma * st.U[0]) * dp
        V = np.concatenate([st.h.values[None], st.U[1:3]])
        dh = rhs_height(grid32, V, p)[0]
        assert np.max(np.abs(dh - dh_chain)) < 1e-6

    def test_options_switch_terms_off(self, grid32):
        p = FlowParams(tau=0.2, sigma=0.6)
        U = random_state(grid32, p, 3)
        none = SolverOptions(rotation=False, pressure=False, advection=False)
        assert np.all(rhs_array(grid32, U, p, none) == 0)
        rot = SolverOptions(pressure=False, advection=False)
        out = rhs_array(grid32, U, p, rot)
        assert np.allclose(out[1], U[2] / p.tau) and np.allclose(out[2], -U[1] / p.tau)

    def test_wave_coefficients(self):
        assert wave_coefficients(FlowParams(tau=1, sigma=1)) == (1.0, 0.5)
        c, a = wave_coefficients(FlowParams(tau=1, sigma=1, gamma=1.4, family="isentropic"))
        assert c == pytest.approx(math.sqrt(0.4)) and a == pytest.approx(0.5 * math.sqrt(0.4))


class TestExactSolutions:
    def test_geostrophic_shear_is_steady(self):
        g = TorusGrid(64)
        p = FlowParams(tau=0.2, sigma=0.7)
        X, Y = g.mesh
        h = 0.1 * np.cos(Y)
        U_ = -p.tau / p.sigma * g.diff(h, 1)
        V = np.stack([h, U_, np.zeros_like(h)])
        assert np.max(np.abs(rhs_height(g, V, p))) < 1e-15
        st = FlowState.from_height(ScalarField(g, h), VectorField.from_array(g, V[1:]), p)
        final, _ = integrate(st, 1.0)
        assert np.max(np.abs(final.U - st.U)) < 1e-12

    @pytest.mark.parametrize("family,gamma", [("rsw", 2.0), ("isentropic", 1.4)])
    def test_linear_waves(self, family, gamma):
        g = TorusGrid(16)
        p = FlowParams(tau=0.2, sigma=0.5, gamma=gamma, family=family)
        c, _ = wave_coefficients(p)
        kx, ky = 1, 2
        X, Y = g.mesh
        phase = np.exp(1j * (kx * X + ky * Y))
        z0 = np.array([1.0, 0.5j, -0.3])
        eps = 1e-7
        L = np.array([
            [0, -1j * c * kx / p.sigma, -1j * c * ky / p.sigma],
            [-1j * c * kx / p.sigma, 0, 1 / p.tau],
            [-1j * c * ky / p.sigma, -1 / p.tau, 0],
        ])
        w, Vm = np.linalg.eig(L)
        t = 0.5
        zt = Vm @ (np.exp(w * t) * np.linalg.solve(Vm, z0))
        U0 = eps * np.real(z0[:, None, None] * phase)
        final, _ = integrate(FlowState(U0, 0.0, p), t, dt=2e-3)
        exact = eps * np.real(zt[:, None, None] * phase)
        assert np.max(np.abs(final.U - exact)) < 1e-5 * eps


class TestIntegration:
    def test_mass_and_entropy_are_conserved(self, grid64):
        g = grid64
        p = FlowParams(tau=0.2, sigma=0.6, gamma=1.4, family="ideal")
        st = FlowState.from_height(smooth_height(g, 0.1), smooth_velocity(g), p,
                                   ScalarField(g, smooth_height(g, 0.2).values))
        final, rep = integrate(st, 0.5, samples=[0.25])
        m = rep.column("mass")
        e = rep.column("entropy_mass")
        assert len(m) == 3
        # relative to the total mass, per unit time
        total = g.quadrature(np.full((64, 64), 1 / p.sigma)) + m[0]
        assert np.max(np.abs(m - m[0])) / total / 0.5 < 1e-8
        assert np.max(np.abs(e - e[0])) / total / 0.5 < 1e-8

    def test_mass_drift_is_time_stepping_error(self, grid32):
        p = FlowParams(tau=0.2, sigma=0.6)
        st = FlowState.from_height(smooth_height(grid32, 0.1), smooth_velocity(grid32), p)
        drift = []
        for dt in (1e-2, 5e-3):
            _, rep = integrate(st, 0.5, dt=dt)
            m = rep.column("mass")
            drift.append(abs(m[-1] - m[0]))
        assert math.log2(drift[0] / drift[1]) == pytest.approx(4.0, abs=0.3)

    def test_samples_are_hit(self, grid32):
        p = FlowParams(tau=0.2, sigma=0.6)
        st = FlowState.from_height(smooth_height(grid32, 0.1), smooth_velocity(grid32), p)
        _, rep = integrate(st, 0.3, samples=np.array([0.1, 0.2, 0.7]))
        assert np.allclose(rep.column("t"), [0.0, 0.1, 0.2, 0.3])
        assert rep.scalars["broken_down"] is False

    def test_admissible_dt_caps(self, grid32):
        p = FlowParams(tau=0.01, sigma=0.6, cfl=0.5)
        st = FlowState.from_height(smooth_height(grid32, 0.1), smooth_velocity(grid32), p)
        assert admissible_dt(st) == pytest.approx(0.5 * 0.01)
        no_rot = admissible_dt(st, SolverOptions(rotation=False))
        assert no_rot == pytest.approx(0.5 * grid32.dx / wave_speed(st.U, p))

    def test_step_refuses_large_dt(self, grid32):
        p = FlowParams(tau=0.2, sigma=0.6)
        st = FlowState.from_height(smooth_height(grid32, 0.1), smooth_velocity(grid32), p)
        with pytest.raises(CFLError) as exc:
            step(st, 1.0)
        assert exc.value.admissible < 1.0
        with pytest.raises(CFLError):
            integrate(st, 1.0, dt=1.0)

    def test_height_form_matches(self, grid32):
        p = FlowParams(tau=0.2, sigma=0.6)
        st = FlowState.from_height(smooth_height(grid32, 0.1), smooth_velocity(grid32), p)
        final, _ = integrate(st, 0.3, dt=2e-3)
        V0 = np.concatenate([st.h.values[None], st.U[1:3]])
        V = integrate_height(grid32, V0, p, 0.3, 2e-3)
        assert np.max(np.abs(V[0] - final.h.values)) < 1e-6
        assert np.max(np.abs(V[1:] - final.U[1:3])) < 1e-6

    def test_steepening_breaks_down_without_rotation(self, grid32):
        p = FlowParams(tau=1.0, sigma=1.0)
        d = make_data("steepen", 32, amplitude=2.0)
        st = FlowState.from_height(d.h, d.u, p)
        opts = SolverOptions(rotation=False, breakdown_factor=5.0)
        tb = breakdown_time(st, 3.0, opts)
        assert tb is not None and 0 < tb < 3.0
        final, rep = integrate(st, 3.0, options=opts)
        assert final.broken_down and final.t_break == tb
        assert rep.scalars["t_break"] == tb

    def test_diagnostics(self, grid32):
        p = FlowParams(tau=0.2, sigma=0.5)
        st = FlowState.from_height(ScalarField(grid32, np.full((32, 32), 0.4)), smooth_velocity(grid32), p)
        d = diagnostics(st)
        assert d.min_depth == pytest.approx(1.2)
        assert d.mass == pytest.approx(0.4 * 4 * math.pi**2)
        assert d.u_inf > 0 and d.grad > 0


class TestComparison:
    def test_zero_error_at_start(self, grid32):
        p = FlowParams(tau=0.5, sigma=0.8, gamma=1.4, family="ideal")
        h0, u0 = smooth_height(grid32), smooth_velocity(grid32)
        S0 = ScalarField(grid32, 0.2 * h0.values)
        st = FlowState.from_height(h0, u0, p, S0)
        e = compare_to_approx(st, approximate_solution(h0, u0, p, 0.0, S0=S0))
        assert e.total < 1e-13
        assert set(e.to_dict()) == {"s", "p", "u", "h", "S"}

    def test_mismatches_refused(self, grid32):
        p = FlowParams(tau=0.5, sigma=0.8)
        h0, u0 = smooth_height(grid32), smooth_velocity(grid32)
        st = FlowState.from_height(h0, u0, p)
        a = approximate_solution(h0, u0, p.with_(sigma=0.7), 0.0)
        with pytest.raises(GridMismatchError):
            compare_to_approx(st, a)
        g16 = TorusGrid(16)
        b = approximate_solution(smooth_height(g16), smooth_velocity(g16), p, 0.0)
        with pytest.raises(GridMismatchError):
            compare_to_approx(st, b)


class TestBreakdown:
    STEEPEN_T_BREAK_N64 = 3.071932528878664

    def steepen_state(self, tau=1.0):
        d = make_data("steepen", 64)
        return FlowState.from_height(d.h, d.u, FlowParams(tau=tau, sigma=1.0))

    def test_zero_data_never_breaks(self):
        d = make_data("zero", 32)
        st = FlowState.from_height(d.h, d.u, FlowParams(tau=0.1, sigma=1.0))
        assert breakdown_time(st, 2.0) is None

    def test_pinned_non_rotating_breakdown(self):
        opts = SolverOptions(rotation=False, breakdown_factor=10.0)
        tb = breakdown_time(self.steepen_state(), 6.0, opts)
        assert tb == pytest.approx(self.STEEPEN_T_BREAK_N64, rel=1e-9)

    def test_rotation_prolongs_life(self):
        opts = SolverOptions(breakdown_factor=10.0)
        assert breakdown_time(self.steepen_state(tau=0.05), 2 * self.STEEPEN_T_BREAK_N64, opts) is None
