import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import solve_ivp

from stochch.ch import (
    MomentumState,
    apply_A,
    ch_coefficients,
    ch_rhs,
    conserved_quantities,
    deterministic_step,
    integrate_deterministic,
)
from stochch.flow import NonFiniteError
from stochch.spectral import Field, Grid1D, differentiate, helmholtz_apply, helmholtz_inverse, multiply, sobolev_norm

from .conftest import smooth_field


class TestCoefficients:
    def test_cos(self, grid):
        c = ch_coefficients(grid.from_function(np.cos))
        np.testing.assert_allclose(c.a.values, np.cos(grid.x) / 2, atol=1e-14)
        np.testing.assert_allclose(c.b.values, -np.sin(grid.x), atol=1e-13)

    def test_zero_and_one(self, grid):
        c0 = ch_coefficients(grid.zeros())
        assert c0.a.max_abs() == 0 and c0.b.max_abs() == 0
        c1 = ch_coefficients(grid.constant(1.0))
        np.testing.assert_allclose(c1.a.values, 1.0, atol=1e-15)
        assert c1.b.max_abs() < 1e-15

    def test_smoothing_per_mode(self, grid, rng):
        v = Field(grid, rng.normal(size=grid.n))
        for s in range(2):
            assert sobolev_norm(ch_coefficients(v).a, s + 2) <= sobolev_norm(v, s) * (1 + 1e-12)


class TestApplyA:
    def test_zero_v(self, grid, rng):
        assert apply_A(grid.zeros(), smooth_field(grid, rng)).max_abs() == 0

    def test_cos_sin(self, grid):
        out = apply_A(grid.from_function(np.cos), grid.from_function(np.sin))
        x = grid.x
        np.testing.assert_allclose(out.values, np.cos(x) ** 2 / 2 - np.sin(x) ** 2, atol=1e-13)

    def test_on_constant_is_b(self, grid, rng):
        v = smooth_field(grid, rng)
        np.testing.assert_allclose(apply_A(v, grid.constant(1.0)).values, ch_coefficients(v).b.values, atol=1e-13)

    @settings(max_examples=25, deadline=None)
    @given(st.floats(-3, 3), st.floats(-3, 3), st.integers(0, 2**31))
    def test_bilinear(self, alpha, beta, seed):
        g = Grid1D(2 * math.pi, 64)
        r = np.random.default_rng(seed)
        v1, v2, f = (smooth_field(g, r) for _ in range(3))
        lhs = apply_A(alpha * v1 + beta * v2, f)
        rhs = alpha * apply_A(v1, f) + beta * apply_A(v2, f)
        assert (lhs - rhs).max_abs() < 1e-10 * (1 + abs(alpha) + abs(beta))
        c = ch_coefficients(alpha * v1 + beta * v2)
        assert (c.a - (alpha * ch_coefficients(v1).a + beta * ch_coefficients(v2).a)).max_abs() < 1e-10 * (1 + abs(alpha) + abs(beta))


class TestRhs:
    def test_zero_and_constant(self, grid):
        assert ch_rhs(grid.zeros()).max_abs() == 0
        assert ch_rhs(grid.constant(2.5)).max_abs() < 1e-13

    def test_cos(self, grid):
        x = grid.x
        np.testing.assert_allclose(ch_rhs(grid.from_function(np.cos)).values, -1.5 * np.sin(x) * np.cos(x), atol=1e-13)

    def test_matches_velocity_form(self, grid, rng):
        u = smooth_field(grid, rng, modes=4)
        ux = differentiate(u, 1)
        velocity = helmholtz_apply(multiply(u, ux)) + differentiate(multiply(u, u) + 0.5 * multiply(ux, ux), 1)
        y = helmholtz_apply(u)
        assert sobolev_norm(ch_rhs(y) - velocity, 0) < 1e-10 * sobolev_norm(velocity, 0)


def velocity_form_reference(u0: Field, T: float) -> Field:
    """u_t + u u_x + d/dx Q^-2 (u^2 + u_x^2 / 2) = 0 with adaptive RK (no dealiasing)."""
    g = u0.grid
    k = g.k

    def rhs(_, u):
        uh = np.fft.rfft(u)
        ux = np.fft.irfft(1j * k * uh, n=g.n)
        p = np.fft.rfft(u * u + 0.5 * ux * ux) / (1 + k**2)
        return -(u * ux) - np.fft.irfft(1j * k * p, n=g.n)

    sol = solve_ivp(rhs, (0, T), u0.values, method="DOP853", rtol=1e-11, atol=1e-12)
    return Field(g, sol.y[:, -1])


class TestDeterministicStep:
    def test_zero_and_constant(self, grid):
        assert deterministic_step(MomentumState(grid.zeros()), 0.1).y.max_abs() == 0
        s = deterministic_step(MomentumState(grid.constant(1.7), 0.3), 0.1)
        np.testing.assert_allclose(s.y.values, 1.7, atol=1e-14)
        assert s.time == pytest.approx(0.4)

    def test_rejects_dt(self, grid):
        with pytest.raises(ValueError):
            deterministic_step(MomentumState(grid.zeros()), 0.0)

    def test_nonfinite_keeps_last_valid(self, grid):
        state = MomentumState(grid.from_function(lambda x: 1e160 * np.cos(x)))
        with np.errstate(all="ignore"), pytest.raises(NonFiniteError) as err:
            deterministic_step(state, 1.0)
        assert err.value.diagnostics["last_valid"] is state

    def test_temporal_order(self, grid):
        y0 = grid.from_function(np.cos)
        T = 0.5
        ref = integrate_deterministic(y0, 2.5e-3 / 4, T)[-1].y
        dts = [1e-2, 5e-3, 2.5e-3]
        errs = [sobolev_norm(integrate_deterministic(y0, dt, T)[-1].y - ref, 0) for dt in dts]
        assert np.polyfit(np.log(dts), np.log(errs), 1)[0] >= 3.5

    def test_against_velocity_form(self, grid):
        y0 = grid.from_function(lambda x: 1 + 0.5 * np.cos(x))
        y = integrate_deterministic(y0, 5e-3, 0.5)[-1].y
        u_ref = velocity_form_reference(helmholtz_inverse(y0), 0.5)
        assert sobolev_norm(helmholtz_inverse(y) - u_ref, 0) < 1e-9

    def test_integrate_requires_multiple(self, grid):
        with pytest.raises(ValueError):
            integrate_deterministic(grid.zeros(), 0.3, 1.0)


class TestConserved:
    def test_zero(self, grid):
        q = conserved_quantities(MomentumState(grid.zeros()))
        assert (q.mass, q.energy) == (0.0, 0.0)

    def test_cos(self, grid):
        q = conserved_quantities(MomentumState(grid.from_function(np.cos)))
        assert abs(q.mass) < 1e-14
        assert q.energy == pytest.approx(math.pi / 2, rel=1e-13)

    def test_drift_short_run(self, grid):
        states = integrate_deterministic(grid.from_function(lambda x: 1 + 0.5 * np.cos(x)), 1e-2, 1.0)
        q0, q1 = conserved_quantities(states[0]), conserved_quantities(states[-1])
        assert abs(q1.mass - q0.mass) / q0.mass < 1e-8
        assert abs(q1.energy - q0.energy) / q0.energy < 1e-8
