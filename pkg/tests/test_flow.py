import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import solve_ivp

from stochch.flow import (
    CharacteristicTable,
    NoiseSpec,
    NonFiniteError,
    cocycle,
    flow_map,
    generator_apply,
    group_apply,
)
from stochch.spectral import Field, Grid1D, differentiate, interpolate, sobolev_norm

from .conftest import smooth_field


@pytest.fixture
def sine(grid):
    return NoiseSpec(grid.from_function(np.sin), grid.from_function(np.cos))


def sine_flow_exact(x, t):
    """tan(phi/2) = e^t tan(x/2) on (0, 2 pi), continued through the fixed points."""
    phi = 2 * np.arctan(np.exp(t) * np.tan(x / 2))
    phi = np.where(np.isclose(x, math.pi), math.pi, phi)
    return np.where(x > math.pi, phi + 2 * math.pi, phi)


def method_of_lines(noise, f, t):
    """u_t = xi u_x + eta u by adaptive RK on the spectral semi-discretization."""
    g = f.grid
    xi, eta, k = noise.xi.values, noise.eta.values, g.k

    def rhs(_, u):
        ux = np.fft.irfft(1j * k * np.fft.rfft(u), n=g.n)
        return xi * ux + eta * u

    sol = solve_ivp(rhs, (0, t), f.values, method="DOP853", rtol=1e-12, atol=1e-13)
    return Field(g, sol.y[:, -1])


class TestNoiseSpec:
    def test_cached_derivatives(self, sine):
        assert (sine.xi_x - differentiate(sine.xi, 1)).max_abs() < 1e-10
        assert (sine.eta_x - differentiate(sine.eta, 1)).max_abs() < 1e-10
        assert (sine.xi_xx - differentiate(sine.xi, 2)).max_abs() < 1e-10

    def test_rejects_rough_coefficient(self, grid, rng):
        with pytest.raises(ValueError, match="under-resolved"):
            NoiseSpec(Field(grid, rng.normal(size=grid.n)), grid.zeros())

    def test_rejects_nonfinite(self, grid):
        bad = np.zeros(grid.n)
        bad[3] = np.nan
        with pytest.raises(ValueError):
            NoiseSpec(Field(grid, bad), grid.zeros())

    def test_holm_preset(self, grid):
        n = NoiseSpec.from_presets(grid, "sin:1:0.1", "holm")
        np.testing.assert_allclose(n.eta.values, 0.2 * np.cos(grid.x), atol=1e-13)


class TestFlowMap:
    def test_identity_at_zero(self, sine, grid):
        fm = flow_map(sine, 0.0, substeps=4)
        np.testing.assert_array_equal(fm.positions, grid.x)
        np.testing.assert_array_equal(fm.jacobian, 1.0)

    def test_constant_field(self, grid):
        fm = flow_map(NoiseSpec(grid.constant(0.7), grid.zeros()), -1.3)
        np.testing.assert_allclose(fm.positions, grid.x - 0.91, atol=1e-13)
        np.testing.assert_allclose(fm.jacobian, 1.0, atol=1e-13)

    def test_sine_closed_form(self, sine, grid):
        fm = flow_map(sine, 0.5)
        np.testing.assert_allclose(fm.positions, sine_flow_exact(grid.x, 0.5), atol=1e-10)

    def test_sine_jacobian_closed_form(self, sine, grid):
        fm = flow_map(sine, 0.5)
        phi = sine_flow_exact(grid.x, 0.5)
        exact = np.exp(0.5) * np.cos(phi / 2) ** 2 / np.cos(grid.x / 2) ** 2
        mask = np.abs(grid.x - math.pi) > 0.1
        np.testing.assert_allclose(fm.jacobian[mask], exact[mask], rtol=1e-9)

    def test_unreduced_winding(self, grid):
        fm = flow_map(NoiseSpec(grid.constant(1.0), grid.zeros()), 10.0)
        assert fm.positions[0] == pytest.approx(10.0, abs=1e-12)

    @pytest.mark.parametrize("t", [-2.0, -1.0, 1.0, 2.0])
    def test_jacobian_positive(self, grid, t):
        noise = NoiseSpec(grid.from_function(lambda x: 2 * np.sin(x)), grid.zeros())
        assert flow_map(noise, t).jacobian.min() > 0

    def test_composition(self, sine):
        a, b = flow_map(sine, 0.4), flow_map(sine, -0.9)
        np.testing.assert_allclose(b.at(a.positions), flow_map(sine, -0.5).positions, atol=1e-10)

    def test_nonfinite_aborts(self, grid):
        noise = NoiseSpec(grid.zeros(), grid.constant(800.0))
        with pytest.raises(NonFiniteError) as err:
            group_apply(noise, 1.0, grid.constant(1.0), method="direct")
        assert "t" in err.value.diagnostics


class TestCocycle:
    def test_zero_eta(self, grid):
        noise = NoiseSpec(grid.from_function(np.sin), grid.zeros())
        assert cocycle(noise, 0.8).values.max_abs() == 0.0

    def test_constant_eta(self, grid):
        noise = NoiseSpec(grid.from_function(np.sin), grid.constant(0.3))
        np.testing.assert_allclose(cocycle(noise, 1.5).values.values, 0.45, atol=1e-13)

    def test_zero_xi(self, grid):
        noise = NoiseSpec(grid.zeros(), grid.from_function(np.cos))
        np.testing.assert_allclose(cocycle(noise, -0.7).values.values, -0.7 * np.cos(grid.x), atol=1e-13)

    def test_eta_equal_xi_prime_gives_log_jacobian(self, grid):
        # d/dt log J = xi'(phi) along the flow, the same ODE as c with eta = xi'.
        xi = grid.from_function(lambda x: np.sin(x) + 0.3 * np.cos(2 * x))
        noise = NoiseSpec(xi, differentiate(xi, 1))
        np.testing.assert_allclose(cocycle(noise, 0.9).values.values, np.log(flow_map(noise, 0.9).jacobian), atol=1e-10)

    def test_additivity(self, sine):
        t, s = 0.6, -0.35
        c_t = cocycle(sine, t).values
        shifted = interpolate(c_t, flow_map(sine, s).positions)
        lhs = cocycle(sine, t + s).values.values
        np.testing.assert_allclose(lhs, cocycle(sine, s).values.values + shifted, atol=1e-10)


class TestGroupApply:
    def test_translation_follows_generator(self, grid):
        # U_t = exp(t xi d/dx) with constant xi is f(x + xi t)
        noise = NoiseSpec(grid.constant(0.7), grid.zeros())
        f = lambda x: np.sin(x) + 0.3 * np.cos(2 * x)  # noqa: E731
        for t in (-1.0, -0.5, 0.5, 1.0):
            assert (group_apply(noise, t, grid.from_function(f)) - grid.from_function(lambda x: f(x + 0.7 * t))).max_abs() < 1e-10

    def test_pure_scaling(self, grid, rng):
        f = smooth_field(grid, rng)
        noise = NoiseSpec(grid.zeros(), grid.constant(0.4))
        np.testing.assert_allclose(group_apply(noise, 1.5, f).values, math.exp(0.6) * f.values, rtol=1e-13)

    def test_inverse_round_trip(self, sine, grid, rng):
        f = smooth_field(grid, rng)
        back = group_apply(sine, -0.3, group_apply(sine, 0.3, f))
        assert (back - f).max_abs() < 1e-7

    @pytest.mark.parametrize("t", [0.6, -0.8])
    def test_against_method_of_lines(self, sine, grid, rng, t):
        f = smooth_field(grid, rng, modes=4)
        assert sobolev_norm(group_apply(sine, t, f) - method_of_lines(sine, f, t), 0) < 1e-8

    def test_group_law_fourth_order_in_substeps(self, sine, grid, rng):
        f = smooth_field(grid, rng)
        t, s = 0.7, 0.4
        errs = []
        for m in (6, 12):
            lhs = group_apply(sine, t + s, f, substeps=2 * m, method="direct")
            rhs = group_apply(sine, t, group_apply(sine, s, f, substeps=m, method="direct"), substeps=m, method="direct")
            errs.append(sobolev_norm(lhs - rhs, 0))
        assert errs[0] / errs[1] > 12

    def test_table_matches_direct(self, sine, grid, rng):
        f = smooth_field(grid, rng)
        tab = sine.tabulated(2.0)
        for t in (-1.7, -0.33, 0.01, 0.9, 1.99):
            direct = group_apply(sine, t, f, method="direct")
            assert (group_apply(tab, t, f, method="table") - direct).max_abs() < 1e-9

    def test_table_requires_cover(self, sine, grid):
        with pytest.raises(ValueError):
            group_apply(sine.tabulated(1.0), 1.5, grid.zeros(), method="table")
        assert not CharacteristicTable(sine, 1.0).covers(1.5)

    def test_exponential_envelope_stable_under_refinement(self, rng):
        rates = []
        for n in (128, 256):
            g = Grid1D(2 * math.pi, n)
            noise = NoiseSpec(g.from_function(np.sin), g.from_function(np.cos))
            f = g.from_function(lambda x: np.exp(np.cos(x)))
            base = [sobolev_norm(f, s) for s in range(3)]
            rates.append(max(
                (math.log(sobolev_norm(group_apply(noise, t, f), s)) - math.log(base[s])) / abs(t)
                for t in (-2, -1, -0.5, 0.5, 1, 2) for s in range(3)
            ))
        assert math.isfinite(rates[0])
        assert abs(rates[0] - rates[1]) < 1e-6

    @settings(max_examples=15, deadline=None)
    @given(st.floats(-1, 1), st.floats(-1, 1))
    def test_group_law_property(self, t, s):
        g = Grid1D(2 * math.pi, 128)
        noise = NoiseSpec(g.from_function(np.sin), g.from_function(np.cos))
        f = g.from_function(lambda x: np.cos(x) + 0.5 * np.sin(2 * x))
        lhs = group_apply(noise, t + s, f)
        rhs = group_apply(noise, t, group_apply(noise, s, f))
        assert sobolev_norm(lhs - rhs, 0) < 1e-8


class TestGenerator:
    def test_on_constant(self, sine, grid):
        np.testing.assert_allclose(generator_apply(sine, grid.constant(1.0)).values, np.cos(grid.x), atol=1e-13)

    def test_zero_xi(self, grid, rng):
        f = smooth_field(grid, rng)
        noise = NoiseSpec(grid.zeros(), grid.from_function(np.cos))
        np.testing.assert_allclose(generator_apply(noise, f).values, np.cos(grid.x) * f.values, atol=1e-12)

    def test_difference_quotient_order(self, sine, grid):
        f = grid.from_function(lambda x: np.sin(x) + 0.3 * np.cos(2 * x))
        Df = generator_apply(sine, f)
        hs = np.array([1e-2, 5e-3, 2.5e-3])
        errs = [sobolev_norm((group_apply(sine, h, f) - f) / h - Df, 0) for h in hs]
        assert np.polyfit(np.log(hs), np.log(errs), 1)[0] >= 0.9
