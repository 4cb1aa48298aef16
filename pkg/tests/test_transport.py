import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from stochch.ch import apply_A, ch_coefficients
from stochch.flow import NoiseSpec, group_apply
from stochch.spectral import Field, Grid1D, differentiate, helmholtz_inverse, sobolev_norm
from stochch.transport import (
    assemble_hatA,
    coefficient_growth_report,
    hatA_direct,
    transport_a,
    transport_b,
)

from .conftest import smooth_field


def mol_coefficients(noise, a0, b0, t, steps=800):
    """Classical RK4 on the spectral semi-discretization of
    a_t = xi a_x - xi' a,  b_t = xi b_x - eta' a."""
    g = a0.grid
    k = g.k
    xi, xi_x, eta_x = noise.xi.values, noise.xi_x.values, noise.eta_x.values

    def dx(u):
        return np.fft.irfft(1j * k * np.fft.rfft(u), n=g.n)

    def rhs(s):
        a, b = s
        return np.array([xi * dx(a) - xi_x * a, xi * dx(b) - eta_x * a])

    s = np.array([a0.values, b0.values])
    h = t / steps
    for _ in range(steps):
        k1 = rhs(s)
        k2 = rhs(s + 0.5 * h * k1)
        k3 = rhs(s + 0.5 * h * k2)
        k4 = rhs(s + h * k3)
        s = s + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
    return Field(g, s[0]), Field(g, s[1])


@pytest.fixture
def sine(grid):
    return NoiseSpec(grid.from_function(np.sin), grid.from_function(np.cos))


class TestTransportA:
    def test_zero_xi(self, grid, rng):
        a0 = smooth_field(grid, rng)
        noise = NoiseSpec(grid.zeros(), grid.from_function(np.cos))
        assert (transport_a(a0, noise, 0.9) - a0).max_abs() < 1e-14

    def test_constant_xi_advects(self, grid):
        noise = NoiseSpec(grid.constant(0.6), grid.zeros())
        out = transport_a(grid.from_function(np.cos), noise, 0.5)
        np.testing.assert_allclose(out.values, np.cos(grid.x + 0.3), atol=1e-12)

    def test_against_method_of_lines(self, grid, sine):
        a0 = grid.from_function(np.cos)
        ref, _ = mol_coefficients(sine, a0, grid.zeros(), 0.2)
        assert sobolev_norm(transport_a(a0, sine, 0.2) - ref, 0) < 1e-6


class TestTransportB:
    def test_zero_eta_is_pure_transport(self, grid, rng):
        noise = NoiseSpec(grid.from_function(np.sin), grid.zeros())
        a0, b0 = smooth_field(grid, rng), smooth_field(grid, rng)
        out = transport_b(b0, lambda s: transport_a(a0, noise, s), noise, 0.7)
        expected = group_apply(noise.pure_transport(), 0.7, b0)
        assert (out - expected).max_abs() < 1e-13

    def test_zero_xi_closed_form(self, grid, rng):
        noise = NoiseSpec(grid.zeros(), grid.from_function(np.cos))
        a0, b0 = smooth_field(grid, rng), smooth_field(grid, rng)
        out = transport_b(b0, lambda s: a0, noise, 0.8)
        expected = b0 - 0.8 * Field(grid, noise.eta_x.values * a0.values)
        assert (out - expected).max_abs() < 1e-10

    def test_against_method_of_lines(self, grid, sine):
        a0 = grid.from_function(np.cos)
        b0 = grid.from_function(lambda x: np.sin(2 * x))
        _, ref = mol_coefficients(sine, a0, b0, 0.2)
        out = transport_b(b0, lambda s: transport_a(a0, sine, s), sine, 0.2, quad_nodes=8)
        assert sobolev_norm(out - ref, 0) < 1e-6

    def test_quadrature_converged(self, grid, sine):
        a0, b0 = grid.from_function(np.cos), grid.from_function(np.sin)
        path = lambda s: transport_a(a0, sine, s)  # noqa: E731
        b8 = transport_b(b0, path, sine, 0.9, quad_nodes=8)
        b16 = transport_b(b0, path, sine, 0.9, quad_nodes=16)
        assert (b8 - b16).max_abs() < 1e-10

    def test_rejects_quad_nodes(self, grid, sine):
        with pytest.raises(ValueError):
            transport_b(grid.zeros(), lambda s: grid.zeros(), sine, 0.1, quad_nodes=1)


class TestAssembleHatA:
    def test_tau_zero_is_A(self, grid, sine, rng):
        v = smooth_field(grid, rng)
        c = assemble_hatA(0.0, v, sine).coeffs
        ref = ch_coefficients(v)
        assert (c.a_t - ref.a).max_abs() < 1e-14 and (c.b_t - ref.b).max_abs() < 1e-14

    def test_scalar_group(self, grid, rng):
        h, t = 0.4, 0.7
        noise = NoiseSpec(grid.zeros(), grid.constant(h))
        v, f = smooth_field(grid, rng), smooth_field(grid, rng)
        out = assemble_hatA(t, v, noise).apply(f)
        np.testing.assert_allclose(out.values, math.exp(-h * t) * apply_A(v, f).values, atol=1e-12)

    def test_matches_direct_conjugation(self, grid, sine):
        r = np.random.default_rng(99)
        worst = 0.0
        for _ in range(5):
            tau = float(r.uniform(-1, 1))
            v, f = smooth_field(grid, r), smooth_field(grid, r)
            a = assemble_hatA(tau, v, sine).apply(f)
            b = hatA_direct(tau, v, f, sine)
            worst = max(worst, sobolev_norm(a - b, 0) / sobolev_norm(b, 0))
        assert worst < 1e-5

    @settings(max_examples=10, deadline=None)
    @given(st.floats(-1, 1), st.floats(-2, 2))
    def test_linear_in_v(self, tau, alpha):
        g = Grid1D(2 * math.pi, 128)
        noise = NoiseSpec(g.from_function(np.sin), g.from_function(np.cos))
        v1 = g.from_function(np.cos)
        v2 = g.from_function(lambda x: np.sin(2 * x) + 0.5)
        c = lambda v: assemble_hatA(tau, v, noise).coeffs  # noqa: E731
        c12 = c(alpha * v1 + v2)
        c1, c2 = c(v1), c(v2)
        assert (c12.a_t - (alpha * c1.a_t + c2.a_t)).max_abs() < 1e-9
        assert (c12.b_t - (alpha * c1.b_t + c2.b_t)).max_abs() < 1e-9


class TestHatADirect:
    def test_tau_zero(self, grid, sine, rng):
        v, f = smooth_field(grid, rng), smooth_field(grid, rng)
        assert (hatA_direct(0.0, v, f, sine) - apply_A(v, f)).max_abs() < 1e-14

    def test_zero_v(self, grid, sine, rng):
        assert hatA_direct(0.6, grid.zeros(), smooth_field(grid, rng), sine).max_abs() == 0

    def test_translation_equivariance(self, grid):
        # U_tau g = g(x + c tau) for constant xi = c; so Ahat = T_{+} A(T_{-} v) T_{-} f
        c, tau = 0.8, 0.4
        s = c * tau
        noise = NoiseSpec(grid.constant(c), grid.zeros())
        v, f = grid.from_function(np.cos), grid.from_function(np.sin)
        inner = apply_A(grid.from_function(lambda x: np.cos(x - s)), grid.from_function(lambda x: np.sin(x - s)))
        # translate the result by +s spectrally (exact phase shift)
        shifted = Field.from_hat(grid, inner.hat * np.exp(1j * grid.k * s))
        assert (hatA_direct(tau, v, f, noise) - shifted).max_abs() < 1e-9


class TestGrowthReport:
    def test_t_zero_identity(self, grid, sine, rng):
        v = smooth_field(grid, rng)
        rep = coefficient_growth_report(v, sine, [0.0])
        assert rep.rows[0][1] == pytest.approx(sobolev_norm(v, 1), rel=1e-12)
        assert rep.rows[0][3] == pytest.approx(sobolev_norm(v, 1), rel=1e-15)

    def test_no_noise_constant_norms(self, grid, rng):
        v = smooth_field(grid, rng)
        rep = coefficient_growth_report(v, NoiseSpec.zero(grid), [0.0, 0.5, 1.0])
        assert np.ptp([r[1] for r in rep.rows]) < 1e-12
        assert np.ptp([r[2] for r in rep.rows]) < 1e-12

    def test_envelope_covers_samples(self, grid):
        noise = NoiseSpec(grid.from_function(np.sin), grid.from_function(lambda x: 2 * np.cos(x)))
        v = grid.from_function(lambda x: 1 + 0.5 * np.cos(x))
        ts = [0, 0.5, 1, 1.5, 2]
        rep = coefficient_growth_report(v, noise, ts)
        assert math.isfinite(rep.C1) and math.isfinite(rep.C2) and rep.C2 >= 0
        for t, na, nb, nv in rep.rows:
            assert max(na, nb) <= rep.C1 * math.exp(rep.C2 * t) * nv * (1 + 1e-12)
        lines = rep.to_csv().splitlines()
        assert lines[0] == "t,norm_a_H3,norm_b_H2,norm_v_H1" and len(lines) == 6

    def test_b0_is_twice_a0_prime(self, grid, rng):
        v = smooth_field(grid, rng)
        c = assemble_hatA(0.0, v, NoiseSpec.zero(grid)).coeffs
        assert (c.b_t - 2 * differentiate(helmholtz_inverse(v), 1)).max_abs() < 1e-14
