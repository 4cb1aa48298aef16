"""Deterministic Camassa-Holm equation in momentum form.

With ``y = u - u_xx`` the equation reads ``y_t + A(y) y = 0`` where
``A(v) f = a(v) f' + b(v) f``, ``a(v) = Q^-2 v`` and ``b(v) = 2 (Q^-2 v)'``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .flow import NonFiniteError
from .spectral import (
    Field,
    differentiate,
    helmholtz_inverse,
    multiply,
    sobolev_norm,
    spectral_filter,
)

__all__ = [
    "ChCoefficients",
    "MomentumState",
    "Conserved",
    "ch_coefficients",
    "apply_A",
    "ch_rhs",
    "rk4_step",
    "deterministic_step",
    "conserved_quantities",
    "integrate_deterministic",
]


@dataclass(frozen=True, eq=False)
class ChCoefficients:
    a: Field
    b: Field

    def apply(self, f: Field) -> Field:
        return multiply(self.a, differentiate(f, 1)) + multiply(self.b, f)


@dataclass(frozen=True, eq=False)
class MomentumState:
    y: Field
    time: float = 0.0

    @property
    def u(self) -> Field:
        return helmholtz_inverse(self.y)


@dataclass(frozen=True)
class Conserved:
    mass: float
    energy: float


def ch_coefficients(v: Field) -> ChCoefficients:
    a = helmholtz_inverse(v)
    return ChCoefficients(a, 2.0 * differentiate(a, 1))


def apply_A(v: Field, f: Field) -> Field:
    return ch_coefficients(v).apply(f)


def ch_rhs(y: Field) -> Field:
    """``F(y) = A(y) y = u y' + 2 u_x y``."""
    return apply_A(y, y)


def rk4_step(rhs, y: Field, t: float, dt: float) -> Field:
    """One classical RK4 step of ``y' = rhs(t, y)``."""
    k1 = rhs(t, y)
    k2 = rhs(t + 0.5 * dt, y + (0.5 * dt) * k1)
    k3 = rhs(t + 0.5 * dt, y + (0.5 * dt) * k2)
    k4 = rhs(t + dt, y + dt * k3)
    return y + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def deterministic_step(state: MomentumState, dt: float) -> MomentumState:
    """RK4 step of ``y' = -F(y)`` followed by the top-third spectral filter."""
    if not dt > 0:
        raise ValueError(f"dt must be positive, got {dt}")
    y = spectral_filter(rk4_step(lambda t, y: -ch_rhs(y), state.y, state.time, dt))
    if not y.is_finite():
        raise NonFiniteError(
            f"non-finite momentum at t={state.time + dt}",
            {"time": state.time, "dt": dt, "last_valid": state},
        )
    return MomentumState(y, state.time + dt)


def conserved_quantities(state: MomentumState) -> Conserved:
    """``mass = int u``, ``energy = int (u^2 + u_x^2)`` (the H^1 norm squared of u)."""
    u = state.u
    return Conserved(mass=float(u.hat[0].real * u.grid.length), energy=sobolev_norm(u, 1) ** 2)


def integrate_deterministic(y0: Field, dt: float, T: float) -> list[MomentumState]:
    """March from ``t = 0`` to ``T`` in ``round(T / dt)`` steps, returning every state."""
    steps = int(round(T / dt))
    if steps < 1 or not np.isclose(steps * dt, T, rtol=1e-9, atol=0):
        raise ValueError(f"T={T} is not an integer multiple of dt={dt}")
    states = [MomentumState(y0, 0.0)]
    for k in range(steps):
        s = deterministic_step(states[-1], dt)
        states.append(MomentumState(s.y, (k + 1) * dt))
    return states
