"""Characteristic flow of ``xi d/dx`` and the group generated by ``D = xi d/dx + eta``.

``phi_t`` solves ``d phi / dt = xi(phi)``.  The group ``U_t = exp(t D)`` acts by

    U_t f(x) = exp(c(t, x)) f(phi_t(x)),   c(t, x) = int_0^t eta(phi_s(x)) ds,

which solves ``u_t = xi u_x + eta u``; ``c`` obeys ``c_t = xi c_x + eta``.

Two evaluation routes share the same contract:

* the direct route integrates the characteristic system with classical RK4
  for each requested ``t``;
* a :class:`CharacteristicTable` integrates once over ``[-span, span]`` and
  answers arbitrary ``t`` by cubic Hermite interpolation in time.  Pipelines
  that need thousands of group applications use the table; oracles use the
  direct route.
"""

from __future__ import annotations

import math
import threading
from dataclasses import dataclass, field

import numpy as np

from .presets import field_from_preset
from .spectral import Field, Grid1D, TrigSeries, differentiate, interpolate, multiply

__all__ = [
    "NonFiniteError",
    "NoiseSpec",
    "FlowMap",
    "CocycleField",
    "CharacteristicTable",
    "default_substeps",
    "flow_map",
    "cocycle",
    "group_apply",
    "generator_apply",
]

SMOOTHNESS_RTOL = 1e-10
# Coefficient modes below this fraction of the peak are round-off from
# differentiation; dropping them keeps characteristic integration O(n).
SERIES_RTOL = 1e-13


class NonFiniteError(FloatingPointError):
    """A computation produced NaN/inf.  ``diagnostics`` describes where."""

    def __init__(self, message: str, diagnostics: dict | None = None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


def _spectral_tail(f: Field) -> float:
    mag = np.abs(f.hat)
    peak = mag.max()
    if peak == 0.0:
        return 0.0
    return float(mag[f.grid.dealias_cutoff + 1 :].max() / peak)


@dataclass(frozen=True, eq=False)
class NoiseSpec:
    """Coefficients of the noise operator ``D = xi d/dx + eta``.

    ``table_span`` switches group applications with ``|t| <= table_span`` to a
    tabulated characteristic flow (see :class:`CharacteristicTable`).
    """

    xi: Field
    eta: Field
    table_span: float | None = None
    table_step: float = 1.0 / 128
    _tables: dict = field(default_factory=dict, init=False, repr=False)
    _lock: threading.Lock = field(default_factory=threading.Lock, init=False, repr=False)

    def __post_init__(self):
        if self.xi.grid != self.eta.grid:
            raise ValueError("xi and eta must live on the same grid")
        for name, f in (("xi", self.xi), ("eta", self.eta)):
            if not f.is_finite():
                raise ValueError(f"{name} has non-finite values")
            tail = _spectral_tail(f)
            if tail > SMOOTHNESS_RTOL:
                raise ValueError(
                    f"{name} is under-resolved: spectral tail {tail:.2e} exceeds {SMOOTHNESS_RTOL:.0e}"
                    " of the peak; refine the grid or smooth the coefficient"
                )
        set_ = object.__setattr__
        set_(self, "xi_x", differentiate(self.xi, 1))
        set_(self, "xi_xx", differentiate(self.xi, 2))
        set_(self, "eta_x", differentiate(self.eta, 1))
        set_(self, "xi_series", TrigSeries(self.xi, SERIES_RTOL))
        set_(self, "xi_x_series", TrigSeries(self.xi_x, SERIES_RTOL))
        set_(self, "eta_series", TrigSeries(self.eta, SERIES_RTOL))

    @classmethod
    def from_presets(cls, grid: Grid1D, xi: str, eta: str, **kwargs) -> "NoiseSpec":
        """Build from preset strings; ``eta="holm"`` couples ``eta = 2 xi'``."""
        xi_f = field_from_preset(grid, xi)
        if eta.strip() == "holm":
            eta_f = 2.0 * differentiate(xi_f, 1)
        else:
            eta_f = field_from_preset(grid, eta)
        return cls(xi_f, eta_f, **kwargs)

    @classmethod
    def zero(cls, grid: Grid1D) -> "NoiseSpec":
        return cls(grid.zeros(), grid.zeros())

    @property
    def grid(self) -> Grid1D:
        return self.xi.grid

    @property
    def max_xi(self) -> float:
        return self.xi.max_abs()

    def with_eta(self, eta: Field) -> "NoiseSpec":
        """Same vector field, different zeroth-order coefficient."""
        return NoiseSpec(self.xi, eta, table_span=self.table_span, table_step=self.table_step)

    def tabulated(self, span: float, step: float | None = None) -> "NoiseSpec":
        return NoiseSpec(self.xi, self.eta, table_span=float(span), table_step=step or self.table_step)

    def untabulated(self) -> "NoiseSpec":
        return NoiseSpec(self.xi, self.eta)

    def _memo(self, key, factory):
        with self._lock:
            if key not in self._tables:
                self._tables[key] = factory()
            return self._tables[key]

    def table(self) -> "CharacteristicTable | None":
        if self.table_span is None:
            return None
        return self._memo("table", lambda: CharacteristicTable(self, self.table_span, self.table_step))

    def adjoint_pair(self) -> "NoiseSpec":
        """``(xi, -xi')``: the group that transports first-order coefficients."""
        return self._memo("adjoint", lambda: self.with_eta(-self.xi_x))

    def pure_transport(self) -> "NoiseSpec":
        """``(xi, 0)``."""
        return self._memo("transport", lambda: self.with_eta(self.grid.zeros()))


@dataclass(frozen=True, eq=False)
class FlowMap:
    """``phi_t`` at the grid points, unreduced, with ``d phi_t / dx``."""

    grid: Grid1D
    t: float
    positions: np.ndarray
    jacobian: np.ndarray

    @property
    def displacement(self) -> Field:
        return Field(self.grid, self.positions - self.grid.x)

    def at(self, points) -> np.ndarray:
        """Evaluate ``phi_t`` at arbitrary points via the periodic displacement."""
        points = np.asarray(points, dtype=float)
        return points + interpolate(self.displacement, points)


@dataclass(frozen=True, eq=False)
class CocycleField:
    t: float
    values: Field


def default_substeps(noise: NoiseSpec, t: float) -> int:
    """``ceil(8 |t| max|xi| / spacing)``, at least 16."""
    return max(16, math.ceil(8.0 * abs(t) * noise.max_xi / noise.grid.spacing))


def _rk4(rhs, state, h: float, steps: int, what: str):
    for step in range(steps):
        k1 = rhs(state)
        k2 = rhs([s + 0.5 * h * k for s, k in zip(state, k1)])
        k3 = rhs([s + 0.5 * h * k for s, k in zip(state, k2)])
        k4 = rhs([s + h * k for s, k in zip(state, k3)])
        state = [s + (h / 6.0) * (a + 2.0 * b + 2.0 * c + d) for s, a, b, c, d in zip(state, k1, k2, k3, k4)]
        if not all(np.all(np.isfinite(s)) for s in state):
            raise NonFiniteError(
                f"non-finite values while integrating {what}",
                {"step": step, "steps": steps, "h": h, "what": what},
            )
    return state


def flow_map(noise: NoiseSpec, t: float, substeps: int | None = None) -> FlowMap:
    """Integrate ``phi' = xi(phi)`` and its variational equation from the identity."""
    substeps = substeps or default_substeps(noise, t)
    xi, xi_x = noise.xi_series, noise.xi_x_series

    def rhs(state):
        phi, jac = state
        return [xi(phi), xi_x(phi) * jac]

    x = noise.grid.x
    phi, jac = _rk4(rhs, [x.copy(), np.ones_like(x)], t / substeps, substeps, "flow map")
    return FlowMap(noise.grid, float(t), phi, jac)


def _characteristics(noise: NoiseSpec, t: float, substeps: int | None):
    """Integrate ``chi' = xi(chi)``, ``c' = eta(chi)`` over ``s in [0, t]`` from each grid point.

    Returns ``(phi_t(x), c(t, x))`` at the grid points.
    """
    substeps = substeps or default_substeps(noise, t)
    xi, eta = noise.xi_series, noise.eta_series

    def rhs(state):
        chi, _ = state
        return [xi(chi), eta(chi)]

    x = noise.grid.x
    chi, c = _rk4(rhs, [x.copy(), np.zeros_like(x)], t / substeps, substeps, "characteristic")
    return chi, c


def cocycle(noise: NoiseSpec, t: float, substeps: int | None = None) -> CocycleField:
    _, c = _characteristics(noise, t, substeps)
    return CocycleField(float(t), Field(noise.grid, c))


def group_apply(
    noise: NoiseSpec,
    t: float,
    f: Field,
    substeps: int | None = None,
    method: str = "auto",
) -> Field:
    """``U_t f = exp(c(t, .)) f(phi_t(.))``; negative ``t`` gives the inverse.

    ``method`` is ``"direct"`` (RK4 per call), ``"table"`` (requires a
    tabulated noise covering ``|t|``) or ``"auto"`` (table when available).
    """
    if method not in ("auto", "direct", "table"):
        raise ValueError(f"unknown method {method!r}")
    if t == 0.0:
        return f
    table = noise.table() if method != "direct" else None
    if table is not None and table.covers(t):
        positions, c = table.forward(t)
    elif method == "table":
        raise ValueError(f"no characteristic table covering t={t}")
    else:
        positions, c = _characteristics(noise, t, substeps)
    with np.errstate(over="ignore", invalid="ignore"):
        out = np.exp(c) * interpolate(f, positions)
    if not np.all(np.isfinite(out)):
        raise NonFiniteError("group application produced non-finite values", {"t": t})
    return Field(f.grid, out)


def generator_apply(noise: NoiseSpec, f: Field) -> Field:
    """``D f = xi f' + eta f`` with dealiased products."""
    return multiply(noise.xi, differentiate(f, 1)) + multiply(noise.eta, f)


class CharacteristicTable:
    """Characteristics of every grid point tabulated over ``r in [-span, span]``.

    Along ``r -> phi_r(x_i)`` the table stores the position together with the
    running integrals of ``xi'`` and ``eta``; their time derivatives are known
    exactly, so cubic Hermite interpolation between nodes is fourth order in the
    node spacing.  Then

        phi_t(x_i) = P(t),   c(t, x_i) = I_eta(t),   d phi_t / dx = exp(I_xi'(t)).
    """

    def __init__(self, noise: NoiseSpec, span: float, step: float = 1.0 / 128, substeps: int = 4):
        if span <= 0 or step <= 0:
            raise ValueError("span and step must be positive")
        self.grid = noise.grid
        self.step = float(step)
        self.nodes = int(math.ceil(span / step))
        self.span = self.nodes * self.step
        xi, xi_x, eta = noise.xi_series, noise.xi_x_series, noise.eta_series
        x = self.grid.x

        def rhs(state):
            p = state[0]
            return [xi(p), xi_x(p), eta(p)]

        size = 2 * self.nodes + 1
        P, A, B = (np.empty((size, x.size)) for _ in range(3))
        mid = self.nodes
        P[mid], A[mid], B[mid] = x, 0.0, 0.0
        for sign in (1.0, -1.0):
            state = [x.copy(), np.zeros_like(x), np.zeros_like(x)]
            h = sign * self.step / substeps
            for j in range(1, self.nodes + 1):
                state = _rk4(rhs, state, h, substeps, "characteristic table")
                idx = mid + int(sign) * j
                P[idx], A[idx], B[idx] = state
        self.P, self.A, self.B = P, A, B
        self.dP = xi(P)
        self.dA = xi_x(P)
        self.dB = eta(P)

    def covers(self, r: float) -> bool:
        return abs(r) <= self.span

    def _hermite(self, r: float, Y, dY):
        s = (r + self.span) / self.step
        j = min(max(int(math.floor(s)), 0), 2 * self.nodes - 1)
        th = s - j
        h = self.step
        h00 = (1 + 2 * th) * (1 - th) ** 2
        h10 = th * (1 - th) ** 2
        h01 = th**2 * (3 - 2 * th)
        h11 = th**2 * (th - 1)
        return h00 * Y[j] + h10 * h * dY[j] + h01 * Y[j + 1] + h11 * h * dY[j + 1]

    def flow_map(self, t: float) -> FlowMap:
        pos = self._hermite(t, self.P, self.dP)
        jac = np.exp(self._hermite(t, self.A, self.dA))
        return FlowMap(self.grid, float(t), pos, jac)

    def forward(self, t: float):
        """``(phi_t(x_i), c(t, x_i))``."""
        return self._hermite(t, self.P, self.dP), self._hermite(t, self.B, self.dB)
