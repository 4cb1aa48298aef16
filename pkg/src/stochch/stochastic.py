"""Pathwise solvers for ``dy + F(y) dt + D y o dw = 0`` (Stratonovich).

Three routes to the same solution:

* :func:`doss_sussman_solve` integrates the random PDE ``z' = -Ahat(w(t), z) z``
  and maps back with ``y(t) = U_{-w(t)} z(t)``;
* :func:`direct_spde_solve` steps the SPDE itself (Heun in Stratonovich form,
  or Euler-Maruyama on the Ito form with the ``+1/2 D^2 y`` correction);
* :func:`smooth_path_solve` treats a differentiable path with ordinary calculus,
  ``y' = -F(y) - w'(t) D y``.  Only meaningful for smooth surrogate paths.
"""

from __future__ import annotations

import csv
import enum
import io
import math
from dataclasses import dataclass, field
from typing import Callable, Protocol

import numpy as np

from .ch import MomentumState, ch_rhs, deterministic_step, rk4_step
from .flow import NoiseSpec, NonFiniteError, generator_apply, group_apply
from .spectral import Field, helmholtz_inverse, sobolev_norm, spectral_filter
from .transport import DEFAULT_QUAD_NODES, assemble_hatA

__all__ = [
    "BrownianPath",
    "SmoothPath",
    "StopRule",
    "StopReason",
    "TrajectoryResult",
    "sample_brownian",
    "refine",
    "solve_random_pde",
    "doss_sussman_solve",
    "direct_spde_solve",
    "smooth_path_solve",
    "deterministic_solve",
    "SCHEMES",
]

SCHEMES = ("heun_stratonovich", "euler_ito_corrected")
DIAGNOSTIC_COLUMNS = ("t", "w", "z_H0", "z_H1", "z_H2", "y_H0", "y_H1", "y_H2", "mass", "energy")


class Path(Protocol):
    def value(self, t): ...


def _generator(seed: int, level: int) -> np.random.Generator:
    # Counter-based stream per (seed, level): refinements never disturb coarser draws.
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([int(seed) & (2**64 - 1), level])))


@dataclass(frozen=True, eq=False)
class BrownianPath:
    """Piecewise-linear Brownian path on a uniform mesh of ``2**level`` refinements."""

    seed: int
    times: np.ndarray
    values: np.ndarray
    level: int = 0

    def __post_init__(self):
        for name in ("times", "values"):
            a = np.array(getattr(self, name), dtype=float)
            a.setflags(write=False)
            object.__setattr__(self, name, a)
        if self.times.shape != self.values.shape or self.times[0] != 0.0 or self.values[0] != 0.0:
            raise ValueError("path must start at (0, 0) with matching times/values")

    @property
    def dt(self) -> float:
        return float(self.times[1] - self.times[0])

    @property
    def T(self) -> float:
        return float(self.times[-1])

    def value(self, t):
        return np.interp(t, self.times, self.values)

    def truncated(self, t: float) -> "BrownianPath":
        """Copy that freezes the path after ``t`` (for adaptedness checks)."""
        vals = np.where(self.times <= t, self.values, self.value(t))
        return BrownianPath(self.seed, self.times, vals, self.level)


@dataclass(frozen=True)
class SmoothPath:
    """Differentiable surrogate path ``w(t)`` with its derivative."""

    func: Callable[[float], float]
    deriv: Callable[[float], float]
    name: str = "smooth"

    def value(self, t):
        return self.func(t)

    def derivative(self, t):
        return self.deriv(t)

    @classmethod
    def sine(cls, amplitude: float, frequency: float) -> "SmoothPath":
        return cls(
            lambda t: amplitude * math.sin(frequency * t),
            lambda t: amplitude * frequency * math.cos(frequency * t),
            f"{amplitude}*sin({frequency}t)",
        )

    @classmethod
    def zero(cls) -> "SmoothPath":
        return cls(lambda t: 0.0, lambda t: 0.0, "zero")


def sample_brownian(seed: int, T_max: float, dt: float) -> BrownianPath:
    if not (dt > 0 and T_max >= dt):
        raise ValueError(f"need dt > 0 and T_max >= dt, got dt={dt}, T_max={T_max}")
    steps = int(round(T_max / dt))
    if not math.isclose(steps * dt, T_max, rel_tol=1e-9):
        raise ValueError(f"T_max={T_max} is not an integer multiple of dt={dt}")
    incr = _generator(seed, 0).normal(0.0, math.sqrt(dt), steps)
    values = np.concatenate([[0.0], np.cumsum(incr)])
    return BrownianPath(seed, np.arange(steps + 1) * dt, values, 0)


def refine(path: BrownianPath, times: int = 1) -> BrownianPath:
    """Insert Brownian-bridge midpoints; existing knots are kept bit-identical."""
    for _ in range(times):
        dt = path.dt
        level = path.level + 1
        w = path.values
        mid = 0.5 * (w[:-1] + w[1:]) + _generator(path.seed, level).normal(0.0, math.sqrt(dt / 4), w.size - 1)
        values = np.empty(2 * w.size - 1)
        values[0::2] = w
        values[1::2] = mid
        steps = values.size - 1
        path = BrownianPath(path.seed, np.arange(steps + 1) * (dt / 2), values, level)
    return path


@dataclass(frozen=True)
class StopRule:
    """Stop when ``|z|_H2 > R``, ``|w(t)| >= T_w`` or ``t >= T_max``."""

    R: float
    T_w: float = 3.0
    T_max: float = 1.0

    def __post_init__(self):
        for name in ("R", "T_w", "T_max"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v > 0):
                raise ValueError(f"StopRule.{name} must be positive and finite, got {v}")

    @classmethod
    def default_for(cls, y0: Field, **overrides) -> "StopRule":
        params = {"R": 10.0 * sobolev_norm(y0, 2), "T_w": 3.0, "T_max": 1.0}
        params.update({k: v for k, v in overrides.items() if v is not None})
        return cls(**params)


class StopReason(str, enum.Enum):
    HORIZON = "horizon"
    H2_RADIUS = "h2_radius"
    PATH_EXCURSION = "path_excursion"
    NONFINITE = "nonfinite"


@dataclass(eq=False)
class TrajectoryResult:
    times: list[float]
    w: list[float]
    z_states: list[Field]
    y_states: list[Field]
    theta: float
    stop_reason: StopReason
    diagnostics: list[dict] = field(default_factory=list)
    message: str = ""

    @property
    def final_y(self) -> Field:
        return self.y_states[-1]

    def y_at(self, t: float, tol: float = 1e-9) -> Field:
        i = int(np.argmin(np.abs(np.asarray(self.times) - t)))
        if abs(self.times[i] - t) > tol:
            raise KeyError(f"no stored state at t={t}")
        return self.y_states[i]

    def fill_diagnostics(self) -> None:
        self.diagnostics = [
            _diagnostic_row(t, w, z, y) for t, w, z, y in zip(self.times, self.w, self.z_states, self.y_states)
        ]

    def diagnostics_csv(self) -> str:
        if not self.diagnostics:
            self.fill_diagnostics()
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(DIAGNOSTIC_COLUMNS)
        for row in self.diagnostics:
            writer.writerow([repr(float(row[c])) for c in DIAGNOSTIC_COLUMNS])
        return buf.getvalue()


def _diagnostic_row(t: float, w: float, z: Field, y: Field) -> dict:
    u = helmholtz_inverse(y)
    row = {"t": t, "w": w}
    for s in range(3):
        row[f"z_H{s}"] = sobolev_norm(z, s)
        row[f"y_H{s}"] = sobolev_norm(y, s)
    row["mass"] = float(u.hat[0].real * u.grid.length)
    row["energy"] = sobolev_norm(u, 1) ** 2
    return row


def _with_table(noise: NoiseSpec, path: Path, stop: StopRule, dt: float) -> NoiseSpec:
    """Attach a characteristic table wide enough for every path value we will query."""
    if noise.table_span is not None:
        return noise
    if isinstance(path, BrownianPath):
        mask = path.times <= stop.T_max + dt
        reach = float(np.max(np.abs(path.values[mask])))
    else:
        ts = np.linspace(0.0, stop.T_max + dt, 2001)
        reach = max(abs(float(path.value(t))) for t in ts)
    span = min(reach, stop.T_w + 1.0) + 0.25
    return noise.tabulated(span)


def _step_count(stop: StopRule, dt: float) -> int:
    if not dt > 0:
        raise ValueError(f"dt must be positive, got {dt}")
    steps = int(round(stop.T_max / dt))
    if steps < 1 or not math.isclose(steps * dt, stop.T_max, rel_tol=1e-9):
        raise ValueError(f"T_max={stop.T_max} is not an integer multiple of dt={dt}")
    return steps


def _check_stop(t: float, w: float, norm_h2: float, stop: StopRule, final: bool) -> StopReason | None:
    if norm_h2 > stop.R:
        return StopReason.H2_RADIUS
    if abs(w) >= stop.T_w:
        return StopReason.PATH_EXCURSION
    if final:
        return StopReason.HORIZON
    return None


def _march(
    x0: Field,
    path: Path,
    stop: StopRule,
    dt: float,
    step: Callable[[float, Field], Field],
    monitor: Callable[[float, Field], float],
):
    """Generic stepping loop with the stopping rule checked once per accepted step."""
    if not x0.is_finite():
        raise ValueError("initial state has non-finite values")
    steps = _step_count(stop, dt)
    times, ws, states = [0.0], [0.0], [x0]
    reason = _check_stop(0.0, 0.0, monitor(0.0, x0), stop, final=False)
    message = ""
    k = 0
    while reason is None:
        t = k * dt
        try:
            x_new = step(t, states[-1])
            if not x_new.is_finite():
                raise NonFiniteError(f"non-finite state after step to t={t + dt}", {"t": t})
        except NonFiniteError as exc:
            reason, message = StopReason.NONFINITE, str(exc)
            break
        k += 1
        t_new = k * dt
        w_new = float(path.value(t_new))
        times.append(t_new)
        ws.append(w_new)
        states.append(x_new)
        reason = _check_stop(t_new, w_new, monitor(t_new, x_new), stop, final=k >= steps)
    return times, ws, states, reason, message


def solve_random_pde(
    z0: Field,
    path: Path,
    noise: NoiseSpec,
    stop: StopRule,
    dt: float,
    nonlinear: bool = True,
    quad_nodes: int = DEFAULT_QUAD_NODES,
) -> TrajectoryResult:
    """RK4 march of ``z' = -Ahat(w(t), z) z`` with stage-fresh coefficients.

    ``nonlinear=False`` switches ``F`` off (pure-noise test hook), making ``z`` constant.
    """
    noise = _with_table(noise, path, stop, dt)

    def rhs(t, z):
        return -assemble_hatA(float(path.value(t)), z, noise, quad_nodes).apply(z)

    def step(t, z):
        if not nonlinear:
            return z
        return spectral_filter(rk4_step(rhs, z, t, dt))

    times, ws, states, reason, message = _march(z0, path, stop, dt, step, lambda t, z: sobolev_norm(z, 2))
    theta = times[-1]
    return TrajectoryResult(times, ws, states, list(states), theta, reason, message=message)


def doss_sussman_solve(
    y0: Field,
    path: Path,
    noise: NoiseSpec,
    stop: StopRule,
    dt: float,
    nonlinear: bool = True,
    quad_nodes: int = DEFAULT_QUAD_NODES,
) -> TrajectoryResult:
    """Solve the random PDE from ``z(0) = y0`` and return ``y(t) = U_{-w(t)} z(t)``."""
    noise = _with_table(noise, path, stop, dt)
    res = solve_random_pde(y0, path, noise, stop, dt, nonlinear=nonlinear, quad_nodes=quad_nodes)
    res.y_states = [group_apply(noise, -w, z) for w, z in zip(res.w, res.z_states)]
    return res


def direct_spde_solve(
    y0: Field,
    path: Path,
    noise: NoiseSpec,
    stop: StopRule,
    dt: float,
    scheme: str = "heun_stratonovich",
    nonlinear: bool = True,
) -> TrajectoryResult:
    """Step the SPDE directly on the path increments.

    ``euler_ito_corrected``:  y <- y + (-F(y) + 1/2 D^2 y) dt - D y dw
    ``heun_stratonovich``:    predictor-corrector on drift ``-F`` and diffusion ``-D y``.

    The stopping radius is applied to ``|U_{w(t)} y|_H2`` so that ``theta`` is
    comparable with the Doss-Sussman route.
    """
    if scheme not in SCHEMES:
        raise ValueError(f"unknown scheme {scheme!r}; expected one of {SCHEMES}")
    noise = _with_table(noise, path, stop, dt)

    def F(y):
        return ch_rhs(y) if nonlinear else y.grid.zeros()

    def D(y):
        return generator_apply(noise, y)

    def step(t, y):
        dw = float(path.value(t + dt) - path.value(t))
        if scheme == "euler_ito_corrected":
            Dy = D(y)
            new = y + dt * (0.5 * D(Dy) - F(y)) - dw * Dy
        else:
            a0, b0 = -F(y), -D(y)
            pred = y + dt * a0 + dw * b0
            new = y + (0.5 * dt) * (a0 - F(pred)) + (0.5 * dw) * (b0 - D(pred))
        return spectral_filter(new)

    def monitor(t, y):
        return sobolev_norm(group_apply(noise, float(path.value(t)), y), 2)

    times, ws, states, reason, message = _march(y0, path, stop, dt, step, monitor)
    z_states = [group_apply(noise, w, y) for w, y in zip(ws, states)]
    return TrajectoryResult(times, ws, z_states, states, times[-1], reason, message=message)


def deterministic_solve(y0: Field, stop: StopRule, dt: float) -> TrajectoryResult:
    """Noise-free run of ``deterministic_step`` under the same stopping rule."""

    def step(t, y):
        return deterministic_step(MomentumState(y, t), dt).y

    times, ws, states, reason, message = _march(
        y0, SmoothPath.zero(), stop, dt, step, lambda t, y: sobolev_norm(y, 2)
    )
    return TrajectoryResult(times, ws, list(states), states, times[-1], reason, message=message)


def smooth_path_solve(
    y0: Field,
    path: SmoothPath,
    noise: NoiseSpec,
    T: float,
    dt: float,
    nonlinear: bool = True,
) -> list[tuple[float, Field]]:
    """Classical-calculus reference ``y' = -F(y) - w'(t) D y`` by RK4 (smooth paths only)."""

    def rhs(t, y):
        out = -float(path.derivative(t)) * generator_apply(noise, y)
        return out - ch_rhs(y) if nonlinear else out

    steps = int(round(T / dt))
    y = y0
    out = [(0.0, y0)]
    for k in range(steps):
        y = spectral_filter(rk4_step(rhs, y, k * dt, dt))
        if not y.is_finite():
            raise NonFiniteError(f"non-finite state at t={(k + 1) * dt}", {"t": (k + 1) * dt})
        out.append(((k + 1) * dt, y))
    return out
