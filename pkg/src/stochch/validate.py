"""User-runnable invariant suites at pinned desk-scale parameters.

Every suite returns a :class:`ValidationReport` of (name, measured, tolerance,
pass) checks.  ``validate("all")`` also records which public operations were
actually entered while the suites ran (a profiler hook over their code
objects) and fails if any registered operation was never exercised.
"""

from __future__ import annotations

import json
import math
import sys
import tempfile
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import ch, config, flow, runner, spectral, stochastic, transport
from .spectral import Field, Grid1D, sobolev_norm

__all__ = ["Check", "ValidationReport", "SUITES", "OPERATIONS", "validate"]

N = 256
L = 2.0 * math.pi
SEED = 20240611  # documented seed for all randomized checks

SUITES = ("spectral", "group", "transport", "ch", "stochastic", "all")


@dataclass(frozen=True)
class Check:
    name: str
    value: float
    tolerance: float
    relation: str = "<="  # value <relation> tolerance

    @property
    def passed(self) -> bool:
        if not math.isfinite(self.value):
            return False
        if self.relation == "<=":
            return self.value <= self.tolerance
        if self.relation == ">=":
            return self.value >= self.tolerance
        raise ValueError(f"unknown relation {self.relation!r}")

    def line(self) -> str:
        mark = "PASS" if self.passed else "FAIL"
        return f"{mark}  {self.name:<58s} {self.value:11.3e} {self.relation} {self.tolerance:.1e}"


@dataclass
class ValidationReport:
    suite: str
    checks: list[Check] = field(default_factory=list)
    seconds: float = 0.0
    coverage: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def add(self, name, value, tolerance, relation="<="):
        self.checks.append(Check(name, float(value), float(tolerance), relation))

    def to_text(self) -> str:
        lines = [f"suite {self.suite}: {'PASS' if self.passed else 'FAIL'} "
                 f"({sum(c.passed for c in self.checks)}/{len(self.checks)} checks, {self.seconds:.1f} s)"]
        lines += ["  " + c.line() for c in self.checks]
        missing = self.coverage.get("missing")
        if missing:
            lines.append("  not exercised: " + ", ".join(missing))
        return "\n".join(lines)

    def to_dict(self) -> dict:
        return {
            "suite": self.suite,
            "passed": self.passed,
            "seconds": self.seconds,
            "checks": [
                {"name": c.name, "value": c.value, "tolerance": c.tolerance, "relation": c.relation, "passed": c.passed}
                for c in self.checks
            ],
            "coverage": self.coverage,
        }


# public operations per module, the registry that ``validate all`` must cover
OPERATIONS = {
    "spectral-field": [spectral.differentiate, spectral.helmholtz_apply, spectral.helmholtz_inverse,
                       spectral.sobolev_norm, spectral.multiply, spectral.interpolate],
    "flow-group": [flow.flow_map, flow.cocycle, flow.group_apply, flow.generator_apply],
    "ch-core": [ch.ch_coefficients, ch.apply_A, ch.ch_rhs, ch.deterministic_step, ch.conserved_quantities],
    "transport-coefficients": [transport.transport_a, transport.transport_b, transport.assemble_hatA,
                               transport.hatA_direct, transport.coefficient_growth_report],
    "stochastic-driver": [stochastic.sample_brownian, stochastic.refine, stochastic.solve_random_pde,
                          stochastic.doss_sussman_solve, stochastic.direct_spde_solve, runner.ensemble_run],
    "cli-harness": [config.parse_config, runner.run],
}


class _CoverageTracer:
    def __init__(self):
        self.codes = {f.__code__: f"{f.__module__.rsplit('.', 1)[-1]}.{f.__name__}"
                      for fns in OPERATIONS.values() for f in fns}
        self.hit: set[str] = set()

    def _profile(self, frame, event, arg):
        if event == "call":
            name = self.codes.get(frame.f_code)
            if name is not None:
                self.hit.add(name)

    def __enter__(self):
        self._old = sys.getprofile()
        sys.setprofile(self._profile)
        threading.setprofile(self._profile)
        return self

    def __exit__(self, *exc):
        sys.setprofile(self._old)
        threading.setprofile(None)

    def report(self) -> dict:
        names = sorted(self.codes.values())
        return {"exercised": sorted(self.hit), "missing": [n for n in names if n not in self.hit]}


def _grid() -> Grid1D:
    return Grid1D(L, N)


def random_smooth(grid: Grid1D, rng: np.random.Generator, modes: int = 6, scale: float = 1.0) -> Field:
    """Random trigonometric polynomial with geometrically decaying amplitudes."""
    x = grid.x * (2.0 * np.pi / grid.length)
    vals = np.full(grid.n, scale * rng.normal())
    for k in range(1, modes + 1):
        a, b = rng.normal(size=2) * scale * 0.6**k
        vals += a * np.cos(k * x) + b * np.sin(k * x)
    return Field(grid, vals)


def _rel(a: Field, b: Field) -> float:
    denom = sobolev_norm(b, 0)
    return sobolev_norm(a - b, 0) / (denom if denom else 1.0)


# ---------------------------------------------------------------- suites


def suite_spectral(rep: ValidationReport) -> None:
    g = _grid()
    rng = np.random.default_rng(SEED)
    f = Field(g, rng.normal(size=g.n))
    rep.add("helmholtz_inverse o helmholtz_apply = id (rel)",
            _rel(spectral.helmholtz_inverse(spectral.helmholtz_apply(f)), f), 1e-12)
    s = random_smooth(g, rng)
    trap = math.sqrt(g.spacing * float(np.sum(s.values**2)))
    rep.add("Parseval: |f|_L2 vs trapezoid (rel)", abs(sobolev_norm(s, 0) - trap) / trap, 1e-10)
    worst = min(sobolev_norm(f, k + 1) - sobolev_norm(f, k) for k in range(3))
    rep.add("norm ordering min(|f|_{s+1} - |f|_s)", worst, 0.0, ">=")
    h = random_smooth(g, rng)
    lhs = spectral.differentiate(spectral.multiply(s, h), 1)
    rhs = spectral.multiply(spectral.differentiate(s, 1), h) + spectral.multiply(s, spectral.differentiate(h, 1))
    rep.add("product rule on dealiased smooth inputs (max)", (lhs - rhs).max_abs(), 1e-8)
    sm = spectral.helmholtz_inverse(f)
    ratio = max(sobolev_norm(sm, k + 2) / sobolev_norm(f, k) for k in range(2))
    rep.add("smoothing |Q^-2 f|_{s+2} / |f|_s", ratio, 1.0 + 1e-12)
    d3 = spectral.differentiate(g.from_function(lambda x: np.sin(3 * x)), 3)
    rep.add("d^3/dx^3 sin 3x = -27 cos 3x (max rel)", (d3 - g.from_function(lambda x: -27 * np.cos(3 * x))).max_abs() / 27, 1e-10)
    trig = lambda x: np.sin(x) + 0.3 * np.cos(2 * x) - 0.1 * np.sin(5 * x)  # noqa: E731
    pts = rng.uniform(-10, 10, 50)
    interp = spectral.interpolate(g.from_function(trig), pts)
    rep.add("interpolate reproduces a trig polynomial off-grid (max)", float(np.max(np.abs(interp - trig(pts)))), 1e-12)


def suite_group(rep: ValidationReport) -> None:
    g = _grid()
    rng = np.random.default_rng(SEED + 1)
    f = g.from_function(lambda x: np.sin(x) + 0.3 * np.cos(2 * x))
    const = flow.NoiseSpec(g.constant(0.7), g.zeros())
    err = max((flow.group_apply(const, t, f) - g.from_function(lambda x: np.sin(x + 0.7 * t) + 0.3 * np.cos(2 * (x + 0.7 * t)))).max_abs()
              for t in (-1.0, -0.5, 0.5, 1.0))
    rep.add("xi = 0.7: U_t f = f(x + 0.7 t) (max)", err, 1e-10)

    sine = flow.NoiseSpec(g.from_function(np.sin), g.from_function(np.cos))
    fm = flow.flow_map(sine, 0.5)
    x = g.x
    exact = 2 * np.arctan(np.exp(0.5) * np.tan(x / 2))
    exact = np.where(np.abs(x - np.pi) < 1e-12, np.pi, exact)
    exact = np.where(x > np.pi, exact + 2 * np.pi, exact)
    rep.add("flow of sin x: tan(phi/2) = e^t tan(x/2) (max)", float(np.max(np.abs(fm.positions - exact))), 1e-10)

    jac_min = min(float(flow.flow_map(flow.NoiseSpec(g.from_function(lambda x: 2 * np.sin(x)), g.zeros()), t).jacobian.min())
                  for t in (-2.0, 2.0))
    rep.add("Jacobian positivity, max|xi'| = 2, |t| = 2", jac_min, 0.0, ">=")

    h = random_smooth(g, rng)
    t, s = rng.uniform(-1, 1, 2)
    law = sobolev_norm(flow.group_apply(sine, t + s, h) - flow.group_apply(sine, t, flow.group_apply(sine, s, h)), 0)
    rep.add("group law |U_{t+s} f - U_t U_s f|", law, 1e-8)
    inv = sobolev_norm(flow.group_apply(sine, -t, flow.group_apply(sine, t, h)) - h, 0)
    rep.add("inverse consistency |U_-t U_t f - f|", inv, 1e-8)

    c_ts = flow.cocycle(sine, t + s).values.values
    c_s = flow.cocycle(sine, s).values.values
    c_t = flow.cocycle(sine, t).values
    shifted = spectral.interpolate(c_t, flow.flow_map(sine, s).positions)
    rep.add("cocycle c(t+s,x) = c(s,x) + c(t,phi_s(x)) (max)", float(np.max(np.abs(c_ts - c_s - shifted))), 1e-8)

    Df = flow.generator_apply(sine, f)
    hs = [1e-2, 5e-3, 2.5e-3]
    errs = [sobolev_norm((flow.group_apply(sine, hh, f) - f) / hh - Df, 0) for hh in hs]
    order = float(np.polyfit(np.log(hs), np.log(errs), 1)[0])
    rep.add("generator difference quotient order", order, 0.9, ">=")

    ts = np.linspace(-2, 2, 9)
    ts = ts[ts != 0]
    rates = [(math.log(sobolev_norm(flow.group_apply(sine, tt, h), 2)) - math.log(sobolev_norm(h, 2))) / abs(tt) for tt in ts]
    fine = Grid1D(L, 2 * N)
    sine_fine = flow.NoiseSpec(fine.from_function(np.sin), fine.from_function(np.cos))
    h_fine = Field.from_hat(fine, np.concatenate([h.hat, np.zeros(N // 2)]))
    rates_fine = [(math.log(sobolev_norm(flow.group_apply(sine_fine, tt, h_fine), 2)) - math.log(sobolev_norm(h_fine, 2))) / abs(tt) for tt in ts]
    rep.add("H2 growth-rate bound stable under refinement", abs(max(rates) - max(rates_fine)), 1e-6)


def suite_transport(rep: ValidationReport) -> None:
    g = _grid()
    rng = np.random.default_rng(SEED + 2)
    noise = flow.NoiseSpec(g.from_function(np.sin), g.from_function(np.cos))
    worst = 0.0
    for _ in range(20):
        tau = float(rng.uniform(-1, 1))
        v, f = random_smooth(g, rng), random_smooth(g, rng)
        a = transport.assemble_hatA(tau, v, noise).apply(f)
        b = transport.hatA_direct(tau, v, f, noise)
        worst = max(worst, _rel(a, b))
    rep.add("assemble_hatA vs hatA_direct, 20 random triples (rel)", worst, 1e-5)

    eta_only = flow.NoiseSpec(g.zeros(), g.from_function(np.cos))
    a0, b0 = random_smooth(g, rng), random_smooth(g, rng)
    t = 0.8
    at = transport.transport_a(a0, eta_only, t)
    bt = transport.transport_b(b0, lambda s: a0, eta_only, t)
    rep.add("xi = 0: a(t) = a0 (max)", (at - a0).max_abs(), 1e-10)
    rep.add("xi = 0: b(t) = b0 - t eta' a0 (max)", (bt - (b0 - t * spectral.multiply(eta_only.eta_x, a0))).max_abs(), 1e-10)

    v1, v2 = random_smooth(g, rng), random_smooth(g, rng)
    op = lambda v: transport.assemble_hatA(0.4, v, noise).coeffs  # noqa: E731
    c1, c2, c12 = op(v1), op(v2), op(2.0 * v1 - 3.0 * v2)
    lin = max((c12.a_t - (2.0 * c1.a_t - 3.0 * c2.a_t)).max_abs(), (c12.b_t - (2.0 * c1.b_t - 3.0 * c2.b_t)).max_abs())
    rep.add("coefficients linear in v (max)", lin, 1e-9)

    # C(t) = U_t (a0 d/dx + b0) U_-t obeys d/dt C(t) f = [D, C(t)] f
    tc, v, f = 0.3, random_smooth(g, rng), random_smooth(g, rng)
    a0 = spectral.helmholtz_inverse(v)
    b0 = 2.0 * spectral.differentiate(a0, 1)
    mul = spectral.multiply

    def coeffs(t):
        a_t = transport.transport_a(a0, noise, t)
        return a_t, transport.transport_b(b0, lambda s_: transport.transport_a(a0, noise, s_), noise, t)

    def apply(t):
        a_t, b_t = coeffs(t)
        return mul(a_t, spectral.differentiate(f, 1)) + mul(b_t, f)

    a_t, b_t = coeffs(tc)
    xi, xi_x, eta_x = noise.xi, noise.xi_x, noise.eta_x
    comm = mul(mul(xi, spectral.differentiate(a_t, 1)) - mul(xi_x, a_t), spectral.differentiate(f, 1)) + mul(
        mul(xi, spectral.differentiate(b_t, 1)) - mul(eta_x, a_t), f)
    errs = [sobolev_norm((apply(tc + hh) - apply(tc - hh)) / (2 * hh) - comm, 0) for hh in (0.02, 0.01)]
    rep.add("commutator check: central-difference order", math.log2(errs[0] / errs[1]), 1.8, ">=")

    near = [sobolev_norm(transport.assemble_hatA(0.3 + d, v, noise).apply(f) - transport.assemble_hatA(0.3, v, noise).apply(f), 0)
            for d in (1e-2, 1e-3)]
    rep.add("continuity in t: order over |t1 - t2|", math.log10(near[0] / near[1]), 0.9, ">=")

    growth = transport.coefficient_growth_report(v, noise, np.linspace(-2, 2, 9))
    slack = max(max(r[1], r[2]) / (growth.C1 * math.exp(growth.C2 * abs(r[0])) * r[3]) for r in growth.rows)
    rep.add("growth envelope covers all samples", slack, 1.0 + 1e-12)


def suite_ch(rep: ValidationReport) -> None:
    g = _grid()
    rng = np.random.default_rng(SEED + 3)
    u = random_smooth(g, rng, modes=4)
    y = spectral.helmholtz_apply(u)
    ux = spectral.differentiate(u, 1)
    mul = spectral.multiply
    # Q^2 u_t from the momentum form vs -[Q^2(u u_x) + d/dx(u^2 + u_x^2 / 2)]
    lhs = -ch.ch_rhs(y)
    rhs = -(spectral.helmholtz_apply(mul(u, ux)) + spectral.differentiate(mul(u, u) + 0.5 * mul(ux, ux), 1))
    rep.add("momentum form vs velocity form (rel)", _rel(lhs, rhs), 1e-10)

    const = ch.MomentumState(g.constant(1.3))
    rep.add("constant y is a fixed point (max)", (ch.deterministic_step(const, 0.1).y - const.y).max_abs(), 1e-13)

    v1, v2, f = random_smooth(g, rng), random_smooth(g, rng), random_smooth(g, rng)
    c1, c2, c12 = ch.ch_coefficients(v1), ch.ch_coefficients(v2), ch.ch_coefficients(v1 + 2.0 * v2)
    rep.add("ch_coefficients linear (max)", max((c12.a - c1.a - 2.0 * c2.a).max_abs(), (c12.b - c1.b - 2.0 * c2.b).max_abs()), 1e-10)
    bil = (ch.apply_A(v1 + v2, 2.0 * f) - 2.0 * ch.apply_A(v1, f) - 2.0 * ch.apply_A(v2, f)).max_abs()
    rep.add("apply_A bilinear (max)", bil, 1e-10)
    sm = max(sobolev_norm(ch.ch_coefficients(v1).a, s + 2) / sobolev_norm(v1, s) for s in range(2))
    rep.add("smoothing |a(v)|_{s+2} / |v|_s", sm, 1.0 + 1e-12)

    y0 = g.from_function(lambda x: 1 + 0.5 * np.cos(x))
    states = ch.integrate_deterministic(y0, 0.01, 0.5)
    q0, q1 = ch.conserved_quantities(states[0]), ch.conserved_quantities(states[-1])
    rep.add("mass drift over t = 0.5, dt = 0.01 (rel)", abs(q1.mass - q0.mass) / abs(q0.mass), 1e-8)
    rep.add("energy drift over t = 0.5, dt = 0.01 (rel)", abs(q1.energy - q0.energy) / q0.energy, 1e-8)


def suite_stochastic(rep: ValidationReport) -> None:
    g = _grid()
    y0 = g.from_function(lambda x: 1 + 0.5 * np.cos(x))
    p = stochastic.sample_brownian(7, 10.0, 1e-3)
    var = float(np.var(np.diff(p.values), ddof=1) / 1e-3)
    rep.add("increment variance / dt - 1 (10^4 draws)", abs(var - 1.0), 0.1)
    rep.add("path starts at zero", abs(float(p.values[0])), 0.0)
    q = stochastic.sample_brownian(7, 10.0, 1e-3)
    rep.add("same seed, same path (max diff)", float(np.max(np.abs(p.values - q.values))), 0.0)
    r1 = stochastic.refine(p)
    rep.add("refinement keeps coarse knots (max diff)", float(np.max(np.abs(r1.values[::2] - p.values))), 0.0)
    mids = r1.values[1::2] - 0.5 * (p.values[:-1] + p.values[1:])
    rep.add("bridge midpoint variance / (dt/4) - 1", abs(float(np.var(mids, ddof=1)) / (1e-3 / 4) - 1.0), 0.1)

    noise = flow.NoiseSpec.from_presets(g, "sin:1:0.1", "holm").tabulated(2.0)
    stop = stochastic.StopRule(R=1e6, T_w=10.0, T_max=0.2)
    path = stochastic.sample_brownian(3, 0.2, 0.02)
    zero = stochastic.solve_random_pde(g.zeros(), path, noise, stop, 0.02)
    rep.add("z0 = 0 stays 0 (max)", max(z.max_abs() for z in zero.z_states), 0.0)
    free = stochastic.doss_sussman_solve(y0, path, noise, stop, 0.02, nonlinear=False)
    closed = max((y - flow.group_apply(noise.untabulated(), -w, y0, method="direct")).max_abs()
                 for w, y in zip(free.w, free.y_states))
    rep.add("pure noise: DS equals U_{-w} y0 (max)", closed, 1e-7)
    quiet = stochastic.doss_sussman_solve(y0, path, flow.NoiseSpec.zero(g), stop, 0.02)
    det = ch.integrate_deterministic(y0, 0.02, 0.2)
    rep.add("zero noise: DS equals deterministic (max)", max((a - b.y).max_abs() for a, b in zip(quiet.y_states, det)), 1e-12)

    smooth = stochastic.SmoothPath.sine(0.3, 5.0)
    sstop = stochastic.StopRule(R=1e6, T_w=10.0, T_max=0.5)
    noise1 = flow.NoiseSpec.from_presets(g, "sin:1", "holm")
    ds = stochastic.doss_sussman_solve(y0, smooth, noise1, sstop, 0.01)
    ref = stochastic.smooth_path_solve(y0, smooth, noise1, 0.5, 0.01)
    rep.add("smooth path: DS vs chain rule at t = 0.5, dt = 0.01", sobolev_norm(ds.final_y - ref[-1][1], 0), 1e-4)

    heun = stochastic.direct_spde_solve(y0, path, noise, stop, 0.02)
    ds_full = stochastic.doss_sussman_solve(y0, path, noise, stop, 0.02)
    rep.add("Heun vs DS at t = 0.2, dt = 0.02 (L2)", sobolev_norm(heun.final_y - ds_full.final_y, 0), 1e-2)

    cut = path.truncated(0.1)
    ds_cut = stochastic.doss_sussman_solve(y0, cut, noise, stop, 0.02)
    adapt = max((a - b).max_abs() for t, a, b in zip(ds_full.times, ds_full.y_states, ds_cut.y_states) if t <= 0.1 + 1e-12)
    rep.add("adaptedness: truncated path, same states up to t", adapt, 0.0)

    tiny = stochastic.StopRule(R=0.5 * sobolev_norm(y0, 2), T_w=10.0, T_max=0.2)
    rep.add("R < |y0|_H2 stops at t = 0", stochastic.doss_sussman_solve(y0, path, noise, tiny, 0.02).theta, 0.0)

    cfg = config.RunConfig(time=config.TimeConfig(0.05, 0.2), noise=config.NoiseConfig("sin:1:0.1", "holm"), mode="direct")
    e1, e2 = runner.ensemble_run(cfg, [1, 2], threads=1), runner.ensemble_run(cfg, [1, 2], threads=2)
    rep.add("ensemble CSV identical across reruns and threading", float(e1.to_csv() != e2.to_csv()), 0.0)


def suite_harness(rep: ValidationReport) -> None:
    src = json.dumps({"grid": {"L": L, "n": N}, "mode": "deterministic",
                      "time": {"dt": 0.01, "T_max": 0.05}, "snapshots": 2})
    cfg = config.parse_config(src)
    rep.add("config round-trips through JSON", float(config.parse_config(cfg.to_json()) != cfg), 0.0)
    with tempfile.TemporaryDirectory() as tmp:
        out = runner.run(cfg, Path(tmp) / "a", figures=False)
        again = runner.run(cfg, Path(tmp) / "b", figures=False)
        same = (out.out_dir / "diagnostics.csv").read_bytes() == (again.out_dir / "diagnostics.csv").read_bytes()
    rep.add("deterministic run exits 0", float(out.exit_code), 0.0)
    rep.add("diagnostics byte-identical on rerun", float(not same), 0.0)


_SUITE_FUNCS = {
    "spectral": suite_spectral,
    "group": suite_group,
    "transport": suite_transport,
    "ch": suite_ch,
    "stochastic": suite_stochastic,
}


def validate(suite: str = "all", out_dir=None, echo=print) -> ValidationReport:
    """Run one suite (or all of them) and optionally persist the report as JSON."""
    if suite not in SUITES:
        raise ValueError(f"unknown suite {suite!r}; expected one of {SUITES}")
    start = time.perf_counter()
    rep = ValidationReport(suite)
    names = list(_SUITE_FUNCS) if suite == "all" else [suite]
    tracer = _CoverageTracer()
    with tracer:
        for name in names:
            sub = ValidationReport(name)
            t0 = time.perf_counter()
            _SUITE_FUNCS[name](sub)
            sub.seconds = time.perf_counter() - t0
            if echo:
                echo(sub.to_text())
            rep.checks += [Check(f"{name}: {c.name}", c.value, c.tolerance, c.relation) for c in sub.checks]
        if suite == "all":
            sub = ValidationReport("harness")
            suite_harness(sub)
            if echo:
                echo(sub.to_text())
            rep.checks += [Check(f"harness: {c.name}", c.value, c.tolerance, c.relation) for c in sub.checks]
    rep.coverage = tracer.report()
    if suite == "all":
        # validate itself is running, so only the other operations need tracing
        rep.add("registered operations never exercised", len(rep.coverage["missing"]), 0)
    rep.seconds = time.perf_counter() - start
    if echo:
        echo(f"overall {suite}: {'PASS' if rep.passed else 'FAIL'} in {rep.seconds:.1f} s")
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / f"validation_{suite}.json").write_text(json.dumps(rep.to_dict(), indent=2) + "\n")
    return rep
