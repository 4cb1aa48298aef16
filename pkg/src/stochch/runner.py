"""Run orchestration: dispatch a :class:`RunConfig` and write its artifacts.

Artifacts of a single run, under the output directory:

    manifest.json      config, seed, stop reason, package and git version
    diagnostics.csv    per-step norms (see ``DIAGNOSTIC_COLUMNS``)
    snapshots/         y at evenly spaced stored times (raw float64 + JSON sidecar)
    norms.png, profiles.png
"""

from __future__ import annotations

import csv
import io
import json
import os
import subprocess
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from importlib import metadata
from pathlib import Path

import numpy as np

from . import plots
from .config import RunConfig
from .flow import group_apply
from .presets import field_from_preset
from .spectral import save_field, sobolev_norm
from .stochastic import (
    StopReason,
    TrajectoryResult,
    deterministic_solve,
    direct_spde_solve,
    doss_sussman_solve,
    sample_brownian,
)
from .studies import strong_order_study

__all__ = [
    "EXIT_CODES",
    "EXIT_CONFIG_ERROR",
    "EXIT_VALIDATION_FAILURE",
    "RunOutcome",
    "EnsembleResult",
    "simulate",
    "run",
    "ensemble_run",
    "transform",
    "converge",
    "thread_cap",
]

EXIT_CODES = {
    StopReason.HORIZON: 0,
    StopReason.H2_RADIUS: 3,
    StopReason.PATH_EXCURSION: 4,
    StopReason.NONFINITE: 5,
}
EXIT_CONFIG_ERROR = 2
EXIT_VALIDATION_FAILURE = 1
MANIFEST_VERSION = 1


@dataclass
class RunOutcome:
    result: TrajectoryResult
    exit_code: int
    out_dir: Path | None


def _version() -> str:
    try:
        return metadata.version("artifact")
    except metadata.PackageNotFoundError:
        return "unknown"


def _git_describe() -> str | None:
    try:
        out = subprocess.run(
            ["git", "describe", "--always", "--dirty"],
            cwd=Path(__file__).resolve().parent,
            capture_output=True,
            text=True,
            timeout=10,
        )
    except (OSError, subprocess.SubprocessError):
        return None
    if out.returncode != 0:
        return None
    return out.stdout.strip() or None


def simulate(config: RunConfig) -> TrajectoryResult:
    """Solve the configured problem in memory (no files)."""
    prob = config.problem()
    dt = config.time.dt
    if config.mode == "deterministic":
        res = deterministic_solve(prob.y0, prob.stop, dt)
    else:
        path = sample_brownian(config.seed, config.time.T_max, dt)
        if config.mode == "ds":
            res = doss_sussman_solve(
                prob.y0, path, prob.noise, prob.stop, dt,
                nonlinear=config.nonlinear, quad_nodes=config.tolerances.quad_nodes,
            )
        else:
            res = direct_spde_solve(
                prob.y0, path, prob.noise, prob.stop, dt, scheme=config.scheme, nonlinear=config.nonlinear
            )
    res.fill_diagnostics()
    return res


def _snapshot_indices(count: int, stored: int) -> list[int]:
    if count <= 0:
        return []
    return sorted(set(np.linspace(0, stored - 1, min(count, stored)).round().astype(int).tolist()))


def run(config: RunConfig, out_dir=None, figures: bool = True) -> RunOutcome:
    """Simulate and write the artifacts; the exit code encodes the stop reason."""
    res = simulate(config)
    code = EXIT_CODES[res.stop_reason]
    out = Path(out_dir if out_dir is not None else config.output)
    out.mkdir(parents=True, exist_ok=True)
    (out / "diagnostics.csv").write_text(res.diagnostics_csv())

    snap_dir = out / "snapshots"
    snap_dir.mkdir(exist_ok=True)
    indices = _snapshot_indices(config.snapshots, len(res.times))
    snapshots = []
    for i in indices:
        name = f"y_{i:06d}.bin"
        save_field(res.y_states[i], snap_dir / name)
        snapshots.append({"index": i, "t": res.times[i], "file": f"snapshots/{name}"})

    files = ["diagnostics.csv"]
    if figures:
        plots.plot_norms(res, out / "norms.png")
        plots.plot_snapshots(res, indices or [len(res.times) - 1], out / "profiles.png")
        files += ["norms.png", "profiles.png"]

    manifest = {
        "manifest_version": MANIFEST_VERSION,
        "config": config.to_dict(),
        "seed": config.seed,
        "package_version": _version(),
        "git": _git_describe(),
        "stop_reason": res.stop_reason.value,
        "theta": res.theta,
        "exit_code": code,
        "message": res.message,
        "snapshots": snapshots,
        "files": files,
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n")
    return RunOutcome(res, code, out)


def thread_cap() -> int:
    """Ensemble worker count: ``STOCH_CH_THREADS`` if set, else the CPU count."""
    raw = os.environ.get("STOCH_CH_THREADS")
    if raw:
        try:
            return max(1, int(raw))
        except ValueError:
            raise ValueError(f"STOCH_CH_THREADS must be a positive integer, got {raw!r}") from None
    return os.cpu_count() or 1


ENSEMBLE_COLUMNS = ("seed", "theta", "stop_reason", "exit_code", "y_H0", "y_H1", "y_H2", "error")


@dataclass
class EnsembleResult:
    rows: list[dict]

    @property
    def thetas(self) -> np.ndarray:
        return np.array([r["theta"] for r in self.rows if not r["error"]])

    def summary(self) -> dict:
        th = self.thetas
        out = {"runs": len(self.rows), "failed": sum(1 for r in self.rows if r["error"])}
        if th.size:
            q10, q50, q90 = np.quantile(th, [0.1, 0.5, 0.9])
            out.update(mean=float(th.mean()), min=float(th.min()), q10=float(q10),
                       median=float(q50), q90=float(q90), max=float(th.max()))
        for reason in StopReason:
            out[f"count_{reason.value}"] = sum(1 for r in self.rows if r["stop_reason"] == reason.value)
        return out

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(ENSEMBLE_COLUMNS)
        for r in self.rows:
            w.writerow([repr(r[c]) if isinstance(r[c], float) else r[c] for c in ENSEMBLE_COLUMNS])
        return buf.getvalue()

    def summary_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["statistic", "value"])
        for k, v in self.summary().items():
            w.writerow([k, repr(v) if isinstance(v, float) else v])
        return buf.getvalue()


def _ensemble_member(config: RunConfig, seed: int) -> dict:
    row = {"seed": seed, "theta": float("nan"), "stop_reason": "", "exit_code": "",
           "y_H0": float("nan"), "y_H1": float("nan"), "y_H2": float("nan"), "error": ""}
    try:
        res = simulate(config.replace(seed=seed))
    except Exception as exc:  # recorded per seed; one bad seed must not sink the ensemble
        row["error"] = f"{type(exc).__name__}: {exc}"
        return row
    y = res.final_y
    row.update(theta=float(res.theta), stop_reason=res.stop_reason.value, exit_code=EXIT_CODES[res.stop_reason],
               y_H0=sobolev_norm(y, 0), y_H1=sobolev_norm(y, 1), y_H2=sobolev_norm(y, 2))
    return row


def ensemble_run(config: RunConfig, seeds, threads: int | None = None) -> EnsembleResult:
    """Run one trajectory per seed; rows come back in seed order regardless of threading."""
    seeds = [int(s) for s in seeds]
    if len(set(seeds)) != len(seeds):
        raise ValueError("ensemble seeds must be distinct")
    workers = min(threads or thread_cap(), max(1, len(seeds)))
    if workers == 1:
        rows = [_ensemble_member(config, s) for s in seeds]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(lambda s: _ensemble_member(config, s), seeds))
    return EnsembleResult(rows)


def transform(config: RunConfig, t: float, field_spec: str | None = None):
    """``U_t f`` for the configured noise; ``f`` defaults to the initial datum."""
    prob = config.problem()
    f = field_from_preset(prob.grid, field_spec) if field_spec else prob.y0
    return f, group_apply(prob.noise, t, f)


def converge(config: RunConfig, levels: int, seeds):
    """Strong-order study of the configured direct scheme (see :mod:`stochch.studies`)."""
    prob = config.problem()
    return strong_order_study(
        prob.y0, prob.noise, seeds, config.time.T_max, config.time.dt,
        levels=levels, scheme=config.scheme, nonlinear=config.nonlinear,
    )
