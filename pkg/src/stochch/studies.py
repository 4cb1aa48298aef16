"""Convergence studies over nested Brownian paths.

Each seed draws one path on the coarsest mesh; finer levels are Brownian-bridge
refinements of it, so every level sees the same underlying realization and the
coarse knots are shared.  Errors are measured at the coarse knots only.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass

import numpy as np

from .flow import NoiseSpec, group_apply
from .spectral import Field, sobolev_norm
from .stochastic import (
    StopRule,
    doss_sussman_solve,
    direct_spde_solve,
    refine,
    sample_brownian,
)

__all__ = ["ConvergenceStudy", "fit_order", "strong_order_study", "scheme_agreement"]


def fit_order(dts, errors) -> float:
    """Least-squares slope of ``log error`` against ``log dt``."""
    return float(np.polyfit(np.log(np.asarray(dts, float)), np.log(np.asarray(errors, float)), 1)[0])


@dataclass
class ConvergenceStudy:
    dts: np.ndarray
    seeds: list[int]
    sq_errors: np.ndarray  # (seeds, levels, coarse times) squared L2 errors
    reference: str

    @property
    def rms(self) -> np.ndarray:
        """Root mean square error over seeds and coarse times, per level."""
        return np.sqrt(self.sq_errors.mean(axis=(0, 2)))

    @property
    def terminal_rms(self) -> np.ndarray:
        return np.sqrt(self.sq_errors[:, :, -1].mean(axis=0))

    @property
    def order(self) -> float:
        return fit_order(self.dts, self.rms)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["level", "dt", "rms_error", "terminal_rms_error"])
        for lev, (dt, e, et) in enumerate(zip(self.dts, self.rms, self.terminal_rms)):
            w.writerow([lev, repr(float(dt)), repr(float(e)), repr(float(et))])
        return buf.getvalue()


def strong_order_study(
    y0: Field,
    noise: NoiseSpec,
    seeds,
    T: float,
    dt0: float,
    levels: int = 4,
    scheme: str = "euler_ito_corrected",
    nonlinear: bool = False,
) -> ConvergenceStudy:
    """Strong error of ``direct_spde_solve`` on dyadic refinements of each path.

    With ``nonlinear=False`` the reference is the closed form ``U_{-w(t)} y0``;
    otherwise it is the Doss-Sussman solution on the finest path.
    """
    if levels < 2:
        raise ValueError("need at least two levels to measure an order")
    seeds = [int(s) for s in seeds]
    stop = StopRule(R=1e300, T_w=1e300, T_max=T)
    n_coarse = int(round(T / dt0))
    coarse = np.arange(1, n_coarse + 1) * dt0
    sq = np.zeros((len(seeds), levels, n_coarse))
    for i, seed in enumerate(seeds):
        base = sample_brownian(seed, T, dt0)
        paths = [base] + [refine(base, lev) for lev in range(1, levels)]
        finest = paths[-1]
        span = float(np.max(np.abs(finest.values))) + 0.25
        tab = noise.tabulated(span)
        if nonlinear:
            ref = doss_sussman_solve(y0, finest, tab, stop, finest.dt)
            refs = [ref.y_at(t) for t in coarse]
        else:
            refs = [group_apply(tab, -float(base.value(t)), y0) for t in coarse]
        for lev, path in enumerate(paths):
            res = direct_spde_solve(y0, path, tab, stop, path.dt, scheme=scheme, nonlinear=nonlinear)
            for j, t in enumerate(coarse):
                sq[i, lev, j] = sobolev_norm(res.y_at(t) - refs[j], 0) ** 2
    dts = dt0 / 2.0 ** np.arange(levels)
    return ConvergenceStudy(dts, seeds, sq, "closed_form" if not nonlinear else "doss_sussman")


def scheme_agreement(
    y0: Field,
    noise: NoiseSpec,
    seed: int,
    T: float,
    dt0: float,
    levels: int = 4,
    scheme: str = "heun_stratonovich",
) -> tuple[np.ndarray, np.ndarray]:
    """L2 distance between the direct and Doss-Sussman solutions at ``T`` per level."""
    stop = StopRule(R=1e300, T_w=1e300, T_max=T)
    base = sample_brownian(seed, T, dt0)
    tab = noise.tabulated(float(np.max(np.abs(refine(base, levels - 1).values))) + 0.25)
    dist = []
    for lev in range(levels):
        path = refine(base, lev) if lev else base
        ds = doss_sussman_solve(y0, path, tab, stop, path.dt)
        direct = direct_spde_solve(y0, path, tab, stop, path.dt, scheme=scheme)
        dist.append(sobolev_norm(direct.final_y - ds.final_y, 0))
    return dt0 / 2.0 ** np.arange(levels), np.array(dist)
