"""Static figures written next to the CSV outputs (Agg backend, PNG)."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .spectral import helmholtz_inverse  # noqa: E402

STYLE = {
    "figure.figsize": (6.4, 4.0),
    "font.size": 10,
    "axes.labelsize": 10,
    "legend.fontsize": 8,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "savefig.dpi": 120,
}


def _save(fig, path: Path) -> Path:
    fig.tight_layout()
    fig.savefig(path, metadata={"Software": None})
    plt.close(fig)
    return path


def plot_norms(result, path) -> Path:
    """Sobolev norms of ``y`` against time, with the driving path on a twin axis."""
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        rows = result.diagnostics
        t = [r["t"] for r in rows]
        for s in range(3):
            ax.semilogy(t, [r[f"y_H{s}"] for r in rows], label=f"|y|_H{s}")
        ax.set_xlabel("t")
        ax.set_ylabel("norm")
        ax.legend(loc="upper left")
        if any(r["w"] != 0.0 for r in rows):
            ax2 = ax.twinx()
            ax2.plot(t, [r["w"] for r in rows], color="0.6", lw=0.8)
            ax2.set_ylabel("w(t)")
        ax.set_title(f"stop: {result.stop_reason.value} at theta = {result.theta:.4g}")
        return _save(fig, Path(path))


def plot_snapshots(result, indices, path) -> Path:
    """Velocity profiles ``u = Q^-2 y`` at the stored snapshot indices."""
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        for i in indices:
            y = result.y_states[i]
            ax.plot(y.grid.x, helmholtz_inverse(y).values, label=f"t = {result.times[i]:.3g}")
        ax.set_xlabel("x")
        ax.set_ylabel("u")
        ax.legend()
        return _save(fig, Path(path))


def plot_transform(before, after, t, path) -> Path:
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        ax.plot(before.grid.x, before.values, label="f")
        ax.plot(after.grid.x, after.values, label=f"U_t f, t = {t:g}")
        ax.set_xlabel("x")
        ax.legend()
        return _save(fig, Path(path))


def plot_convergence(dts, errors, order, path) -> Path:
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        dts = np.asarray(dts)
        ax.loglog(dts, errors, "o-", label=f"measured, order {order:.2f}")
        ref = errors[0] * (dts / dts[0]) ** 0.5
        ax.loglog(dts, ref, "k--", lw=0.8, label="slope 1/2")
        ax.set_xlabel("dt")
        ax.set_ylabel("RMS L2 error")
        ax.legend()
        return _save(fig, Path(path))


def plot_theta_histogram(thetas, path) -> Path:
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        ax.hist(thetas, bins=max(5, int(np.sqrt(len(thetas)))), color="0.4")
        ax.set_xlabel("theta")
        ax.set_ylabel("count")
        return _save(fig, Path(path))
