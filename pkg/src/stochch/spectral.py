"""Periodic Fourier grid, fields and the spectral operators built on them.

Conventions
-----------
Grid points are ``x_j = j L / n`` for ``j = 0..n-1``.  A field is expanded as

    f(x) = sum_m fhat_m exp(i k_m x),   k_m = 2 pi m / L,   fhat = fft(f) / n

so that ``L * sum |fhat_m|^2`` is the L2 integral of ``f**2``.  Real transforms
(``numpy.fft.rfft``) are used throughout; the Nyquist mode is treated as a
cosine, which keeps every operator real.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np

__all__ = [
    "Grid1D",
    "Field",
    "differentiate",
    "helmholtz_apply",
    "helmholtz_inverse",
    "sobolev_norm",
    "multiply",
    "interpolate",
    "dealias",
    "spectral_filter",
    "TrigSeries",
    "save_field",
    "load_field",
]

MAX_SOBOLEV_INDEX = 3


@dataclass(frozen=True)
class Grid1D:
    """Equispaced periodic grid on ``[0, length)``."""

    length: float
    n: int

    def __post_init__(self):
        if not (np.isfinite(self.length) and self.length > 0):
            raise ValueError(f"grid length must be positive and finite, got {self.length}")
        n = int(self.n)
        if n != self.n or n < 8 or n & (n - 1):
            raise ValueError(f"grid size n must be a power of two >= 8, got {self.n}")
        object.__setattr__(self, "length", float(self.length))
        object.__setattr__(self, "n", n)

    @property
    def spacing(self) -> float:
        return self.length / self.n

    @cached_property
    def x(self) -> np.ndarray:
        x = np.arange(self.n) * self.spacing
        x.setflags(write=False)
        return x

    @cached_property
    def modes(self) -> np.ndarray:
        """Integer mode numbers ``m = 0..n/2`` of the real transform."""
        return np.arange(self.n // 2 + 1)

    @cached_property
    def k(self) -> np.ndarray:
        """Angular wavenumbers ``2 pi m / L`` matching :attr:`modes`."""
        k = 2.0 * np.pi * self.modes / self.length
        k.setflags(write=False)
        return k

    @cached_property
    def parseval_weights(self) -> np.ndarray:
        """Multiplicity of each rfft mode in the full two-sided spectrum."""
        w = np.full(self.n // 2 + 1, 2.0)
        w[0] = 1.0
        w[-1] = 1.0
        return w

    @property
    def dealias_cutoff(self) -> int:
        """Largest retained mode under the 2/3 rule (3K < n)."""
        return (self.n - 1) // 3

    def field(self, values) -> "Field":
        return Field(self, values)

    def from_function(self, func) -> "Field":
        return Field(self, func(self.x))

    def constant(self, c: float) -> "Field":
        return Field(self, np.full(self.n, float(c)))

    def zeros(self) -> "Field":
        return self.constant(0.0)


@dataclass(frozen=True, eq=False)
class Field:
    """Real samples of a periodic function on a :class:`Grid1D`.

    Values are copied and frozen on construction, so a field can be shared
    freely between threads.
    """

    grid: Grid1D
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        v = np.array(self.values, dtype=float, copy=True)
        if v.shape != (self.grid.n,):
            raise ValueError(f"expected {self.grid.n} samples, got shape {v.shape}")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @cached_property
    def hat(self) -> np.ndarray:
        """Normalized rfft coefficients (``rfft(values) / n``)."""
        h = np.fft.rfft(self.values) / self.grid.n
        h.setflags(write=False)
        return h

    @classmethod
    def from_hat(cls, grid: Grid1D, hat: np.ndarray) -> "Field":
        return cls(grid, np.fft.irfft(np.asarray(hat) * grid.n, n=grid.n))

    def is_finite(self) -> bool:
        return bool(np.all(np.isfinite(self.values)))

    def _coerce(self, other):
        if isinstance(other, Field):
            _check_same_grid(self, other)
            return other.values
        return other

    def __add__(self, other):
        return Field(self.grid, self.values + self._coerce(other))

    __radd__ = __add__

    def __sub__(self, other):
        return Field(self.grid, self.values - self._coerce(other))

    def __rsub__(self, other):
        return Field(self.grid, self._coerce(other) - self.values)

    def __mul__(self, other):
        # Plain pointwise product; use multiply() for dealiased products of fields.
        return Field(self.grid, self.values * self._coerce(other))

    __rmul__ = __mul__

    def __truediv__(self, scalar):
        return Field(self.grid, self.values / scalar)

    def __neg__(self):
        return Field(self.grid, -self.values)

    def max_abs(self) -> float:
        return float(np.max(np.abs(self.values)))


def _check_same_grid(f: Field, g: Field) -> None:
    if f.grid != g.grid:
        raise ValueError(f"grid mismatch: {f.grid} vs {g.grid}")


def differentiate(f: Field, order: int = 1) -> Field:
    """Spectral derivative of order 1, 2 or 3."""
    if order not in (1, 2, 3):
        raise ValueError(f"derivative order must be 1, 2 or 3, got {order}")
    symbol = (1j * f.grid.k) ** order
    if order % 2 == 1 and f.grid.n % 2 == 0:
        symbol = symbol.copy()
        symbol[-1] = 0.0
    return Field.from_hat(f.grid, f.hat * symbol)


def helmholtz_apply(f: Field) -> Field:
    """Q^2 f = f - f''."""
    return Field.from_hat(f.grid, f.hat * (1.0 + f.grid.k**2))


def helmholtz_inverse(f: Field) -> Field:
    """Q^-2 f, the solution g of g - g'' = f."""
    return Field.from_hat(f.grid, f.hat / (1.0 + f.grid.k**2))


def sobolev_norm(f: Field, s: int = 0) -> float:
    """H^s norm from spectral weights ``(1 + k^2)^s``, s in {0, 1, 2, 3}."""
    if s not in range(MAX_SOBOLEV_INDEX + 1):
        raise ValueError(f"Sobolev index must be one of 0..{MAX_SOBOLEV_INDEX}, got {s}")
    g = f.grid
    weights = g.parseval_weights * (1.0 + g.k**2) ** s
    return float(np.sqrt(g.length * np.sum(weights * np.abs(f.hat) ** 2)))


def dealias(f: Field) -> Field:
    """Zero every mode above the 2/3-rule cutoff."""
    hat = f.hat.copy()
    hat[f.grid.dealias_cutoff + 1 :] = 0.0
    return Field.from_hat(f.grid, hat)


def multiply(f: Field, g: Field) -> Field:
    """Dealiased product: truncate both factors to the 2/3 band, multiply on the
    grid, truncate the result.  Exact Galerkin projection of the product."""
    _check_same_grid(f, g)
    return dealias(Field(f.grid, dealias(f).values * dealias(g).values))


def spectral_filter(f: Field, strength: float = 36.0, order: int = 4) -> Field:
    """Exponential low-pass filter acting only on the top third of the modes.

    Modes at or below the dealiasing cutoff are untouched; above it the factor
    decays as ``exp(-strength * r**order)`` with ``r`` running from 0 at the
    cutoff to 1 at the Nyquist mode.
    """
    g = f.grid
    kc = g.dealias_cutoff
    m = g.modes
    r = np.clip((m - kc) / (g.n // 2 - kc), 0.0, None)
    return Field.from_hat(g, f.hat * np.exp(-strength * r**order))


class TrigSeries:
    """Trigonometric interpolant of a field, evaluable at arbitrary points.

    Modes whose coefficients are negligible (below ``rtol`` times the largest)
    are dropped, so smooth coefficient functions such as ``sin x`` are
    evaluated in O(points) rather than O(points * n).  Wide spectra are summed
    with blocked powers of ``exp(2 pi i x / L)`` instead of one complex
    exponential per (point, mode) pair.
    """

    _BLOCK = 16

    def __init__(self, f: Field, rtol: float = 1e-16):
        g = f.grid
        coef = f.hat.astype(complex) * g.parseval_weights
        keep = np.abs(coef) > rtol * max(np.max(np.abs(coef)), np.finfo(float).tiny)
        keep[0] = True
        self.length = g.length
        self.modes = g.modes[keep]
        self.coef = coef[keep]
        self.constant_only = self.modes.size == 1
        top = int(self.modes[-1])
        self.blocked = self.modes.size > 8
        if self.blocked:
            B = self._BLOCK
            nb = top // B + 1
            dense = np.zeros(nb * B, dtype=complex)
            dense[self.modes] = self.coef
            self._dense = dense.reshape(nb, B).T.copy()

    def __call__(self, positions) -> np.ndarray:
        x = np.asarray(positions, dtype=float)
        if self.constant_only:
            return np.full(x.shape, self.coef[0].real)
        theta = (2.0 * np.pi / self.length) * np.mod(x.ravel(), self.length)
        if not self.blocked:
            out = (np.exp(1j * np.multiply.outer(theta, self.modes)) @ self.coef).real
            return out.reshape(x.shape)
        B = self._BLOCK
        nb = self._dense.shape[1]
        z = np.exp(1j * theta)
        small = np.empty((theta.size, B), dtype=complex)
        small[:, 0] = 1.0
        small[:, 1:] = z[:, None]
        small = np.cumprod(small, axis=1)
        big = np.empty((theta.size, nb), dtype=complex)
        big[:, 0] = 1.0
        big[:, 1:] = (small[:, -1] * z)[:, None]
        big = np.cumprod(big, axis=1)
        out = np.sum((small @ self._dense) * big, axis=1).real
        return out.reshape(x.shape)


def interpolate(f: Field, positions) -> np.ndarray:
    """Trigonometric interpolation of ``f`` at ``positions`` (reduced mod L)."""
    return TrigSeries(f, rtol=0.0)(positions)


# -- serialization -----------------------------------------------------------


def save_field(f: Field, path) -> Path:
    """Write a field as CSV (``.csv``) or raw little-endian float64 plus a JSON
    sidecar (any other suffix, conventionally ``.bin``)."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    if path.suffix == ".csv":
        with path.open("w", newline="") as fh:
            fh.write("x,value\n")
            for xi, vi in zip(f.grid.x, f.values):
                fh.write(f"{float(xi)!r},{float(vi)!r}\n")
    else:
        path.write_bytes(f.values.astype("<f8").tobytes())
        _sidecar(path).write_text(json.dumps({"L": f.grid.length, "n": f.grid.n}))
    return path


def load_field(path) -> Field:
    path = Path(path)
    if path.suffix == ".csv":
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        x, v = data[:, 0], data[:, 1]
        n = len(v)
        # x[1] = L/n with n a power of two, so x[1] * n recovers L exactly.
        grid = Grid1D(x[1] * n, n)
        if not np.allclose(x, grid.x, rtol=0, atol=1e-9 * grid.length):
            raise ValueError(f"{path}: x column is not an equispaced periodic grid")
        return Field(grid, v)
    meta = json.loads(_sidecar(path).read_text())
    grid = Grid1D(meta["L"], meta["n"])
    return Field(grid, np.frombuffer(path.read_bytes(), dtype="<f8"))


def _sidecar(path: Path) -> Path:
    return path.with_suffix(path.suffix + ".json")
