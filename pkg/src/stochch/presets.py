"""Named shapes for noise coefficients and initial data.

A preset string is a ``+``-separated sum of terms:

    const:c          constant c
    sin:k[:A]        A sin(2 pi k x / L)
    cos:k[:A]        A cos(2 pi k x / L)
    gauss:s[:A]      A exp(-(x - L/2)^2 / (2 s^2)), periodized
    zero             identically zero

e.g. ``const:1+cos:1:0.5`` is ``1 + 0.5 cos x`` on ``L = 2 pi``.  Anything that
names an existing ``.csv``/``.bin`` file is loaded as a field instead.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .spectral import Field, Grid1D, load_field

PRESET_KINDS = ("const", "sin", "cos", "gauss", "zero")


class PresetError(ValueError):
    pass


def _term(grid: Grid1D, term: str) -> np.ndarray:
    kind, _, rest = term.strip().partition(":")
    args = [a for a in rest.split(":") if a] if rest else []
    try:
        nums = [float(a) for a in args]
    except ValueError:
        raise PresetError(f"non-numeric argument in preset term {term!r}") from None
    x, L = grid.x, grid.length
    if kind == "zero" and not nums:
        return np.zeros(grid.n)
    if kind == "const" and len(nums) == 1:
        return np.full(grid.n, nums[0])
    if kind in ("sin", "cos") and len(nums) in (1, 2):
        k = nums[0]
        amp = nums[1] if len(nums) == 2 else 1.0
        if k != int(k):
            raise PresetError(f"wavenumber must be an integer for periodicity: {term!r}")
        trig = np.sin if kind == "sin" else np.cos
        return amp * trig(2.0 * np.pi * k * x / L)
    if kind == "gauss" and len(nums) in (1, 2):
        sigma = nums[0]
        if sigma <= 0:
            raise PresetError(f"gauss width must be positive: {term!r}")
        amp = nums[1] if len(nums) == 2 else 1.0
        images = np.arange(-3, 4) * L
        d = x[:, None] - 0.5 * L - images[None, :]
        return amp * np.exp(-(d**2) / (2.0 * sigma**2)).sum(axis=1)
    raise PresetError(f"unknown preset term {term!r}; expected one of {', '.join(PRESET_KINDS)}")


def is_file_spec(spec: str) -> bool:
    p = Path(spec)
    return p.suffix in (".csv", ".bin") and p.exists()


def validate_preset(spec: str) -> None:
    """Raise :class:`PresetError` if ``spec`` is neither a preset nor a field file."""
    if is_file_spec(spec):
        return
    field_from_preset(Grid1D(2 * np.pi, 8), spec)


def field_from_preset(grid: Grid1D, spec: str) -> Field:
    if is_file_spec(spec):
        f = load_field(spec)
        if f.grid != grid:
            raise PresetError(f"{spec}: file grid {f.grid} does not match {grid}")
        return f
    if not spec or not spec.strip():
        raise PresetError("empty preset")
    return Field(grid, sum(_term(grid, t) for t in spec.split("+")))
