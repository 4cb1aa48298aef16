"""Run configuration: JSON parsing, validation and lossless serialization.

A minimal document only needs a grid and a mode::

    {"grid": {"L": 6.283185307179586, "n": 256}, "mode": "deterministic"}

Everything else has a default.  Unknown keys are errors, and every error names
the offending field and, where it can be located, the line in the source text.
"""

from __future__ import annotations

import dataclasses
import json
import math
import re
from dataclasses import dataclass, field
from pathlib import Path

from .flow import NoiseSpec
from .presets import PresetError, field_from_preset, validate_preset
from .spectral import Field, Grid1D
from .stochastic import SCHEMES, StopRule
from .transport import DEFAULT_QUAD_NODES

__all__ = ["ConfigError", "RunConfig", "Problem", "MODES", "parse_config", "load_config"]

MODES = ("deterministic", "ds", "direct")


class ConfigError(ValueError):
    """Invalid configuration.  ``field`` is a dotted path, ``line`` is 1-based or None."""

    def __init__(self, message: str, field: str | None = None, line: int | None = None):
        self.field = field
        self.line = line
        where = []
        if line is not None:
            where.append(f"line {line}")
        if field:
            where.append(f"field '{field}'")
        super().__init__(f"{', '.join(where)}: {message}" if where else message)


@dataclass(frozen=True)
class GridConfig:
    L: float = 2.0 * math.pi
    n: int = 256


@dataclass(frozen=True)
class TimeConfig:
    dt: float = 1e-3
    T_max: float = 1.0


@dataclass(frozen=True)
class NoiseConfig:
    xi: str = "zero"
    eta: str = "zero"


@dataclass(frozen=True)
class StopConfig:
    R: float | None = None  # None: ten times |y0|_H2
    T_w: float = 3.0


@dataclass(frozen=True)
class Tolerances:
    quad_nodes: int = DEFAULT_QUAD_NODES
    table_step: float = 1.0 / 128


@dataclass(frozen=True)
class RunConfig:
    grid: GridConfig = field(default_factory=GridConfig)
    time: TimeConfig = field(default_factory=TimeConfig)
    initial: str = "const:1+cos:1:0.5"
    noise: NoiseConfig = field(default_factory=NoiseConfig)
    stop: StopConfig = field(default_factory=StopConfig)
    mode: str = "deterministic"
    scheme: str = "heun_stratonovich"
    nonlinear: bool = True
    seed: int = 0
    seeds: tuple[int, ...] = ()
    snapshots: int = 5
    output: str = "run"
    tolerances: Tolerances = field(default_factory=Tolerances)

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["seeds"] = list(self.seeds)
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2) + "\n"

    def replace(self, **changes) -> "RunConfig":
        """Copy with top-level or dotted (``"time.dt"``) fields replaced, then revalidate."""
        d = self.to_dict()
        for key, value in changes.items():
            if value is None:
                continue
            *parents, leaf = key.split(".")
            node = d
            for p in parents:
                node = node[p]
            node[leaf] = value
        return _build(d, None)

    def problem(self) -> "Problem":
        grid = Grid1D(self.grid.L, self.grid.n)
        try:
            y0 = field_from_preset(grid, self.initial)
        except PresetError as exc:
            raise ConfigError(str(exc), "initial") from None
        try:
            noise = NoiseSpec.from_presets(grid, self.noise.xi, self.noise.eta, table_step=self.tolerances.table_step)
        except (PresetError, ValueError) as exc:
            raise ConfigError(str(exc), "noise") from None
        stop = StopRule.default_for(y0, R=self.stop.R, T_w=self.stop.T_w, T_max=self.time.T_max)
        return Problem(grid, y0, noise, stop)


@dataclass(frozen=True, eq=False)
class Problem:
    grid: Grid1D
    y0: Field
    noise: NoiseSpec
    stop: StopRule


_SECTIONS = {
    "grid": GridConfig,
    "time": TimeConfig,
    "noise": NoiseConfig,
    "stop": StopConfig,
    "tolerances": Tolerances,
}


def _locate(source: str | None, path: str) -> int | None:
    """Best-effort line of the last key in ``path`` (searched after its parents)."""
    if source is None:
        return None
    pos = 0
    for key in path.split("."):
        m = re.compile(r'"%s"\s*:' % re.escape(key)).search(source, pos)
        if m is None:
            return None
        pos = m.start()
    return source.count("\n", 0, pos) + 1


def _fail(source, path, message):
    raise ConfigError(message, path, _locate(source, path))


def _number(source, path, value, positive=True, allow_none=False):
    if value is None and allow_none:
        return None
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        _fail(source, path, f"expected a number, got {value!r}")
    value = float(value)
    if not math.isfinite(value) or (positive and value <= 0):
        _fail(source, path, f"must be positive and finite, got {value!r}")
    return value


def _integer(source, path, value, minimum):
    if isinstance(value, bool) or not isinstance(value, int):
        _fail(source, path, f"expected an integer, got {value!r}")
    if value < minimum:
        _fail(source, path, f"must be at least {minimum}, got {value}")
    return value


def _preset(source, path, value, extra=()):
    if not isinstance(value, str):
        _fail(source, path, f"expected a preset string, got {value!r}")
    if value.strip() in extra:
        return value
    try:
        validate_preset(value)
    except PresetError as exc:
        _fail(source, path, str(exc))
    return value


def _section(source, name, raw, cls):
    if not isinstance(raw, dict):
        _fail(source, name, f"expected an object, got {type(raw).__name__}")
    known = {f.name for f in dataclasses.fields(cls)}
    for key in raw:
        if key not in known:
            _fail(source, f"{name}.{key}", f"unknown key; expected one of {sorted(known)}")
    return {**dataclasses.asdict(cls()), **raw}


def _build(raw: dict, source: str | None) -> RunConfig:
    if not isinstance(raw, dict):
        raise ConfigError("top level must be a JSON object", line=1)
    known = {f.name for f in dataclasses.fields(RunConfig)}
    for key in raw:
        if key not in known:
            _fail(source, key, f"unknown key; expected one of {sorted(known)}")

    g = _section(source, "grid", raw.get("grid", {}), GridConfig)
    L = _number(source, "grid.L", g["L"])
    n = _integer(source, "grid.n", g["n"], 8)
    if n & (n - 1):
        _fail(source, "grid.n", f"must be a power of two, got {n}")

    t = _section(source, "time", raw.get("time", {}), TimeConfig)
    dt = _number(source, "time.dt", t["dt"])
    T_max = _number(source, "time.T_max", t["T_max"])
    steps = round(T_max / dt)
    if steps < 1 or not math.isclose(steps * dt, T_max, rel_tol=1e-9):
        _fail(source, "time.T_max", f"must be a positive integer multiple of dt={dt}, got {T_max}")

    nz = _section(source, "noise", raw.get("noise", {}), NoiseConfig)
    xi = _preset(source, "noise.xi", nz["xi"])
    eta = _preset(source, "noise.eta", nz["eta"], extra=("holm",))

    st = _section(source, "stop", raw.get("stop", {}), StopConfig)
    R = _number(source, "stop.R", st["R"], allow_none=True)
    T_w = _number(source, "stop.T_w", st["T_w"])

    tol = _section(source, "tolerances", raw.get("tolerances", {}), Tolerances)
    quad = _integer(source, "tolerances.quad_nodes", tol["quad_nodes"], 2)
    table_step = _number(source, "tolerances.table_step", tol["table_step"])

    defaults = RunConfig()
    mode = raw.get("mode", defaults.mode)
    if mode not in MODES:
        _fail(source, "mode", f"expected one of {list(MODES)}, got {mode!r}")
    scheme = raw.get("scheme", defaults.scheme)
    if scheme not in SCHEMES:
        _fail(source, "scheme", f"expected one of {list(SCHEMES)}, got {scheme!r}")
    nonlinear = raw.get("nonlinear", defaults.nonlinear)
    if not isinstance(nonlinear, bool):
        _fail(source, "nonlinear", f"expected true or false, got {nonlinear!r}")
    seed = _integer(source, "seed", raw.get("seed", defaults.seed), 0)
    seeds = raw.get("seeds", [])
    if not isinstance(seeds, list):
        _fail(source, "seeds", f"expected a list of integers, got {seeds!r}")
    seeds = tuple(_integer(source, "seeds", s, 0) for s in seeds)
    if len(set(seeds)) != len(seeds):
        _fail(source, "seeds", "seeds must be distinct")
    snapshots = _integer(source, "snapshots", raw.get("snapshots", defaults.snapshots), 0)
    initial = _preset(source, "initial", raw.get("initial", defaults.initial))
    output = raw.get("output", defaults.output)
    if not isinstance(output, str) or not output:
        _fail(source, "output", f"expected a non-empty path string, got {output!r}")

    return RunConfig(
        grid=GridConfig(L, n),
        time=TimeConfig(dt, T_max),
        initial=initial,
        noise=NoiseConfig(xi, eta),
        stop=StopConfig(R, T_w),
        mode=mode,
        scheme=scheme,
        nonlinear=nonlinear,
        seed=seed,
        seeds=seeds,
        snapshots=snapshots,
        output=output,
        tolerances=Tolerances(quad, table_step),
    )


def parse_config(source: str) -> RunConfig:
    """Parse and validate a JSON configuration document."""
    try:
        raw = json.loads(source)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"malformed JSON: {exc.msg} (column {exc.colno})", line=exc.lineno) from None
    return _build(raw, source)


def load_config(path) -> RunConfig:
    """Read a config file, or the ``config`` block of a run manifest."""
    text = Path(path).read_text()
    try:
        raw = json.loads(text)
    except json.JSONDecodeError:
        return parse_config(text)
    if isinstance(raw, dict) and "manifest_version" in raw:
        return _build(raw.get("config"), None)
    return parse_config(text)
