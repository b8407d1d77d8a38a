"""Experiment configuration: one JSON document per run, SI units throughout.

Layout::

    {
      "system": "alpha" | "beta",
      "controller": "auto" | "pd" | "pid",
      "friction":  {f_S, f_C, v_s, sigma0, sigma1, sigma2},
      "stage":     {m_t, m_b, k_FI, c_FI},
      "gains":     {k_p, k_i, k_d},
      "reference": {v_r, r_ddot, feedforward, u_s},
      "equilibrium":    {families, eps0, eps_i0},
      "grid":           {x: {param, lo, hi, n, scale}, y: {...}},
      "locus":          {param, lo, hi, n_points, scale, refine, exclude_lambda_z},
      "chart":          {mode, coordinate},
      "stack":          {param, values} or {param, lo, hi, n, scale},
      "sim":            {t_end, rtol, atol, settle_fraction, coordinate, systems, sample_rate},
      "output":         {dir, prefix},
      "description": "free text"
    }

Every block is optional and falls back to the defaults below.  Keys named
``_comment`` are accepted anywhere and ignored, since JSON has no comment
syntax.  Any other unknown key is an error.
"""

from __future__ import annotations

import dataclasses
import json
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional, Union

from .friction import FrictionParams
from .plant import Model, PidGains, Reference, StageParams, System
from .sweep import PARAMS, Axis, GridSpec

COMMENT_KEY = "_comment"
FAMILIES = ("sticking-PD", "sticking-PID", "slipping-PD", "slipping-PID")


class ConfigError(ValueError):
    """Invalid configuration; the message names the file and line when known."""


@dataclass(frozen=True)
class EquilibriumBlock:
    families: tuple[str, ...] = FAMILIES
    eps0: float = 0.0
    eps_i0: float = 0.0

    def __post_init__(self) -> None:
        bad = [f for f in self.families if f not in FAMILIES]
        if bad:
            raise ValueError(f"unknown equilibrium families {bad}; choose from {list(FAMILIES)}")


@dataclass(frozen=True)
class LocusBlock:
    param: str = "k_p"
    lo: float = 1.0e3
    hi: float = 1.0e6
    n_points: int = 200
    scale: str = "log"
    refine: bool = True
    exclude_lambda_z: bool = True

    def __post_init__(self) -> None:
        if self.param not in PARAMS:
            raise ValueError(f"unknown locus parameter {self.param!r}")
        if self.n_points < 2:
            raise ValueError("locus needs n_points >= 2")
        if self.lo > self.hi:
            raise ValueError("locus needs lo <= hi")
        if self.scale not in ("linear", "log"):
            raise ValueError(f"scale must be 'linear' or 'log', got {self.scale!r}")


@dataclass(frozen=True)
class StackBlock:
    """Third parameter for a stack of charts; ``values`` overrides lo/hi/n."""

    param: str = "v_r"
    values: Optional[tuple[float, ...]] = None
    lo: float = 2.0e-3
    hi: float = 30.0e-3
    n: int = 50
    scale: str = "linear"

    def __post_init__(self) -> None:
        if self.param not in PARAMS:
            raise ValueError(f"unknown stack parameter {self.param!r}")
        if self.values is None:
            Axis(self.param, self.lo, self.hi, self.n, self.scale)
        elif len(self.values) == 0:
            raise ValueError("stack values must not be empty")

    def stack_values(self) -> list[float]:
        if self.values is not None:
            return list(self.values)
        return [float(v) for v in Axis(self.param, self.lo, self.hi, self.n, self.scale).values()]


@dataclass(frozen=True)
class ChartBlock:
    """``eigen``: max real eigenvalue part; ``amplitude``: simulated steady-state amplitude."""

    mode: str = "eigen"
    coordinate: str = "eps"

    def __post_init__(self) -> None:
        if self.mode not in ("eigen", "amplitude"):
            raise ValueError(f"chart mode must be eigen or amplitude, got {self.mode!r}")


@dataclass(frozen=True)
class SimBlock:
    t_end: float = 20.0
    rtol: float = 1.0e-8
    atol: float = 1.0e-10
    settle_fraction: float = 0.5
    coordinate: Optional[str] = None
    systems: Optional[tuple[str, ...]] = None
    sample_rate: float = 2000.0

    def __post_init__(self) -> None:
        if not self.t_end > 0.0:
            raise ValueError(f"sim.t_end must be positive, got {self.t_end}")
        if not (self.rtol > 0.0 and self.atol > 0.0):
            raise ValueError("tolerances must be positive")
        if not 0.0 <= self.settle_fraction < 1.0:
            raise ValueError("settle_fraction must be in [0, 1)")
        if not self.sample_rate > 0.0:
            raise ValueError("sample_rate must be positive")
        for s in self.systems or ():
            System(s)


@dataclass(frozen=True)
class OutputBlock:
    dir: str = "out"
    prefix: str = "run"


@dataclass(frozen=True)
class ExperimentConfig:
    system: str = "alpha"
    controller: str = "auto"
    friction: FrictionParams = field(default_factory=FrictionParams)
    stage: StageParams = field(default_factory=StageParams)
    gains: PidGains = field(default_factory=PidGains)
    reference: Reference = field(default_factory=Reference)
    equilibrium: EquilibriumBlock = field(default_factory=EquilibriumBlock)
    grid: Optional[GridSpec] = None
    locus: Optional[LocusBlock] = None
    chart: ChartBlock = field(default_factory=ChartBlock)
    stack: Optional[StackBlock] = None
    sim: Optional[SimBlock] = None
    output: OutputBlock = field(default_factory=OutputBlock)
    description: str = ""

    def __post_init__(self) -> None:
        System(self.system)
        if self.controller not in ("auto", "pd", "pid"):
            raise ValueError(f"controller must be auto, pd or pid, got {self.controller!r}")
        # cross-block invariants are the model's own
        self.model()

    def model(self, system: Optional[str] = None) -> Model:
        return Model(System(system or self.system), self.friction, self.stage, self.gains,
                     self.reference)

    @property
    def controller_arg(self) -> Optional[str]:
        return None if self.controller == "auto" else self.controller

    def to_dict(self) -> dict:
        """Canonical form: every field present, comments dropped."""
        out: dict[str, Any] = {}
        for f in dataclasses.fields(self):
            val = getattr(self, f.name)
            if val is None:
                continue
            out[f.name] = _block_to_dict(val)
        return out

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2) + "\n"


def _block_to_dict(val):
    if isinstance(val, GridSpec):
        return {"x": _block_to_dict(val.x), "y": _block_to_dict(val.y)}
    if dataclasses.is_dataclass(val):
        d = {}
        for f in dataclasses.fields(val):
            v = getattr(val, f.name)
            if v is None:
                continue
            d[f.name] = list(v) if isinstance(v, tuple) else v
        return d
    return val


# --- parsing ------------------------------------------------------------------------

_SIMPLE_BLOCKS = {
    "friction": FrictionParams,
    "stage": StageParams,
    "gains": PidGains,
    "reference": Reference,
    "equilibrium": EquilibriumBlock,
    "locus": LocusBlock,
    "chart": ChartBlock,
    "stack": StackBlock,
    "sim": SimBlock,
    "output": OutputBlock,
}
_TUPLE_FIELDS = {"families", "values", "systems"}


class _Locator:
    """Maps a dotted key path back to a line in the source text."""

    def __init__(self, text: str, source: str):
        self.text, self.source = text, source

    def line_of(self, path: str) -> Optional[int]:
        pos = 0
        for part in path.split("."):
            m = re.compile(r'"%s"\s*:' % re.escape(part)).search(self.text, pos)
            if m is None:
                return None
            pos = m.start()
        return self.text.count("\n", 0, pos) + 1

    def error(self, path: str, msg: str) -> ConfigError:
        line = self.line_of(path) if path else None
        where = f"{self.source}:{line}" if line else self.source
        return ConfigError(f"{where}: {path + ': ' if path else ''}{msg}")


def _strip_comments(obj):
    if isinstance(obj, dict):
        return {k: _strip_comments(v) for k, v in obj.items() if k != COMMENT_KEY}
    if isinstance(obj, list):
        return [_strip_comments(v) for v in obj]
    return obj


def _check_keys(d: dict, allowed, path: str, loc: _Locator) -> None:
    if not isinstance(d, dict):
        raise loc.error(path, f"expected an object, got {type(d).__name__}")
    for k in d:
        if k not in allowed:
            p = f"{path}.{k}" if path else k
            raise loc.error(p, f"unknown key; allowed: {sorted(allowed)}")


def _build(cls, d: dict, path: str, loc: _Locator):
    names = {f.name for f in dataclasses.fields(cls)}
    _check_keys(d, names, path, loc)
    kwargs = {k: tuple(v) if k in _TUPLE_FIELDS and v is not None else v for k, v in d.items()}
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as exc:
        raise loc.error(path, str(exc)) from None


def _build_grid(d: dict, loc: _Locator) -> GridSpec:
    _check_keys(d, {"x", "y"}, "grid", loc)
    axes = []
    for name in ("x", "y"):
        if name not in d:
            raise loc.error("grid", f"missing axis {name!r}")
        axes.append(_build(Axis, d[name], f"grid.{name}", loc))
    return GridSpec(*axes)


def from_dict(raw: dict, source: str = "<config>", text: str = "") -> ExperimentConfig:
    loc = _Locator(text, source)
    raw = _strip_comments(raw)
    top = {f.name for f in dataclasses.fields(ExperimentConfig)}
    _check_keys(raw, top, "", loc)
    kwargs: dict[str, Any] = {}
    for key, val in raw.items():
        if key == "grid":
            kwargs[key] = _build_grid(val, loc)
        elif key in _SIMPLE_BLOCKS:
            kwargs[key] = _build(_SIMPLE_BLOCKS[key], val, key, loc)
        else:
            kwargs[key] = val
    try:
        return ExperimentConfig(**kwargs)
    except (TypeError, ValueError, KeyError) as exc:
        raise loc.error("", str(exc)) from None


def parse_value(text: str):
    """``--set`` value: JSON literal when it parses, otherwise a bare string."""
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def apply_overrides(raw: dict, overrides) -> dict:
    """Apply ``key.sub=value`` assignments to a raw config tree (copied)."""
    out = json.loads(json.dumps(raw))
    for item in overrides or ():
        if "=" not in item:
            raise ConfigError(f"--set {item!r}: expected key=value")
        key, value = item.split("=", 1)
        parts = key.strip().split(".")
        node = out
        for p in parts[:-1]:
            node = node.setdefault(p, {})
            if not isinstance(node, dict):
                raise ConfigError(f"--set {key}: {p!r} is not an object")
        node[parts[-1]] = parse_value(value)
    return out


def loads(text: str, source: str = "<string>", overrides=None) -> ExperimentConfig:
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{source}:{exc.lineno}: invalid JSON: {exc.msg}") from None
    if not isinstance(raw, dict):
        raise ConfigError(f"{source}:1: top level must be an object")
    return from_dict(apply_overrides(raw, overrides), source, text)


def load(path: Union[str, Path], overrides=None) -> ExperimentConfig:
    p = Path(path)
    try:
        text = p.read_text()
    except OSError as exc:
        raise ConfigError(f"{p}: {exc.strerror}") from None
    return loads(text, str(p), overrides)


CONFIG_DIR = Path(__file__).with_name("configs")


def shipped(name: str) -> Path:
    """Path of a config shipped with the package (``default``, ``fig3``, ...)."""
    p = CONFIG_DIR / f"{name}.json"
    if not p.exists():
        known = sorted(q.stem for q in CONFIG_DIR.glob("*.json"))
        raise ConfigError(f"no shipped config {name!r}; available: {known}")
    return p

