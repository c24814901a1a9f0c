# rhlab/scenario.py
"""
Scenario files: flat `section.key = value` lines, `#` comments.

    grid.dim = 2
    grid.extent = 2pi
    metric.kind = warped
    metric.b = 2 + cos(x)
    localization.rho = 1.0

Numbers accept multiples of pi (`2pi`, `0.5*pi`, `pi`). Lists are comma separated.
Profiles are expressions in x.
"""
from __future__ import annotations

import hashlib
import logging
import math
import re
from dataclasses import dataclass, fields, replace
from enum import Enum
from pathlib import Path
from typing import Dict, List, Optional, Tuple, Union

from .curvature import conformal_metric, profile_expression, scalar_from_profile, warped_metric
from .errors import ScenarioError
from .flow import FlowState, StepControl
from .grid_fields import PeriodicGrid, build_grid, flat_metric

logger = logging.getLogger(__name__)

PRESET_DIR = Path(__file__).resolve().parent.parent / "data" / "presets"
PRESET_SUFFIX = ".scn"

_LINE = re.compile(r"^\s*([a-z_]+)\.([a-z_0-9]+)\s*=\s*(.*?)\s*$")
_PI = re.compile(r"^([+-]?(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)?\s*\*?\s*pi$")


class MetricKind(str, Enum):
    FLAT = "flat"
    WARPED = "warped"
    CONFORMAL = "conformal"


class FieldKind(str, Enum):
    CONSTANT = "constant"
    COSINE = "cosine"
    PROFILE = "profile"


@dataclass(frozen=True)
class GridSpec:
    dim: int = 2
    extent: Tuple[float, ...] = (2 * math.pi,)
    resolution: Tuple[int, ...] = (32,)


@dataclass(frozen=True)
class MetricSpec:
    kind: MetricKind = MetricKind.FLAT
    scale: float = 1.0
    a: str = "1"
    b: str = "1"
    c: str = "1"
    v: str = "0"


@dataclass(frozen=True)
class FieldSpec:
    kind: FieldKind = FieldKind.CONSTANT
    value: float = 0.0
    amplitude: float = 0.0
    mode: int = 1
    profile: str = "0"


@dataclass(frozen=True)
class FlowSpec:
    tmax: float = 1.0
    stride: float = 0.1
    dt: float = 1.0
    safety: float = 0.5


@dataclass(frozen=True)
class LocalizationSpec:
    x0: Tuple[int, ...] = (0,)
    rho: float = 1.0
    k_floor: float = 1e-3


@dataclass(frozen=True)
class MonitorSpec:
    p: float = 3.0
    p_list: Tuple[float, ...] = (3.0, 4.0, 6.0)
    c_in: Union[str, float] = "fitted"
    c_floor: float = 1.0


@dataclass(frozen=True)
class ExtensionSpec:
    cm: Union[str, float] = "fitted"
    exponents: Tuple[float, ...] = (1.0, 2.0, 4.0)


@dataclass(frozen=True)
class RunSpec:
    seed: int = 0


@dataclass(frozen=True)
class Scenario:
    name: str = "scenario"
    grid: GridSpec = GridSpec()
    metric: MetricSpec = MetricSpec()
    field: FieldSpec = FieldSpec()
    flow: FlowSpec = FlowSpec()
    localization: LocalizationSpec = LocalizationSpec()
    monitor: MonitorSpec = MonitorSpec()
    extension: ExtensionSpec = ExtensionSpec()
    run: RunSpec = RunSpec()

    @property
    def extents(self) -> Tuple[float, ...]:
        return _per_axis(self.grid.extent, self.grid.dim)

    @property
    def resolutions(self) -> Tuple[int, ...]:
        return _per_axis(self.grid.resolution, self.grid.dim)

    @property
    def x0(self) -> Tuple[int, ...]:
        return _per_axis(self.localization.x0, self.grid.dim)


SECTIONS = ("grid", "metric", "field", "flow", "localization", "monitor", "extension", "run")
DEFAULTS = Scenario()


def _per_axis(values: Tuple, dim: int) -> Tuple:
    return tuple(values) * dim if len(values) == 1 else tuple(values)


# ---------------------------------------------------------------------------
# value parsing

def parse_number(text: str, key: str) -> float:
    text = text.strip()
    m = _PI.match(text)
    if m:
        return (float(m.group(1)) if m.group(1) else 1.0) * math.pi
    try:
        return float(text)
    except ValueError:
        raise ScenarioError(key, f"expects a number, got {text!r}") from None


def _parse_int(text: str, key: str) -> int:
    value = parse_number(text, key)
    if value != int(value):
        raise ScenarioError(key, f"expects an integer, got {text!r}")
    return int(value)


def _parse_value(current, text: str, key: str):
    if isinstance(current, Enum):
        try:
            return type(current)(text.strip())
        except ValueError:
            allowed = ", ".join(m.value for m in type(current))
            raise ScenarioError(key, f"must be one of {allowed}") from None
    if isinstance(current, tuple):
        items = [s for s in text.split(",") if s.strip()]
        if not items:
            raise ScenarioError(key, "expects at least one value")
        if isinstance(current[0], int):
            return tuple(_parse_int(s, key) for s in items)
        return tuple(parse_number(s, key) for s in items)
    if isinstance(current, bool):
        return text.strip().lower() in ("1", "true", "yes")
    if isinstance(current, int):
        return _parse_int(text, key)
    if isinstance(current, float):
        return parse_number(text, key)
    if key in ("monitor.c_in", "extension.cm"):
        stripped = text.strip()
        return stripped if stripped == "fitted" else parse_number(stripped, key)
    return text.strip()


def _format_value(value) -> str:
    if isinstance(value, Enum):
        return value.value
    if isinstance(value, tuple):
        return ", ".join(_format_value(v) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


# ---------------------------------------------------------------------------
# parse / serialize

def parse_scenario_text(text: str, name: str = "scenario") -> Scenario:
    sections: Dict[str, Dict[str, object]] = {s: {} for s in SECTIONS}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        m = _LINE.match(line)
        if not m:
            raise ScenarioError(f"line {lineno}", f"is not 'section.key = value': {raw.strip()!r}")
        section, key, value = m.groups()
        full = f"{section}.{key}"
        if section not in SECTIONS:
            raise ScenarioError(full, "unknown section")
        spec = getattr(DEFAULTS, section)
        if key not in {f.name for f in fields(spec)}:
            raise ScenarioError(full, "unknown key")
        sections[section][key] = _parse_value(getattr(spec, key), value, full)
    scenario = Scenario(name=name, **{s: replace(getattr(DEFAULTS, s), **vals) for s, vals in sections.items()})
    validate(scenario)
    return scenario


def parse_scenario(path: Union[str, Path]) -> Scenario:
    path = Path(path)
    if not path.is_file():
        raise ScenarioError("scenario", f"file not found: {path}")
    return parse_scenario_text(path.read_text(encoding="utf-8"), name=path.stem)


def serialize_scenario(scenario: Scenario) -> str:
    """Every key, defaults included, in a fixed order."""
    lines = [f"# {scenario.name}"]
    for section in SECTIONS:
        spec = getattr(scenario, section)
        for f in fields(spec):
            lines.append(f"{section}.{f.name} = {_format_value(getattr(spec, f.name))}")
    return "\n".join(lines) + "\n"


def scenario_hash(scenario: Scenario) -> str:
    """sha256 of the serialized settings; the name is not part of it."""
    body = serialize_scenario(scenario).split("\n", 1)[1]
    return hashlib.sha256(body.encode("utf-8")).hexdigest()


def scenario_dict(scenario: Scenario) -> Dict[str, str]:
    return {f"{s}.{f.name}": _format_value(getattr(getattr(scenario, s), f.name))
            for s in SECTIONS for f in fields(getattr(scenario, s))}


def with_overrides(scenario: Scenario, p: Optional[float] = None, resolution: Optional[int] = None,
                   tmax: Optional[float] = None) -> Scenario:
    out = scenario
    if p is not None:
        out = replace(out, monitor=replace(out.monitor, p=float(p)))
    if resolution is not None:
        out = replace(out, grid=replace(out.grid, resolution=(int(resolution),)))
    if tmax is not None:
        stride = min(out.flow.stride, float(tmax))
        out = replace(out, flow=replace(out.flow, tmax=float(tmax), stride=stride))
    validate(out)
    return out


def validate(s: Scenario) -> None:
    if s.grid.dim not in (2, 3):
        raise ScenarioError("grid.dim", "must be 2 or 3")
    for key, values in (("grid.extent", s.grid.extent), ("grid.resolution", s.grid.resolution),
                        ("localization.x0", s.localization.x0)):
        if len(values) not in (1, s.grid.dim):
            raise ScenarioError(key, f"needs 1 or {s.grid.dim} values")
    if any(not L > 0 for L in s.extents):
        raise ScenarioError("grid.extent", "> 0")
    if any(N < 8 for N in s.resolutions):
        raise ScenarioError("grid.resolution", ">= 8")
    if not s.metric.scale > 0:
        raise ScenarioError("metric.scale", "> 0")
    if not s.flow.tmax > 0:
        raise ScenarioError("flow.tmax", "> 0")
    if not 0 < s.flow.stride <= s.flow.tmax:
        raise ScenarioError("flow.stride", "in (0, flow.tmax]")
    if not s.flow.dt > 0:
        raise ScenarioError("flow.dt", "> 0")
    if not 0 < s.flow.safety <= 1:
        raise ScenarioError("flow.safety", "in (0, 1]")
    if not s.localization.rho > 0:
        raise ScenarioError("localization.rho", "> 0")
    if not s.localization.k_floor > 0:
        raise ScenarioError("localization.k_floor", "> 0")
    if not s.monitor.p >= 3:
        raise ScenarioError("monitor.p", ">= 3")
    if any(not 3 <= p <= 8 for p in s.monitor.p_list):
        raise ScenarioError("monitor.p_list", "entries in [3, 8]")
    if not isinstance(s.monitor.c_in, str) and not s.monitor.c_in > 0:
        raise ScenarioError("monitor.c_in", "fitted or > 0")
    if not s.monitor.c_floor > 0:
        raise ScenarioError("monitor.c_floor", "> 0")
    if not isinstance(s.extension.cm, str) and not s.extension.cm >= 2:
        raise ScenarioError("extension.cm", "fitted or >= 2")
    if any(not a >= 1 for a in s.extension.exponents):
        raise ScenarioError("extension.exponents", "entries >= 1")
    for key in ("a", "b", "c", "v"):
        try:
            profile_expression(getattr(s.metric, key))
        except Exception as err:
            raise ScenarioError(f"metric.{key}", f"is not an expression in x: {err}") from None


# ---------------------------------------------------------------------------
# initial data

def scenario_grid(s: Scenario) -> PeriodicGrid:
    return build_grid(s.grid.dim, s.extents, s.resolutions)


def field_profile(spec: FieldSpec) -> str:
    if spec.kind is FieldKind.CONSTANT:
        return repr(spec.value)
    if spec.kind is FieldKind.COSINE:
        return f"{spec.amplitude!r}*cos({spec.mode}*x)"
    return spec.profile


def initial_state(s: Scenario) -> FlowState:
    grid = scenario_grid(s)
    m = s.metric
    if m.kind is MetricKind.FLAT:
        g = flat_metric(grid, m.scale)
    elif m.kind is MetricKind.WARPED:
        g = warped_metric(grid, m.a, m.b, m.c if grid.dim == 3 else None)
    else:
        g = conformal_metric(grid, m.v)
    u = scalar_from_profile(grid, field_profile(s.field))
    return FlowState(t=0.0, g=g, u=u)


def step_control(s: Scenario) -> StepControl:
    return StepControl(dt=s.flow.dt, t_max=s.flow.tmax, safety=s.flow.safety, stride=s.flow.stride)


def list_presets() -> List[Path]:
    return sorted(PRESET_DIR.glob(f"*{PRESET_SUFFIX}"))


def load_preset(name: str) -> Scenario:
    path = PRESET_DIR / f"{name}{PRESET_SUFFIX}"
    if not path.is_file():
        known = ", ".join(p.stem for p in list_presets())
        raise ScenarioError("preset", f"unknown preset {name!r} (known: {known})")
    return parse_scenario(path)
