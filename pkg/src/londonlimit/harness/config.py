"""Run configuration: dataclasses loaded strictly from YAML.

Grammar (every block optional except ``experiment``)::

    experiment: validate | solve | betalayer | spectra | disk | sphere | convergence
    seed: 0
    geometry:
      surfaces:
        - kind: sphere | torus_rev | twisted_torus
          params: {radius: 1.0}          # or {R: 2.0, r: 1.0}, or {coeffs: [[i, j, d], ...]}
          flip: false
    sources:
      region: outer | inner
      items:
        - {type: uniform, amplitude: [0, 0, 1]}
        - {type: dipole, location: [0, 0, 3], moment: [0, 0, 1]}
        - {type: loop, center: [0, 0, 0], radius: 4.0, axis: [0, 0, 1], current: 1.0}
        - {type: monopole, location: [0, 0, 0], charge: 1.0}
    flux: {a: [1.0], b: []}
    numeric:
      n_u: 32
      n_v: 32
      ...                                # see NumericConfig
    tolerances: {check_name: value}      # overrides of the per-experiment thresholds
    reference: axis_field | sphere_uniform  # closed-form comparison for ``solve``

Unknown keys anywhere raise :class:`ConfigError`.
"""

from __future__ import annotations

import dataclasses
import types
import typing
from dataclasses import dataclass, field
from pathlib import Path

import yaml

EXPERIMENTS = ("validate", "solve", "betalayer", "spectra", "disk", "sphere", "convergence")
SURFACE_KINDS = ("sphere", "torus_rev", "twisted_torus")
SOURCE_TYPES = ("uniform", "dipole", "loop", "monopole")
REFERENCES = (None, "axis_field", "sphere_uniform")


class ConfigError(ValueError):
    """Schema violation in a run configuration."""


@dataclass(frozen=True)
class SurfaceConfig:
    kind: str
    params: dict = field(default_factory=dict)
    flip: bool = False

    def validate(self, path):
        if self.kind not in SURFACE_KINDS:
            raise ConfigError(f"{path}.kind: unknown surface kind {self.kind!r}")


@dataclass(frozen=True)
class GeometryConfig:
    surfaces: tuple[SurfaceConfig, ...] = ()

    def validate(self, path):
        if len(self.surfaces) > 2:
            raise ConfigError(f"{path}.surfaces: at most two boundary components are supported")


@dataclass(frozen=True)
class SourceConfig:
    type: str
    amplitude: tuple[float, ...] | None = None
    location: tuple[float, ...] | None = None
    moment: tuple[float, ...] | None = None
    center: tuple[float, ...] | None = None
    radius: float | None = None
    axis: tuple[float, ...] | None = None
    current: float = 1.0
    charge: float = 1.0

    _REQUIRED = {
        "uniform": ("amplitude",),
        "dipole": ("location", "moment"),
        "loop": ("center", "radius", "axis"),
        "monopole": ("location",),
    }

    def validate(self, path):
        if self.type not in SOURCE_TYPES:
            raise ConfigError(f"{path}.type: unknown source type {self.type!r}")
        for name in self._REQUIRED[self.type]:
            if getattr(self, name) is None:
                raise ConfigError(f"{path}: {self.type} source needs {name!r}")
        for name in ("amplitude", "location", "moment", "center", "axis"):
            v = getattr(self, name)
            if v is not None and len(v) != 3:
                raise ConfigError(f"{path}.{name}: expected three components")


@dataclass(frozen=True)
class SourcesConfig:
    region: str = "outer"
    items: tuple[SourceConfig, ...] = ()

    def validate(self, path):
        if self.region not in ("outer", "inner"):
            raise ConfigError(f"{path}.region: expected 'outer' or 'inner'")


@dataclass(frozen=True)
class FluxConfig:
    a: tuple[float, ...] = ()
    b: tuple[float, ...] = ()


@dataclass(frozen=True)
class NumericConfig:
    """Discretization and sweep parameters.

    ``r0`` fixes the collar half-depth; when absent it is
    ``r0_fraction * reach``.  ``lambdas`` lists penetration depths; when
    absent, a dyadic sweep of ``n_lambda`` values starting at
    ``lambda_max_over_r0 * r0`` (boundary layer) or ``lambda_over_R``
    (London sphere) or a log-spaced range (disk) is used.
    """

    n_u: int = 32
    n_v: int = 32
    n_list: tuple[int, ...] = ()
    n_rho: int | None = None
    r0: float | None = None
    r0_fraction: float = 0.4
    lambdas: tuple[float, ...] = ()
    lambda_max_over_r0: float = 0.25
    n_lambda: int = 7
    lambda_over_R: tuple[float, ...] = (0.5, 0.25, 0.125, 0.0625, 0.03125, 0.015625)
    disk_lambda_range: tuple[float, float] = (1e-3, 1e-1)
    disk_orders: int = 25
    disk_zeros: int = 200
    richardson_points: int = 4
    n_radial: int = 32
    n_angular: int = 96
    upsample: int = 3
    check_nonsymmetric: bool = True
    jump_check: bool = False
    n_probes: int = 20
    bvp_pairs: int = 10

    def validate(self, path):
        for name in ("n_u", "n_v", "n_lambda", "disk_orders", "disk_zeros", "n_radial",
                     "n_angular", "upsample", "n_probes", "bvp_pairs"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{path}.{name}: must be positive")
        if self.r0 is not None and not self.r0 > 0:
            raise ConfigError(f"{path}.r0: must be positive")
        if not 0 < self.r0_fraction < 0.5:
            raise ConfigError(f"{path}.r0_fraction: collar depth 2*r0 must stay below the reach")
        if any(not l > 0 for l in self.lambdas + self.lambda_over_R):
            raise ConfigError(f"{path}: penetration depths must be positive")
        lo, hi = self.disk_lambda_range
        if not 0 < lo < hi:
            raise ConfigError(f"{path}.disk_lambda_range: need 0 < low < high")


@dataclass(frozen=True)
class RunConfig:
    experiment: str
    seed: int = 0
    geometry: GeometryConfig = GeometryConfig()
    sources: SourcesConfig = SourcesConfig()
    flux: FluxConfig = FluxConfig()
    numeric: NumericConfig = NumericConfig()
    tolerances: dict = field(default_factory=dict)
    reference: str | None = None

    def validate(self, path="config"):
        if self.experiment not in EXPERIMENTS:
            raise ConfigError(f"{path}.experiment: expected one of {', '.join(EXPERIMENTS)}")
        if self.reference not in REFERENCES:
            raise ConfigError(f"{path}.reference: expected one of {REFERENCES[1:]}")
        for k, v in self.tolerances.items():
            if not isinstance(k, str) or isinstance(v, bool) or not isinstance(v, (int, float)):
                raise ConfigError(f"{path}.tolerances: entries must map names to numbers")

    def to_dict(self) -> dict:
        return _plain(dataclasses.asdict(self))


def _plain(x):
    if isinstance(x, dict):
        return {k: _plain(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_plain(v) for v in x]
    return x


# ---------------------------------------------------------------------------
# Strict construction
# ---------------------------------------------------------------------------


def _convert(tp, value, path):
    origin = typing.get_origin(tp)
    args = typing.get_args(tp)
    if origin in (typing.Union, types.UnionType):
        if value is None and type(None) in args:
            return None
        inner = [a for a in args if a is not type(None)]
        return _convert(inner[0], value, path)
    if dataclasses.is_dataclass(tp):
        return build(tp, value, path)
    if origin is tuple:
        if not isinstance(value, (list, tuple)):
            raise ConfigError(f"{path}: expected a list")
        if len(args) == 2 and args[1] is Ellipsis:
            return tuple(_convert(args[0], v, f"{path}[{i}]") for i, v in enumerate(value))
        if len(value) != len(args):
            raise ConfigError(f"{path}: expected {len(args)} entries")
        return tuple(_convert(a, v, f"{path}[{i}]") for i, (a, v) in enumerate(zip(args, value)))
    if tp is dict or origin is dict:
        if not isinstance(value, dict):
            raise ConfigError(f"{path}: expected a mapping")
        return dict(value)
    if tp is bool:
        if not isinstance(value, bool):
            raise ConfigError(f"{path}: expected true or false")
        return value
    if tp is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{path}: expected an integer")
        return value
    if tp is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{path}: expected a number")
        return float(value)
    if tp is str:
        if not isinstance(value, str):
            raise ConfigError(f"{path}: expected a string")
        return value
    raise ConfigError(f"{path}: unsupported field type {tp!r}")


def build(cls, data, path="config"):
    """Instantiate dataclass ``cls`` from a mapping, rejecting unknown keys."""
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: expected a mapping")
    hints = typing.get_type_hints(cls)
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(data) - names)
    if unknown:
        raise ConfigError(f"{path}: unknown key(s) {', '.join(map(str, unknown))}")
    kwargs = {}
    for f in dataclasses.fields(cls):
        if f.name in data:
            kwargs[f.name] = _convert(hints[f.name], data[f.name], f"{path}.{f.name}")
        elif f.default is dataclasses.MISSING and f.default_factory is dataclasses.MISSING:
            raise ConfigError(f"{path}: missing required key {f.name!r}")
    obj = cls(**kwargs)
    if hasattr(obj, "validate"):
        obj.validate(path)
    return obj


def parse_config(data) -> RunConfig:
    return build(RunConfig, data)


def load_config(path) -> RunConfig:
    text = Path(path).read_text()
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: not valid YAML ({exc})") from None
    return parse_config(data)


def dump_config(cfg: RunConfig) -> str:
    return yaml.safe_dump(cfg.to_dict(), sort_keys=False)
