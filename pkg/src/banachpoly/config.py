"""Run configuration with strict JSON loading (unknown keys are errors)."""
from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path


class ConfigError(ValueError):
    pass


@dataclass
class GridConfig:
    x_max: float = 4.0
    n_points: int = 16
    alpha: float = 1.0


@dataclass
class NoiseConfig:
    sigma: float = 0.1
    gamma: float = 1.0
    dt_quadrature: float = 1e-3


@dataclass
class MCConfig:
    n_paths: int = 200_000
    seed: int = 12345
    k_sigma: float = 5.0


@dataclass
class MomentsConfig:
    s: float = 0.5
    t: float = 1.0
    k_max: int = 4


@dataclass
class CurveConfig:
    """Default initial forward curve ``level + slope * x``."""

    level: float = 1.0
    slope: float = 0.1


@dataclass
class PricingConfig:
    kind: str = "call"
    strike: float = 1.0
    degree: int = 16
    domain_M: float | None = 4.0
    s: float = 0.0
    t: float = 1.0
    x: float = 1.0


@dataclass
class OutputConfig:
    out: str | None = None
    format: str = "json"


@dataclass
class RunConfig:
    grid: GridConfig = field(default_factory=GridConfig)
    noise: NoiseConfig = field(default_factory=NoiseConfig)
    mc: MCConfig = field(default_factory=MCConfig)
    moments: MomentsConfig = field(default_factory=MomentsConfig)
    curve: CurveConfig = field(default_factory=CurveConfig)
    pricing: PricingConfig = field(default_factory=PricingConfig)
    output: OutputConfig = field(default_factory=OutputConfig)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def digest(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()

    def with_seed(self, seed: int) -> RunConfig:
        return dataclasses.replace(self, mc=dataclasses.replace(self.mc, seed=int(seed)))

    def validate(self):
        if self.grid.n_points < 2 or self.grid.x_max <= 0 or self.grid.alpha <= 0:
            raise ConfigError("grid needs n_points >= 2, x_max > 0, alpha > 0")
        if self.noise.sigma < 0 or self.noise.gamma < 0 or self.noise.dt_quadrature <= 0:
            raise ConfigError("noise needs sigma >= 0, gamma >= 0, dt_quadrature > 0")
        if self.mc.n_paths < 100 or self.mc.k_sigma <= 0:
            raise ConfigError("mc needs n_paths >= 100 and k_sigma > 0")
        if not 0 <= self.moments.s <= self.moments.t:
            raise ConfigError("moments needs 0 <= s <= t")
        if not 0 <= self.pricing.s <= self.pricing.t or self.pricing.x < 0:
            raise ConfigError("pricing needs 0 <= s <= t and x >= 0")
        if self.pricing.kind not in ("call", "put", "forward"):
            raise ConfigError(f"unknown pricing kind {self.pricing.kind!r}")
        if self.output.format not in ("json", "csv"):
            raise ConfigError("output.format must be json or csv")
        return self


def _build(cls, data, where: str):
    if not isinstance(data, dict):
        raise ConfigError(f"{where}: expected an object")
    fields = {f.name: f for f in dataclasses.fields(cls)}
    unknown = set(data) - set(fields)
    if unknown:
        raise ConfigError(f"{where}: unknown keys {sorted(unknown)}")
    kwargs = {}
    for name, value in data.items():
        f = fields[name]
        default = f.default_factory() if f.default_factory is not dataclasses.MISSING else f.default
        if dataclasses.is_dataclass(default):
            kwargs[name] = _build(type(default), value, f"{where}.{name}")
            continue
        expected = type(default)
        if value is None and (default is None or "None" in str(f.type)):
            kwargs[name] = None
        elif isinstance(value, bool) or (
                expected in (int, float) and not isinstance(value, (int, float))):
            raise ConfigError(f"{where}.{name}: expected a number, got {value!r}")
        elif expected is int and not float(value).is_integer():
            raise ConfigError(f"{where}.{name}: expected an integer, got {value!r}")
        elif expected is int:
            kwargs[name] = int(value)
        elif expected is float or "float" in str(f.type):
            kwargs[name] = float(value)
        elif expected is str or "str" in str(f.type):
            if not isinstance(value, str):
                raise ConfigError(f"{where}.{name}: expected a string, got {value!r}")
            kwargs[name] = value
        else:
            kwargs[name] = value
    return cls(**kwargs)


def config_from_dict(data: dict) -> RunConfig:
    return _build(RunConfig, data, "config").validate()


def load_config(path: str | Path | None) -> RunConfig:
    if path is None:
        return RunConfig().validate()
    try:
        data = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON at line {exc.lineno}: {exc.msg}") from exc
    return config_from_dict(data)
