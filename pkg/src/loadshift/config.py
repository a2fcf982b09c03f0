"""Run configuration: one YAML file, with command-line flags taking precedence."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

import yaml

from .errors import ConfigError
from .models import FAMILIES, TrainingSchedule
from .recommend import RecommendationConfig

PATH_KEYS = ("consumption", "catalog", "mapping", "price", "carbon", "model_store", "output_dir")
INPUT_KEYS = ("consumption", "catalog", "mapping", "price", "carbon")


@dataclass(frozen=True)
class Paths:
    consumption: Path | None = None
    catalog: Path | None = None
    mapping: Path | None = None
    price: Path | None = None
    carbon: Path | None = None
    model_store: Path = Path("models")
    output_dir: Path = Path("out")
    price_url: str | None = None
    carbon_url: str | None = None


@dataclass(frozen=True)
class RunConfig:
    paths: Paths
    seed: int
    family: str = "mlp"
    schedule: TrainingSchedule = field(default_factory=TrainingSchedule)
    recommendation: RecommendationConfig = field(default_factory=RecommendationConfig)
    use_th: float = 0.5
    act_th: float = 0.5

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ConfigError(f"model family must be one of {FAMILIES}, got {self.family!r}")
        if isinstance(self.seed, bool) or not isinstance(self.seed, int):
            raise ConfigError(f"seed must be an integer, got {self.seed!r}")

    def require(self, *keys: str) -> None:
        """Fail early if an input a command needs is unset or missing on disk."""
        for key in keys:
            if key in ("price", "carbon") and getattr(self.paths, f"{key}_url"):
                continue
            path = getattr(self.paths, key)
            if path is None:
                raise ConfigError(f"paths.{key} is not configured")
            if not Path(path).is_file():
                raise ConfigError(f"{key} file not found: {path}")

    def snapshot(self) -> dict:
        """Plain-data view used in manifests and report headers."""
        p = {k: (None if v is None else str(v)) for k, v in asdict(self.paths).items()}
        return {
            "paths": p,
            "model": {"family": self.family, "seed": self.seed},
            "schedule": asdict(self.schedule),
            "recommendation": asdict(self.recommendation),
            "evaluation": {"use_th": self.use_th, "act_th": self.act_th},
        }

    def with_recommendation(self, **overrides) -> "RunConfig":
        clean = {k: v for k, v in overrides.items() if v is not None}
        if not clean:
            return self
        return replace(self, recommendation=_build(RecommendationConfig, {**asdict(self.recommendation), **clean}))


def _build(cls, data: dict, section: str = ""):
    known = {f.name for f in fields(cls)}
    unknown = set(data) - known
    if unknown:
        raise ConfigError(f"unknown {section or cls.__name__} keys: {sorted(unknown)}")
    try:
        return cls(**data)
    except TypeError as exc:
        raise ConfigError(f"invalid {section or cls.__name__}: {exc}") from exc


def load_config(path: str | Path, overrides: dict | None = None) -> RunConfig:
    """Parse ``path``; relative file paths resolve against the config's directory.

    ``overrides`` uses the same nesting as the file and wins over it.
    """
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    try:
        data = yaml.safe_load(path.read_text()) or {}
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: top level must be a mapping")
    for section, values in (overrides or {}).items():
        if isinstance(values, dict):
            data.setdefault(section, {})
            data[section] = {**(data[section] or {}), **{k: v for k, v in values.items() if v is not None}}
        elif values is not None:
            data[section] = values
    return from_dict(data, base=path.parent)


def from_dict(data: dict, base: str | Path = ".") -> RunConfig:
    base = Path(base)
    allowed = {"paths", "model", "schedule", "recommendation", "evaluation"}
    if set(data) - allowed:
        raise ConfigError(f"unknown config sections: {sorted(set(data) - allowed)}")
    raw_paths = dict(data.get("paths") or {})
    resolved = {}
    for key, value in raw_paths.items():
        if key in PATH_KEYS and value is not None:
            p = Path(value)
            resolved[key] = p if p.is_absolute() else base / p
        else:
            resolved[key] = value
    paths = _build(Paths, resolved, "paths")

    model = dict(data.get("model") or {})
    if "seed" not in model:
        raise ConfigError("model.seed is mandatory")
    unknown = set(model) - {"family", "seed"}
    if unknown:
        raise ConfigError(f"unknown model keys: {sorted(unknown)}")
    ev = dict(data.get("evaluation") or {})
    if set(ev) - {"use_th", "act_th"}:
        raise ConfigError(f"unknown evaluation keys: {sorted(set(ev) - {'use_th', 'act_th'})}")
    return RunConfig(
        paths=paths,
        seed=model["seed"],
        family=model.get("family", "mlp"),
        schedule=_build(TrainingSchedule, dict(data.get("schedule") or {}), "schedule"),
        recommendation=_build(RecommendationConfig, dict(data.get("recommendation") or {}), "recommendation"),
        use_th=float(ev.get("use_th", 0.5)),
        act_th=float(ev.get("act_th", 0.5)),
    )
