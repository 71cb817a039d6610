"""Declarative configuration (YAML) with strict key validation.

Precedence is handled by the CLI: flag > environment variable > config
file > built-in default.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

import yaml

from .errors import ConfigError
from .geometry import GeometryConfig, RegistrationParams, RewardThresholds
from .harness import ExternalCheckerSpec
from .reserialize import ReserializeOptions

ENV_EMBED_ENDPOINT = "STEPKIT_EMBED_ENDPOINT"
ENV_EMBED_API_KEY = "STEPKIT_EMBED_API_KEY"
ENV_CHECKER_CMD = "STEPKIT_CHECKER_CMD"


@dataclass(frozen=True)
class IndexSettings:
    dimension: int = 512
    endpoint: str = ""
    model: str = ""


@dataclass(frozen=True)
class Config:
    geometry: GeometryConfig = field(default_factory=GeometryConfig)
    reserialize: ReserializeOptions = field(default_factory=ReserializeOptions)
    checker: ExternalCheckerSpec | None = None
    index: IndexSettings = field(default_factory=IndexSettings)
    jobs: int = os.cpu_count() or 1


def _build(cls, data: dict, path: str, nested: dict | None = None):
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: expected a mapping, got {type(data).__name__}")
    nested = nested or {}
    known = {f.name for f in fields(cls)}
    unknown = set(data) - known
    if unknown:
        raise ConfigError(f"{path}: unknown keys {sorted(unknown)}")
    kwargs = {}
    for key, value in data.items():
        if key in nested:
            kwargs[key] = _build(nested[key][0], value, f"{path}.{key}",
                                 nested[key][1] if len(nested[key]) > 1 else None)
        else:
            kwargs[key] = value
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{path}: {exc}")


def load_config(path: Path | str | None) -> Config:
    """Load a YAML config file; unknown keys and invalid values are
    rejected. ``None`` yields the built-in defaults (plus environment)."""
    raw: dict = {}
    if path is not None:
        try:
            loaded = yaml.safe_load(Path(path).read_text())
        except OSError as exc:
            raise ConfigError(f"cannot read config file: {exc}")
        except yaml.YAMLError as exc:
            raise ConfigError(f"invalid YAML: {exc}")
        if loaded is None:
            loaded = {}
        if not isinstance(loaded, dict):
            raise ConfigError("top level of the config file must be a mapping")
        raw = loaded

    known = {"geometry", "reserialize", "checker", "index", "jobs"}
    unknown = set(raw) - known
    if unknown:
        raise ConfigError(f"unknown top-level keys {sorted(unknown)}")

    geometry = _build(
        GeometryConfig, raw.get("geometry", {}), "geometry",
        nested={"thresholds": (RewardThresholds,),
                "registration": (RegistrationParams,)},
    ) if "geometry" in raw else GeometryConfig()
    reserialize = (_build(ReserializeOptions, raw.get("reserialize", {}), "reserialize")
                   if "reserialize" in raw else ReserializeOptions())

    checker = None
    if "checker" in raw and raw["checker"] is not None:
        checker = _build(ExternalCheckerSpec, raw["checker"], "checker")
    env_cmd = os.environ.get(ENV_CHECKER_CMD)
    if env_cmd:
        timeout = checker.timeout_s if checker else 60.0
        try:
            checker = ExternalCheckerSpec(env_cmd, timeout)
        except ValueError as exc:
            raise ConfigError(f"{ENV_CHECKER_CMD}: {exc}")

    index = (_build(IndexSettings, raw.get("index", {}), "index")
             if "index" in raw else IndexSettings())
    endpoint = os.environ.get(ENV_EMBED_ENDPOINT)
    if endpoint:
        index = replace(index, endpoint=endpoint)

    jobs = raw.get("jobs", os.cpu_count() or 1)
    if not isinstance(jobs, int) or jobs < 1:
        raise ConfigError(f"jobs must be a positive integer, got {jobs!r}")

    return Config(geometry=geometry, reserialize=reserialize, checker=checker,
                  index=index, jobs=jobs)
