"""Run configuration: one JSON document covering every stage's settings.

Unknown keys are rejected everywhere (typo safety), every key has a
default, and the fully resolved settings are echoed into each run's
manifest so results stay reproducible from the manifest alone.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

from .cmaes import CmaConfig
from .evolve import SearchConfig
from .objective import DEFAULT_DECAY_RATES
from .prime import PrimeConfig


class ConfigError(Exception):
    """Malformed or unknown configuration content."""


@dataclass(frozen=True)
class MeshSettings:
    nx: int = 13
    ny: int = 14
    nz: int = 10


@dataclass(frozen=True)
class ForwardSettings:
    kind: str = "synthetic"              # "synthetic" | "exec"
    command: str | None = None           # for kind="exec"
    exchange_dir: str | None = None
    timeout: float = 60.0
    station_stride: int = 2
    decay_rates: tuple[float, ...] = DEFAULT_DECAY_RATES


@dataclass(frozen=True)
class RunSettings:
    seed: int = 0
    rounds: int = 5
    split_count: int = 5
    budget: int | None = None
    initial_background: float = 0.5
    stage_iteration_caps: tuple[int, ...] | None = None
    cma: CmaConfig = field(default_factory=CmaConfig)
    prime: PrimeConfig = field(default_factory=PrimeConfig)
    mesh: MeshSettings = field(default_factory=MeshSettings)
    forward: ForwardSettings = field(default_factory=ForwardSettings)

    def search_config(self) -> SearchConfig:
        return SearchConfig(
            num_rounds=self.rounds,
            split_count=self.split_count,
            cma=self.cma,
            prime=self.prime,
            stage_iteration_caps=self.stage_iteration_caps,
            seed=self.seed,
            initial_background=self.initial_background,
            max_evaluations=self.budget,
        )


def _build(cls, doc: dict, where: str):
    known = {f.name for f in fields(cls)}
    unknown = set(doc) - known
    if unknown:
        raise ConfigError(f"unknown {where} keys: {sorted(unknown)}")
    kwargs = {}
    for f in fields(cls):
        if f.name not in doc:
            continue
        value = doc[f.name]
        if f.name in ("stage_iteration_caps",) and value is not None:
            value = tuple(int(v) for v in (value if isinstance(value, list) else [value]))
        elif f.name == "decay_rates":
            value = tuple(float(v) for v in value)
        kwargs[f.name] = value
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad {where} settings: {exc}") from exc


def settings_from_dict(doc: dict) -> RunSettings:
    if not isinstance(doc, dict):
        raise ConfigError("config root must be a JSON object")
    known = {f.name for f in fields(RunSettings)}
    unknown = set(doc) - known
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    plain = {k: v for k, v in doc.items() if k not in ("cma", "prime", "mesh", "forward")}
    settings = _build(RunSettings, plain, "config")
    replacements = {}
    for key, cls in (("cma", CmaConfig), ("prime", PrimeConfig),
                     ("mesh", MeshSettings), ("forward", ForwardSettings)):
        if key in doc:
            if not isinstance(doc[key], dict):
                raise ConfigError(f"config section {key!r} must be an object")
            replacements[key] = _build(cls, doc[key], key)
    if replacements:
        from dataclasses import replace
        settings = replace(settings, **replacements)
    return settings


def load_settings(path) -> RunSettings:
    try:
        doc = json.loads(Path(path).read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
    return settings_from_dict(doc)


def settings_to_dict(settings: RunSettings) -> dict:
    doc = asdict(settings)
    if doc["stage_iteration_caps"] is not None:
        doc["stage_iteration_caps"] = list(doc["stage_iteration_caps"])
    doc["forward"]["decay_rates"] = list(doc["forward"]["decay_rates"])
    return doc
