"""Pipeline configuration: flat JSON file, CLI flags override file values,
file values override defaults."""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass

from .errors import ConfigError


@dataclass
class PipelineConfig:
    views: int = 10
    size: int = 512
    segmenter: str = "oracle"
    potts_scale: float = 30.0
    max_sweeps: int = 5
    biou_mode: str = "label-aware"
    k_boundary: int = 10
    fdi_map: str | None = None
    seed: int = 0
    jobs: int = 1
    up_axis: tuple = (0.0, 0.0, 1.0)

    def validate(self):
        if not 1 <= self.views <= 256:
            raise ConfigError("views must lie in 1..256")
        if not 16 <= self.size <= 4096:
            raise ConfigError("size must lie in 16..4096")
        if self.potts_scale < 0:
            raise ConfigError("potts_scale must be >= 0")
        if not 0 <= self.max_sweeps <= 100:
            raise ConfigError("max_sweeps must lie in 0..100")
        if self.biou_mode not in ("label-aware", "region-only"):
            raise ConfigError(f"unknown biou_mode {self.biou_mode!r}")
        if not 1 <= self.k_boundary <= 1000:
            raise ConfigError("k_boundary must lie in 1..1000")
        if self.jobs < 1:
            raise ConfigError("jobs must be >= 1")
        if len(tuple(self.up_axis)) != 3:
            raise ConfigError("up_axis must have 3 components")
        parse_segmenter(self.segmenter)
        return self


_FIELDS = {f.name for f in dataclasses.fields(PipelineConfig)}


def config_from_dict(doc):
    unknown = set(doc) - _FIELDS
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    cfg = PipelineConfig(**doc)
    if isinstance(cfg.up_axis, list):
        cfg.up_axis = tuple(cfg.up_axis)
    return cfg.validate()


def load_config(path):
    with open(path) as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON ({exc})") from None
    if not isinstance(doc, dict):
        raise ConfigError(f"{path}: config must be a JSON object")
    return config_from_dict(doc)


def merge_overrides(config, **overrides):
    """Apply non-None keyword overrides (CLI flags beat the file)."""
    cfg = dataclasses.replace(config)
    for key, value in overrides.items():
        if value is None:
            continue
        if key not in _FIELDS:
            raise ConfigError(f"unknown config key: {key}")
        setattr(cfg, key, value)
    return cfg.validate()


def parse_segmenter(spec):
    """'oracle' | 'file:<dir>' | 'noisy:<radius>,<flip_rate>,<seed>'."""
    if spec == "oracle":
        return ("oracle",)
    if spec.startswith("file:"):
        directory = spec[len("file:"):]
        if not directory:
            raise ConfigError("file segmenter needs a directory: file:<dir>")
        return ("file", directory)
    if spec.startswith("noisy:"):
        parts = spec[len("noisy:"):].split(",")
        if len(parts) != 3:
            raise ConfigError("noisy segmenter spec is noisy:<radius>,<rate>,<seed>")
        try:
            radius, rate, seed = int(parts[0]), float(parts[1]), int(parts[2])
        except ValueError:
            raise ConfigError(f"bad noisy segmenter spec {spec!r}") from None
        if radius < 0 or not 0.0 <= rate <= 1.0:
            raise ConfigError("noisy segmenter needs radius >= 0, rate in [0, 1]")
        return ("noisy", radius, rate, seed)
    raise ConfigError(f"unknown segmenter spec {spec!r}")


def load_fdi_table(path):
    """Optional FDI->class override table: JSON object {code: class}."""
    with open(path) as fh:
        doc = json.load(fh)
    table = {}
    for code, cls in doc.items():
        cls = int(cls)
        if not 0 <= cls <= 16:
            raise ConfigError(f"fdi_map class {cls} out of 0..16")
        table[int(code)] = cls
    if 0 not in table:
        table[0] = 0
    return table
