"""Declarative pipeline configuration and per-directory run manifests."""

from __future__ import annotations

import hashlib
import json
import logging
from dataclasses import asdict, dataclass, field, fields, is_dataclass, replace
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Mapping

import yaml

from . import __version__
from .corpus import FilterConfig
from .encoder import TrainConfig
from .errors import InvalidConfigError
from .qdetect import DistillConfig

logger = logging.getLogger(__name__)

MANIFEST_FILE = "manifest.json"
MODEL_NAMES = ("qdetect", "bt-stage1", "bt-stage2")


@dataclass
class PathsConfig:
    output_dir: str = "out"
    cache_dir: str = "cache/harvest"
    teacher_cache_dir: str = "teacher_cache"


@dataclass
class DataConfig:
    """Input datasets; ``None`` means "not provided"."""

    qdetect_train: str | None = None
    qdetect_val: str | None = None
    qdetect_test: str | None = None
    dasqbt: str | None = None
    augmented: str | None = None
    human_annotations: str | None = None


@dataclass
class HarvestConfig:
    sources: list[str] = field(default_factory=list)
    video_ids: list[str] = field(default_factory=list)
    subject: str = "biology"
    max_videos: int = 50
    comment_cap: int = 1000
    concurrency: int = 4
    requests_per_second: float = 5.0


@dataclass
class BTConfig:
    k_irrelevant: int = 500
    train_fraction: float = 0.8
    val_fraction: float = 0.1
    augment_target: int = 0  # 0 disables generation
    teacher_model: str = "gpt-4o"
    teacher_mode: str = "record"


@dataclass
class AnalysisConfig:
    include_irrelevant: bool = False
    min_freq: int = 6
    top_n: int = 10
    aggregate: str = "mean"
    presence: bool = True


def _default_train() -> dict[str, TrainConfig]:
    return {name: TrainConfig() for name in MODEL_NAMES}


@dataclass
class PipelineConfig:
    paths: PathsConfig = field(default_factory=PathsConfig)
    data: DataConfig = field(default_factory=DataConfig)
    harvest: HarvestConfig = field(default_factory=HarvestConfig)
    filter: FilterConfig = field(default_factory=FilterConfig)
    distill: DistillConfig = field(default_factory=DistillConfig)
    train: dict[str, TrainConfig] = field(default_factory=_default_train)
    bt: BTConfig = field(default_factory=BTConfig)
    analysis: AnalysisConfig = field(default_factory=AnalysisConfig)
    detection_threshold: float = 0.5
    seed: int = 0

    def train_config(self, name: str) -> TrainConfig:
        """The training config for ``name`` with the pipeline seed applied."""
        if name not in MODEL_NAMES:
            raise InvalidConfigError(f"unknown model {name!r}")
        return replace(self.train.get(name, TrainConfig()), seed=self.seed)

    @property
    def output_dir(self) -> Path:
        return Path(self.paths.output_dir)

    def to_dict(self) -> dict:
        return asdict(self)

    def digest(self) -> str:
        canonical = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canonical.encode("utf-8")).hexdigest()

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "PipelineConfig":
        cfg = cls()
        for key, value in d.items():
            if key not in cls.__dataclass_fields__:
                raise InvalidConfigError(f"unknown config section {key!r}")
            current = getattr(cfg, key)
            if key == "train":
                merged = dict(current)
                for name, section in (value or {}).items():
                    if name not in MODEL_NAMES:
                        raise InvalidConfigError(f"unknown model {name!r} in train section")
                    merged[name] = _merge(merged[name], section, f"train.{name}")
                setattr(cfg, key, merged)
            elif is_dataclass(current):
                setattr(cfg, key, _merge(current, value or {}, key))
            else:
                setattr(cfg, key, type(current)(value))
        return cfg

    @classmethod
    def load(cls, path: str | Path | None) -> "PipelineConfig":
        if path is None:
            return cls()
        path = Path(path)
        if not path.exists():
            raise InvalidConfigError(f"config file {path} does not exist")
        raw = yaml.safe_load(path.read_text(encoding="utf-8")) or {}  # YAML is a superset of JSON
        if not isinstance(raw, dict):
            raise InvalidConfigError(f"{path}: top level must be a mapping")
        return cls.from_dict(raw)


def _merge(obj, overrides: Mapping[str, Any], where: str):
    if not isinstance(overrides, Mapping):
        raise InvalidConfigError(f"{where}: expected a mapping")
    names = {f.name for f in fields(obj)}
    unknown = set(overrides) - names
    if unknown:
        raise InvalidConfigError(f"{where}: unknown keys {sorted(unknown)}")
    try:
        return replace(obj, **overrides)
    except (TypeError, ValueError) as exc:
        raise InvalidConfigError(f"{where}: {exc}") from exc


def file_digest(path: str | Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def tree_digests(path: str | Path) -> dict[str, str]:
    """Digest of a file, or of every file below a directory (manifests excluded)."""
    path = Path(path)
    if path.is_file():
        return {str(path): file_digest(path)}
    if not path.is_dir():
        return {}
    return {
        str(p): file_digest(p)
        for p in sorted(path.rglob("*"))
        if p.is_file() and p.name != MANIFEST_FILE
    }


@dataclass
class RunManifest:
    command: str
    config_hash: str
    inputs: dict[str, str]
    outputs: dict[str, str] = field(default_factory=dict)
    tool_version: str = __version__
    started_at: str = ""
    finished_at: str = ""

    @classmethod
    def start(cls, command: str, cfg: PipelineConfig, inputs: list[str | Path]) -> "RunManifest":
        digests: dict[str, str] = {}
        for p in inputs:
            digests.update(tree_digests(p))
        return cls(command, cfg.digest(), digests, started_at=_now())

    def finish(self, output_dir: str | Path) -> Path:
        """Record output digests and write the directory's single manifest."""
        output_dir = Path(output_dir)
        output_dir.mkdir(parents=True, exist_ok=True)
        self.outputs = {
            str(Path(k).relative_to(output_dir)): v for k, v in tree_digests(output_dir).items()
        }
        self.finished_at = _now()
        path = output_dir / MANIFEST_FILE
        path.write_text(json.dumps(asdict(self), indent=2, sort_keys=True) + "\n", encoding="utf-8")
        return path

    @classmethod
    def read(cls, output_dir: str | Path) -> "RunManifest":
        return cls(**json.loads((Path(output_dir) / MANIFEST_FILE).read_text(encoding="utf-8")))


def _now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")
