"""Pipeline configuration: one JSON document, unknown keys rejected.

Relative paths resolve against the directory holding the config file.
``rir_dir`` / ``noise_dir`` may be ``null`` to use the built-in synthetic sets.

Top-level keys::

    seed, sample_rate, source_name, max_duration_s, shard_size, jobs,
    paths   {corpus_root, rir_dir, noise_dir, output_dir}
    vad     {frame_ms, threshold_factor, min_speech_ms, min_gap_ms, pad_ms}
    noise   {p, snr_db_range, max_overlap_fraction}
    reverb  {p_r}
    mask    {span_len, warmup_steps, p_mask_warm, p_mask_main, start_step}
    kmeans  {k, max_iters, feature_dim, window_ms, hop_ms, label_hours}
    batch   {budget_s, workers}
    bench   {num_batches, workers, accums, source, mu, sigma}
    stats   {exclude_und, top_n, min_hours}
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, fields, is_dataclass, replace
from pathlib import Path
from typing import Any, Dict, Mapping, Optional, Tuple

from xeus_forge.audio import PathType
from xeus_forge.noise import NoiseConfig
from xeus_forge.reverb import ReverbConfig
from xeus_forge.vad import VadConfig


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class PathsConfig:
    corpus_root: Optional[Path] = None
    rir_dir: Optional[Path] = None
    noise_dir: Optional[Path] = None
    output_dir: Path = Path("out")


@dataclass(frozen=True)
class MaskConfig:
    span_len: int = 10
    warmup_steps: int = 3000
    p_mask_warm: float = 0.65
    p_mask_main: float = 0.8
    start_step: int = 0


@dataclass(frozen=True)
class KMeansConfig:
    k: int = 64
    max_iters: int = 100
    feature_dim: int = 80
    window_ms: float = 25.0
    hop_ms: float = 20.0
    label_hours: Optional[Dict[str, float]] = None


@dataclass(frozen=True)
class BatchConfig:
    budget_s: float = 100.0
    workers: int = 8


@dataclass(frozen=True)
class BenchConfig:
    num_batches: int = 1000
    workers: int = 8
    accums: Tuple[int, ...] = (1, 4)
    source: str = "synthetic"
    mu: float = math.log(8.0)
    sigma: float = 0.8


@dataclass(frozen=True)
class StatsConfig:
    exclude_und: bool = False
    top_n: int = 50
    min_hours: float = 1.0


@dataclass(frozen=True)
class PipelineConfig:
    seed: int = 0
    sample_rate: int = 16000
    source_name: str = "local"
    max_duration_s: float = 40.0
    shard_size: int = 256
    jobs: int = 1
    paths: PathsConfig = field(default_factory=PathsConfig)
    vad: VadConfig = field(default_factory=VadConfig)
    noise: NoiseConfig = field(default_factory=NoiseConfig)
    reverb: ReverbConfig = field(default_factory=ReverbConfig)
    mask: MaskConfig = field(default_factory=MaskConfig)
    kmeans: KMeansConfig = field(default_factory=KMeansConfig)
    batch: BatchConfig = field(default_factory=BatchConfig)
    bench: BenchConfig = field(default_factory=BenchConfig)
    stats: StatsConfig = field(default_factory=StatsConfig)

    def __post_init__(self) -> None:
        if self.seed < 0:
            raise ConfigError("seed must be non-negative")
        if self.sample_rate <= 0 or self.shard_size < 1 or self.jobs < 1:
            raise ConfigError("sample_rate, shard_size and jobs must be positive")
        if self.bench.source not in ("synthetic", "manifest"):
            raise ConfigError(f"bench.source must be 'synthetic' or 'manifest', got {self.bench.source!r}")

    @property
    def output_dir(self) -> Path:
        return self.paths.output_dir


def _build(cls, data: Any, where: str, base: Path):
    if not isinstance(data, Mapping):
        raise ConfigError(f"{where}: expected an object")
    known = {f.name: f for f in fields(cls)}
    unknown = sorted(set(data) - set(known))
    if unknown:
        raise ConfigError(f"{where}: unknown key(s) {', '.join(unknown)}")
    kwargs = {}
    defaults = cls()
    for name, value in data.items():
        current = getattr(defaults, name)
        key = f"{where}.{name}" if where else name
        if is_dataclass(current):
            kwargs[name] = _build(type(current), value, key, base)
        elif cls is PathsConfig:
            kwargs[name] = None if value is None else (base / Path(value))
        elif isinstance(current, tuple) and isinstance(value, list):
            kwargs[name] = tuple(value)
        else:
            kwargs[name] = value
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{where or 'config'}: {exc}") from exc


def config_from_dict(data: Mapping[str, Any], base_dir: PathType = ".") -> PipelineConfig:
    return _build(PipelineConfig, data, "", Path(base_dir))


def load_config(path: PathType) -> PipelineConfig:
    path = Path(path)
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON at line {exc.lineno}: {exc.msg}") from exc
    return config_from_dict(data, path.parent)


def with_overrides(
    cfg: PipelineConfig,
    seed: Optional[int] = None,
    jobs: Optional[int] = None,
    p_noise: Optional[float] = None,
    snr_min: Optional[float] = None,
    snr_max: Optional[float] = None,
) -> PipelineConfig:
    changes: Dict[str, Any] = {}
    if seed is not None:
        changes["seed"] = seed
    if jobs is not None:
        changes["jobs"] = jobs
    if p_noise is not None or snr_min is not None or snr_max is not None:
        lo, hi = cfg.noise.snr_db_range
        try:
            changes["noise"] = replace(
                cfg.noise,
                p=cfg.noise.p if p_noise is None else p_noise,
                snr_db_range=(lo if snr_min is None else snr_min, hi if snr_max is None else snr_max),
            )
        except ValueError as exc:
            raise ConfigError(f"noise override: {exc}") from exc
    try:
        return replace(cfg, **changes) if changes else cfg
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def require_dir(path: Optional[Path], key: str) -> Path:
    if path is None:
        raise ConfigError(f"paths.{key} is required for this command")
    if not path.is_dir():
        raise ConfigError(f"paths.{key}: directory {path} does not exist")
    return path
