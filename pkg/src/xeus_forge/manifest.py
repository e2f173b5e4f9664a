"""Corpus manifests (JSON Lines), per-language statistics and the SUPERB_s aggregate."""

from __future__ import annotations

import csv
import json
import math
import re
from dataclasses import asdict, dataclass, field
from typing import Any, Dict, List, NamedTuple, Tuple

from xeus_forge.audio import PathType

_LANG = re.compile(r"^[a-z]{3}$")
FIELDS = ("id", "path", "duration_s", "language", "source", "domain", "license")


class ManifestError(ValueError):
    pass


@dataclass(frozen=True)
class ManifestEntry:
    id: str
    path: str
    duration_s: float
    language: str = "und"
    source: str = "local"
    domain: str = "unknown"
    license: str = "unknown"

    def __post_init__(self) -> None:
        if not self.id:
            raise ManifestError("entry id must be non-empty")
        if not (isinstance(self.duration_s, (int, float)) and self.duration_s > 0 and math.isfinite(self.duration_s)):
            raise ManifestError(f"{self.id}: duration_s must be a positive number, got {self.duration_s!r}")
        if self.language != "und" and not _LANG.match(self.language):
            raise ManifestError(f"{self.id}: language must match [a-z]{{3}} or be 'und', got {self.language!r}")

    def to_json(self) -> str:
        return json.dumps(asdict(self), ensure_ascii=False)


@dataclass
class Manifest:
    entries: List[ManifestEntry] = field(default_factory=list)
    metadata: Dict[str, Any] = field(default_factory=dict)

    def __post_init__(self) -> None:
        seen = set()
        for e in self.entries:
            if e.id in seen:
                raise ManifestError(f"duplicate utterance id {e.id!r}")
            seen.add(e.id)

    def __len__(self) -> int:
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)

    def by_id(self) -> Dict[str, ManifestEntry]:
        return {e.id: e for e in self.entries}


def load_manifest(path: PathType) -> Manifest:
    """Parse a JSON Lines manifest; errors name the offending line."""
    entries = []
    seen: Dict[str, int] = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ManifestError(f"{path}:{lineno}: invalid JSON ({exc.msg})") from exc
            if not isinstance(obj, dict):
                raise ManifestError(f"{path}:{lineno}: expected a JSON object")
            unknown = set(obj) - set(FIELDS)
            missing = {"id", "path", "duration_s"} - set(obj)
            if unknown or missing:
                raise ManifestError(f"{path}:{lineno}: unknown fields {sorted(unknown)}, missing {sorted(missing)}")
            try:
                entry = ManifestEntry(**obj)
            except (ManifestError, TypeError) as exc:
                raise ManifestError(f"{path}:{lineno}: {exc}") from exc
            if entry.id in seen:
                raise ManifestError(f"{path}:{lineno}: duplicate utterance id {entry.id!r} (first on line {seen[entry.id]})")
            seen[entry.id] = lineno
            entries.append(entry)
    return Manifest(entries)


def write_manifest(m: Manifest, path: PathType) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for e in m.entries:
            fh.write(e.to_json() + "\n")


@dataclass(frozen=True)
class LanguageStats:
    hours: Tuple[Tuple[str, float], ...]  # (language, hours), descending

    @property
    def total_hours(self) -> float:
        return math.fsum(h for _, h in self.hours)

    def top_n_share(self, n: int) -> float:
        total = self.total_hours
        if total == 0:
            return 0.0
        return math.fsum(h for _, h in self.hours[:n]) / total

    def count_at_least(self, hours: float) -> int:
        return sum(1 for _, h in self.hours if h >= hours)


def language_stats(m: Manifest, exclude_und: bool = False) -> LanguageStats:
    """Per-language hours, sorted by hours descending then language code.

    Sums use ``math.fsum`` so the result does not depend on entry order.
    """
    durations: Dict[str, List[float]] = {}
    for e in m.entries:
        if exclude_und and e.language == "und":
            continue
        durations.setdefault(e.language, []).append(e.duration_s)
    hours = [(lang, math.fsum(d) / 3600.0) for lang, d in durations.items()]
    hours.sort(key=lambda kv: (-kv[1], kv[0]))
    return LanguageStats(tuple(hours))


def histogram_export(m: Manifest, path: PathType, exclude_und: bool = False) -> None:
    """CSV of ``language,hours,log10_hours`` sorted by hours descending."""
    stats = language_stats(m, exclude_und)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["language", "hours", "log10_hours"])
        for lang, h in stats.hours:
            writer.writerow([lang, f"{h:.6f}", f"{math.log10(h):.6f}"])


class MetricScore(NamedTuple):
    model: float
    sota: float
    filterbank: float


@dataclass
class TaskScores:
    """``tasks[task][metric]`` holds the model, SOTA and filterbank scores."""

    tasks: Dict[str, Dict[str, MetricScore]]

    def __post_init__(self) -> None:
        for task, metrics in self.tasks.items():
            if not metrics:
                raise ValueError(f"task {task!r} has no metrics")
            for metric, s in metrics.items():
                if s.sota == s.filterbank:
                    raise ZeroDivisionError(f"{task}/{metric}: SOTA equals filterbank, normalisation undefined")


def superb_score(scores: TaskScores) -> float:
    """Mean over tasks of the mean normalised improvement over filterbank, times 1000.

    Each metric maps filterbank to 0 and SOTA to 1; error-rate metrics need no
    special casing because the denominator's sign flips with the direction.
    """
    if not scores.tasks:
        raise ValueError("no tasks to score")
    per_task = []
    for task, metrics in scores.tasks.items():
        terms = []
        for metric, s in metrics.items():
            denom = s.sota - s.filterbank
            if denom == 0:
                raise ZeroDivisionError(f"{task}/{metric}: SOTA equals filterbank")
            terms.append((s.model - s.filterbank) / denom)
        per_task.append(math.fsum(terms) / len(terms))
    return 1000.0 * math.fsum(per_task) / len(per_task)
