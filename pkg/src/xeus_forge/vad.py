"""Energy-based voice activity detection and utterance extraction."""

from __future__ import annotations

import json
import re
from dataclasses import dataclass
from typing import Iterable, List, Sequence

import numpy as np

from xeus_forge.audio import PathType, Waveform, frame_energies

NOISE_FLOOR_PERCENTILE = 10.0
NOISE_FLOOR_MIN = 1e-10
MAX_DURATION_S = 40.0

_LANG = re.compile(r"^[a-z]{3}$")


@dataclass(frozen=True)
class Segment:
    start: int
    end: int  # exclusive

    def __post_init__(self) -> None:
        if not 0 <= self.start < self.end:
            raise ValueError(f"invalid segment [{self.start}, {self.end})")

    def __len__(self) -> int:
        return self.end - self.start


@dataclass(frozen=True, eq=False)
class Utterance:
    id: str
    waveform: Waveform
    language: str = "und"

    def __post_init__(self) -> None:
        if not self.id:
            raise ValueError("utterance id must be non-empty")
        if self.language != "und" and not _LANG.match(self.language):
            raise ValueError(f"language must be ISO3 or 'und', got {self.language!r}")

    def __len__(self) -> int:
        return len(self.waveform)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Utterance):
            return NotImplemented
        return (self.id, self.language) == (other.id, other.language) and self.waveform == other.waveform

    @property
    def duration_s(self) -> float:
        return self.waveform.duration_s

    @property
    def sample_rate(self) -> int:
        return self.waveform.sample_rate

    def replace_samples(self, samples: np.ndarray) -> "Utterance":
        return Utterance(self.id, self.waveform.with_samples(samples), self.language)


@dataclass(frozen=True)
class VadConfig:
    frame_ms: float = 30.0
    threshold_factor: float = 3.0
    min_speech_ms: float = 200.0
    min_gap_ms: float = 300.0
    pad_ms: float = 100.0

    def __post_init__(self) -> None:
        for name in ("frame_ms", "threshold_factor", "min_speech_ms", "min_gap_ms", "pad_ms"):
            if getattr(self, name) <= 0:
                raise ValueError(f"VadConfig.{name} must be positive")


def _runs(mask: np.ndarray) -> List[List[int]]:
    """[start, end) index pairs of the True runs in a boolean array."""
    edges = np.diff(np.concatenate([[0], mask.astype(np.int8), [0]]))
    starts = np.flatnonzero(edges == 1)
    ends = np.flatnonzero(edges == -1)
    return [[int(s), int(e)] for s, e in zip(starts, ends)]


def vad(w: Waveform, cfg: VadConfig = VadConfig()) -> List[Segment]:
    """Detect speech spans with an adaptive energy threshold.

    A frame counts as speech when its energy exceeds ``threshold_factor``
    times the noise floor, taken as the 10th percentile of all frame
    energies. Short runs are dropped, short gaps bridged, and the surviving
    spans padded and clamped to the signal.
    """
    n = len(w)
    if n == 0:
        return []
    frame = max(1, int(round(cfg.frame_ms * w.sample_rate / 1000.0)))
    energies = frame_energies(w, frame, frame)
    floor = max(float(np.percentile(energies, NOISE_FLOOR_PERCENTILE)), NOISE_FLOOR_MIN)
    speech = energies > cfg.threshold_factor * floor

    min_speech = cfg.min_speech_ms / cfg.frame_ms
    min_gap = cfg.min_gap_ms / cfg.frame_ms
    runs = [r for r in _runs(speech) if r[1] - r[0] >= min_speech]
    merged: List[List[int]] = []
    for run in runs:
        if merged and run[0] - merged[-1][1] < min_gap:
            merged[-1][1] = run[1]
        else:
            merged.append(run)

    pad = int(round(cfg.pad_ms * w.sample_rate / 1000.0))
    spans: List[List[int]] = []
    for start_f, end_f in merged:
        start = max(0, start_f * frame - pad)
        end = min(n, end_f * frame + pad)
        if spans and start <= spans[-1][1]:
            spans[-1][1] = max(spans[-1][1], end)
        else:
            spans.append([start, end])
    return [Segment(s, e) for s, e in spans]


def extract_utterances(
    w: Waveform, segs: Sequence[Segment], id_prefix: str, language: str = "und"
) -> List[Utterance]:
    """Slice one utterance per segment; ids are ``id_prefix`` plus a 4-digit ordinal."""
    out = []
    for i, seg in enumerate(segs):
        if seg.end > len(w):
            raise IndexError(f"segment [{seg.start}, {seg.end}) exceeds waveform length {len(w)}")
        samples = w.samples[seg.start:seg.end]
        out.append(Utterance(f"{id_prefix}{i:04d}", Waveform(samples, w.sample_rate), language))
    return out


def filter_max_duration(utts: Iterable[Utterance], max_s: float = MAX_DURATION_S) -> List[Utterance]:
    return [u for u in utts if u.duration_s <= max_s]


def segments_to_jsonl(
    segs: Sequence[Segment], sample_rate: int, id_prefix: str, path: PathType
) -> None:
    """Export segments as JSON Lines objects ``{id, start_s, end_s}``."""
    with open(path, "w", encoding="utf-8") as fh:
        for i, seg in enumerate(segs):
            row = {
                "id": f"{id_prefix}{i:04d}",
                "start_s": seg.start / sample_rate,
                "end_s": seg.end / sample_rate,
            }
            fh.write(json.dumps(row) + "\n")
