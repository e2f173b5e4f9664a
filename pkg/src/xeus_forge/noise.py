"""Additive-noise and interfering-utterance corruption.

With probability ``p`` an utterance is corrupted, split evenly between
additive noise and a chunk of another utterance from the same batch. Targets
stay those of the clean audio, so only the waveform changes.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from xeus_forge.audio import PathType, Waveform, energy, read_wav, resample
from xeus_forge.rng import stream
from xeus_forge.vad import Utterance


class CorruptionChoice(str, enum.Enum):
    NONE = "none"
    ADDITIVE_NOISE = "additive_noise"
    INTERFERING_UTTERANCE = "interfering_utterance"


@dataclass(frozen=True)
class NoiseConfig:
    p: float = 0.2
    snr_db_range: Tuple[float, float] = (-5.0, 20.0)
    max_overlap_fraction: float = 0.5

    def __post_init__(self) -> None:
        if not 0.0 <= self.p <= 1.0:
            raise ValueError(f"p must be in [0, 1], got {self.p}")
        lo, hi = self.snr_db_range
        if lo > hi:
            raise ValueError(f"snr_db_range min {lo} exceeds max {hi}")
        object.__setattr__(self, "snr_db_range", (float(lo), float(hi)))
        if not 0.0 < self.max_overlap_fraction <= 1.0:
            raise ValueError("max_overlap_fraction must be in (0, 1]")


def sample_corruption(cfg: NoiseConfig, rng: np.random.Generator) -> CorruptionChoice:
    v = rng.random()
    if v >= cfg.p:
        return CorruptionChoice.NONE
    if v < cfg.p / 2:
        return CorruptionChoice.ADDITIVE_NOISE
    return CorruptionChoice.INTERFERING_UTTERANCE


def _loop_crop(x: np.ndarray, offset: int, length: int) -> np.ndarray:
    """``length`` samples of ``x`` starting at ``offset``, wrapping around as needed."""
    return np.resize(np.roll(x, -offset), length)


def mix_noise(u: Utterance, noise: Waveform, snr_db: float, rng: np.random.Generator) -> Utterance:
    """Add noise (looped or cropped from a random offset) at the given SNR."""
    if noise.sample_rate != u.sample_rate:
        raise ValueError(f"sample-rate mismatch: utterance {u.sample_rate} Hz, noise {noise.sample_rate} Hz")
    if len(noise) == 0 or energy(noise) == 0.0:
        raise ValueError("noise is silent")
    e_u = energy(u.waveform)
    if e_u == 0.0:
        raise ValueError(f"utterance {u.id!r} is silent; SNR is undefined")
    offset = int(rng.integers(len(noise)))
    chunk = _loop_crop(noise.samples.astype(np.float64), offset, len(u))
    e_n = energy(chunk)
    if e_n == 0.0:
        raise ValueError("cropped noise segment is silent")
    gain = np.sqrt(e_u / (e_n * 10.0 ** (snr_db / 10.0)))
    return u.replace_samples(u.waveform.samples.astype(np.float64) + gain * chunk)


@dataclass(frozen=True)
class OverlapPlan:
    """Where and how loud an interfering chunk is added."""

    position: int  # first sample of the overlap inside the target utterance
    length: int
    source_offset: int  # first sample of the chunk inside the interferer
    snr_db: float


def plan_overlap(
    target_len: int, interferer_len: int, cfg: NoiseConfig, rng: np.random.Generator
) -> Optional[OverlapPlan]:
    max_len = int(np.floor(cfg.max_overlap_fraction * target_len))
    if max_len < 1 or interferer_len == 0:
        return None
    length = int(rng.integers(1, max_len + 1))
    position = int(rng.integers(0, target_len - length + 1))
    source_offset = int(rng.integers(0, max(interferer_len - length, 0) + 1))
    snr_db = float(rng.uniform(*cfg.snr_db_range))
    return OverlapPlan(position, length, source_offset, snr_db)


def apply_overlap(u: Utterance, interferer: Utterance, plan: Optional[OverlapPlan]) -> Utterance:
    """Add the planned interferer chunk, scaled to the SNR over the overlapped span.

    If the target is silent across the span, the reference energy falls back
    to the utterance's mean power times the span length.
    """
    if plan is None:
        return u
    src = interferer.waveform.samples.astype(np.float64)
    if len(src) >= plan.source_offset + plan.length:
        chunk = src[plan.source_offset:plan.source_offset + plan.length]
    else:
        chunk = _loop_crop(src, plan.source_offset, plan.length)
    e_chunk = energy(chunk)
    if e_chunk == 0.0:
        raise ValueError(f"interferer {interferer.id!r} is silent over the selected chunk")
    out = u.waveform.samples.astype(np.float64)
    region = out[plan.position:plan.position + plan.length]
    e_ref = energy(region)
    if e_ref == 0.0:
        e_ref = energy(u.waveform) * plan.length / max(len(u), 1)
    gain = np.sqrt(e_ref / (e_chunk * 10.0 ** (plan.snr_db / 10.0)))
    out[plan.position:plan.position + plan.length] += gain * chunk
    return u.replace_samples(out)


def mix_utterance(
    u: Utterance, interferer: Utterance, cfg: NoiseConfig, rng: np.random.Generator
) -> Utterance:
    if interferer.sample_rate != u.sample_rate:
        raise ValueError("sample-rate mismatch between utterance and interferer")
    if energy(interferer.waveform) == 0.0:
        raise ValueError(f"interferer {interferer.id!r} is silent")
    return apply_overlap(u, interferer, plan_overlap(len(u), len(interferer), cfg, rng))


@dataclass
class Corruption:
    """Provenance of one corruption decision."""

    choice: CorruptionChoice = CorruptionChoice.NONE
    noise_id: Optional[str] = None
    interferer_id: Optional[str] = None
    snr_db: Optional[float] = None
    extra: Dict[str, Any] = field(default_factory=dict)

    def as_dict(self) -> Dict[str, Any]:
        d: Dict[str, Any] = {"corruption": self.choice.value}
        if self.noise_id is not None:
            d["noise_id"] = self.noise_id
        if self.interferer_id is not None:
            d["interferer_id"] = self.interferer_id
        if self.snr_db is not None:
            d["snr_db"] = self.snr_db
        d.update(self.extra)
        return d


def corrupt_batch_with_provenance(
    batch: Sequence[Utterance], noises: Mapping[str, Waveform], cfg: NoiseConfig, seed: int
) -> List[Tuple[Utterance, Corruption]]:
    if cfg.p > 0 and not noises:
        raise ValueError("noise corruption requested (p > 0) but the noise set is empty")
    noise_ids = sorted(noises)
    out: List[Tuple[Utterance, Corruption]] = []
    for i, u in enumerate(batch):
        rng = stream(seed, u.id, "noise")
        choice = sample_corruption(cfg, rng)
        if choice is not CorruptionChoice.NONE and energy(u.waveform) == 0.0:
            out.append((u, Corruption(extra={"skipped": "silent utterance"})))
            continue
        if choice is CorruptionChoice.INTERFERING_UTTERANCE and len(batch) < 2:
            choice = CorruptionChoice.ADDITIVE_NOISE
        if choice is CorruptionChoice.ADDITIVE_NOISE:
            nid = noise_ids[int(rng.integers(len(noise_ids)))]
            snr = float(rng.uniform(*cfg.snr_db_range))
            out.append((mix_noise(u, noises[nid], snr, rng), Corruption(choice, noise_id=nid, snr_db=snr)))
        elif choice is CorruptionChoice.INTERFERING_UTTERANCE:
            j = int(rng.integers(len(batch) - 1))
            j += j >= i
            other = batch[j]
            if energy(other.waveform) == 0.0:
                out.append((u, Corruption(extra={"skipped": "silent interferer"})))
                continue
            plan = plan_overlap(len(u), len(other), cfg, rng)
            mixed = apply_overlap(u, other, plan)
            prov = Corruption(choice, interferer_id=other.id, snr_db=None if plan is None else plan.snr_db)
            out.append((mixed, prov))
        else:
            out.append((u, Corruption()))
    return out


def corrupt_batch(
    batch: Sequence[Utterance], noises: Mapping[str, Waveform], cfg: NoiseConfig, seed: int
) -> List[Utterance]:
    """Apply per-utterance noise/interference corruption; run this before reverberation."""
    return [u for u, _ in corrupt_batch_with_provenance(batch, noises, cfg, seed)]


def load_noises(directory: PathType, sample_rate: int = 16000) -> Dict[str, Waveform]:
    root = Path(directory)
    out = {}
    for path in sorted(root.rglob("*.wav")):
        w = read_wav(path)
        if w.sample_rate != sample_rate:
            w = resample(w, sample_rate)
        out[path.relative_to(root).with_suffix("").as_posix()] = w
    return out


def synthetic_noises(sample_rate: int = 16000, seconds: float = 5.0, seed: int = 0) -> Dict[str, Waveform]:
    """White noise plus a babble-like sum of amplitude-modulated harmonic voices."""
    rng = np.random.default_rng(seed)
    n = int(seconds * sample_rate)
    t = np.arange(n) / sample_rate
    white = rng.standard_normal(n) * 0.1
    babble = np.zeros(n)
    for _ in range(6):
        f0 = rng.uniform(90, 250)
        envelope = 0.5 * (1 + np.sin(2 * np.pi * rng.uniform(2, 6) * t + rng.uniform(0, 2 * np.pi)))
        for h in range(1, 6):
            babble += envelope * np.sin(2 * np.pi * f0 * h * t + rng.uniform(0, 2 * np.pi)) / h
    babble *= 0.05
    return {"babble": Waveform(babble, sample_rate), "white": Waveform(white, sample_rate)}
