"""Reverberant-speech simulation with delay realignment and energy rescaling.

Each selected utterance is convolved with a room impulse response, shifted
back by the RIR's direct-path delay so it stays frame-aligned with the clean
pseudo-labels, cropped to the original length and rescaled to the original
energy.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from xeus_forge.audio import PathType, Waveform, energy, read_wav, resample
from xeus_forge.rng import stream
from xeus_forge.vad import Utterance


@dataclass(frozen=True, eq=False)
class Rir:
    waveform: Waveform
    id: str

    def __post_init__(self) -> None:
        if len(self.waveform) == 0:
            raise ValueError(f"RIR {self.id!r} is empty")
        if not np.any(self.waveform.samples):
            raise ValueError(f"RIR {self.id!r} is all zeros")


@dataclass(frozen=True)
class ReverbConfig:
    p_r: float = 0.3

    def __post_init__(self) -> None:
        if not 0.0 <= self.p_r <= 1.0:
            raise ValueError(f"p_r must be in [0, 1], got {self.p_r}")


def estimate_delay(rir: Rir) -> int:
    """Index of the first sample with the largest absolute amplitude."""
    mag = np.abs(rir.waveform.samples)
    if not np.any(mag):
        raise ValueError(f"RIR {rir.id!r} is all zeros")
    return int(np.argmax(mag))


def _fft_size(n: int) -> int:
    return 1 << max(0, (n - 1).bit_length())


def convolve_full(u: Waveform, rir: Rir) -> Waveform:
    """Full linear convolution via zero-padded real FFTs (float64 internally)."""
    h = rir.waveform
    if u.sample_rate != h.sample_rate:
        raise ValueError(f"sample-rate mismatch: signal {u.sample_rate} Hz, RIR {h.sample_rate} Hz")
    n_out = len(u) + len(h) - 1
    if len(u) == 0:
        return Waveform(np.zeros(0, np.float32), u.sample_rate)
    size = _fft_size(n_out)
    spec = np.fft.rfft(u.samples.astype(np.float64), size) * np.fft.rfft(h.samples.astype(np.float64), size)
    return Waveform(np.fft.irfft(spec, size)[:n_out], u.sample_rate)


def realign(r: Waveform, dt: int, target_len: int) -> Waveform:
    """Drop the first ``dt`` samples, then crop or zero-pad to ``target_len``."""
    if not 0 <= dt < len(r):
        raise IndexError(f"delay {dt} out of range for signal of length {len(r)}")
    if target_len < 0:
        raise ValueError("target_len must be non-negative")
    tail = r.samples[dt:dt + target_len]
    if len(tail) < target_len:
        tail = np.concatenate([tail, np.zeros(target_len - len(tail), np.float32)])
    return r.with_samples(tail)


def rescale_energy(r: Waveform, reference: Waveform) -> Waveform:
    """Scale ``r`` so that its energy equals that of ``reference``."""
    e_r, e_ref = energy(r), energy(reference)
    if e_r == 0.0:
        if e_ref == 0.0:
            return r
        raise ValueError("cannot rescale a zero-energy signal to a non-zero reference")
    gain = np.sqrt(e_ref / e_r)
    return r.with_samples(r.samples.astype(np.float64) * gain)


def apply_reverb(u: Utterance, rir: Rir) -> Utterance:
    dt = estimate_delay(rir)
    r = convolve_full(u.waveform, rir)
    r = realign(r, dt, len(u))
    r = rescale_energy(r, u.waveform)
    return Utterance(u.id, r, u.language)


def plan_reverb(
    batch: Sequence[Utterance], rirs: Sequence[Rir], cfg: ReverbConfig, seed: int
) -> List[Optional[Rir]]:
    """Per-utterance RIR choice (``None`` = untouched), drawn from the (seed, id) stream."""
    pool = sorted(rirs, key=lambda r: r.id)
    if cfg.p_r > 0 and not pool:
        raise ValueError("reverberation requested (p_r > 0) but the RIR set is empty")
    out: List[Optional[Rir]] = []
    for u in batch:
        rng = stream(seed, u.id, "reverb")
        if rng.random() < cfg.p_r:
            out.append(pool[int(rng.integers(len(pool)))])
        else:
            out.append(None)
    return out


def reverb_batch_with_provenance(
    batch: Sequence[Utterance], rirs: Sequence[Rir], cfg: ReverbConfig, seed: int
) -> List[Tuple[Utterance, Optional[str]]]:
    plan = plan_reverb(batch, rirs, cfg, seed)
    return [(u if rir is None else apply_reverb(u, rir), None if rir is None else rir.id)
            for u, rir in zip(batch, plan)]


def apply_reverb_batch(
    batch: Sequence[Utterance], rirs: Sequence[Rir], cfg: ReverbConfig, seed: int
) -> List[Utterance]:
    """Reverberate each utterance independently with probability ``cfg.p_r``."""
    return [u for u, _ in reverb_batch_with_provenance(batch, rirs, cfg, seed)]


def load_rirs(directory: PathType, sample_rate: int = 16000) -> List[Rir]:
    """Load every ``*.wav`` under ``directory``; ids are paths relative to it, without suffix."""
    root = Path(directory)
    rirs = []
    for path in sorted(root.rglob("*.wav")):
        w = read_wav(path)
        if w.sample_rate != sample_rate:
            w = resample(w, sample_rate)
        rirs.append(Rir(w, path.relative_to(root).with_suffix("").as_posix()))
    return rirs


def synthetic_rirs(
    count: int = 5, sample_rate: int = 16000, seed: int = 0
) -> Dict[str, Rir]:
    """Exponentially decaying noise tails behind a delayed direct-path spike.

    RT60 values span 0.2-0.8 s; the direct path sits 1-25 ms in.
    """
    rng = np.random.default_rng(seed)
    out = {}
    for i in range(count):
        rt60 = 0.2 + 0.6 * i / max(1, count - 1)
        length = int(rt60 * sample_rate)
        delay = int(rng.integers(sample_rate // 1000, sample_rate // 40))
        t = np.arange(length) / sample_rate
        tail = np.clip(rng.standard_normal(length) * 0.3, -0.9, 0.9) * np.exp(-6.9 * t / rt60)
        h = np.zeros(delay + length)
        h[delay:] = tail
        h[delay] = 1.0
        rid = f"synthetic_rir_{i:02d}"
        out[rid] = Rir(Waveform(h, sample_rate), rid)
    return out
