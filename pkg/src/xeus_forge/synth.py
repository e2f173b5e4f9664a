"""Synthetic fixture audio: speech-like recordings, RIRs and noises.

``python -m xeus_forge.synth OUT_DIR`` writes a small corpus
(``corpus/<lang>/*.wav``), an RIR directory and a noise directory.
"""

from __future__ import annotations

import argparse
from pathlib import Path
from typing import List, Sequence, Tuple

import numpy as np

from xeus_forge.audio import Waveform, write_wav
from xeus_forge.noise import synthetic_noises
from xeus_forge.reverb import synthetic_rirs


def tone_bursts(
    spans_s: Sequence[Tuple[float, float]],
    total_s: float,
    sample_rate: int = 16000,
    freq_hz: float = 440.0,
    amplitude: float = 0.5,
    noise_rms: float = 0.0,
    seed: int = 0,
) -> Waveform:
    """Constant-amplitude sine bursts over ``spans_s`` plus optional white noise."""
    rng = np.random.default_rng(seed)
    n = int(round(total_s * sample_rate))
    t = np.arange(n) / sample_rate
    x = np.zeros(n)
    for start, end in spans_s:
        a, b = int(round(start * sample_rate)), int(round(end * sample_rate))
        x[a:b] = amplitude * np.sin(2 * np.pi * freq_hz * t[a:b])
    if noise_rms:
        x += rng.standard_normal(n) * noise_rms
    return Waveform(x, sample_rate)


def speechlike(
    total_s: float, sample_rate: int = 16000, seed: int = 0, noise_rms: float = 0.002
) -> Waveform:
    """Alternating voiced 'phrases' (0.5-6 s) and pauses (0.4-1.5 s).

    Each phrase is a harmonic series with a wandering pitch and a syllable-rate
    envelope, so log-mel frames form a handful of distinct clusters.
    """
    rng = np.random.default_rng(seed)
    n = int(round(total_s * sample_rate))
    x = np.zeros(n)
    pos = int(rng.uniform(0.3, 1.0) * sample_rate)
    while pos < n:
        length = int(rng.uniform(0.5, 6.0) * sample_rate)
        end = min(n, pos + length)
        t = np.arange(end - pos) / sample_rate
        f0 = rng.uniform(100, 220) * (1 + 0.08 * np.sin(2 * np.pi * rng.uniform(0.3, 1.5) * t))
        phase = 2 * np.pi * np.cumsum(f0) / sample_rate
        formant = rng.uniform(1, 4)
        voice = sum(np.sin(h * phase) / (1 + abs(h - formant)) for h in range(1, 12))
        envelope = 0.55 + 0.45 * np.sin(2 * np.pi * rng.uniform(3, 6) * t) ** 2
        x[pos:end] = 0.12 * voice * envelope
        pos = end + int(rng.uniform(0.4, 1.5) * sample_rate)
    x += rng.standard_normal(n) * noise_rms
    return Waveform(np.clip(x, -1, 1), sample_rate)


def write_fixture_corpus(
    out_dir: Path,
    languages: Sequence[str] = ("eng", "swh", "que"),
    recordings: int = 10,
    seconds: float = 60.0,
    sample_rate: int = 16000,
    seed: int = 0,
) -> Tuple[Path, Path, Path]:
    """Write ``recordings`` clips (default 10 x 60 s) plus RIR and noise dirs; returns their paths."""
    out_dir = Path(out_dir)
    corpus, rir_dir, noise_dir = out_dir / "corpus", out_dir / "rirs", out_dir / "noises"
    for d in (corpus, rir_dir, noise_dir):
        d.mkdir(parents=True, exist_ok=True)
    paths: List[Path] = []
    for i in range(recordings):
        lang = languages[i % len(languages)]
        (corpus / lang).mkdir(exist_ok=True)
        path = corpus / lang / f"rec{i:02d}.wav"
        write_wav(speechlike(seconds, sample_rate, seed=seed + i), path, "pcm16")
        paths.append(path)
    for rid, rir in synthetic_rirs(sample_rate=sample_rate, seed=seed).items():
        write_wav(rir.waveform, rir_dir / f"{rid}.wav", "float32")
    for nid, noise in synthetic_noises(sample_rate, seed=seed).items():
        write_wav(noise, noise_dir / f"{nid}.wav", "float32")
    return corpus, rir_dir, noise_dir


def main(argv=None) -> None:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("out_dir", type=Path)
    parser.add_argument("--recordings", type=int, default=10)
    parser.add_argument("--seconds", type=float, default=60.0)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args(argv)
    for p in write_fixture_corpus(args.out_dir, recordings=args.recordings, seconds=args.seconds, seed=args.seed):
        print(p)


if __name__ == "__main__":
    main()
