"""Waveform type, RIFF/WAVE I/O, windowed-sinc resampling and energy helpers."""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass
from os import PathLike
from pathlib import Path
from typing import Union

import numpy as np

PathType = Union[str, "PathLike[str]"]

WAVE_FORMAT_PCM = 0x0001
WAVE_FORMAT_IEEE_FLOAT = 0x0003
WAVE_FORMAT_EXTENSIBLE = 0xFFFE

# Resampler kernel: zero crossings per side (at the lower of the two rates) and Kaiser beta.
SINC_ZERO_CROSSINGS = 32
KAISER_BETA = 8.6


class WavError(ValueError):
    """Base class for WAV decoding failures."""


class MalformedHeaderError(WavError):
    pass


class UnsupportedCodecError(WavError):
    pass


class TruncatedDataError(WavError):
    pass


@dataclass(frozen=True, eq=False)
class Waveform:
    """Mono float32 samples plus sample rate."""

    samples: np.ndarray
    sample_rate: int

    def __post_init__(self) -> None:
        samples = np.ascontiguousarray(self.samples, dtype=np.float32).reshape(-1)
        if self.sample_rate <= 0:
            raise ValueError(f"sample_rate must be positive, got {self.sample_rate}")
        if not np.all(np.isfinite(samples)):
            raise ValueError("waveform contains non-finite samples")
        samples.flags.writeable = False
        object.__setattr__(self, "samples", samples)
        object.__setattr__(self, "sample_rate", int(self.sample_rate))

    def __len__(self) -> int:
        return int(self.samples.shape[0])

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Waveform):
            return NotImplemented
        return self.sample_rate == other.sample_rate and np.array_equal(self.samples, other.samples)

    @property
    def duration_s(self) -> float:
        return len(self) / self.sample_rate

    def with_samples(self, samples: np.ndarray) -> "Waveform":
        return Waveform(samples, self.sample_rate)


def read_wav(path: PathType) -> Waveform:
    """Decode a PCM16 or IEEE float32 RIFF/WAVE file into a mono waveform.

    Multichannel audio is averaged across channels. Raises
    :class:`MalformedHeaderError`, :class:`UnsupportedCodecError` or
    :class:`TruncatedDataError`.
    """
    data = Path(path).read_bytes()
    if len(data) < 12 or data[0:4] != b"RIFF" or data[8:12] != b"WAVE":
        raise MalformedHeaderError(f"{path}: not a RIFF/WAVE file")

    fmt = None
    payload = None
    pos = 12
    while pos + 8 <= len(data):
        chunk_id = data[pos:pos + 4]
        (size,) = struct.unpack_from("<I", data, pos + 4)
        body = data[pos + 8:pos + 8 + size]
        if chunk_id == b"fmt ":
            if len(body) < 16:
                raise MalformedHeaderError(f"{path}: fmt chunk too short ({len(body)} bytes)")
            fmt = body
        elif chunk_id == b"data":
            if len(body) < size:
                raise TruncatedDataError(f"{path}: data chunk declares {size} bytes, {len(body)} present")
            payload = body
            break
        pos += 8 + size + (size & 1)

    if fmt is None:
        raise MalformedHeaderError(f"{path}: missing fmt chunk")
    if payload is None:
        raise MalformedHeaderError(f"{path}: missing data chunk")

    tag, channels, rate, _, block_align, bits = struct.unpack_from("<HHIIHH", fmt, 0)
    if tag == WAVE_FORMAT_EXTENSIBLE:
        if len(fmt) < 40:
            raise MalformedHeaderError(f"{path}: extensible fmt chunk too short")
        (tag,) = struct.unpack_from("<H", fmt, 24)
    if channels == 0 or rate == 0:
        raise MalformedHeaderError(f"{path}: channels={channels}, rate={rate}")

    if tag == WAVE_FORMAT_PCM and bits == 16:
        dtype, scale = np.dtype("<i2"), 1.0 / 32768.0
    elif tag == WAVE_FORMAT_IEEE_FLOAT and bits == 32:
        dtype, scale = np.dtype("<f4"), 1.0
    else:
        raise UnsupportedCodecError(f"{path}: format tag {tag:#06x} with {bits} bits per sample")
    if block_align != channels * dtype.itemsize:
        raise MalformedHeaderError(f"{path}: block_align {block_align} inconsistent with format")
    if len(payload) % block_align:
        raise TruncatedDataError(f"{path}: data length {len(payload)} is not a whole number of frames")

    frames = np.frombuffer(payload, dtype=dtype).reshape(-1, channels)
    if channels == 1:
        mono = frames[:, 0].astype(np.float32)
    else:
        mono = frames.astype(np.float64).mean(axis=1)
    if scale != 1.0:
        mono = mono * np.float32(scale)
    return Waveform(mono, rate)


def write_wav(w: Waveform, path: PathType, codec: str = "float32") -> None:
    """Write a mono RIFF/WAVE file. ``codec`` is ``"pcm16"`` or ``"float32"``."""
    if codec == "float32":
        tag, bits = WAVE_FORMAT_IEEE_FLOAT, 32
        payload = w.samples.astype("<f4").tobytes()
    elif codec == "pcm16":
        tag, bits = WAVE_FORMAT_PCM, 16
        # same 32768 scale as read_wav so the round trip errs by at most one step
        q = np.clip(np.round(w.samples.astype(np.float64) * 32768.0), -32768, 32767)
        payload = q.astype("<i2").tobytes()
    else:
        raise ValueError(f"unknown codec {codec!r}; expected 'pcm16' or 'float32'")

    block_align = bits // 8
    fmt = struct.pack("<HHIIHH", tag, 1, w.sample_rate, w.sample_rate * block_align, block_align, bits)
    if tag == WAVE_FORMAT_IEEE_FLOAT:
        # non-PCM formats carry a cbSize field
        fmt += struct.pack("<H", 0)
    body = b"WAVE" + b"fmt " + struct.pack("<I", len(fmt)) + fmt
    body += b"data" + struct.pack("<I", len(payload)) + payload
    if len(payload) & 1:
        body += b"\x00"
    Path(path).write_bytes(b"RIFF" + struct.pack("<I", len(body)) + body)


def _kaiser_sinc(x: np.ndarray, cutoff: float, half_width: float) -> np.ndarray:
    """Kaiser-windowed sinc lowpass evaluated at offsets ``x`` (in input samples)."""
    h = cutoff * np.sinc(cutoff * x)
    ratio = np.clip(x / half_width, -1.0, 1.0)
    window = np.i0(KAISER_BETA * np.sqrt(1.0 - ratio * ratio)) / np.i0(KAISER_BETA)
    return np.where(np.abs(x) < half_width, h * window, 0.0)


def resample(w: Waveform, target_hz: int, chunk: int = 16384) -> Waveform:
    """Band-limited resampling with a Kaiser-windowed sinc kernel.

    Output length is ``ceil(n * target_hz / source_hz)``; the cutoff sits at
    the lower of the two Nyquist frequencies.
    """
    if target_hz <= 0:
        raise ValueError(f"target_hz must be positive, got {target_hz}")
    src = w.sample_rate
    if target_hz == src:
        return w
    n = len(w)
    n_out = -(-n * target_hz // src)
    if n == 0:
        return Waveform(np.zeros(0, np.float32), target_hz)

    cutoff = min(1.0, target_hz / src)
    half_width = SINC_ZERO_CROSSINGS / cutoff
    taps = np.arange(-math.ceil(half_width) + 1, math.ceil(half_width) + 1)
    x = w.samples.astype(np.float64)
    out = np.empty(n_out, dtype=np.float64)

    for begin in range(0, n_out, chunk):
        m = np.arange(begin, min(begin + chunk, n_out), dtype=np.int64)
        # exact rational position m * src / target split into integer and fractional parts
        base = (m * src) // target_hz
        frac = ((m * src) % target_hz) / target_hz
        idx = base[:, None] + taps[None, :]
        weights = _kaiser_sinc(frac[:, None] - taps[None, :], cutoff, half_width)
        valid = (idx >= 0) & (idx < n)
        vals = np.where(valid, x[np.clip(idx, 0, n - 1)], 0.0)
        out[begin:begin + m.shape[0]] = np.sum(vals * weights, axis=1)
    return Waveform(out.astype(np.float32), target_hz)


def energy(w: Union[Waveform, np.ndarray]) -> float:
    """Sum of squared samples, accumulated in float64."""
    x = w.samples if isinstance(w, Waveform) else np.asarray(w)
    x = x.astype(np.float64, copy=False)
    return float(np.dot(x, x))


def frame_energies(w: Waveform, frame_len: int, hop: int) -> np.ndarray:
    """Energy per frame; the trailing partial frame is zero-padded.

    Returns ``ceil(n / hop)`` values for non-empty input.
    """
    if frame_len <= 0 or hop <= 0:
        raise ValueError("frame_len and hop must be positive")
    n = len(w)
    if n == 0:
        return np.zeros(0, dtype=np.float64)
    count = -(-n // hop)
    padded = np.zeros((count - 1) * hop + frame_len, dtype=np.float64)
    m = min(n, padded.shape[0])
    padded[:m] = w.samples[:m].astype(np.float64) ** 2
    frames = np.lib.stride_tricks.sliding_window_view(padded, frame_len)[::hop]
    return frames.sum(axis=1)
