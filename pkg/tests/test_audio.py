import struct

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from xeus_forge.audio import (
    MalformedHeaderError,
    TruncatedDataError,
    UnsupportedCodecError,
    Waveform,
    energy,
    frame_energies,
    read_wav,
    resample,
    write_wav,
)

finite_f32 = st.floats(-1.0, 1.0, width=32, allow_nan=False)


def _riff(fmt: bytes, data: bytes) -> bytes:
    body = b"WAVE" + b"fmt " + struct.pack("<I", len(fmt)) + fmt + b"data" + struct.pack("<I", len(data)) + data
    return b"RIFF" + struct.pack("<I", len(body)) + body


def _pcm16_fmt(channels: int, rate: int = 16000) -> bytes:
    return struct.pack("<HHIIHH", 1, channels, rate, rate * 2 * channels, 2 * channels, 16)


def test_pcm16_single_sample_scaling(tmp_path):
    p = tmp_path / "one.wav"
    p.write_bytes(_riff(_pcm16_fmt(1), struct.pack("<h", 16384)))
    w = read_wav(p)
    assert w.sample_rate == 16000
    assert w.samples.tolist() == [0.5]


def test_stereo_downmix_is_channel_mean(tmp_path):
    p = tmp_path / "stereo.wav"
    frames = [(32767, 0), (-16384, 16384), (8192, -8192)]
    p.write_bytes(_riff(_pcm16_fmt(2), b"".join(struct.pack("<hh", a, b) for a, b in frames)))
    expected = [(a / 32768 + b / 32768) / 2 for a, b in frames]
    np.testing.assert_allclose(read_wav(p).samples, expected, atol=1e-7)


def test_stereo_float_channels_one_and_zero(tmp_path):
    p = tmp_path / "stereo_f.wav"
    fmt = struct.pack("<HHIIHHH", 3, 2, 16000, 16000 * 8, 8, 32, 0)
    p.write_bytes(_riff(fmt, struct.pack("<ff", 1.0, 0.0)))
    assert read_wav(p).samples.tolist() == [0.5]


def test_extensible_float_header(tmp_path):
    p = tmp_path / "ext.wav"
    fmt = struct.pack("<HHIIHHHHIH14s", 0xFFFE, 1, 8000, 32000, 4, 32, 22, 32, 4, 3, b"\x00" * 14)
    p.write_bytes(_riff(fmt, struct.pack("<ff", 0.25, -0.75)))
    w = read_wav(p)
    assert w.sample_rate == 8000 and w.samples.tolist() == [0.25, -0.75]


@settings(max_examples=40, deadline=None)
@given(arrays(np.float32, st.integers(0, 300), elements=finite_f32), st.sampled_from([8000, 16000, 44100]))
def test_float32_round_trip_bit_exact(tmp_path_factory, samples, rate):
    w = Waveform(samples, rate)
    p = tmp_path_factory.mktemp("rt") / "x.wav"
    write_wav(w, p, "float32")
    back = read_wav(p)
    assert back == w
    assert back.samples.tobytes() == samples.tobytes()


def test_pcm16_round_trip_error_bound(tmp_path, rng):
    x = rng.uniform(-1, 1, 5000)
    w = Waveform(x, 16000)
    write_wav(w, tmp_path / "q.wav", "pcm16")
    back = read_wav(tmp_path / "q.wav")
    assert np.max(np.abs(back.samples - w.samples)) <= 1.0 / 32767


def test_pcm16_clamps_out_of_range(tmp_path):
    write_wav(Waveform([1.5, -1.5], 16000), tmp_path / "c.wav", "pcm16")
    raw = (tmp_path / "c.wav").read_bytes()
    assert struct.unpack("<hh", raw[-4:]) == (32767, -32768)


def test_error_kinds_are_distinct(tmp_path):
    bad = tmp_path / "bad.wav"
    bad.write_bytes(b"NOPE" + b"\x00" * 40)
    with pytest.raises(MalformedHeaderError):
        read_wav(bad)

    codec = tmp_path / "pcm24.wav"
    codec.write_bytes(_riff(struct.pack("<HHIIHH", 1, 1, 16000, 48000, 3, 24), b"\x00" * 6))
    with pytest.raises(UnsupportedCodecError):
        read_wav(codec)

    trunc = tmp_path / "trunc.wav"
    full = _riff(_pcm16_fmt(1), struct.pack("<4h", 1, 2, 3, 4))
    trunc.write_bytes(full[:-3])
    with pytest.raises(TruncatedDataError):
        read_wav(trunc)


def test_write_rejects_unknown_codec_and_bad_path(tmp_path):
    w = Waveform([0.0], 16000)
    with pytest.raises(ValueError):
        write_wav(w, tmp_path / "x.wav", "mp3")
    with pytest.raises(OSError):
        write_wav(w, tmp_path / "missing_dir" / "x.wav")


def test_waveform_invariants():
    with pytest.raises(ValueError):
        Waveform([0.0], 0)
    with pytest.raises(ValueError):
        Waveform([np.nan], 16000)


def test_resample_identity_and_length():
    w = Waveform(np.linspace(-1, 1, 8000), 8000)
    assert resample(w, 8000) is w
    assert len(resample(w, 16000)) == 16000
    assert len(resample(Waveform(np.zeros(7), 16000), 8000)) == 4  # ceil(7 / 2)
    with pytest.raises(ValueError):
        resample(w, 0)


def test_resampled_sine_keeps_spectral_peak():
    sr_in, sr_out, f = 8000, 16000, 440.0
    t = np.arange(sr_in) / sr_in
    out = resample(Waveform(0.5 * np.sin(2 * np.pi * f * t), sr_in), sr_out)
    spectrum = np.abs(np.fft.rfft(out.samples * np.hanning(len(out))))
    freqs = np.fft.rfftfreq(len(out), 1.0 / sr_out)
    bin_hz = freqs[1]
    assert abs(freqs[np.argmax(spectrum)] - f) <= bin_hz


def test_downsampling_suppresses_aliases():
    sr = 16000
    t = np.arange(sr) / sr
    # 6 kHz lies above the 4 kHz Nyquist of the 8 kHz output and must be filtered out
    x = 0.4 * np.sin(2 * np.pi * 500 * t) + 0.4 * np.sin(2 * np.pi * 6000 * t)
    out = resample(Waveform(x, sr), 8000).samples[200:-200]
    spec = np.abs(np.fft.rfft(out * np.hanning(len(out))))
    freqs = np.fft.rfftfreq(len(out), 1 / 8000)
    alias = spec[np.abs(freqs - 2000) < 20].max()  # 6 kHz folds to 2 kHz
    assert alias < 1e-3 * spec.max()


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 4000), st.sampled_from([(8000, 16000), (16000, 8000), (44100, 16000), (22050, 16000)]))
def test_resample_preserves_duration(n, rates):
    src, dst = rates
    out = resample(Waveform(np.zeros(n), src), dst)
    assert abs(len(out) / dst - n / src) <= 1.0 / dst


def test_energy_examples(rng):
    assert energy(Waveform(np.zeros(100), 16000)) == 0.0
    assert energy(Waveform(np.ones(37), 16000)) == 37.0
    x = rng.standard_normal(10_000).astype(np.float32)
    oracle = sum(float(v) * float(v) for v in x)
    assert energy(Waveform(x, 16000)) == pytest.approx(oracle, rel=1e-6)


@settings(max_examples=50, deadline=None)
@given(arrays(np.float32, st.integers(0, 200), elements=finite_f32),
       arrays(np.float32, st.integers(0, 200), elements=finite_f32))
def test_energy_additive_over_concatenation(a, b):
    whole = energy(Waveform(np.concatenate([a, b]), 16000))
    assert whole == pytest.approx(energy(Waveform(a, 16000)) + energy(Waveform(b, 16000)), rel=1e-12, abs=1e-12)


def test_frame_energies_examples():
    assert frame_energies(Waveform(np.zeros(10), 16000), 4, 4).tolist() == [0.0, 0.0, 0.0]
    assert frame_energies(Waveform(np.ones(8), 16000), 4, 4).tolist() == [4.0, 4.0]
    impulse = np.zeros(12)
    impulse[5] = 1.0
    assert frame_energies(Waveform(impulse, 16000), 4, 4).tolist() == [0.0, 1.0, 0.0]
    assert len(frame_energies(Waveform(np.ones(9), 16000), 4, 4)) == 3
    assert len(frame_energies(Waveform(np.zeros(0), 16000), 4, 4)) == 0


def test_frame_energies_overlapping_frames_zero_pad(rng):
    x = rng.standard_normal(23)
    got = frame_energies(Waveform(x, 16000), 8, 3)
    x32 = x.astype(np.float32).astype(np.float64)
    expected = [np.sum(x32[i:i + 8] ** 2) for i in range(0, 23, 3)]
    assert len(got) == -(-23 // 3)
    np.testing.assert_allclose(got, expected, rtol=1e-12)
