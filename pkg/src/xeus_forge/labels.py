"""Frame features and k-means pseudo-labels.

The feature provider is pluggable (any callable ``Waveform -> FeatureMatrix``);
log-mel filterbanks are built in. Clustering runs k-means++ then Lloyd
iterations over the *distinct* feature rows weighted by multiplicity, which
makes the fit invariant to row order and duplication.
"""

from __future__ import annotations

import logging
import struct
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Mapping, Optional, Sequence

import numpy as np

from xeus_forge.audio import PathType, Waveform

logger = logging.getLogger(__name__)

LOG_FLOOR = 1e-10
MODEL_MAGIC = b"XKMN"
MODEL_VERSION = 1
_ASSIGN_CHUNK = 8192


@dataclass(frozen=True, eq=False)
class FeatureMatrix:
    frames: np.ndarray  # T x D
    frame_hop_ms: float = 20.0

    def __post_init__(self) -> None:
        frames = np.asarray(self.frames, dtype=np.float64)
        if frames.ndim != 2:
            raise ValueError(f"features must be 2-D, got shape {frames.shape}")
        if not np.all(np.isfinite(frames)):
            raise ValueError("features contain non-finite values")
        object.__setattr__(self, "frames", frames)

    @property
    def num_frames(self) -> int:
        return int(self.frames.shape[0])

    @property
    def dim(self) -> int:
        return int(self.frames.shape[1])


FeatureProvider = Callable[[Waveform], FeatureMatrix]


@dataclass(frozen=True, eq=False)
class KMeansModel:
    centroids: np.ndarray  # k x D, float32 so the serialized model is exact
    seed: int = 0
    inertia_history: List[float] = field(default_factory=list, compare=False)

    def __post_init__(self) -> None:
        c = np.ascontiguousarray(self.centroids, dtype=np.float32)
        if c.ndim != 2 or c.shape[0] < 1:
            raise ValueError(f"centroids must be a non-empty k x D matrix, got shape {c.shape}")
        if not np.all(np.isfinite(c)):
            raise ValueError("centroids contain non-finite values")
        object.__setattr__(self, "centroids", c)

    @property
    def k(self) -> int:
        return int(self.centroids.shape[0])

    @property
    def dim(self) -> int:
        return int(self.centroids.shape[1])


@dataclass(frozen=True, eq=False)
class FrameLabels:
    labels: np.ndarray
    frame_hop_ms: float = 20.0

    def __len__(self) -> int:
        return int(self.labels.shape[0])


# -- log-mel ---------------------------------------------------------------

def hz_to_mel(hz):
    return 2595.0 * np.log10(1.0 + np.asarray(hz, dtype=np.float64) / 700.0)


def mel_to_hz(mel):
    return 700.0 * (10.0 ** (np.asarray(mel, dtype=np.float64) / 2595.0) - 1.0)


def mel_filterbank(n_mels: int, n_fft: int, sample_rate: int) -> np.ndarray:
    """Triangular HTK-mel filters spanning 0 Hz to Nyquist, shape (n_mels, n_fft // 2 + 1)."""
    edges = mel_to_hz(np.linspace(0.0, hz_to_mel(sample_rate / 2.0), n_mels + 2))
    freqs = np.arange(n_fft // 2 + 1) * sample_rate / n_fft
    lower, center, upper = edges[:-2, None], edges[1:-1, None], edges[2:, None]
    rising = (freqs[None, :] - lower) / (center - lower)
    falling = (upper - freqs[None, :]) / (upper - center)
    return np.maximum(0.0, np.minimum(rising, falling))


def logmel(w: Waveform, dim: int = 80, window_ms: float = 25.0, hop_ms: float = 20.0) -> FeatureMatrix:
    """Log mel-filterbank energies, one frame per hop: ``T = ceil(n / hop)``.

    Frame ``t`` covers samples ``[t * hop, t * hop + window)`` with zero
    padding past the end; a Hann window is applied before the FFT.
    """
    sr = w.sample_rate
    win = int(round(window_ms * sr / 1000.0))
    hop = int(round(hop_ms * sr / 1000.0))
    n = len(w)
    count = -(-n // hop) if n else 0
    n_fft = 1 << max(0, (win - 1).bit_length())
    if count == 0:
        return FeatureMatrix(np.zeros((0, dim)), hop_ms)

    padded = np.zeros((count - 1) * hop + win, dtype=np.float64)
    m = min(n, padded.shape[0])
    padded[:m] = w.samples[:m]
    frames = np.lib.stride_tricks.sliding_window_view(padded, win)[::hop]
    power = np.abs(np.fft.rfft(frames * np.hanning(win + 2)[1:-1], n_fft)) ** 2
    mel = power @ mel_filterbank(dim, n_fft, sr).T
    return FeatureMatrix(np.log(np.maximum(mel, LOG_FLOOR)), hop_ms)


# -- k-means ---------------------------------------------------------------

def _sq_dists(x: np.ndarray, c: np.ndarray) -> np.ndarray:
    d = (x * x).sum(1)[:, None] - 2.0 * (x @ c.T) + (c * c).sum(1)[None, :]
    return np.maximum(d, 0.0)


def _nearest(x: np.ndarray, c: np.ndarray) -> np.ndarray:
    out = np.empty(x.shape[0], dtype=np.int64)
    for begin in range(0, x.shape[0], _ASSIGN_CHUNK):
        out[begin:begin + _ASSIGN_CHUNK] = np.argmin(_sq_dists(x[begin:begin + _ASSIGN_CHUNK], c), axis=1)
    return out


def _weighted_pick(weights: np.ndarray, rng: np.random.Generator) -> int:
    cdf = np.cumsum(weights)
    return int(min(np.searchsorted(cdf, rng.random() * cdf[-1], side="right"), len(weights) - 1))


def _kmeanspp(x: np.ndarray, w: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    centers = [x[_weighted_pick(w, rng)]]
    closest = ((x - centers[0]) ** 2).sum(1)
    for _ in range(1, k):
        score = w * closest
        if score.sum() <= 0.0:
            # fewer distinct points than clusters: reuse the heaviest remaining row
            idx = int(np.argmax(w))
        else:
            idx = _weighted_pick(score, rng)
        centers.append(x[idx])
        closest = np.minimum(closest, ((x - x[idx]) ** 2).sum(1))
    return np.array(centers)


def kmeans_fit(features: FeatureMatrix, k: int, max_iters: int = 100, seed: int = 0) -> KMeansModel:
    """k-means++ initialisation followed by Lloyd iterations.

    Stops at an assignment fixpoint or after ``max_iters``. Empty clusters
    are reseeded at the point farthest from its centroid. The per-iteration
    inertia is kept on the returned model in ``inertia_history``.
    """
    x_all = features.frames
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    if x_all.shape[0] < k:
        raise ValueError(f"need at least k={k} frames, got {x_all.shape[0]}")
    if not np.all(np.isfinite(x_all)):
        raise ValueError("features contain non-finite values")

    x, counts = np.unique(x_all, axis=0, return_counts=True)
    w = counts.astype(np.float64)
    rng = np.random.default_rng(seed)
    centroids = _kmeanspp(x, w, k, rng)

    history: List[float] = []
    assign_prev: Optional[np.ndarray] = None
    for it in range(max_iters):
        labels = _nearest(x, centroids)
        resid = ((x - centroids[labels]) ** 2).sum(1)
        history.append(float(np.dot(w, resid)))
        if assign_prev is not None and np.array_equal(labels, assign_prev):
            break
        assign_prev = labels

        sums = np.zeros_like(centroids)
        np.add.at(sums, labels, x * w[:, None])
        mass = np.bincount(labels, weights=w, minlength=k)
        nonempty = mass > 0
        centroids = centroids.copy()
        centroids[nonempty] = sums[nonempty] / mass[nonempty, None]
        for j in np.flatnonzero(~nonempty):
            far = ((x - centroids[labels]) ** 2).sum(1)
            idx = int(np.argmax(far))
            centroids[j] = x[idx]
            labels = labels.copy()
            labels[idx] = j
        logger.debug("kmeans iter %d inertia %.6g", it, history[-1])
    return KMeansModel(centroids, seed, history)


def assign(model: KMeansModel, features: FeatureMatrix) -> FrameLabels:
    """Nearest-centroid labels (Euclidean, ties to the lowest id)."""
    if features.dim != model.dim and features.num_frames:
        raise ValueError(f"feature dim {features.dim} does not match model dim {model.dim}")
    if features.num_frames == 0:
        return FrameLabels(np.zeros(0, dtype=np.int64), features.frame_hop_ms)
    labels = _nearest(features.frames, model.centroids.astype(np.float64))
    return FrameLabels(labels, features.frame_hop_ms)


def inertia(model: KMeansModel, features: FeatureMatrix) -> float:
    c = model.centroids.astype(np.float64)
    labels = assign(model, features).labels
    return float(((features.frames - c[labels]) ** 2).sum())


# -- serialization ---------------------------------------------------------

def save_model(model: KMeansModel, path: PathType) -> None:
    """Binary layout: b"XKMN", u32 version, u32 k, u32 D, k*D float32 LE (row-major), u64 seed."""
    header = MODEL_MAGIC + struct.pack("<III", MODEL_VERSION, model.k, model.dim)
    body = model.centroids.astype("<f4").tobytes()
    with open(path, "wb") as fh:
        fh.write(header + body + struct.pack("<Q", model.seed))


def load_model(path: PathType) -> KMeansModel:
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:4] != MODEL_MAGIC:
        raise ValueError(f"{path}: bad magic {data[:4]!r}")
    version, k, dim = struct.unpack_from("<III", data, 4)
    if version != MODEL_VERSION:
        raise ValueError(f"{path}: unsupported model version {version}")
    expected = 16 + 4 * k * dim + 8
    if len(data) != expected:
        raise ValueError(f"{path}: expected {expected} bytes, found {len(data)}")
    centroids = np.frombuffer(data, dtype="<f4", count=k * dim, offset=16).reshape(k, dim)
    (seed,) = struct.unpack_from("<Q", data, 16 + 4 * k * dim)
    return KMeansModel(centroids.copy(), int(seed))


# -- subset sampling -------------------------------------------------------

def sample_label_subset(manifest, hours_per_bucket: Mapping[str, float], rng: np.random.Generator) -> list:
    """Draw utterances per source bucket, without replacement, until each hour budget is met.

    ``manifest`` is a :class:`xeus_forge.manifest.Manifest`. The final
    utterance of a bucket may overshoot its budget. Buckets are visited in
    name order and entries in id order so the draw depends only on the seed.
    """
    buckets: Dict[str, list] = {}
    for entry in manifest.entries:
        buckets.setdefault(entry.source, []).append(entry)
    selected = []
    for source in sorted(hours_per_bucket):
        budget_s = float(hours_per_bucket[source]) * 3600.0
        if budget_s <= 0:
            continue
        pool = sorted(buckets.get(source, []), key=lambda e: e.id)
        if not pool:
            raise ValueError(f"bucket {source!r} is empty but has a budget of {hours_per_bucket[source]} h")
        taken = 0.0
        for idx in rng.permutation(len(pool)):
            if taken >= budget_s:
                break
            selected.append(pool[int(idx)])
            taken += pool[int(idx)].duration_s
    return selected


def pool_features(mats: Sequence[FeatureMatrix]) -> FeatureMatrix:
    if not mats:
        raise ValueError("no feature matrices to pool")
    return FeatureMatrix(np.concatenate([m.frames for m in mats], axis=0), mats[0].frame_hop_ms)
