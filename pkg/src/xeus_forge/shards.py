"""Binary shard container for augmented utterances, clean labels and masks.

Layout (all integers little-endian)::

    b"XSHD"  u32 version
    repeated records:
        u16 id_len, id (UTF-8)
        u32 sample_rate
        u32 n_samples, float32[n_samples]
        u32 n_labels, u16[n_labels]
        u16 span_len
        u32 n_starts, u32[n_starts]
        u32 prov_len, provenance (UTF-8 JSON)
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from typing import Any, BinaryIO, Dict, Iterator, List, Sequence

import numpy as np

from xeus_forge.audio import PathType

SHARD_MAGIC = b"XSHD"
SHARD_VERSION = 1


class ShardFormatError(ValueError):
    pass


@dataclass(eq=False)
class ShardRecord:
    id: str
    sample_rate: int
    samples: np.ndarray
    labels: np.ndarray
    span_len: int
    span_starts: np.ndarray
    provenance: Dict[str, Any] = field(default_factory=dict)

    def __post_init__(self) -> None:
        self.samples = np.asarray(self.samples, dtype=np.float32)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        self.span_starts = np.asarray(self.span_starts, dtype=np.int64)
        if self.labels.size and (self.labels.min() < 0 or self.labels.max() > 0xFFFF):
            raise ShardFormatError(f"{self.id}: labels must fit in u16")
        if self.span_starts.size and (
            self.span_starts.min() < 0 or self.span_starts.max() >= max(len(self.labels), 1)
        ):
            raise ShardFormatError(f"{self.id}: mask start outside [0, {len(self.labels)})")

    def check_frames(self, hop_samples: int) -> None:
        """Raise unless the label count matches ``ceil(n_samples / hop)``."""
        expected = -(-len(self.samples) // hop_samples)
        if len(self.labels) != expected:
            raise ShardFormatError(f"{self.id}: {len(self.labels)} labels for {expected} frames")

    def encode(self) -> bytes:
        uid = self.id.encode("utf-8")
        prov = json.dumps(self.provenance, sort_keys=True, separators=(",", ":")).encode("utf-8")
        parts = [
            struct.pack("<H", len(uid)), uid,
            struct.pack("<II", self.sample_rate, len(self.samples)), self.samples.astype("<f4").tobytes(),
            struct.pack("<I", len(self.labels)), self.labels.astype("<u2").tobytes(),
            struct.pack("<HI", self.span_len, len(self.span_starts)), self.span_starts.astype("<u4").tobytes(),
            struct.pack("<I", len(prov)), prov,
        ]
        return b"".join(parts)


def write_shard(records: Sequence[ShardRecord], path: PathType) -> None:
    with open(path, "wb") as fh:
        fh.write(SHARD_MAGIC + struct.pack("<I", SHARD_VERSION))
        for rec in records:
            fh.write(rec.encode())


def _take(fh: BinaryIO, n: int, what: str) -> bytes:
    data = fh.read(n)
    if len(data) != n:
        raise ShardFormatError(f"truncated shard while reading {what}")
    return data


def iter_shard(path: PathType) -> Iterator[ShardRecord]:
    with open(path, "rb") as fh:
        head = fh.read(8)
        if len(head) != 8 or head[:4] != SHARD_MAGIC:
            raise ShardFormatError(f"{path}: not a shard file")
        (version,) = struct.unpack("<I", head[4:])
        if version != SHARD_VERSION:
            raise ShardFormatError(f"{path}: unsupported shard version {version}")
        while True:
            first = fh.read(2)
            if not first:
                return
            if len(first) != 2:
                raise ShardFormatError(f"{path}: truncated record header")
            (id_len,) = struct.unpack("<H", first)
            uid = _take(fh, id_len, "id").decode("utf-8")
            sr, n = struct.unpack("<II", _take(fh, 8, "sample header"))
            samples = np.frombuffer(_take(fh, 4 * n, "samples"), dtype="<f4").astype(np.float32)
            (n_labels,) = struct.unpack("<I", _take(fh, 4, "label count"))
            labels = np.frombuffer(_take(fh, 2 * n_labels, "labels"), dtype="<u2").astype(np.int64)
            span_len, n_starts = struct.unpack("<HI", _take(fh, 6, "mask header"))
            starts = np.frombuffer(_take(fh, 4 * n_starts, "mask starts"), dtype="<u4").astype(np.int64)
            (prov_len,) = struct.unpack("<I", _take(fh, 4, "provenance length"))
            prov = json.loads(_take(fh, prov_len, "provenance").decode("utf-8"))
            yield ShardRecord(uid, sr, samples, labels, span_len, starts, prov)


def read_shard(path: PathType) -> List[ShardRecord]:
    return list(iter_shard(path))
