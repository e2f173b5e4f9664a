"""Per-item random streams keyed by (seed, item id, purpose).

Keying each stream on the utterance id instead of a shared generator makes
augmentation results independent of processing order and worker count.
"""

from __future__ import annotations

import hashlib

import numpy as np


def stream(seed: int, key: str, purpose: str = "") -> np.random.Generator:
    if seed < 0:
        raise ValueError(f"seed must be non-negative, got {seed}")
    digest = hashlib.sha256(f"{purpose}\x00{key}".encode("utf-8")).digest()
    words = np.frombuffer(digest[:16], dtype="<u4").tolist()
    return np.random.default_rng(np.random.SeedSequence([seed, *words]))
