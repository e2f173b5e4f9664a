"""Span masks for masked prediction and the warm-up schedule that gates them."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

WARMUP_STEPS = 3000
P_MASK_WARM = 0.65
P_MASK_MAIN = 0.8
SPAN_LEN = 10


@dataclass(frozen=True, eq=False)
class MaskSpec:
    span_starts: np.ndarray
    span_len: int
    num_frames: int

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, MaskSpec):
            return NotImplemented
        return (self.span_len, self.num_frames) == (other.span_len, other.num_frames) and np.array_equal(
            self.span_starts, other.span_starts
        )

    def mask(self) -> np.ndarray:
        """Boolean array of length ``num_frames``; True where any span covers the frame."""
        diff = np.zeros(self.num_frames + 1, dtype=np.int64)
        np.add.at(diff, self.span_starts, 1)
        np.add.at(diff, np.minimum(self.span_starts + self.span_len, self.num_frames), -1)
        return np.cumsum(diff[:-1]) > 0

    def coverage(self) -> float:
        return float(self.mask().mean()) if self.num_frames else 0.0


def num_spans(T: int, p_mask: float, span_len: int) -> int:
    """``round(p_mask * T / span_len)`` with halves rounded up."""
    return int(math.floor(p_mask * T / span_len + 0.5))


def gen_mask(T: int, p_mask: float, span_len: int, rng: np.random.Generator) -> MaskSpec:
    """Sample span starts uniformly without replacement; spans may overlap."""
    if T <= 0:
        raise ValueError(f"T must be positive, got {T}")
    if not 0.0 <= p_mask <= 1.0:
        raise ValueError(f"p_mask must be in [0, 1], got {p_mask}")
    if span_len < 1:
        raise ValueError(f"span_len must be >= 1, got {span_len}")
    n = min(num_spans(T, p_mask, span_len), T)
    starts = np.sort(rng.choice(T, size=n, replace=False)) if n else np.zeros(0, dtype=np.int64)
    return MaskSpec(starts.astype(np.int64), span_len, T)


@dataclass(frozen=True)
class ScheduleState:
    step: int
    p_mask: float
    augmentation_enabled: bool
    warmup_steps: int = WARMUP_STEPS


def schedule(
    step: int,
    warmup_steps: int = WARMUP_STEPS,
    p_mask_warm: float = P_MASK_WARM,
    p_mask_main: float = P_MASK_MAIN,
) -> ScheduleState:
    """Warm-up: lower masking probability, augmentation off. Afterwards: 0.8 and on."""
    if step < 0:
        raise ValueError(f"step must be non-negative, got {step}")
    if step < warmup_steps:
        return ScheduleState(step, p_mask_warm, False, warmup_steps)
    return ScheduleState(step, p_mask_main, True, warmup_steps)

