"""Duration-budgeted batching, multi-worker distribution and a barrier-wait simulator.

The simulator models data-parallel training where every worker runs one
batch per step and all workers meet at a gradient-synchronisation barrier.
Time spent idle at the barrier is the "sync wait". Gradient accumulation
removes the barrier on non-optimizer steps.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, List, Optional, Sequence, Tuple

import numpy as np

DEFAULT_BUDGET_S = 100.0
LOGNORMAL_MU = math.log(8.0)
LOGNORMAL_SIGMA = 0.8


@dataclass(frozen=True)
class Batch:
    ids: Tuple[str, ...]
    durations: Tuple[float, ...]

    def __post_init__(self) -> None:
        if not self.ids:
            raise ValueError("a batch must contain at least one utterance")
        if len(self.ids) != len(self.durations):
            raise ValueError("ids and durations differ in length")

    @property
    def max_len_s(self) -> float:
        return max(self.durations)

    @property
    def padded_footprint_s(self) -> float:
        return len(self.ids) * self.max_len_s

    @property
    def total_s(self) -> float:
        return math.fsum(self.durations)


Slot = Optional[int]


@dataclass(frozen=True)
class WorkerAssignment:
    """One row per step; each row holds W batch indices (``None`` marks an idle slot)."""

    num_workers: int
    steps: Tuple[Tuple[Slot, ...], ...]


@dataclass
class SimReport:
    total_padding_waste: float
    total_sync_wait_s: float
    total_work_s: float
    num_barriers: int
    per_step_wait_s: List[float] = field(default_factory=list)

    @property
    def wall_time_s(self) -> float:
        """Worker-seconds consumed in total: compute plus barrier idling."""
        return self.total_work_s + self.total_sync_wait_s

    def relative_throughput(self, baseline: "SimReport") -> float:
        return baseline.wall_time_s / self.wall_time_s if self.wall_time_s else 1.0


CostModel = Callable[[Batch], float]


def padded_cost(batch: Batch) -> float:
    return batch.padded_footprint_s


def _pack(items: Sequence[Tuple[str, float]], budget_s: float) -> List[Batch]:
    """First-fit under the padded budget ``count * max_len <= budget_s``."""
    members: List[List[Tuple[str, float]]] = []
    maxes: List[float] = []
    for uid, dur in items:
        if dur > budget_s:
            raise ValueError(f"utterance {uid!r} ({dur} s) exceeds the batch budget of {budget_s} s")
        for b, group in enumerate(members):
            new_max = max(maxes[b], dur)
            if (len(group) + 1) * new_max <= budget_s:
                group.append((uid, dur))
                maxes[b] = new_max
                break
        else:
            members.append([(uid, dur)])
            maxes.append(dur)
    return [Batch(tuple(u for u, _ in g), tuple(d for _, d in g)) for g in members]


def _pack_sorted(items: Sequence[Tuple[str, float]], budget_s: float) -> List[Batch]:
    # With descending durations every open batch accepts any later item, so
    # first-fit reduces to filling the newest batch until its capacity is hit.
    batches: List[Batch] = []
    ids: List[str] = []
    durs: List[float] = []
    for uid, dur in items:
        if dur > budget_s:
            raise ValueError(f"utterance {uid!r} ({dur} s) exceeds the batch budget of {budget_s} s")
        if ids and (len(ids) + 1) * durs[0] > budget_s:
            batches.append(Batch(tuple(ids), tuple(durs)))
            ids, durs = [], []
        ids.append(uid)
        durs.append(dur)
    if ids:
        batches.append(Batch(tuple(ids), tuple(durs)))
    return batches


def make_batches(utts: Iterable, budget_s: float = DEFAULT_BUDGET_S) -> List[Batch]:
    """Sort by duration (descending, ties by id) and pack first-fit under the padded budget.

    ``utts`` may hold utterances, manifest entries or ``(id, duration)`` pairs.
    """
    items = sorted(_as_items(utts), key=lambda it: (-it[1], it[0]))
    return _pack_sorted(items, budget_s)


def make_batches_first_fit(items: Sequence[Tuple[str, float]], budget_s: float = DEFAULT_BUDGET_S) -> List[Batch]:
    """First-fit packing in the given order (the unsorted baseline)."""
    return _pack(list(items), budget_s)


def _as_items(utts: Iterable) -> List[Tuple[str, float]]:
    out = []
    for u in utts:
        if isinstance(u, tuple):
            out.append((str(u[0]), float(u[1])))
        else:
            out.append((u.id, float(u.duration_s)))
    return out


def padding_waste(batches: Sequence[Batch]) -> float:
    footprint = math.fsum(b.padded_footprint_s for b in batches)
    if footprint == 0:
        return 0.0
    return 1.0 - math.fsum(b.total_s for b in batches) / footprint


def _rows(order: Sequence[int], W: int) -> Tuple[Tuple[Slot, ...], ...]:
    rows = []
    for begin in range(0, len(order), W):
        row: List[Slot] = list(order[begin:begin + W])
        row += [None] * (W - len(row))
        rows.append(tuple(row))
    return tuple(rows)


def distribute_length_aware(batches: Sequence[Batch], W: int) -> WorkerAssignment:
    """Co-schedule batches of similar max length: sort by max_len descending, chunk into rows of W."""
    if W < 1:
        raise ValueError(f"W must be >= 1, got {W}")
    order = sorted(range(len(batches)), key=lambda i: (-batches[i].max_len_s, i))
    return WorkerAssignment(W, _rows(order, W))


def distribute_random(batches: Sequence[Batch], W: int, rng: np.random.Generator) -> WorkerAssignment:
    """Length-oblivious baseline: uniform random permutation chunked into rows of W."""
    if W < 1:
        raise ValueError(f"W must be >= 1, got {W}")
    order = [int(i) for i in rng.permutation(len(batches))]
    return WorkerAssignment(W, _rows(order, W))


def _step_times(a: WorkerAssignment, batches: Sequence[Batch], cost: CostModel) -> np.ndarray:
    times = np.zeros((len(a.steps), a.num_workers), dtype=np.float64)
    for s, row in enumerate(a.steps):
        for w, slot in enumerate(row):
            if slot is not None:
                times[s, w] = cost(batches[slot])
    return times


def simulate_grad_accum(
    a: WorkerAssignment, batches: Sequence[Batch], accum: int, cost_model: CostModel = padded_cost
) -> SimReport:
    """Barrier only every ``accum`` steps; per-worker times add up inside each window."""
    if accum < 1:
        raise ValueError(f"accum must be >= 1, got {accum}")
    times = _step_times(a, batches, cost_model)
    waits = []
    for begin in range(0, times.shape[0], accum):
        window = times[begin:begin + accum].sum(axis=0)
        waits.append(float((window.max() - window).sum()))
    return SimReport(
        total_padding_waste=padding_waste(batches),
        total_sync_wait_s=math.fsum(waits),
        total_work_s=float(times.sum()),
        num_barriers=len(waits),
        per_step_wait_s=waits,
    )


def simulate_sync_wait(
    a: WorkerAssignment, batches: Sequence[Batch], cost_model: CostModel = padded_cost
) -> SimReport:
    """Barrier after every step; each worker waits for the slowest one in its row."""
    return simulate_grad_accum(a, batches, 1, cost_model)


def lognormal_durations(
    n: int, seed: int = 0, mu: float = LOGNORMAL_MU, sigma: float = LOGNORMAL_SIGMA,
    min_s: float = 0.5, max_s: float = 40.0,
) -> np.ndarray:
    """Heavy-tailed utterance durations, clipped to the corpus filter range."""
    rng = np.random.default_rng(seed)
    return np.clip(rng.lognormal(mu, sigma, size=n), min_s, max_s)


def synthetic_batches(
    num_batches: int, budget_s: float = DEFAULT_BUDGET_S, seed: int = 0,
    mu: float = LOGNORMAL_MU, sigma: float = LOGNORMAL_SIGMA,
) -> List[Batch]:
    """Exactly ``num_batches`` sorted-packed batches from a log-normal utterance pool.

    The pool is redrawn at doubling sizes until packing yields enough
    batches; surplus batches (the shortest) are dropped.
    """
    n = max(num_batches, 1) * 4
    while True:
        durs = lognormal_durations(n, seed, mu, sigma, max_s=min(40.0, budget_s))
        items = [(f"syn{i:07d}", float(d)) for i, d in enumerate(durs)]
        batches = make_batches(items, budget_s)
        if len(batches) >= num_batches:
            return batches[:num_batches]
        n *= 2
