"""Recompute the frozen expected values used by the test-suite.

Run ``python tests/oracles/compute_frozen.py`` and compare with the constants
in ``tests/frozen.py``. Each oracle here avoids the code path it checks:

* mask coverage: stdlib ``random`` sampling and a pure-Python union;
* sync wait: pure-Python barrier loops over the batch footprints;
* augmentation counts: the (seed, id) stream derivation and the draw rules
  re-implemented from their written description.
"""

from __future__ import annotations

import hashlib
import random
import statistics

import numpy as np


def mask_coverage_interval(T=100_000, p=0.8, L=10, runs=400, seed=1234):
    rnd = random.Random(seed)
    n = int(p * T / L + 0.5)
    cov = []
    for _ in range(runs):
        hit = bytearray(T)
        for s in rnd.sample(range(T), n):
            for j in range(s, min(s + L, T)):
                hit[j] = 1
        cov.append(sum(hit) / T)
    mu, sd = statistics.fmean(cov), statistics.pstdev(cov)
    return mu, sd, min(cov), max(cov)


def wait_pure(footprints, order, W, accum):
    rows = [order[i:i + W] for i in range(0, len(order), W)]
    total = 0.0
    for begin in range(0, len(rows), accum):
        sums = [0.0] * W
        for row in rows[begin:begin + accum]:
            for w, b in enumerate(row):
                sums[w] += footprints[b]
        top = max(sums)
        total += sum(top - s for s in sums)
    return total


def bench_reductions(num_batches=1000, W=8, seed=0):
    from xeus_forge.batching import synthetic_batches  # input generation only

    batches = synthetic_batches(num_batches, 100.0, seed)
    fp = [len(b.durations) * max(b.durations) for b in batches]
    rand_order = [int(i) for i in np.random.default_rng(seed).permutation(len(batches))]
    la_order = sorted(range(len(batches)), key=lambda i: (-max(batches[i].durations), i))
    out = {}
    for accum in (1, 4):
        r = wait_pure(fp, rand_order, W, accum)
        la = wait_pure(fp, la_order, W, accum)
        out[accum] = (r, la, 100.0 * (1 - la / r))
    return out


def _gen(seed, key, purpose):
    digest = hashlib.sha256(f"{purpose}\x00{key}".encode()).digest()
    words = [int.from_bytes(digest[i:i + 4], "little") for i in range(0, 16, 4)]
    return np.random.default_rng(np.random.SeedSequence([seed] + words))


def augmentation_counts(n=10_000, seed=0, p=0.2, p_r=0.3):
    corrupted = reverbed = 0
    for i in range(n):
        uid = f"utt{i:05d}"
        if _gen(seed, uid, "noise").random() < p:
            corrupted += 1
        if _gen(seed, uid, "reverb").random() < p_r:
            reverbed += 1
    return corrupted, reverbed


if __name__ == "__main__":
    print("mask coverage (mean, sd, min, max):", mask_coverage_interval())
    for accum, (r, la, pct) in bench_reductions().items():
        print(f"bench accum={accum}: random={r!r} length_aware={la!r} reduction%={pct!r}")
    print("augmentation counts (corrupted, reverbed):", augmentation_counts())
