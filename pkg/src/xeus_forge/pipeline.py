"""Pipeline commands: segment, label, augment, batch, bench, stats.

Every command reads a :class:`PipelineConfig`, writes its outputs under
``paths.output_dir`` and returns a summary dict. Per-file failures are
collected in ``summary["errors"]`` instead of aborting the run.

Output layout::

    manifest.jsonl          segmented utterances
    audio/<id>.wav          float32 utterance audio referenced by the manifest
    kmeans.bin              k-means centroids
    labels.jsonl            {"id", "labels"} per utterance, clean audio only
    shards/shard-NNNNN.xshd augmented samples + labels + masks
    plan.json               batches and their worker assignment
    bench.csv               sync-wait simulation report
    histogram.csv, stats.json
"""

from __future__ import annotations

import csv
import json
import logging
import re
import shutil
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Any, Callable, Dict, Iterable, List, Optional, Sequence, Tuple, TypeVar

import numpy as np

from xeus_forge.audio import Waveform, read_wav, resample, write_wav
from xeus_forge.batching import (
    Batch,
    distribute_length_aware,
    distribute_random,
    make_batches,
    padding_waste,
    simulate_grad_accum,
    synthetic_batches,
)
from xeus_forge.config import ConfigError, PipelineConfig, require_dir
from xeus_forge.labels import (
    FeatureMatrix,
    assign,
    kmeans_fit,
    logmel,
    pool_features,
    sample_label_subset,
    save_model,
)
from xeus_forge.manifest import (
    Manifest,
    ManifestEntry,
    histogram_export,
    language_stats,
    load_manifest,
    write_manifest,
)
from xeus_forge.masking import gen_mask, schedule
from xeus_forge.noise import corrupt_batch_with_provenance, load_noises, synthetic_noises
from xeus_forge.reverb import load_rirs, reverb_batch_with_provenance, synthetic_rirs
from xeus_forge.rng import stream
from xeus_forge.shards import ShardRecord, write_shard
from xeus_forge.vad import Utterance, extract_utterances, filter_max_duration, vad

logger = logging.getLogger(__name__)

MANIFEST = "manifest.jsonl"
AUDIO_DIR = "audio"
MODEL = "kmeans.bin"
LABELS = "labels.jsonl"
SHARD_DIR = "shards"
PLAN = "plan.json"
BENCH = "bench.csv"
HISTOGRAM = "histogram.csv"
STATS = "stats.json"

_LANG_DIR = re.compile(r"^[a-z]{3}$")
_UNSAFE = re.compile(r"[^A-Za-z0-9_.-]+")

T = TypeVar("T")
R = TypeVar("R")


def _pmap(fn: Callable[[T], R], items: Sequence[T], jobs: int) -> List[R]:
    """Ordered map; results are identical to the serial loop."""
    if jobs <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, items))


def _summary(command: str, **extra: Any) -> Dict[str, Any]:
    return {"command": command, "errors": [], **extra}


# -- segment ---------------------------------------------------------------

def _recording_prefix(rel: Path) -> str:
    return _UNSAFE.sub("_", rel.with_suffix("").as_posix().replace("/", "-")) + "-"


def _language_of(rel: Path) -> str:
    parts = rel.parts
    return parts[0] if len(parts) > 1 and _LANG_DIR.match(parts[0]) else "und"


def cmd_segment(cfg: PipelineConfig) -> Dict[str, Any]:
    """VAD -> utterance extraction -> duration filter -> manifest + utterance audio."""
    root = require_dir(cfg.paths.corpus_root, "corpus_root")
    out = cfg.output_dir
    out.mkdir(parents=True, exist_ok=True)
    audio_dir = out / AUDIO_DIR
    if audio_dir.exists():
        shutil.rmtree(audio_dir)
    audio_dir.mkdir()
    summary = _summary("segment", recordings=0, utterances=0, dropped_long=0)

    def work(path: Path):
        rel = path.relative_to(root)
        try:
            w = read_wav(path)
        except (OSError, ValueError) as exc:
            return rel, None, str(exc)
        if w.sample_rate != cfg.sample_rate:
            w = resample(w, cfg.sample_rate)
        utts = extract_utterances(w, vad(w, cfg.vad), _recording_prefix(rel), _language_of(rel))
        return rel, utts, None

    entries: List[ManifestEntry] = []
    for rel, utts, err in _pmap(work, sorted(root.rglob("*.wav")), cfg.jobs):
        if err is not None:
            logger.error("cannot read %s: %s", rel, err)
            summary["errors"].append({"path": rel.as_posix(), "error": err})
            continue
        summary["recordings"] += 1
        kept = filter_max_duration(utts, cfg.max_duration_s)
        summary["dropped_long"] += len(utts) - len(kept)
        for u in kept:
            audio_path = Path(AUDIO_DIR) / f"{u.id}.wav"
            write_wav(u.waveform, out / audio_path, "float32")
            entries.append(ManifestEntry(u.id, audio_path.as_posix(), u.duration_s, u.language, cfg.source_name))
    entries.sort(key=lambda e: e.id)
    write_manifest(Manifest(entries), out / MANIFEST)
    summary["utterances"] = len(entries)
    logger.info("segment: %d recordings -> %d utterances", summary["recordings"], len(entries))
    return summary


# -- label -----------------------------------------------------------------

def _load_manifest(cfg: PipelineConfig) -> Manifest:
    path = cfg.output_dir / MANIFEST
    if not path.exists():
        raise ConfigError(f"manifest {path} not found; run 'segment' first")
    return load_manifest(path)


def load_utterance(cfg: PipelineConfig, entry: ManifestEntry) -> Utterance:
    w = read_wav(cfg.output_dir / entry.path)
    if w.sample_rate != cfg.sample_rate:
        w = resample(w, cfg.sample_rate)
    return Utterance(entry.id, w, entry.language)


def features_for(cfg: PipelineConfig, w: Waveform) -> FeatureMatrix:
    km = cfg.kmeans
    return logmel(w, km.feature_dim, km.window_ms, km.hop_ms)


def cmd_label(cfg: PipelineConfig) -> Dict[str, Any]:
    """Subset sampling -> features -> k-means -> clean-audio labels for every utterance."""
    manifest = _load_manifest(cfg)
    km = cfg.kmeans
    if km.label_hours is None:
        subset = list(manifest.entries)
    else:
        subset = sample_label_subset(manifest, km.label_hours, np.random.default_rng(cfg.seed))
    feats = _pmap(lambda e: features_for(cfg, load_utterance(cfg, e).waveform), subset, cfg.jobs)
    pooled = pool_features(feats) if feats else FeatureMatrix(np.zeros((0, km.feature_dim)), km.hop_ms)
    if pooled.num_frames < km.k:
        raise ValueError(f"k-means needs at least k={km.k} frames, subset has {pooled.num_frames}")
    model = kmeans_fit(pooled, km.k, km.max_iters, cfg.seed)
    save_model(model, cfg.output_dir / MODEL)

    def label(entry: ManifestEntry) -> List[int]:
        return assign(model, features_for(cfg, load_utterance(cfg, entry).waveform)).labels.tolist()

    all_labels = _pmap(label, manifest.entries, cfg.jobs)
    with open(cfg.output_dir / LABELS, "w", encoding="utf-8", newline="\n") as fh:
        for entry, labels in zip(manifest.entries, all_labels):
            fh.write(json.dumps({"id": entry.id, "labels": labels}, separators=(",", ":")) + "\n")
    return _summary(
        "label", subset_utterances=len(subset), frames=pooled.num_frames, k=km.k,
        iterations=len(model.inertia_history), inertia=model.inertia_history[-1],
    )


def load_labels(path: Path) -> Dict[str, np.ndarray]:
    out = {}
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                row = json.loads(line)
                out[row["id"]] = np.asarray(row["labels"], dtype=np.int64)
    return out


# -- augment + shard -------------------------------------------------------

def step_groups(entries: Sequence[ManifestEntry], budget_s: float) -> List[List[ManifestEntry]]:
    """Consecutive groups that each close once they hold ``budget_s`` seconds of audio."""
    groups: List[List[ManifestEntry]] = []
    current: List[ManifestEntry] = []
    total = 0.0
    for e in entries:
        current.append(e)
        total += e.duration_s
        if total >= budget_s:
            groups.append(current)
            current, total = [], 0.0
    if current:
        groups.append(current)
    return groups


def _augment_group(
    cfg: PipelineConfig, step: int, group: Sequence[ManifestEntry], labels: Dict[str, np.ndarray],
    rirs, noises,
) -> List[ShardRecord]:
    state = schedule(step, cfg.mask.warmup_steps, cfg.mask.p_mask_warm, cfg.mask.p_mask_main)
    clean = [load_utterance(cfg, e) for e in group]
    hop = int(round(cfg.kmeans.hop_ms * cfg.sample_rate / 1000.0))
    provenance: List[Dict[str, Any]] = [{"step": step, "p_mask": state.p_mask} for _ in clean]
    if state.augmentation_enabled:
        # noise corruption always precedes reverberation
        corrupted = corrupt_batch_with_provenance(clean, noises, cfg.noise, cfg.seed)
        for prov, (_, info) in zip(provenance, corrupted):
            prov.update(info.as_dict())
        reverbed = reverb_batch_with_provenance([u for u, _ in corrupted], rirs, cfg.reverb, cfg.seed)
        for prov, (_, rir_id) in zip(provenance, reverbed):
            prov["rir_id"] = rir_id
        augmented = [u for u, _ in reverbed]
    else:
        for prov in provenance:
            prov.update({"corruption": "none", "rir_id": None, "augmentation": "disabled"})
        augmented = clean

    records = []
    for u, prov in zip(augmented, provenance):
        if u.id not in labels:
            raise KeyError(f"no labels for utterance {u.id!r}; run 'label' first")
        lab = labels[u.id]
        frames = -(-len(u) // hop)
        if len(lab) != frames:
            raise ValueError(f"{u.id}: {len(lab)} labels but {frames} frames")
        mask = gen_mask(frames, state.p_mask, cfg.mask.span_len, stream(cfg.seed, u.id, "mask"))
        records.append(ShardRecord(u.id, u.sample_rate, u.waveform.samples, lab, mask.span_len, mask.span_starts, prov))
    return records


def _load_augmentation_sources(cfg: PipelineConfig):
    rirs: list = []
    noises: dict = {}
    if cfg.reverb.p_r > 0:
        if cfg.paths.rir_dir is None:
            rirs = list(synthetic_rirs(sample_rate=cfg.sample_rate).values())
        else:
            rirs = load_rirs(require_dir(cfg.paths.rir_dir, "rir_dir"), cfg.sample_rate)
    if cfg.noise.p > 0:
        if cfg.paths.noise_dir is None:
            noises = synthetic_noises(cfg.sample_rate)
        else:
            noises = load_noises(require_dir(cfg.paths.noise_dir, "noise_dir"), cfg.sample_rate)
    return rirs, noises


def cmd_augment_shard(cfg: PipelineConfig) -> Dict[str, Any]:
    """noise -> reverb -> mask at the scheduled step -> shard records (labels from clean audio)."""
    manifest = _load_manifest(cfg)
    labels_path = cfg.output_dir / LABELS
    if not labels_path.exists():
        raise ConfigError(f"labels {labels_path} not found; run 'label' first")
    labels = load_labels(labels_path)
    rirs, noises = _load_augmentation_sources(cfg)

    groups = step_groups(manifest.entries, cfg.batch.budget_s)
    jobs = [(cfg.mask.start_step + i, g) for i, g in enumerate(groups)]
    results = _pmap(lambda job: _augment_group(cfg, job[0], job[1], labels, rirs, noises), jobs, cfg.jobs)
    records = [r for group in results for r in group]

    shard_dir = cfg.output_dir / SHARD_DIR
    if shard_dir.exists():
        shutil.rmtree(shard_dir)
    shard_dir.mkdir(parents=True)
    paths = []
    for n, begin in enumerate(range(0, len(records), cfg.shard_size)):
        path = shard_dir / f"shard-{n:05d}.xshd"
        write_shard(records[begin:begin + cfg.shard_size], path)
        paths.append(path.name)

    counts: Dict[str, int] = {}
    for r in records:
        counts[r.provenance["corruption"]] = counts.get(r.provenance["corruption"], 0) + 1
    reverbed = sum(1 for r in records if r.provenance.get("rir_id"))
    return _summary("augment", records=len(records), shards=paths, steps=len(groups),
                    corruption_counts=counts, reverberated=reverbed)


# -- batch -----------------------------------------------------------------

def _batch_json(b: Batch) -> Dict[str, Any]:
    return {"ids": list(b.ids), "durations": list(b.durations), "max_len_s": b.max_len_s,
            "padded_footprint_s": b.padded_footprint_s}


def cmd_batch(cfg: PipelineConfig) -> Dict[str, Any]:
    """Sorted first-fit batching under the padded budget, then length-aware worker rows."""
    manifest = _load_manifest(cfg)
    budget = cfg.batch.budget_s
    if budget < cfg.max_duration_s:
        logger.warning("batch budget %.1f s is below the duration filter %.1f s", budget, cfg.max_duration_s)
    batches = make_batches(manifest.entries, budget)
    plan = distribute_length_aware(batches, cfg.batch.workers)
    doc = {
        "budget_s": budget,
        "workers": cfg.batch.workers,
        "padding_waste": padding_waste(batches),
        "batches": [_batch_json(b) for b in batches],
        "steps": [list(row) for row in plan.steps],
    }
    with open(cfg.output_dir / PLAN, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(doc, fh, indent=1)
        fh.write("\n")
    return _summary("batch", batches=len(batches), steps=len(plan.steps), padding_waste=doc["padding_waste"])


def load_plan(path: Path) -> Tuple[List[Batch], List[List[Optional[int]]]]:
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    batches = [Batch(tuple(b["ids"]), tuple(b["durations"])) for b in doc["batches"]]
    return batches, doc["steps"]


# -- bench -----------------------------------------------------------------

BENCH_COLUMNS = ("strategy", "W", "accum", "total_wait_s", "padding_waste", "relative_throughput")


def bench_rows(batches: Sequence[Batch], W: int, accums: Iterable[int], seed: int) -> List[Dict[str, Any]]:
    """Random vs length-aware distribution for each accumulation factor.

    Relative throughput is the (work + wait) of random distribution without
    accumulation divided by that of each row.
    """
    assignments = {
        "random": distribute_random(batches, W, np.random.default_rng(seed)),
        "length_aware": distribute_length_aware(batches, W),
    }
    baseline = simulate_grad_accum(assignments["random"], batches, 1)
    rows = []
    for strategy, a in assignments.items():
        for accum in accums:
            rep = simulate_grad_accum(a, batches, accum)
            rows.append({
                "strategy": strategy, "W": W, "accum": accum,
                "total_wait_s": rep.total_sync_wait_s,
                "padding_waste": rep.total_padding_waste,
                "relative_throughput": rep.relative_throughput(baseline),
            })
    return rows


def cmd_bench(cfg: PipelineConfig) -> Dict[str, Any]:
    b = cfg.bench
    if b.source == "manifest":
        batches = make_batches(_load_manifest(cfg).entries, cfg.batch.budget_s)
    else:
        batches = synthetic_batches(b.num_batches, cfg.batch.budget_s, cfg.seed, b.mu, b.sigma)
    rows = bench_rows(batches, b.workers, b.accums, cfg.seed)
    cfg.output_dir.mkdir(parents=True, exist_ok=True)
    with open(cfg.output_dir / BENCH, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(BENCH_COLUMNS)
        for r in rows:
            writer.writerow([r["strategy"], r["W"], r["accum"], f"{r['total_wait_s']:.6f}",
                             f"{r['padding_waste']:.6f}", f"{r['relative_throughput']:.6f}"])
    return _summary("bench", batches=len(batches), rows=rows)


# -- stats -----------------------------------------------------------------

def cmd_stats(cfg: PipelineConfig) -> Dict[str, Any]:
    manifest = _load_manifest(cfg)
    s = cfg.stats
    stats = language_stats(manifest, s.exclude_und)
    histogram_export(manifest, cfg.output_dir / HISTOGRAM, s.exclude_und)
    doc = {
        "languages": len(stats.hours),
        "total_hours": stats.total_hours,
        f"top_{s.top_n}_share": stats.top_n_share(s.top_n),
        f"count_at_least_{s.min_hours:g}h": stats.count_at_least(s.min_hours),
    }
    with open(cfg.output_dir / STATS, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(doc, fh, indent=1, sort_keys=True)
        fh.write("\n")
    return _summary("stats", **doc)


COMMANDS: Dict[str, Callable[[PipelineConfig], Dict[str, Any]]] = {
    "segment": cmd_segment,
    "label": cmd_label,
    "augment": cmd_augment_shard,
    "batch": cmd_batch,
    "bench": cmd_bench,
    "stats": cmd_stats,
}
