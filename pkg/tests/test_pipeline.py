import csv
import json
import shutil

import numpy as np
import pytest

from xeus_forge.audio import read_wav
from xeus_forge.cli import main
from xeus_forge.labels import assign, load_model, logmel
from xeus_forge.manifest import load_manifest
from xeus_forge.pipeline import BENCH_COLUMNS, load_labels, load_plan, step_groups
from xeus_forge.shards import read_shard

from conftest import write_config


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


@pytest.fixture(scope="module")
def labelled(fixture_corpus, tmp_path_factory):
    """Output directory holding segment + label results for the fixture corpus."""
    base = tmp_path_factory.mktemp("labelled")
    cfg = write_config(base / "cfg.json", fixture_corpus, base / "out")
    assert main(["segment", "--config", str(cfg)]) == 0
    assert main(["label", "--config", str(cfg)]) == 0
    return base / "out"


@pytest.fixture
def workdir(labelled, fixture_corpus, tmp_path):
    out = tmp_path / "out"
    shutil.copytree(labelled, out)

    def config(**overrides):
        return str(write_config(tmp_path / "cfg.json", fixture_corpus, out, **overrides))

    return out, config


def test_segment_outputs(labelled):
    m = load_manifest(labelled / "manifest.jsonl")
    assert len(m) > 10
    assert {e.language for e in m} == {"eng", "que", "swh"}
    assert all(0 < e.duration_s <= 40.0 for e in m)
    assert [e.id for e in m] == sorted(e.id for e in m)
    w = read_wav(labelled / m.entries[0].path)
    assert len(w) == round(m.entries[0].duration_s * 16000)


def test_summary_json_on_stdout(workdir, capsys):
    _, config = workdir
    code, out, err = run(capsys, "batch", "--config", config())
    assert code == 0 and err == ""
    summary = json.loads(out)
    assert summary["ok"] and summary["command"] == "batch" and summary["errors"] == []


def test_label_lengths_match_frames(labelled):
    labels = load_labels(labelled / "labels.jsonl")
    m = load_manifest(labelled / "manifest.jsonl")
    assert set(labels) == {e.id for e in m}
    for e in m:
        n = len(read_wav(labelled / e.path))
        assert len(labels[e.id]) == -(-n // 320)


def test_augment_keeps_clean_labels_and_records_provenance(workdir, capsys):
    out, config = workdir
    assert run(capsys, "augment", "--config", config())[0] == 0
    labels = load_labels(out / "labels.jsonl")
    records = [r for p in sorted((out / "shards").iterdir()) for r in read_shard(p)]
    assert len(records) == len(labels)
    choices = {r.provenance["corruption"] for r in records}
    assert "none" in choices and len(choices) > 1
    assert any(r.provenance["rir_id"] for r in records)
    for r in records:
        np.testing.assert_array_equal(r.labels, labels[r.id])
        r.check_frames(320)
        assert r.provenance["p_mask"] == 0.8
        assert len(r.span_starts) == int(0.8 * len(r.labels) / 10 + 0.5)


def test_zero_probabilities_give_clean_samples(workdir, capsys):
    out, config = workdir
    code, _, _ = run(capsys, "augment", "--config", config(noise={"p": 0.0}, reverb={"p_r": 0.0}))
    assert code == 0
    m = load_manifest(out / "manifest.jsonl").by_id()
    for p in sorted((out / "shards").iterdir()):
        for r in read_shard(p):
            clean = read_wav(out / m[r.id].path).samples
            assert r.samples.tobytes() == clean.tobytes()


def test_warmup_disables_augmentation(workdir, capsys):
    out, config = workdir
    assert run(capsys, "augment", "--config", config(mask={"start_step": 0}))[0] == 0
    records = [r for p in sorted((out / "shards").iterdir()) for r in read_shard(p)]
    assert all(r.provenance["augmentation"] == "disabled" for r in records)
    assert {r.provenance["p_mask"] for r in records} == {0.65}


def test_step_groups_close_at_budget():
    from xeus_forge.manifest import ManifestEntry

    entries = [ManifestEntry(f"u{i}", "x.wav", d) for i, d in enumerate([60, 50, 10, 30, 70, 5])]
    groups = step_groups(entries, 100)
    assert [[e.id for e in g] for g in groups] == [["u0", "u1"], ["u2", "u3", "u4"], ["u5"]]


def test_jobs_do_not_change_outputs(workdir, capsys, tmp_path):
    out, config = workdir
    assert run(capsys, "augment", "--config", config())[0] == 0
    serial = {p.name: p.read_bytes() for p in (out / "shards").iterdir()}
    assert run(capsys, "augment", "--config", config(), "--jobs", "4")[0] == 0
    assert {p.name: p.read_bytes() for p in (out / "shards").iterdir()} == serial


def test_batch_plan(workdir, capsys):
    out, config = workdir
    assert run(capsys, "batch", "--config", config(batch={"budget_s": 100, "workers": 3}))[0] == 0
    batches, steps = load_plan(out / "plan.json")
    ids = [i for b in batches for i in b.ids]
    assert sorted(ids) == sorted(e.id for e in load_manifest(out / "manifest.jsonl"))
    assert all(b.padded_footprint_s <= 100 for b in batches)
    slots = [s for row in steps for s in row if s is not None]
    assert sorted(slots) == list(range(len(batches)))
    assert all(len(row) == 3 for row in steps)


def test_bench_csv(workdir, capsys):
    out, config = workdir
    assert run(capsys, "bench", "--config", config(bench={"num_batches": 200}))[0] == 0
    with open(out / "bench.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert tuple(rows[0]) == BENCH_COLUMNS
    wait = {(r["strategy"], int(r["accum"])): float(r["total_wait_s"]) for r in rows}
    for accum in (1, 4):
        assert wait[("length_aware", accum)] < wait[("random", accum)]
    assert float(rows[0]["relative_throughput"]) == 1.0


def test_bench_single_worker_has_no_wait(workdir, capsys):
    out, config = workdir
    assert run(capsys, "bench", "--config", config(bench={"num_batches": 50, "workers": 1}))[0] == 0
    with open(out / "bench.csv") as fh:
        assert all(float(r["total_wait_s"]) == 0.0 for r in csv.DictReader(fh))


def test_stats(workdir, capsys):
    out, config = workdir
    code, stdout, _ = run(capsys, "stats", "--config", config())
    assert code == 0
    doc = json.loads((out / "stats.json").read_text())
    assert doc["languages"] == 3 and doc["top_50_share"] == 1.0
    assert (out / "histogram.csv").read_text().startswith("language,hours,log10_hours\n")


def test_k1_centroid_is_global_mean(workdir, capsys):
    out, config = workdir
    assert run(capsys, "label", "--config", config(kmeans={"k": 1}))[0] == 0
    model = load_model(out / "kmeans.bin")
    feats = np.vstack([logmel(read_wav(out / e.path)).frames for e in load_manifest(out / "manifest.jsonl")])
    np.testing.assert_allclose(model.centroids[0], feats.mean(axis=0), rtol=1e-5, atol=1e-4)
    labels = load_labels(out / "labels.jsonl")
    assert all(set(v.tolist()) == {0} for v in labels.values())


def test_labels_follow_model(labelled):
    model = load_model(labelled / "kmeans.bin")
    labels = load_labels(labelled / "labels.jsonl")
    e = load_manifest(labelled / "manifest.jsonl").entries[3]
    expected = assign(model, logmel(read_wav(labelled / e.path))).labels
    np.testing.assert_array_equal(labels[e.id], expected)


def test_missing_manifest_is_reported(tmp_path, fixture_corpus, capsys):
    cfg = write_config(tmp_path / "c.json", fixture_corpus, tmp_path / "nothing")
    code, out, err = run(capsys, "label", "--config", str(cfg))
    assert code == 1 and out == ""
    summary = json.loads(err)
    assert summary["ok"] is False and "segment" in summary["errors"][0]["error"]


def test_bad_config_is_reported(tmp_path, capsys):
    p = tmp_path / "c.json"
    p.write_text(json.dumps({"noise": {"prob": 0.3}}))
    code, _, err = run(capsys, "bench", "--config", str(p))
    assert code == 1
    assert json.loads(err)["errors"][0]["type"] == "ConfigError"
    code, _, err = run(capsys, "bench", "--config", str(tmp_path / "missing.json"))
    assert code == 1 and json.loads(err)["errors"][0]["type"] == "FileNotFoundError"


def test_noise_flag_validation(workdir, capsys):
    _, config = workdir
    code, _, err = run(capsys, "batch", "--config", config(), "--snr-min", "25")
    assert code == 1 and "snr" in json.loads(err)["errors"][0]["error"]
    assert run(capsys, "batch", "--config", config(), "--p-noise", "0.5", "--snr-max", "10")[0] == 0


def test_usage_error_exit_code(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["train", "--config", "x"])
    assert exc.value.code == 2


def test_unreadable_recording_reported_and_run_continues(tmp_path, capsys):
    corpus = tmp_path / "corpus" / "eng"
    corpus.mkdir(parents=True)
    from xeus_forge.audio import write_wav
    from xeus_forge.synth import tone_bursts

    write_wav(tone_bursts([(0.5, 1.5)], 2.0), corpus / "good.wav")
    (corpus / "broken.wav").write_bytes(b"RIFF\x00\x00")
    fx = {"corpus": tmp_path / "corpus", "rirs": tmp_path, "noises": tmp_path}
    cfg = write_config(tmp_path / "c.json", fx, tmp_path / "out")
    code, out, err = run(capsys, "segment", "--config", str(cfg))
    assert code == 1
    summary = json.loads(out)
    assert summary["recordings"] == 1 and summary["utterances"] == 1
    assert json.loads(err)["errors"][0]["path"] == "eng/broken.wav"
    assert len(load_manifest(tmp_path / "out" / "manifest.jsonl")) == 1


def test_empty_corpus(tmp_path, capsys):
    (tmp_path / "corpus").mkdir()
    fx = {"corpus": tmp_path / "corpus", "rirs": tmp_path, "noises": tmp_path}
    cfg = write_config(tmp_path / "c.json", fx, tmp_path / "out")
    code, out, _ = run(capsys, "segment", "--config", str(cfg))
    assert code == 0 and json.loads(out)["utterances"] == 0
    assert (tmp_path / "out" / "manifest.jsonl").read_text() == ""
