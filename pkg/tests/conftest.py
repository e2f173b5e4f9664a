from __future__ import annotations

import json
import sys
from pathlib import Path

import numpy as np
import pytest

from xeus_forge.audio import Waveform
from xeus_forge.vad import Utterance

sys.path.insert(0, str(Path(__file__).parent))


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def make_utt(uid: str, samples, sr: int = 16000, language: str = "und") -> Utterance:
    return Utterance(uid, Waveform(np.asarray(samples, dtype=np.float64), sr), language)


def random_utt(rng, uid="u", seconds=1.0, sr=16000) -> Utterance:
    return make_utt(uid, rng.uniform(-0.5, 0.5, int(seconds * sr)), sr)


@pytest.fixture(scope="session")
def fixture_corpus(tmp_path_factory):
    """Ten 60 s speech-like recordings in three languages, plus RIR and noise dirs."""
    from xeus_forge.synth import write_fixture_corpus

    root = tmp_path_factory.mktemp("fixture")
    corpus, rirs, noises = write_fixture_corpus(root)
    return {"root": root, "corpus": corpus, "rirs": rirs, "noises": noises}


def write_config(path: Path, fixture, output_dir: Path, **overrides) -> Path:
    doc = {
        "seed": 7,
        "paths": {
            "corpus_root": str(fixture["corpus"]),
            "rir_dir": str(fixture["rirs"]),
            "noise_dir": str(fixture["noises"]),
            "output_dir": str(output_dir),
        },
        "kmeans": {"k": 32, "max_iters": 50},
        "mask": {"start_step": 3000},
    }
    for key, value in overrides.items():
        if isinstance(value, dict) and isinstance(doc.get(key), dict):
            doc[key] = {**doc[key], **value}
        else:
            doc[key] = value
    path.write_text(json.dumps(doc))
    return path
