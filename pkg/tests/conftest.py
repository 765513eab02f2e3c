import os
from pathlib import Path

import pytest

from dialectid.corpus import write_manifest
from dialectid.synthgen import SynthConfig, generate

# small hashed-subword table keeps test-time training fast
SMALL_EMB = {"dim": 32, "bucket_count": 2 ** 14, "epochs": 20}


def write_corpus(root: Path, docs):
    """``docs`` is a list of (id, label, text); returns the manifest path."""
    root.mkdir(parents=True, exist_ok=True)
    rows = []
    for doc_id, label, text in docs:
        (root / f"{doc_id}.txt").write_text(text, encoding="utf-8")
        rows.append((doc_id, label, f"{doc_id}.txt", "fixture"))
    manifest = root / "manifest.tsv"
    write_manifest(manifest, rows)
    return manifest


@pytest.fixture
def tiny_synth(tmp_path):
    """Three classes over disjoint symbol sets, 100 sentences each."""
    cfg = SynthConfig(k=3, sentences_per_class=100, delta=1.0, seed=3, sentences_per_doc=20)
    _, manifest = generate(cfg, tmp_path / "synth")
    return manifest


@pytest.fixture(autouse=True)
def _isolate_out(tmp_path, monkeypatch):
    monkeypatch.setenv("DIALECTID_OUT", str(tmp_path / "out"))
    monkeypatch.delenv("DIALECTID_PURE_PYTHON", raising=False)
    yield


def pytest_configure(config):
    os.environ.setdefault("PYTHONHASHSEED", "0")
