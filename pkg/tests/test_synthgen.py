import json

import numpy as np
import pytest

from dialectid.corpus import load_corpus, prepare_dataset
from dialectid.pipeline import ModelSpec
from dialectid.evaluation import run_experiment
from dialectid.synthgen import SynthConfig, SynthError, build_tables, class_chains, default_labels, generate


def test_default_labels():
    assert default_labels(3) == ["A", "B", "C"]
    assert default_labels(28)[26:] == ["AA", "AB"]


def test_delta_zero_identical_chains():
    chains = class_chains(SynthConfig(k=4, delta=0.0, seed=1))
    for c in chains[1:]:
        assert np.array_equal(c.table, chains[0].table)


def test_delta_one_disjoint_symbols():
    cfg = SynthConfig(k=3, delta=1.0, seed=2, sentences_per_class=50)
    docs, _ = generate(cfg)
    sets = {}
    for d in docs:
        sets.setdefault(d.variety, set()).update(d.text.replace(" ", "").replace("\n", ""))
    a, b, c = sets.values()
    assert not (a & b) and not (a & c) and not (b & c)


def test_tables_are_distributions():
    shared, own = build_tables(SynthConfig(k=2, seed=0))
    assert np.allclose(shared.sum(1), 1.0)
    for t in own:
        assert np.allclose(t.sum(1), 1.0)
    _, small = build_tables(SynthConfig(k=4, alphabet="abc", seed=0))
    assert all(np.allclose(t.sum(1), 1.0) for t in small)


def test_invalid_configs():
    with pytest.raises(SynthError):
        SynthConfig(delta=1.5)
    with pytest.raises(SynthError, match="degenerate"):
        SynthConfig(alphabet="ab")
    with pytest.raises(SynthError):
        SynthConfig(k=1)


def test_same_seed_same_bytes(tmp_path):
    cfg = SynthConfig(k=3, sentences_per_class=40, seed=7)
    generate(cfg, tmp_path / "a")
    generate(cfg, tmp_path / "b")
    files = sorted(p.relative_to(tmp_path / "a") for p in (tmp_path / "a").rglob("*") if p.is_file())
    assert files
    for f in files:
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()


def test_output_is_loadable(tmp_path):
    cfg = SynthConfig(k=3, sentences_per_class=40, seed=7, sentences_per_doc=15)
    _, manifest = generate(cfg, tmp_path)
    corpus = load_corpus(manifest)
    assert corpus.labels == ["A", "B", "C"]
    data = prepare_dataset(corpus, min_variety_tokens=0)
    assert len(data) == 120
    assert all(5 <= len(s) <= 12 for s in data)
    assert all(5 <= len(t) <= 15 for s in data for t in s.tokens)
    side = json.loads((tmp_path / "synth_config.json").read_text())
    assert side["delta"] == 1.0 and side["labels"] == ["A", "B", "C"]


def test_two_classes_textcat_separates(tmp_path):
    _, manifest = generate(SynthConfig(k=2, delta=1.0, sentences_per_class=100, seed=5), tmp_path)
    data = prepare_dataset(load_corpus(manifest), min_variety_tokens=0)
    assert run_experiment(ModelSpec("textcat"), data, runs=1, seed=0).macro["f1"] == 1.0


@pytest.mark.slow
def test_textcat_monotone_in_delta(tmp_path):
    scores = []
    for delta in (0.0, 0.25, 0.5, 0.75, 1.0):
        _, m = generate(SynthConfig(k=4, delta=delta, sentences_per_class=120, seed=11), tmp_path / str(delta))
        data = prepare_dataset(load_corpus(m), min_variety_tokens=0)
        scores.append(run_experiment(ModelSpec("textcat"), data, runs=1, seed=0).macro["f1"])
    drops = [a - b for a, b in zip(scores, scores[1:]) if b < a]
    assert len(drops) <= 1 and all(d <= 0.02 for d in drops), scores
    assert abs(scores[0] - 0.25) < 0.1
