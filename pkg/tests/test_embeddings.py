import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dialectid import _sgns_py
from dialectid._backend import BACKEND
from dialectid.corpus import LabeledSentence
from dialectid.embeddings import (
    EmbeddingConfig,
    EmbeddingError,
    EmbeddingModel,
    SentenceMatrix,
    cosine,
    embed_sentence,
    embed_token,
    fnv1a,
    mean_sentence_vector,
    nearest_neighbors,
    sgns_loss_and_grad,
    subwords,
    train_embeddings,
)

from oracles import numerical_gradient, relative_error


def sents(*texts, label="AA"):
    return [LabeledSentence(tuple(t.split()), label) for t in texts]


def toy_corpus():
    return sents(*(["a b x y"] * 1000 + ["z w v u"] * 1000))


def small_cfg(**kw):
    base = dict(dim=16, bucket_count=2 ** 10, epochs=2, seed=1)
    base.update(kw)
    return EmbeddingConfig(**base)


@pytest.mark.parametrize("s, h", [("", 0x811C9DC5), ("a", 0xE40C292C), ("foobar", 0xBF9CF968)])
def test_fnv1a_reference_vectors(s, h):
    assert fnv1a(s) == h


def test_subwords_exclude_whole_token():
    assert subwords("ab", 3, 6) == ["<ab", "ab>"]
    assert "<a>" not in subwords("a")
    assert subwords("a") == []


def test_config_validation():
    with pytest.raises(EmbeddingError):
        EmbeddingConfig(bucket_count=1000)
    with pytest.raises(EmbeddingError):
        EmbeddingConfig(dim=0)


def test_zero_epochs_keeps_initialization():
    m = train_embeddings(toy_corpus()[:50], small_cfg(epochs=0))
    assert not m.w_out.any()
    assert np.all(np.abs(m.w_in) <= 0.5 / m.dim)
    m1 = train_embeddings(toy_corpus()[:50], small_cfg(epochs=1))
    again = train_embeddings(toy_corpus()[:50], small_cfg(epochs=0))
    assert np.array_equal(m.w_in, again.w_in)
    assert not np.array_equal(m.w_in, m1.w_in)


def test_cooccurrence_similarity():
    m = train_embeddings(toy_corpus(), small_cfg(epochs=3))
    a, b, z = (embed_token(m, t) for t in "abz")
    assert cosine(a, b) > cosine(a, z)
    assert [t for t, _ in nearest_neighbors(m, "a", 3)][0] in {"b", "x", "y"}


def test_training_is_bit_identical():
    m1 = train_embeddings(toy_corpus()[::10], small_cfg())
    m2 = train_embeddings(toy_corpus()[::10], small_cfg())
    assert np.array_equal(m1.w_in, m2.w_in) and np.array_equal(m1.w_out, m2.w_out)
    assert m1.history == m2.history
    assert len(m1.history) == 2 and np.isfinite(m1.history[-1]["heldout_loss"])


def test_min_count_makes_rare_tokens_oov():
    m = train_embeddings(sents("a b c d e", "a b c d e", "a b c d rare"), small_cfg())
    assert "rare" not in m.vocab and "a" in m.vocab


def hand_model(vocab, dim=4, buckets=2 ** 8, seed=0):
    rng = np.random.default_rng(seed)
    cfg = EmbeddingConfig(dim=dim, bucket_count=buckets)
    w_in = rng.standard_normal((len(vocab) + buckets, dim)).astype(np.float32)
    w_out = np.zeros((len(vocab), dim), dtype=np.float32)
    return EmbeddingModel(list(vocab), np.ones(len(vocab), dtype=np.int64), w_in, w_out, cfg)


def independent_subword_sum(model, token):
    padded = "<" + token + ">"
    total = np.zeros(model.dim)
    for n in range(3, 7):
        for i in range(len(padded) - n + 1):
            g = padded[i:i + n]
            if g == padded:
                continue
            h = 0x811C9DC5
            for byte in g.encode():
                h = ((h ^ byte) * 0x01000193) % 2 ** 32
            total += model.w_in[len(model.vocab) + h % model.config.bucket_count]
    return total


def test_oov_token_is_subword_sum():
    m = hand_model(["nikpia", "tlakatl"])
    known = embed_token(m, "nikpia")
    assert np.allclose(known - m.w_in[0], independent_subword_sum(m, "nikpia"), atol=1e-5)
    # drop the word from the vocabulary: the same token is now OOV
    oov = EmbeddingModel(["tlakatl"], np.ones(1, dtype=np.int64),
                         np.delete(m.w_in, 0, axis=0), m.w_out[1:], m.config)
    assert np.allclose(embed_token(oov, "nikpia"), independent_subword_sum(m, "nikpia"), atol=1e-5)


def test_zero_model_gives_zero_vector():
    m = hand_model(["abc"])
    m.w_in[:] = 0
    assert not embed_token(m, "abc").any()
    assert not embed_token(m, "nunca").any()
    mat = embed_sentence(m, sents("abc nunca x")[0], 10)
    assert not mat.rows.any() and mat.mask.sum() == 3


@settings(max_examples=25, deadline=None)
@given(st.text(alphabet="abcxyzñá", min_size=1, max_size=12))
def test_embed_token_pure_and_self_cosine(token):
    m = hand_model(["abc", "xyz"])
    v1, v2 = embed_token(m, token), embed_token(m, token)
    assert np.array_equal(v1, v2)
    if np.linalg.norm(v1) > 0:
        assert abs(cosine(v1, v1) - 1.0) < 1e-12


def test_sentence_matrix_shapes():
    m = hand_model(["abc"])
    short = embed_sentence(m, sents("a b c")[0], 60)
    assert short.n_valid == 3 and short.mask.sum() == 3 and short.rows.shape == (60, 4)
    long_s = sents(" ".join(f"t{i}" for i in range(80)))[0]
    long = embed_sentence(m, long_s, 60)
    assert long.n_valid == 60 and long.tokens[-1] == "t59"


def test_mean_sentence_vector():
    assert np.allclose(mean_sentence_vector(SentenceMatrix(np.eye(2), 5, "AA")), [0.5, 0.5])
    v = np.array([[3.0, -1.0]])
    assert np.array_equal(mean_sentence_vector(SentenceMatrix(v, 1, "AA")), v[0])
    assert np.array_equal(mean_sentence_vector(SentenceMatrix(np.eye(2), 2, "AA")),
                          mean_sentence_vector(SentenceMatrix(np.eye(2), 90, "AA")))


def test_sgns_gradient_finite_difference():
    rng = np.random.default_rng(0)
    for _ in range(20):
        d, k = int(rng.integers(2, 8)), int(rng.integers(1, 6))
        h, o, negs = rng.normal(size=d), rng.normal(size=d), rng.normal(size=(k, d))
        _, dh, do, dn = sgns_loss_and_grad(h, o, negs)
        for x, g in ((h, dh), (o, do), (negs, dn)):
            num = numerical_gradient(lambda: sgns_loss_and_grad(h, o, negs)[0], x)
            assert relative_error(g, num) < 1e-4


def random_problem(seed, vocab=20, buckets=16, dim=8, pairs=200, negs=5):
    rng = np.random.default_rng(seed)
    w_in = (rng.random((vocab + buckets, dim), dtype=np.float32) - 0.5) / dim
    w_out = (rng.random((vocab, dim), dtype=np.float32) - 0.5) / dim
    comps = [np.concatenate([[t], vocab + rng.choice(buckets, size=rng.integers(0, 4))])
             for t in range(vocab)]
    ptr = np.zeros(vocab + 1, dtype=np.int32)
    ptr[1:] = np.cumsum([len(c) for c in comps])
    idx = np.concatenate(comps).astype(np.int32)
    c = rng.integers(0, vocab, pairs).astype(np.int32)
    o = rng.integers(0, vocab, pairs).astype(np.int32)
    n = rng.integers(0, vocab, (pairs, negs)).astype(np.int32)
    return w_in, w_out, ptr, idx, c, o, n


@pytest.mark.skipif(BACKEND != "cython", reason="compiled kernel not built")
def test_backends_agree():
    from dialectid import _sgns

    for seed in range(5):
        a = random_problem(seed)
        b = [x.copy() for x in a]
        la = _sgns.train_pairs(*a, 0.05)
        lb = _sgns_py.train_pairs(*b, 0.05)
        assert la == pytest.approx(lb, rel=1e-5)
        assert np.allclose(a[0], b[0], atol=1e-6) and np.allclose(a[1], b[1], atol=1e-6)


def test_pure_python_backend_selected(monkeypatch):
    import importlib

    from dialectid import _backend

    monkeypatch.setenv("DIALECTID_PURE_PYTHON", "1")
    try:
        mod = importlib.reload(_backend)
        assert mod.BACKEND == "python" and mod.train_pairs is _sgns_py.train_pairs
    finally:
        monkeypatch.delenv("DIALECTID_PURE_PYTHON")
        importlib.reload(_backend)


def test_kernel_reduces_loss():
    w_in, w_out, ptr, idx, c, o, n = random_problem(3)
    first = _sgns_py.train_pairs(w_in, w_out, ptr, idx, c, o, n, 0.1)
    for _ in range(20):
        last = _sgns_py.train_pairs(w_in, w_out, ptr, idx, c, o, n, 0.1)
    assert last < first


def test_save_load_round_trip(tmp_path):
    m = train_embeddings(toy_corpus()[::20], small_cfg(epochs=1))
    m.save(tmp_path / "m.emb")
    back = EmbeddingModel.load(tmp_path / "m.emb")
    assert back.vocab == m.vocab and back.config == m.config
    assert np.array_equal(back.w_in, m.w_in) and np.array_equal(back.w_out, m.w_out)
    (tmp_path / "bad.emb").write_bytes(b"XXXX" + bytes(40))
    with pytest.raises(EmbeddingError):
        EmbeddingModel.load(tmp_path / "bad.emb")
