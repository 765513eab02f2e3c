"""Timing comparison of the compiled and pure-Python skip-gram kernels."""

import time

import numpy as np

from . import _backend, _sgns_py
from ._seeding import rng_for
from .corpus import LabeledSentence
from .embeddings import EmbeddingConfig, train_embeddings


def _toy_sentences(n, seed):
    rng = rng_for(seed, "bench")
    vocab = ["".join(rng.choice(list("aeiouklmnpstwxch"), size=rng.integers(4, 12)))
             for _ in range(300)]
    return [LabeledSentence(tuple(rng.choice(vocab, size=int(rng.integers(5, 15)))), "A")
            for _ in range(n)]


def _time(fn, sentences, cfg):
    saved = _backend.train_pairs
    _backend.train_pairs = fn
    try:
        t0 = time.perf_counter()
        model = train_embeddings(sentences, cfg)
        return time.perf_counter() - t0, model
    finally:
        _backend.train_pairs = saved


def run_benchmark(sentences=400, epochs=1, dim=50, seed=0, out=print):
    data = _toy_sentences(sentences, seed)
    cfg = EmbeddingConfig(dim=dim, bucket_count=2 ** 14, epochs=epochs, seed=seed)
    rows = {}
    t_py, m_py = _time(_sgns_py.train_pairs, data, cfg)
    rows["python"] = t_py
    if _backend.BACKEND == "cython":
        from . import _sgns
        t_cy, m_cy = _time(_sgns.train_pairs, data, cfg)
        rows["cython"] = t_cy
        diff = float(np.max(np.abs(m_cy.w_in - m_py.w_in)))
    else:
        diff = None
    out(f"skip-gram training, {sentences} sentences, dim {dim}, {epochs} epoch(s)")
    for name, t in rows.items():
        out(f"  {name:<7s} {t:8.3f} s")
    if "cython" in rows:
        out(f"  speedup {rows['python'] / rows['cython']:.1f}x, max |w_in difference| {diff:.3g}")
    else:
        out("  compiled kernel not built; only the fallback was timed")
    return rows
