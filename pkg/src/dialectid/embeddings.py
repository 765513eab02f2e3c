"""Subword-aware skip-gram embeddings with negative sampling.

A token's vector is its word vector (if in vocabulary) plus the sum of the
vectors of its hashed character n-grams, taken from ``<token>``.
"""

from __future__ import annotations

import json
import logging
import struct
from collections import Counter
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

from . import _backend
from ._seeding import rng_for

log = logging.getLogger(__name__)

MAGIC = b"DEMB"
VERSION = 1
_HEADER = struct.Struct("<4sIIII")

FNV_OFFSET = 0x811C9DC5
FNV_PRIME = 0x01000193


class EmbeddingError(ValueError):
    pass


@dataclass
class EmbeddingConfig:
    dim: int = 100
    window: int = 5
    negatives: int = 5
    minn: int = 3
    maxn: int = 6
    bucket_count: int = 2 ** 20
    epochs: int = 5
    lr: float = 0.05
    min_count: int = 2
    seed: int = 0

    def __post_init__(self):
        if self.dim < 1 or self.window < 1 or self.negatives < 1:
            raise EmbeddingError("dim, window and negatives must be >= 1")
        b = self.bucket_count
        if b < 1 or b & (b - 1):
            raise EmbeddingError(f"bucket_count must be a power of two, got {b}")
        if not 1 <= self.minn <= self.maxn:
            raise EmbeddingError("need 1 <= minn <= maxn")
        if self.epochs < 0:
            raise EmbeddingError("epochs must be >= 0")


def fnv1a(s: str) -> int:
    h = FNV_OFFSET
    for byte in s.encode("utf-8"):
        h ^= byte
        h = (h * FNV_PRIME) & 0xFFFFFFFF
    return h


def subwords(token: str, minn: int = 3, maxn: int = 6) -> list[str]:
    """Character n-grams of ``<token>``, excluding the whole padded string."""
    padded = "<" + token + ">"
    size = len(padded)
    out = []
    for n in range(minn, maxn + 1):
        for i in range(size - n + 1):
            g = padded[i:i + n]
            if g != padded:
                out.append(g)
    return out


@dataclass
class EmbeddingModel:
    vocab: list[str]
    counts: np.ndarray
    w_in: np.ndarray
    w_out: np.ndarray
    config: EmbeddingConfig
    history: list = field(default_factory=list)

    def __post_init__(self):
        self.index = {t: i for i, t in enumerate(self.vocab)}
        self._rows_cache = {}

    @property
    def dim(self) -> int:
        return self.config.dim

    def component_rows(self, token: str) -> np.ndarray:
        rows = self._rows_cache.get(token)
        if rows is None:
            cfg = self.config
            mask = cfg.bucket_count - 1
            v = len(self.vocab)
            ids = [v + (fnv1a(g) & mask) for g in subwords(token, cfg.minn, cfg.maxn)]
            wi = self.index.get(token)
            if wi is not None:
                ids.insert(0, wi)
            rows = np.asarray(ids, dtype=np.int32)
            self._rows_cache[token] = rows
        return rows

    def save(self, path) -> None:
        cfg = self.config
        with open(path, "wb") as fh:
            fh.write(_HEADER.pack(MAGIC, VERSION, cfg.dim, len(self.vocab), cfg.bucket_count))
            meta = json.dumps({"config": asdict(cfg), "history": self.history}, sort_keys=True).encode()
            fh.write(struct.pack("<I", len(meta)))
            fh.write(meta)
            for tok, c in zip(self.vocab, self.counts):
                b = tok.encode("utf-8")
                fh.write(struct.pack("<QI", int(c), len(b)))
                fh.write(b)
            fh.write(np.ascontiguousarray(self.w_in, dtype="<f4").tobytes())
            fh.write(np.ascontiguousarray(self.w_out, dtype="<f4").tobytes())

    @classmethod
    def load(cls, path) -> "EmbeddingModel":
        with open(path, "rb") as fh:
            magic, version, dim, vsize, buckets = _HEADER.unpack(fh.read(_HEADER.size))
            if magic != MAGIC:
                raise EmbeddingError(f"{path}: not an embedding model file")
            if version != VERSION:
                raise EmbeddingError(f"{path}: unsupported version {version}")
            (mlen,) = struct.unpack("<I", fh.read(4))
            meta = json.loads(fh.read(mlen))
            vocab, counts = [], []
            for _ in range(vsize):
                c, blen = struct.unpack("<QI", fh.read(12))
                vocab.append(fh.read(blen).decode("utf-8"))
                counts.append(c)
            w_in = np.frombuffer(fh.read((vsize + buckets) * dim * 4), dtype="<f4")
            w_out = np.frombuffer(fh.read(vsize * dim * 4), dtype="<f4")
        cfg = EmbeddingConfig(**meta["config"])
        return cls(vocab, np.asarray(counts, dtype=np.int64),
                   w_in.reshape(vsize + buckets, dim).astype(np.float32),
                   w_out.reshape(vsize, dim).astype(np.float32), cfg, meta["history"])


def embed_token(model: EmbeddingModel, token: str) -> np.ndarray:
    rows = model.component_rows(token)
    if len(rows) == 0:
        return np.zeros(model.dim)
    return model.w_in[rows].astype(np.float64).sum(axis=0)


def _build_vocab(sentences, min_count):
    counts = Counter(t for s in sentences for t in s.tokens)
    kept = sorted((t for t, c in counts.items() if c >= min_count), key=lambda t: (-counts[t], t))
    return kept, np.asarray([counts[t] for t in kept], dtype=np.int64)


def _make_pairs(tok_ids, vocab_ids, sent_ids, window, rng):
    """Skip-gram (center, context) pairs with a randomly shrunk window per center."""
    n = len(tok_ids)
    if n == 0:
        return np.zeros(0, np.int32), np.zeros(0, np.int32)
    spans = rng.integers(1, window + 1, size=n)
    pos, ctx, off = [], [], []
    idx = np.arange(n)
    for o in range(1, window + 1):
        for sign in (-1, 1):
            j = idx + sign * o
            ok = (j >= 0) & (j < n)
            i_ok, j_ok = idx[ok], j[ok]
            ok2 = (sent_ids[i_ok] == sent_ids[j_ok]) & (spans[i_ok] >= o) & (vocab_ids[j_ok] >= 0)
            pos.append(i_ok[ok2])
            ctx.append(j_ok[ok2])
            off.append(np.full(int(ok2.sum()), sign * o))
    pos = np.concatenate(pos)
    ctx = np.concatenate(ctx)
    off = np.concatenate(off)
    order = np.lexsort((off, pos))
    return tok_ids[pos[order]].astype(np.int32), vocab_ids[ctx[order]].astype(np.int32)


def sgns_loss_and_grad(h, pos_out, neg_out):
    """Negative-sampling loss for one center vector and its gradients.

    ``loss = -log s(h.o+) - sum_k log s(-h.o_k)``. Returns
    ``(loss, d/dh, d/do+, d/do_k)``.
    """
    s_pos = h @ pos_out
    s_neg = neg_out @ h
    loss = np.logaddexp(0.0, -s_pos) + np.logaddexp(0.0, s_neg).sum()
    g_pos = -1.0 / (1.0 + np.exp(s_pos))  # d loss / d s_pos
    g_neg = 1.0 / (1.0 + np.exp(-s_neg))
    dh = g_pos * pos_out + g_neg @ neg_out
    return loss, dh, g_pos * h, np.outer(g_neg, h)


def _heldout_loss(w_in, w_out, comp_ptr, comp_idx, centers, contexts, negatives):
    if len(centers) == 0:
        return float("nan")
    total = 0.0
    for p in range(len(centers)):
        c = centers[p]
        h = w_in[comp_idx[comp_ptr[c]:comp_ptr[c + 1]]].astype(np.float64).sum(axis=0)
        loss, *_ = sgns_loss_and_grad(h, w_out[contexts[p]].astype(np.float64),
                                      w_out[negatives[p]].astype(np.float64))
        total += loss
    return float(total / len(centers))


def train_embeddings(sentences: Sequence, config: EmbeddingConfig | None = None,
                     chunk_pairs: int = 50000) -> EmbeddingModel:
    """Train skip-gram vectors with negative sampling on tokenized sentences.

    One percent of the sentences is held out; the mean negative-sampling
    loss on it is logged after every epoch and stored in ``model.history``.
    """
    config = config or EmbeddingConfig()
    if not sentences:
        raise EmbeddingError("no sentences to train on")
    vocab, counts = _build_vocab(sentences, config.min_count)
    if not vocab:
        raise EmbeddingError(f"empty vocabulary (no token occurs >= {config.min_count} times)")
    v, dim = len(vocab), config.dim

    rng = rng_for(config.seed, "embeddings-init")
    w_in = rng.random((v + config.bucket_count, dim), dtype=np.float32)
    w_in -= np.float32(0.5)
    w_in *= np.float32(1.0 / dim)
    w_out = np.zeros((v, dim), dtype=np.float32)
    model = EmbeddingModel(vocab, counts, w_in, w_out, config)

    # every distinct token may be a center, OOV tokens through their subwords only
    table = {}
    for s in sentences:
        for t in s.tokens:
            if t not in table:
                table[t] = len(table)
    comp = [model.component_rows(t) for t in table]
    comp_ptr = np.zeros(len(comp) + 1, dtype=np.int32)
    comp_ptr[1:] = np.cumsum([len(c) for c in comp])
    comp_idx = np.concatenate(comp).astype(np.int32) if comp else np.zeros(0, np.int32)
    if np.any(np.diff(comp_ptr) == 0):
        raise EmbeddingError("token without any vector components")

    order = rng_for(config.seed, "embeddings-heldout").permutation(len(sentences))
    n_held = len(sentences) // 100 if len(sentences) >= 100 else (1 if len(sentences) > 1 else 0)
    held_set = set(order[:n_held].tolist())

    def flatten(which):
        tok, voc, sid = [], [], []
        for k, s in enumerate(sentences):
            if (k in held_set) != which:
                continue
            for t in s.tokens:
                tok.append(table[t])
                voc.append(model.index.get(t, -1))
                sid.append(k)
        return (np.asarray(tok, dtype=np.int64), np.asarray(voc, dtype=np.int64),
                np.asarray(sid, dtype=np.int64))

    train_flat = flatten(False)
    held_flat = flatten(True)

    noise = counts.astype(np.float64) ** 0.75
    noise /= noise.sum()

    hrng = rng_for(config.seed, "embeddings-heldout-pairs")
    h_centers, h_contexts = _make_pairs(*held_flat, config.window, hrng)
    h_negs = hrng.choice(v, size=(len(h_centers), config.negatives), p=noise).astype(np.int32)

    def epoch_pairs(epoch):
        erng = rng_for(config.seed, "embeddings-epoch", epoch)
        centers, contexts = _make_pairs(*train_flat, config.window, erng)
        negs = erng.choice(v, size=(len(centers), config.negatives), p=noise).astype(np.int32)
        return centers, contexts, negs

    # linear learning-rate decay over an estimated total of epochs * first-epoch pairs
    total = None
    done = 0
    for epoch in range(config.epochs):
        centers, contexts, negs = epoch_pairs(epoch)
        if total is None:
            total = max(1, len(centers) * config.epochs)
        train_loss = 0.0
        for start in range(0, len(centers), chunk_pairs):
            stop = min(start + chunk_pairs, len(centers))
            lr = config.lr * max(1e-4, 1.0 - done / total)
            train_loss += _backend.train_pairs(
                w_in, w_out, comp_ptr, comp_idx,
                centers[start:stop], contexts[start:stop],
                np.ascontiguousarray(negs[start:stop]), lr)
            done += stop - start
        held = _heldout_loss(w_in, w_out, comp_ptr, comp_idx, h_centers, h_contexts, h_negs)
        rec = {"epoch": epoch + 1, "train_loss": train_loss / max(1, len(centers)),
               "heldout_loss": held}
        model.history.append(rec)
        log.info("embeddings epoch %d: train loss %.4f, held-out loss %.4f",
                 epoch + 1, rec["train_loss"], held)
    return model


class SentenceMatrix:
    """Embedded sentence padded (or truncated) to ``length`` rows.

    Only the valid rows are stored; ``rows`` and ``mask`` materialise the
    padded view on demand.
    """

    __slots__ = ("valid", "length", "label", "tokens")

    def __init__(self, valid: np.ndarray, length: int, label: str, tokens=()):
        valid = np.asarray(valid, dtype=np.float64)
        if valid.ndim != 2 or valid.shape[0] < 1:
            raise EmbeddingError("a sentence matrix needs at least one valid row")
        if valid.shape[0] > length:
            raise EmbeddingError("more valid rows than the padded length")
        self.valid = valid
        self.length = length
        self.label = label
        self.tokens = tuple(tokens)

    @property
    def dim(self) -> int:
        return self.valid.shape[1]

    @property
    def n_valid(self) -> int:
        return self.valid.shape[0]

    @property
    def rows(self) -> np.ndarray:
        out = np.zeros((self.length, self.dim))
        out[: self.n_valid] = self.valid
        return out

    @property
    def mask(self) -> np.ndarray:
        m = np.zeros(self.length, dtype=bool)
        m[: self.n_valid] = True
        return m


def embed_sentence(model: EmbeddingModel, sentence, max_len: int = 60) -> SentenceMatrix:
    tokens = list(sentence.tokens)[:max_len]
    if not tokens:
        raise EmbeddingError("cannot embed an empty sentence")
    valid = np.stack([embed_token(model, t) for t in tokens])
    return SentenceMatrix(valid, max_len, sentence.variety, tokens)


def mean_sentence_vector(matrix: SentenceMatrix) -> np.ndarray:
    if matrix.n_valid == 0:
        raise EmbeddingError("all rows are masked")
    return matrix.valid.mean(axis=0)


def nearest_neighbors(model: EmbeddingModel, token: str, k: int = 10) -> list[tuple[str, float]]:
    q = embed_token(model, token)
    qn = np.linalg.norm(q)
    if qn == 0:
        return []
    mat = np.stack([embed_token(model, t) for t in model.vocab])
    norms = np.linalg.norm(mat, axis=1)
    norms[norms == 0] = 1.0
    sims = mat @ q / (norms * qn)
    order = np.lexsort((np.arange(len(sims)), -sims))
    out = []
    for i in order:
        if model.vocab[i] == token:
            continue
        out.append((model.vocab[i], float(sims[i])))
        if len(out) == k:
            break
    return out


def cosine(a: np.ndarray, b: np.ndarray) -> float:
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0 or nb == 0:
        return 0.0
    return float(a @ b / (na * nb))
