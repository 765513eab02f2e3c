"""Synthetic multi-variety corpora from order-2 character Markov chains.

Each class samples characters from ``(1 - delta) * shared + delta * own``,
where ``shared`` is one transition table common to all classes and ``own``
is specific to the class. With ``delta = 0`` every class has the same
distribution; with ``delta = 1`` the class tables are used alone and, when
the alphabet has at least ``k`` symbols, they emit disjoint symbol sets.
"""

from __future__ import annotations

import json
import string
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from ._seeding import rng_for
from .corpus import Document, validate_label, write_manifest

DEFAULT_ALPHABET = "aeiouklmnpstwxyzch"


class SynthError(ValueError):
    pass


def default_labels(k: int) -> list[str]:
    """``A, B, ..., Z, AA, AB, ...`` labels for k classes."""
    out = []
    for i in range(k):
        s, n = "", i
        while True:
            s = string.ascii_uppercase[n % 26] + s
            n = n // 26 - 1
            if n < 0:
                break
        out.append(s)
    return out


@dataclass
class SynthConfig:
    k: int = 6
    sentences_per_class: int = 500
    min_tokens: int = 5
    max_tokens: int = 12
    min_token_len: int = 5
    max_token_len: int = 15
    alphabet: str = DEFAULT_ALPHABET
    order: int = 2
    delta: float = 1.0
    sentences_per_doc: int = 50
    concentration: float = 0.3
    seed: int = 0

    def __post_init__(self):
        if self.k < 2:
            raise SynthError("need at least two classes")
        if not 0.0 <= self.delta <= 1.0:
            raise SynthError(f"delta must lie in [0, 1], got {self.delta}")
        if len(set(self.alphabet)) != len(self.alphabet):
            raise SynthError("alphabet symbols must be distinct")
        if len(self.alphabet) < 3:
            raise SynthError("degenerate alphabet: need at least 3 symbols")
        if any(c.isspace() for c in self.alphabet):
            raise SynthError("alphabet must not contain whitespace")
        if not 1 <= self.min_tokens <= self.max_tokens:
            raise SynthError("invalid tokens-per-sentence range")
        if not 1 <= self.min_token_len <= self.max_token_len:
            raise SynthError("invalid token length range")
        if self.order < 1:
            raise SynthError("Markov order must be >= 1")
        if self.sentences_per_class < 1 or self.sentences_per_doc < 1:
            raise SynthError("sentence counts must be positive")


class MarkovChain:
    """Order-n character chain; context symbol ``A`` (one past the alphabet) marks word start."""

    def __init__(self, table: np.ndarray, alphabet: str, order: int):
        self.table = table  # (A + 1) ** order contexts x A symbols
        self.alphabet = alphabet
        self.order = order
        self._cum = np.cumsum(table, axis=1)

    def context_index(self, ctx) -> int:
        base = len(self.alphabet) + 1
        i = 0
        for c in ctx:
            i = i * base + c
        return i

    def sample_token(self, length: int, rng) -> str:
        A = len(self.alphabet)
        ctx = [A] * self.order
        out = []
        for u in rng.random(length):
            row = self._cum[self.context_index(ctx)]
            c = min(int(np.searchsorted(row, u * row[-1], side="right")), A - 1)
            out.append(self.alphabet[c])
            ctx = ctx[1:] + [c]
        return "".join(out)


def build_tables(config: SynthConfig) -> tuple[np.ndarray, list[np.ndarray]]:
    A = len(config.alphabet)
    n_ctx = (A + 1) ** config.order
    rng = rng_for(config.seed, "synth-tables")
    shared = rng.dirichlet(np.full(A, 1.0), size=n_ctx)
    own = []
    if A >= config.k:
        # partition the alphabet: class c only emits its own block
        blocks = np.array_split(rng.permutation(A), config.k)
        for c in range(config.k):
            t = np.zeros((n_ctx, A))
            t[:, blocks[c]] = rng.dirichlet(np.full(len(blocks[c]), 1.0), size=n_ctx)
            own.append(t)
    else:
        for c in range(config.k):
            own.append(rng.dirichlet(np.full(A, config.concentration), size=n_ctx))
    return shared, own


def class_chains(config: SynthConfig) -> list[MarkovChain]:
    shared, own = build_tables(config)
    d = config.delta
    return [MarkovChain((1.0 - d) * shared + d * t, config.alphabet, config.order) for t in own]


def generate(config: SynthConfig, out_dir=None, labels=None):
    """Sample a labelled corpus; optionally write text files, manifest and config sidecar.

    Returns ``(documents, manifest_path or None)``.
    """
    labels = list(labels) if labels else default_labels(config.k)
    if len(labels) != config.k:
        raise SynthError("need one label per class")
    for lab in labels:
        validate_label(lab)
    chains = class_chains(config)
    docs = []
    for ci, (label, chain) in enumerate(zip(labels, chains)):
        rng = rng_for(config.seed, "synth-class", ci)
        sentences = []
        for _ in range(config.sentences_per_class):
            n_tok = int(rng.integers(config.min_tokens, config.max_tokens + 1))
            lens = rng.integers(config.min_token_len, config.max_token_len + 1, size=n_tok)
            sentences.append(" ".join(chain.sample_token(int(L), rng) for L in lens))
        per = config.sentences_per_doc
        for d, s in enumerate(range(0, len(sentences), per)):
            text = "\n".join(sentences[s:s + per]) + "\n"
            docs.append(Document(f"{label}-{d:04d}", label, text, "synthetic"))

    manifest = None
    if out_dir is not None:
        out_dir = Path(out_dir)
        (out_dir / "docs").mkdir(parents=True, exist_ok=True)
        rows = []
        for doc in docs:
            rel = f"docs/{doc.id}.txt"
            with open(out_dir / rel, "w", encoding="utf-8", newline="\n") as fh:
                fh.write(doc.text)
            rows.append((doc.id, doc.variety, rel, doc.source))
        manifest = out_dir / "manifest.tsv"
        write_manifest(manifest, rows)
        with open(out_dir / "synth_config.json", "w", encoding="utf-8") as fh:
            json.dump(dict(asdict(config), labels=labels), fh, indent=2, sort_keys=True)
            fh.write("\n")
    return docs, manifest
