"""Corpus ingestion, sentence segmentation, filtering and corpus statistics."""

from __future__ import annotations

import csv
import json
import re
import unicodedata
from collections import Counter, OrderedDict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

LABEL_RE = re.compile(r"^[A-Z]+$")

# The 18 varieties retained for classification, in sentence-count order.
RETAINED_VARIETIES = (
    "HV", "HP", "GUE", "CEA", "CV", "CEO", "SNNP", "ANP", "OAX",
    "SNP", "SOP", "IST", "NAW", "SNEP", "NOC", "H", "HH", "CEP",
)

HISTOGRAM_BUCKETS = 40  # token lengths 1..39, and a final 40+ bucket

_SENTENCE_END = re.compile(r"(?<=[.!?:;])(?=\s|$)|\n\s*")
_WS = re.compile(r"\s+")


class CorpusError(ValueError):
    """Raised for malformed manifests, unreadable documents or empty datasets."""


def validate_label(code: str) -> str:
    if not code or not LABEL_RE.match(code):
        raise CorpusError(f"invalid variety label {code!r}: expected uppercase ASCII letters")
    return code


@dataclass(frozen=True)
class Document:
    id: str
    variety: str
    text: str
    source: str = ""

    def __post_init__(self):
        validate_label(self.variety)
        if not self.text:
            raise CorpusError(f"document {self.id!r} has empty text")


@dataclass(frozen=True)
class LabeledSentence:
    tokens: tuple[str, ...]
    variety: str
    doc_id: str = ""

    def __post_init__(self):
        object.__setattr__(self, "tokens", tuple(self.tokens))
        if any(_WS.search(t) or not t for t in self.tokens):
            raise CorpusError("tokens must be non-empty and contain no whitespace")

    def __len__(self):
        return len(self.tokens)

    @property
    def text(self) -> str:
        return " ".join(self.tokens)


@dataclass(frozen=True)
class Corpus:
    documents: tuple[Document, ...]

    def __post_init__(self):
        object.__setattr__(self, "documents", tuple(self.documents))
        seen = set()
        for doc in self.documents:
            if doc.id in seen:
                raise CorpusError(f"duplicate document id {doc.id!r}")
            seen.add(doc.id)

    def __len__(self):
        return len(self.documents)

    def __iter__(self):
        return iter(self.documents)

    @property
    def labels(self) -> list[str]:
        return sorted({d.variety for d in self.documents})


def normalize(text: str) -> str:
    return unicodedata.normalize("NFC", text)


def load_corpus(manifest_path) -> Corpus:
    """Read a TSV manifest of ``id, label, path, source`` rows.

    Relative document paths are resolved against the manifest's directory.
    Lines starting with ``#`` and blank lines are ignored.
    """
    manifest_path = Path(manifest_path)
    if not manifest_path.is_file():
        raise CorpusError(f"manifest not found: {manifest_path}")
    base = manifest_path.parent
    docs = []
    seen = {}
    with open(manifest_path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.rstrip("\r\n")
            if not line.strip() or line.lstrip().startswith("#"):
                continue
            cols = line.split("\t")
            if len(cols) not in (3, 4):
                raise CorpusError(
                    f"{manifest_path}:{lineno}: expected 3 or 4 tab-separated fields "
                    f"(id, label, path, source), got {len(cols)}"
                )
            doc_id, label, rel, source = (cols + [""])[:4]
            if not LABEL_RE.match(label):
                raise CorpusError(f"{manifest_path}:{lineno}: invalid label {label!r}")
            if doc_id in seen:
                raise CorpusError(
                    f"{manifest_path}:{lineno}: duplicate id {doc_id!r} (first on line {seen[doc_id]})"
                )
            seen[doc_id] = lineno
            path = Path(rel)
            if not path.is_absolute():
                path = base / path
            try:
                text = path.read_text(encoding="utf-8")
            except FileNotFoundError:
                raise CorpusError(f"{manifest_path}:{lineno}: missing file {path}") from None
            except UnicodeDecodeError as exc:
                raise CorpusError(f"{manifest_path}:{lineno}: {path} is not UTF-8: {exc}") from None
            text = normalize(text)
            if not text.strip():
                raise CorpusError(f"{manifest_path}:{lineno}: {path} is empty")
            docs.append(Document(doc_id, label, text, source))
    return Corpus(docs)


def write_manifest(path, rows: Iterable[tuple[str, str, str, str]]) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("# id\tlabel\tpath\tsource\n")
        for row in rows:
            fh.write("\t".join(row) + "\n")


def segment_sentences(text: str) -> list[str]:
    """Split on terminal punctuation followed by whitespace/end, and on newlines.

    Delimiters stay attached to the sentence on their left; internal
    whitespace is collapsed to single spaces.
    """
    out = []
    for piece in _SENTENCE_END.split(text):
        piece = _WS.sub(" ", piece).strip()
        if piece:
            out.append(piece)
    return out


def tokenize(sentence: str) -> list[str]:
    return sentence.split()


def _doc_sentences(doc: Document) -> list[list[str]]:
    return [tokenize(s) for s in segment_sentences(doc.text)]


def prepare_dataset(
    corpus: Corpus,
    min_variety_tokens: int = 10000,
    min_sentence_len: int = 5,
    lowercase: bool = True,
) -> list[LabeledSentence]:
    """Segment, tokenize and filter a corpus into classification units.

    Varieties with a total token count ``<= min_variety_tokens`` are dropped
    entirely, then sentences shorter than ``min_sentence_len`` tokens.
    Output is ordered by document id, then sentence position.
    """
    segmented = {doc.id: _doc_sentences(doc) for doc in corpus}
    totals = Counter()
    for doc in corpus:
        totals[doc.variety] += sum(len(s) for s in segmented[doc.id])
    keep = {v for v, n in totals.items() if n > min_variety_tokens}

    out = []
    for doc in sorted(corpus, key=lambda d: d.id):
        if doc.variety not in keep:
            continue
        for toks in segmented[doc.id]:
            if len(toks) < min_sentence_len:
                continue
            if lowercase:
                toks = [t.lower() for t in toks]
            out.append(LabeledSentence(tuple(toks), doc.variety, doc.id))
    if not out:
        raise CorpusError("no data after filtering")
    return out


@dataclass
class VarietyStats:
    documents: int = 0
    tokens: int = 0
    characters: int = 0
    histogram: list[int] = field(default_factory=lambda: [0] * HISTOGRAM_BUCKETS)

    @property
    def ratio(self) -> float:
        return self.characters / self.tokens if self.tokens else 0.0

    def add_tokens(self, tokens: Sequence[str]) -> None:
        self.tokens += len(tokens)
        for tok in tokens:
            n = len(tok)
            self.characters += n
            self.histogram[min(n, HISTOGRAM_BUCKETS) - 1] += 1

    def merge(self, other: "VarietyStats") -> None:
        self.documents += other.documents
        self.tokens += other.tokens
        self.characters += other.characters
        self.histogram = [a + b for a, b in zip(self.histogram, other.histogram)]

    def as_dict(self) -> dict:
        return {
            "docs": self.documents,
            "tokens": self.tokens,
            "chars": self.characters,
            "ratio": self.ratio,
            "histogram": list(self.histogram),
        }


@dataclass
class CorpusStats:
    per_variety: "OrderedDict[str, VarietyStats]"
    total: VarietyStats

    def to_csv(self, path) -> None:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["label", "docs", "tokens", "chars", "ratio"])
            for label, s in self.per_variety.items():
                w.writerow([label, s.documents, s.tokens, s.characters, f"{s.ratio:.6f}"])

    def to_dict(self) -> dict:
        return {
            "histogram_buckets": [str(i) for i in range(1, HISTOGRAM_BUCKETS)] + [f"{HISTOGRAM_BUCKETS}+"],
            "varieties": {k: v.as_dict() for k, v in self.per_variety.items()},
            "total": self.total.as_dict(),
        }

    def to_json(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, indent=2, ensure_ascii=False)
            fh.write("\n")


def compute_stats(corpus: Corpus) -> CorpusStats:
    """Per-variety document/token/character counts and token-length histograms.

    Characters are counted over tokens only, so whitespace never contributes.
    Varieties are listed by descending token count, then label.
    """
    per = {}
    for doc in corpus:
        s = per.setdefault(doc.variety, VarietyStats())
        s.documents += 1
        s.add_tokens(tokenize(doc.text))
    total = VarietyStats()
    for s in per.values():
        total.merge(s)
    ordered = OrderedDict(sorted(per.items(), key=lambda kv: (-kv[1].tokens, kv[0])))
    return CorpusStats(ordered, total)
