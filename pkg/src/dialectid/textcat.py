"""Character n-gram profiles ranked by frequency, compared by out-of-place distance."""

from __future__ import annotations

import json
import math
from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

N_MIN = 2
N_MAX = 5
PROFILE_SIZE = 2000
PAD = "_"


class TextCatError(ValueError):
    pass


def extract_ngrams(text: str, n_min: int = N_MIN, n_max: int = N_MAX) -> Counter:
    """Count character n-grams of every whitespace token, padded with ``_``."""
    counts = Counter()
    for tok in text.split():
        padded = PAD + tok + PAD
        size = len(padded)
        for n in range(n_min, min(n_max, size) + 1):
            for i in range(size - n + 1):
                counts[padded[i:i + n]] += 1
    return counts


@dataclass(frozen=True)
class NGramProfile:
    owner: str
    ngrams: tuple[str, ...]
    counts: tuple[int, ...]
    n_min: int = N_MIN
    n_max: int = N_MAX
    profile_size: int = PROFILE_SIZE

    def __post_init__(self):
        ranks = {g: r for r, g in enumerate(self.ngrams)}
        if len(ranks) != len(self.ngrams):
            raise TextCatError("profile n-grams must be unique")
        if len(self.ngrams) > self.profile_size:
            raise TextCatError("profile longer than profile_size")
        object.__setattr__(self, "_ranks", ranks)

    @property
    def ranks(self) -> dict:
        return self._ranks

    def __len__(self):
        return len(self.ngrams)

    def dump(self, path) -> None:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            for rank, (g, c) in enumerate(zip(self.ngrams, self.counts)):
                fh.write(f"{rank}\t{g}\t{c}\n")

    @classmethod
    def load(cls, path, owner: str, n_min=N_MIN, n_max=N_MAX, profile_size=PROFILE_SIZE):
        rows = []
        with open(path, encoding="utf-8") as fh:
            for line in fh:
                line = line.rstrip("\n")
                if not line:
                    continue
                rank, gram, count = line.split("\t")
                rows.append((int(rank), gram, int(count)))
        rows.sort()
        if [r for r, _, _ in rows] != list(range(len(rows))):
            raise TextCatError(f"{path}: ranks are not contiguous from 0")
        return cls(owner, tuple(g for _, g, _ in rows), tuple(c for _, _, c in rows),
                   n_min, n_max, profile_size)


def profile_from_counts(counts: Counter, owner: str = "query", profile_size: int = PROFILE_SIZE,
                        n_min: int = N_MIN, n_max: int = N_MAX) -> NGramProfile:
    # descending count, then lexicographic
    top = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))[:profile_size]
    return NGramProfile(owner, tuple(g for g, _ in top), tuple(c for _, c in top),
                        n_min, n_max, profile_size)


def build_profile(texts: Iterable[str], profile_size: int = PROFILE_SIZE, owner: str = "query",
                  n_min: int = N_MIN, n_max: int = N_MAX) -> NGramProfile:
    counts = Counter()
    for text in texts:
        counts.update(extract_ngrams(text, n_min, n_max))
    if not counts:
        raise TextCatError("cannot build a profile from empty texts")
    return profile_from_counts(counts, owner, profile_size, n_min, n_max)


def out_of_place_distance(query: NGramProfile, reference: NGramProfile) -> int:
    if (query.n_min, query.n_max) != (reference.n_min, reference.n_max):
        raise TextCatError("profiles use different n-gram ranges")
    ref = reference.ranks
    penalty = reference.profile_size
    total = 0
    for rank, gram in enumerate(query.ngrams):
        r = ref.get(gram)
        total += penalty if r is None else abs(rank - r)
    return total


def membership_probabilities(distances: Sequence[float], temperature: float) -> list[float]:
    lo = min(distances)
    w = [math.exp(-(d - lo) / temperature) for d in distances]
    z = math.fsum(w)
    return [x / z for x in w]


@dataclass
class TextCatModel:
    profiles: dict  # label -> NGramProfile, in label order
    profile_size: int = PROFILE_SIZE
    n_min: int = N_MIN
    n_max: int = N_MAX

    def __post_init__(self):
        if len(self.profiles) < 2:
            raise TextCatError("a TextCat model needs at least two variety profiles")
        for p in self.profiles.values():
            if (p.n_min, p.n_max, p.profile_size) != (self.n_min, self.n_max, self.profile_size):
                raise TextCatError("all profiles must share n range and profile size")

    @property
    def labels(self) -> list[str]:
        return list(self.profiles)

    @classmethod
    def train(cls, texts: Sequence[str], labels: Sequence[str], profile_size: int = PROFILE_SIZE,
              n_min: int = N_MIN, n_max: int = N_MAX) -> "TextCatModel":
        by_label = {}
        for text, label in zip(texts, labels):
            by_label.setdefault(label, []).append(text)
        profiles = {
            lab: build_profile(by_label[lab], profile_size, lab, n_min, n_max)
            for lab in sorted(by_label)
        }
        return cls(profiles, profile_size, n_min, n_max)

    def classify(self, text: str) -> list[tuple[str, int, float]]:
        return classify_textcat(text, self)

    def predict(self, text: str) -> str:
        return self.classify(text)[0][0]

    def save(self, directory) -> None:
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        files = {}
        for label, prof in self.profiles.items():
            name = f"{label}.profile"
            prof.dump(directory / name)
            files[label] = name
        meta = {"format": "textcat", "version": 1, "n_min": self.n_min, "n_max": self.n_max,
                "profile_size": self.profile_size, "profiles": files}
        with open(directory / "model.json", "w", encoding="utf-8") as fh:
            json.dump(meta, fh, indent=2, sort_keys=True)
            fh.write("\n")

    @classmethod
    def load(cls, directory) -> "TextCatModel":
        directory = Path(directory)
        with open(directory / "model.json", encoding="utf-8") as fh:
            meta = json.load(fh)
        if meta.get("format") != "textcat":
            raise TextCatError(f"{directory} is not a TextCat model directory")
        profiles = {
            label: NGramProfile.load(directory / name, label, meta["n_min"], meta["n_max"],
                                     meta["profile_size"])
            for label, name in meta["profiles"].items()
        }
        return cls(profiles, meta["profile_size"], meta["n_min"], meta["n_max"])


def classify_textcat(text: str, model: TextCatModel) -> list[tuple[str, int, float]]:
    """Rank varieties by out-of-place distance to the query profile.

    Returns ``(label, distance, probability)`` sorted by distance, ties by
    label order. Probabilities are a softmax of ``-distance / profile_size``.
    """
    counts = extract_ngrams(text, model.n_min, model.n_max)
    if not counts:
        raise TextCatError("cannot classify empty text")
    query = profile_from_counts(counts, "query", model.profile_size, model.n_min, model.n_max)
    labels = model.labels
    dists = [out_of_place_distance(query, model.profiles[lab]) for lab in labels]
    probs = membership_probabilities(dists, float(model.profile_size))
    order = sorted(range(len(labels)), key=lambda i: (dists[i], i))
    return [(labels[i], dists[i], probs[i]) for i in order]
