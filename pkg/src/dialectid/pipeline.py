"""Uniform fit / predict / save / load over the five model families."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import neural, svm, textcat
from ._binio import FormatError, config_hash
from ._seeding import derive_seed
from .corpus import LabeledSentence, tokenize
from .embeddings import (
    EmbeddingConfig,
    EmbeddingModel,
    embed_sentence,
    mean_sentence_vector,
    train_embeddings,
)

FAMILIES = ("textcat", "svm", "cnn", "lstm", "clstm")
DISPLAY = {"textcat": "TextCat", "svm": "SVM", "cnn": "CNN", "lstm": "LSTM", "clstm": "C-LSTM"}


class IncompatibleModel(ValueError):
    """Model and input (or model and embedding file) do not fit together."""


@dataclass
class ModelSpec:
    family: str
    embedding: dict = field(default_factory=dict)   # EmbeddingConfig overrides
    svm: dict = field(default_factory=dict)         # SvmConfig overrides
    neural: dict = field(default_factory=dict)      # neural config overrides
    textcat: dict = field(default_factory=dict)     # profile_size
    svm_features: str = "mean"                      # "mean" or "tfidf"
    max_len: int = 60

    def __post_init__(self):
        self.family = self.family.lower()
        if self.family not in FAMILIES:
            raise ValueError(f"unknown model family {self.family!r}; valid: {', '.join(FAMILIES)}")
        if self.svm_features not in ("mean", "tfidf"):
            raise ValueError("svm_features must be 'mean' or 'tfidf'")

    @property
    def tag(self) -> str:
        return DISPLAY[self.family]

    def as_dict(self) -> dict:
        return asdict(self)

    def hash(self) -> str:
        return config_hash(self.as_dict())

    @property
    def uses_embeddings(self) -> bool:
        return self.family in ("cnn", "lstm", "clstm") or (
            self.family == "svm" and self.svm_features == "mean")


def sentence_from_text(line: str, lowercase: bool = True) -> LabeledSentence:
    toks = tokenize(line)
    if lowercase:
        toks = [t.lower() for t in toks]
    return LabeledSentence(tuple(toks), "X")


class FittedModel:
    """A trained model of any family behind one interface."""

    def __init__(self, spec: ModelSpec, model, emb: EmbeddingModel | None = None, tfidf=None):
        self.spec = spec
        self.model = model
        self.emb = emb
        self.tfidf = tfidf

    @property
    def labels(self) -> list:
        m = self.model
        return list(m.labels if hasattr(m, "labels") else m.classes)

    def _matrices(self, sentences):
        return [embed_sentence(self.emb, s, self.spec.max_len) for s in sentences]

    def scores(self, sentences: Sequence[LabeledSentence]) -> np.ndarray:
        """Per-class scores in ``self.labels`` order, rows summing to one.

        TextCat uses its membership probabilities, SVM a softmax over the
        one-vs-rest decision values (uncalibrated), the networks their output.
        """
        fam = self.spec.family
        if fam == "textcat":
            out = np.zeros((len(sentences), len(self.labels)))
            pos = {l: i for i, l in enumerate(self.labels)}
            for r, s in enumerate(sentences):
                for label, _, p in textcat.classify_textcat(s.text, self.model):
                    out[r, pos[label]] = p
            return out
        if fam == "svm":
            X = self.features(sentences)
            try:
                dec = self.model.decision_function(X)
            except svm.SvmError as exc:
                raise IncompatibleModel(str(exc)) from None
            z = dec - dec.max(axis=1, keepdims=True)
            e = np.exp(z)
            return e / e.sum(axis=1, keepdims=True)
        try:
            return self.model.predict_proba(self._matrices(sentences))
        except neural.NeuralError as exc:
            raise IncompatibleModel(str(exc)) from None

    def features(self, sentences):
        if self.spec.svm_features == "tfidf":
            return self.tfidf.transform([s.text for s in sentences])
        return np.stack([mean_sentence_vector(m) for m in self._matrices(sentences)])

    def predict(self, sentences: Sequence[LabeledSentence]) -> list:
        fam = self.spec.family
        if fam == "textcat":
            return [textcat.classify_textcat(s.text, self.model)[0][0] for s in sentences]
        if fam == "svm":
            return self.model.predict(self.features(sentences))
        labels = self.labels
        return [labels[i] for i in np.argmax(self.scores(sentences), axis=1)]

    # -- persistence ------------------------------------------------------

    def save(self, path) -> list[Path]:
        path = Path(path)
        fam = self.spec.family
        if fam == "textcat":
            self.model.save(path)
            return [path]
        written = []
        ref = {}
        if self.emb is not None:
            emb_path = path.with_name(path.name + ".emb")
            self.emb.save(emb_path)
            written.append(emb_path)
            ref = {"path": emb_path.name, "config_hash": config_hash(asdict(self.emb.config))}
        extra = {"spec": self.spec.as_dict(), "spec_hash": self.spec.hash(), "embedding": ref}
        if fam == "svm":
            if self.tfidf is not None:
                extra["tfidf"] = self.tfidf.state()
            self.model.save(path, extra)
        else:
            self.model.embedding_ref = dict(ref, spec=self.spec.as_dict(), spec_hash=self.spec.hash())
            self.model.save(path)
        written.append(path)
        return written


def _load_embedding(model_path: Path, ref: dict):
    if not ref:
        return None
    emb_path = model_path.parent / ref["path"]
    if not emb_path.exists():
        raise IncompatibleModel(f"embedding file {emb_path} not found")
    emb = EmbeddingModel.load(emb_path)
    if ref.get("config_hash") and ref["config_hash"] != config_hash(asdict(emb.config)):
        raise IncompatibleModel(f"{emb_path} does not match the embedding this model was trained with")
    return emb


def load_model(path) -> FittedModel:
    path = Path(path)
    if path.is_dir():
        return FittedModel(ModelSpec("textcat"), textcat.TextCatModel.load(path))
    with open(path, "rb") as fh:
        magic = fh.read(4)
    if magic == svm.MAGIC:
        model, extra = svm.SvmModel.load(path)
        spec = ModelSpec(**extra["spec"])
        tfidf = svm.CharNgramTfidf.from_state(extra["tfidf"]) if "tfidf" in extra else None
        return FittedModel(spec, model, _load_embedding(path, extra.get("embedding")), tfidf)
    if magic == neural.models.MAGIC:
        model = neural.TrainedClassifier.load(path)
        ref = dict(model.embedding_ref)
        spec = ModelSpec(**ref.pop("spec")) if "spec" in ref else ModelSpec(model.arch.lower())
        return FittedModel(spec, model, _load_embedding(path, ref))
    raise FormatError(f"{path}: unrecognised model file")


def fit(spec: ModelSpec, sentences: Sequence[LabeledSentence], seed: int = 0,
        labels: Sequence | None = None) -> FittedModel:
    """Train the model described by ``spec``; every random stream derives from ``seed``."""
    fam = spec.family
    if fam == "textcat":
        size = spec.textcat.get("profile_size", textcat.PROFILE_SIZE)
        model = textcat.TextCatModel.train([s.text for s in sentences],
                                           [s.variety for s in sentences], size)
        return FittedModel(spec, model)

    emb = None
    if spec.uses_embeddings:
        ecfg = EmbeddingConfig(**dict(spec.embedding, seed=derive_seed(seed, "embeddings")))
        emb = train_embeddings(sentences, ecfg)

    y = [s.variety for s in sentences]
    if fam == "svm":
        cfg = svm.SvmConfig(**spec.svm)
        fm = FittedModel(spec, None, emb)
        if spec.svm_features == "tfidf":
            fm.tfidf = svm.CharNgramTfidf().fit([s.text for s in sentences])
        fm.model = svm.train_svm(fm.features(sentences), y, cfg)
        return fm

    arch = fam.upper()
    ncfg = neural.make_config(arch, **dict(spec.neural, seed=derive_seed(seed, "neural")))
    matrices = [embed_sentence(emb, s, spec.max_len) for s in sentences]
    model = neural.train_classifier(arch, matrices, ncfg, labels=labels)
    return FittedModel(spec, model, emb)
