"""Stratified 80/20 resampling, per-class precision/recall/F1 and report files."""

from __future__ import annotations

import csv
import json
import logging
from collections import Counter, defaultdict
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from ._seeding import derive_seed, rng_for
from .pipeline import ModelSpec, fit

log = logging.getLogger(__name__)

TEST_FRACTION = 0.2
MIN_CLASS_SIZE = 5


class EvaluationError(RuntimeError):
    pass


@dataclass
class SplitPlan:
    run: int
    seed: int
    train: dict  # label -> sorted index list
    test: dict

    @property
    def train_indices(self) -> list[int]:
        return sorted(i for idx in self.train.values() for i in idx)

    @property
    def test_indices(self) -> list[int]:
        return sorted(i for idx in self.test.values() for i in idx)


def label_order(dataset) -> list[str]:
    """Labels by descending sentence count, then alphabetically."""
    counts = Counter(s.variety for s in dataset)
    return sorted(counts, key=lambda l: (-counts[l], l))


def stratified_split(dataset: Sequence, run: int, seed: int, test_fraction: float = TEST_FRACTION,
                     by_document: bool = False) -> SplitPlan:
    """Per-class shuffle; ``floor(test_fraction * n_c)`` items (at least one) go to test.

    With ``by_document`` whole documents are assigned to one side, taken in
    shuffled order until the class's test quota is reached.
    """
    groups = defaultdict(list)
    for i, s in enumerate(dataset):
        groups[s.variety].append(i)
    train, test = {}, {}
    for label in sorted(groups):
        idx = groups[label]
        if len(idx) < MIN_CLASS_SIZE:
            raise EvaluationError(
                f"class {label} has {len(idx)} sentences; at least {MIN_CLASS_SIZE} are required")
        n_test = max(1, int(np.floor(test_fraction * len(idx))))
        rng = rng_for(seed, run, "split", label)
        if by_document:
            docs = sorted({dataset[i].doc_id for i in idx})
            chosen, count = set(), 0
            sizes = Counter(dataset[i].doc_id for i in idx)
            for j in rng.permutation(len(docs)):
                if count >= n_test:
                    break
                chosen.add(docs[j])
                count += sizes[docs[j]]
            te = [i for i in idx if dataset[i].doc_id in chosen]
            if len(te) == len(idx):
                raise EvaluationError(f"class {label}: one document holds all sentences")
        else:
            perm = rng.permutation(len(idx))
            te = sorted(idx[j] for j in perm[:n_test])
        te_set = set(te)
        test[label] = sorted(te)
        train[label] = [i for i in idx if i not in te_set]
    return SplitPlan(run, seed, train, test)


@dataclass
class Score:
    labels: list
    confusion: np.ndarray  # rows = true, columns = predicted
    precision: np.ndarray
    recall: np.ndarray
    f1: np.ndarray

    @property
    def macro(self) -> dict:
        return {"precision": float(self.precision.mean()), "recall": float(self.recall.mean()),
                "f1": float(self.f1.mean())}


def _safe_div(a, b):
    return np.divide(a, b, out=np.zeros_like(a, dtype=np.float64), where=b != 0)


def metrics_from_confusion(cm: np.ndarray):
    cm = np.asarray(cm, dtype=np.float64)
    tp = np.diag(cm)
    p = _safe_div(tp, cm.sum(axis=0))
    r = _safe_div(tp, cm.sum(axis=1))
    f = _safe_div(2 * p * r, p + r)
    return p, r, f


def score(true: Sequence, pred: Sequence, labels: Sequence) -> Score:
    if len(true) != len(pred):
        raise EvaluationError(f"length mismatch: {len(true)} true vs {len(pred)} predicted")
    if not true:
        raise EvaluationError("nothing to score")
    labels = list(labels)
    pos = {l: i for i, l in enumerate(labels)}
    try:
        t = np.array([pos[x] for x in true])
        p = np.array([pos[x] for x in pred])
    except KeyError as exc:
        raise EvaluationError(f"label {exc.args[0]!r} not in the label order") from None
    cm = np.zeros((len(labels), len(labels)), dtype=np.int64)
    np.add.at(cm, (t, p), 1)
    prec, rec, f1 = metrics_from_confusion(cm)
    return Score(labels, cm, prec, rec, f1)


@dataclass
class EvaluationReport:
    model: str
    labels: list
    confusions: list           # one k x k array per run
    precision: np.ndarray      # per class, mean over runs
    recall: np.ndarray
    f1: np.ndarray
    metadata: dict = field(default_factory=dict)

    @property
    def macro(self) -> dict:
        return {"precision": float(np.mean(self.precision)), "recall": float(np.mean(self.recall)),
                "f1": float(np.mean(self.f1))}

    def to_dict(self) -> dict:
        return {
            "model": self.model,
            "labels": list(self.labels),
            "per_class": {
                l: {"precision": float(self.precision[i]), "recall": float(self.recall[i]),
                    "f1": float(self.f1[i])}
                for i, l in enumerate(self.labels)
            },
            "macro": self.macro,
            "confusion": [c.tolist() for c in self.confusions],
            "metadata": self.metadata,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "EvaluationReport":
        labels = d["labels"]
        pc = d["per_class"]
        return cls(d["model"], labels, [np.array(c, dtype=np.int64) for c in d["confusion"]],
                   np.array([pc[l]["precision"] for l in labels]),
                   np.array([pc[l]["recall"] for l in labels]),
                   np.array([pc[l]["f1"] for l in labels]), d.get("metadata", {}))


def aggregate(model: str, scores: Sequence[Score], metadata=None) -> EvaluationReport:
    """Average per-class metrics over runs; macro means are taken over those averages."""
    return EvaluationReport(
        model, list(scores[0].labels), [s.confusion for s in scores],
        np.mean([s.precision for s in scores], axis=0),
        np.mean([s.recall for s in scores], axis=0),
        np.mean([s.f1 for s in scores], axis=0),
        metadata or {},
    )


def _one_run(spec: ModelSpec, dataset, labels, run: int, seed: int, by_document: bool) -> Score:
    try:
        plan = stratified_split(dataset, run, seed, by_document=by_document)
        train = [dataset[i] for i in plan.train_indices]
        test = [dataset[i] for i in plan.test_indices]
        model = fit(spec, train, seed=derive_seed(seed, run, "model"), labels=labels)
        pred = model.predict(test)
        return score([s.variety for s in test], pred, labels)
    except Exception as exc:
        raise EvaluationError(f"run {run} failed: {exc}") from exc


def run_experiment(spec: ModelSpec, dataset: Sequence, runs: int = 5, seed: int = 0,
                   jobs: int = 1, by_document: bool = False) -> EvaluationReport:
    """Train a fresh model per stratified resample and aggregate the test scores."""
    if runs < 1:
        raise EvaluationError("runs must be >= 1")
    labels = label_order(dataset)
    args = [(spec, dataset, labels, r, seed, by_document) for r in range(runs)]
    if jobs > 1 and runs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as ex:
            scores = list(ex.map(_one_run, *zip(*args)))
    else:
        scores = []
        for a in args:
            scores.append(_one_run(*a))
            log.info("%s run %d: macro F1 %.4f", spec.tag, a[3], scores[-1].macro["f1"])
    meta = {"model": spec.tag, "spec": spec.as_dict(), "config_hash": spec.hash(),
            "seed": seed, "runs": runs, "run_seeds": [derive_seed(seed, r, "model") for r in range(runs)],
            "by_document": by_document, "n_sentences": len(dataset)}
    return aggregate(spec.tag, scores, meta)


# -- report files -----------------------------------------------------------------

def _fmt(x: float) -> str:
    return f"{x:.4f}"


def _slug(tag: str) -> str:
    return tag.lower().replace("-", "")


def emit_report(report: EvaluationReport, out_dir, formats=("csv", "json")) -> list[Path]:
    """Write the per-class metrics table, per-run confusion matrices and/or JSON."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    slug = _slug(report.model)
    written = []
    if "csv" in formats:
        path = out_dir / f"{slug}_metrics.csv"
        with open(path, "w", encoding="utf-8", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["variety", "P", "R", "F"])
            for i, l in enumerate(report.labels):
                w.writerow([l, _fmt(report.precision[i]), _fmt(report.recall[i]), _fmt(report.f1[i])])
            m = report.macro
            w.writerow(["Mean", _fmt(m["precision"]), _fmt(m["recall"]), _fmt(m["f1"])])
        written.append(path)
        for r, cm in enumerate(report.confusions):
            path = out_dir / f"{slug}_confusion_run{r}.csv"
            with open(path, "w", encoding="utf-8", newline="") as fh:
                w = csv.writer(fh, lineterminator="\n")
                w.writerow(["true\\pred"] + list(report.labels))
                for i, l in enumerate(report.labels):
                    w.writerow([l] + [int(v) for v in cm[i]])
            written.append(path)
    if "json" in formats:
        path = out_dir / f"{slug}_report.json"
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(report.to_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")
        written.append(path)
    return written


def emit_merged(reports: Sequence[EvaluationReport], path) -> Path:
    """One row per variety with a P/R/F column triple per model, plus a Mean row."""
    labels = list(reports[0].labels)
    for r in reports[1:]:
        if list(r.labels) != labels:
            raise EvaluationError("reports disagree on the label order")
    path = Path(path)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["variety"] + [f"{r.model}_{m}" for r in reports for m in ("P", "R", "F")])
        for i, l in enumerate(labels):
            row = [l]
            for r in reports:
                row += [_fmt(r.precision[i]), _fmt(r.recall[i]), _fmt(r.f1[i])]
            w.writerow(row)
        row = ["Mean"]
        for r in reports:
            m = r.macro
            row += [_fmt(m["precision"]), _fmt(m["recall"]), _fmt(m["f1"])]
        w.writerow(row)
    return path
