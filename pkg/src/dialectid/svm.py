"""One-vs-rest soft-margin SVM with an RBF kernel, trained by SMO."""

from __future__ import annotations

import logging
import math
from collections import Counter
from dataclasses import asdict, dataclass
from typing import Sequence

import numpy as np

from ._binio import read_container, write_container
from .textcat import extract_ngrams

log = logging.getLogger(__name__)

MAGIC = b"DSVM"
VERSION = 1
TAU = 1e-12
SWEEP_FLOOR = 1000  # minimum pair updates counted as one pass


class SvmError(ValueError):
    pass


@dataclass
class SvmConfig:
    C: float = 1.0
    gamma: object = "scale"  # "scale" or a positive float
    tol: float = 1e-5  # KKT gap; tight enough for decision values to settle within 1e-3
    max_passes: int = 100

    def __post_init__(self):
        if not self.C > 0:
            raise SvmError("C must be positive")
        if isinstance(self.gamma, str):
            if self.gamma != "scale":
                self.gamma = float(self.gamma)
        if not isinstance(self.gamma, str) and not self.gamma > 0:
            raise SvmError("explicit gamma must be positive")


def rbf_kernel(x, y, gamma: float) -> float:
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape:
        raise SvmError(f"dimension mismatch: {x.shape} vs {y.shape}")
    d = x - y
    return math.exp(-gamma * float(d @ d))


def rbf_gram(A: np.ndarray, B: np.ndarray, gamma: float) -> np.ndarray:
    A = np.asarray(A, dtype=np.float64)
    B = np.asarray(B, dtype=np.float64)
    sq = (A * A).sum(1)[:, None] + (B * B).sum(1)[None, :] - 2.0 * (A @ B.T)
    np.maximum(sq, 0.0, out=sq)
    return np.exp(-gamma * sq)


def resolve_gamma(X, mode="scale") -> float:
    """``1 / (n_features * mean per-feature variance)`` for ``mode="scale"``."""
    if not isinstance(mode, str):
        g = float(mode)
        if g <= 0:
            raise SvmError("gamma must be positive")
        return g
    if mode != "scale":
        raise SvmError(f"unknown gamma mode {mode!r}")
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] < 2:
        raise SvmError("gamma='scale' needs at least two samples")
    var = X.var(axis=0).mean()
    if not var > 0:
        raise SvmError("degenerate features: zero variance")
    return 1.0 / (X.shape[1] * var)


def smo_binary(K: np.ndarray, y: np.ndarray, C: float, tol: float = 1e-5, max_iter: int | None = None):
    """Solve the SVM dual for labels ``y`` in {-1, +1} with a precomputed kernel.

    Working pairs are chosen as the maximal KKT violators. Returns
    ``(alpha, rho, iterations)``; the decision function is
    ``sum_i alpha_i y_i K(x_i, x) - rho``.
    """
    n = len(y)
    y = y.astype(np.float64)
    alpha = np.zeros(n)
    grad = -np.ones(n)
    diag = np.diag(K)
    max_iter = max_iter if max_iter is not None else 100 * n
    it = 0
    while it < max_iter:
        score = -y * grad
        up = ((y > 0) & (alpha < C)) | ((y < 0) & (alpha > 0))
        low = ((y > 0) & (alpha > 0)) | ((y < 0) & (alpha < C))
        if not up.any() or not low.any():
            break
        i = int(np.argmax(np.where(up, score, -np.inf)))
        j = int(np.argmin(np.where(low, score, np.inf)))
        if score[i] - score[j] <= tol:
            break
        quad = max(diag[i] + diag[j] - 2.0 * K[i, j], TAU)
        t = (score[i] - score[j]) / quad
        t = min(t, C - alpha[i] if y[i] > 0 else alpha[i])
        t = min(t, alpha[j] if y[j] > 0 else C - alpha[j])
        alpha[i] += y[i] * t
        alpha[j] -= y[j] * t
        # clamp round-off at the box edges
        for k in (i, j):
            if alpha[k] < 1e-15:
                alpha[k] = 0.0
            elif alpha[k] > C - 1e-15 * C:
                alpha[k] = C
        grad += t * y * (K[:, i] - K[:, j])
        it += 1
    else:
        log.warning("SMO stopped at the iteration cap (%d) before reaching tolerance", max_iter)

    yg = y * grad
    free = (alpha > 0) & (alpha < C)
    if free.any():
        rho = float(yg[free].mean())
    else:
        ub, lb = np.inf, -np.inf
        at_upper = alpha >= C
        for k in range(n):
            if (at_upper[k] and y[k] < 0) or (not at_upper[k] and y[k] > 0):
                ub = min(ub, yg[k])
            else:
                lb = max(lb, yg[k])
        rho = float((ub + lb) / 2)
    return alpha, rho, it


@dataclass
class SvmModel:
    classes: list
    gamma: float
    support_vectors: np.ndarray  # (n_sv, dim)
    dual_coef: np.ndarray  # (k, n_sv): alpha_i * y_i for each one-vs-rest problem
    intercept: np.ndarray  # (k,)
    config: SvmConfig

    @property
    def dim(self) -> int:
        return self.support_vectors.shape[1]

    def decision_function(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        if X.shape[1] != self.dim:
            raise SvmError(f"dimension mismatch: model expects {self.dim}, got {X.shape[1]}")
        K = rbf_gram(self.support_vectors, X, self.gamma)
        return (self.dual_coef @ K + self.intercept[:, None]).T

    def predict(self, X) -> list:
        dec = self.decision_function(X)
        return [self.classes[i] for i in np.argmax(dec, axis=1)]

    def save(self, path, extra: dict | None = None) -> None:
        meta = {"classes": self.classes, "gamma": self.gamma, "config": asdict(self.config)}
        if extra:
            meta["extra"] = extra
        write_container(path, MAGIC, VERSION, meta, {
            "support_vectors": self.support_vectors,
            "dual_coef": self.dual_coef,
            "intercept": self.intercept,
        })

    @classmethod
    def load(cls, path):
        meta, arr = read_container(path, MAGIC, VERSION)
        model = cls(meta["classes"], meta["gamma"], arr["support_vectors"], arr["dual_coef"],
                    arr["intercept"], SvmConfig(**meta["config"]))
        return model, meta.get("extra", {})


def train_svm(X, y: Sequence, config: SvmConfig | None = None) -> SvmModel:
    config = config or SvmConfig()
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or len(X) != len(y):
        raise SvmError("X must be (n_samples, dim) with one label per row")
    if not np.isfinite(X).all():
        raise SvmError("non-finite feature values")
    counts = Counter(y)
    if len(counts) < 2:
        raise SvmError("need at least two classes to train an SVM")
    classes = sorted(counts)
    gamma = resolve_gamma(X, config.gamma)
    K = rbf_gram(X, X, gamma)
    y_arr = np.asarray(y, dtype=object)
    n = len(X)
    alphas, rhos = [], []
    for c in classes:
        yc = np.where(y_arr == c, 1.0, -1.0)
        alpha, rho, it = smo_binary(K, yc, config.C, config.tol, config.max_passes * max(n, SWEEP_FLOOR))
        log.debug("class %s: %d SMO iterations, %d support vectors", c, it, int((alpha > 0).sum()))
        alphas.append(alpha * yc)
        rhos.append(rho)
    coef = np.vstack(alphas)
    sv = np.flatnonzero(np.any(coef != 0, axis=0))
    return SvmModel(classes, float(gamma), X[sv].copy(), coef[:, sv].copy(),
                    -np.asarray(rhos), config)


def predict_svm(model: SvmModel, x) -> tuple:
    """Label with the largest one-vs-rest decision value, plus all values."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise SvmError("predict_svm takes a single vector")
    dec = model.decision_function(x[None, :])[0]
    return model.classes[int(np.argmax(dec))], dec


class CharNgramTfidf:
    """Dense TF-IDF over the most frequent character n-grams, L2-normalised rows."""

    def __init__(self, max_features: int = 2000, n_min: int = 2, n_max: int = 5):
        self.max_features = max_features
        self.n_min = n_min
        self.n_max = n_max
        self.vocabulary: list[str] = []
        self.idf = np.zeros(0)

    def fit(self, texts: Sequence[str]) -> "CharNgramTfidf":
        total, df = Counter(), Counter()
        for t in texts:
            c = extract_ngrams(t, self.n_min, self.n_max)
            total.update(c)
            df.update(c.keys())
        top = sorted(total.items(), key=lambda kv: (-kv[1], kv[0]))[: self.max_features]
        self.vocabulary = [g for g, _ in top]
        n = len(texts)
        self.idf = np.array([math.log((1 + n) / (1 + df[g])) + 1.0 for g in self.vocabulary])
        return self

    def transform(self, texts: Sequence[str]) -> np.ndarray:
        index = {g: i for i, g in enumerate(self.vocabulary)}
        out = np.zeros((len(texts), len(self.vocabulary)))
        for r, t in enumerate(texts):
            for g, c in extract_ngrams(t, self.n_min, self.n_max).items():
                k = index.get(g)
                if k is not None:
                    out[r, k] = c
        out *= self.idf
        norms = np.linalg.norm(out, axis=1, keepdims=True)
        norms[norms == 0] = 1.0
        return out / norms

    def state(self) -> dict:
        return {"max_features": self.max_features, "n_min": self.n_min, "n_max": self.n_max,
                "vocabulary": self.vocabulary, "idf": self.idf.tolist()}

    @classmethod
    def from_state(cls, st: dict) -> "CharNgramTfidf":
        obj = cls(st["max_features"], st["n_min"], st["n_max"])
        obj.vocabulary = list(st["vocabulary"])
        obj.idf = np.asarray(st["idf"])
        return obj
