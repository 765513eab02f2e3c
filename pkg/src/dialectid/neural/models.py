"""CNN, LSTM and C-LSTM sentence classifiers over embedded sentences."""

from __future__ import annotations

import csv
import logging
from dataclasses import asdict, dataclass, field, fields
from typing import Sequence

import numpy as np

from .._binio import config_hash, read_container, write_container
from .._seeding import rng_for
from .autodiff import Tensor, concat, embedding, softmax_cross_entropy, unfold_time
from .layers import Adam, dropout, glorot

log = logging.getLogger(__name__)

MAGIC = b"DNNC"
VERSION = 1
ARCHITECTURES = ("CNN", "LSTM", "CLSTM")


class NeuralError(ValueError):
    pass


@dataclass
class TrainConfig:
    dropout: float = 0.5
    epochs: int = 25
    learning_rate: float = 0.001
    patience: int = 3
    batch_size: int = 64
    holdout: float = 0.1
    min_len: int = 5
    fine_tune_embeddings: bool = True
    seed: int = 0

    def __post_init__(self):
        if not 0 <= self.dropout < 1:
            raise NeuralError("dropout must be in [0, 1)")
        if self.epochs < 0 or self.patience < 1 or self.batch_size < 1:
            raise NeuralError("epochs >= 0, patience >= 1 and batch_size >= 1 required")


@dataclass
class CnnConfig(TrainConfig):
    filter_sizes: tuple = (3, 4, 5)
    filters_per_size: int = 100

    def __post_init__(self):
        super().__post_init__()
        self.filter_sizes = tuple(self.filter_sizes)
        if any(m < 1 for m in self.filter_sizes):
            raise NeuralError("filter sizes must be >= 1")


@dataclass
class LstmConfig(TrainConfig):
    hidden_size: int = 100

    def __post_init__(self):
        super().__post_init__()
        if self.hidden_size < 1:
            raise NeuralError("hidden_size must be >= 1")


@dataclass
class CLstmConfig(TrainConfig):
    kernel_sizes: tuple = (2, 3, 4)
    filters: int = 150
    hidden_size: int = 100

    def __post_init__(self):
        super().__post_init__()
        self.kernel_sizes = tuple(self.kernel_sizes)
        if self.hidden_size < 1 or any(m < 1 for m in self.kernel_sizes):
            raise NeuralError("hidden_size and kernel sizes must be >= 1")


CONFIGS = {"CNN": CnnConfig, "LSTM": LstmConfig, "CLSTM": CLstmConfig}


def make_config(arch: str, **overrides) -> TrainConfig:
    cls = CONFIGS[arch.upper()]
    names = {f.name for f in fields(cls)}
    return cls(**{k: v for k, v in overrides.items() if k in names and v is not None})


# -- batches ------------------------------------------------------------------

@dataclass
class Batch:
    idx: np.ndarray      # (B, T) row in the fine-tuned token table, -1 if none
    fixed: np.ndarray    # (B, T, d) frozen rows for tokens outside the table
    lengths: np.ndarray  # (B,) valid token counts


def _encode(matrix, token_index):
    n = matrix.n_valid
    idx = np.full(n, -1, dtype=np.int64)
    fixed = matrix.valid.copy()
    if token_index:
        for r, tok in enumerate(matrix.tokens[:n]):
            k = token_index.get(tok)
            if k is not None:
                idx[r] = k
                fixed[r] = 0.0
    return idx, fixed


def make_batch(encoded: Sequence, min_len: int) -> Batch:
    lengths = np.array([len(e[0]) for e in encoded], dtype=np.int64)
    T = max(int(lengths.max()), min_len)
    d = encoded[0][1].shape[1]
    idx = np.full((len(encoded), T), -1, dtype=np.int64)
    fixed = np.zeros((len(encoded), T, d))
    for b, (ix, fx) in enumerate(encoded):
        idx[b, : len(ix)] = ix
        fixed[b, : len(ix)] = fx
    return Batch(idx, fixed, lengths)


# -- architectures --------------------------------------------------------------

def _lstm_params(rng, d, H, prefix=""):
    b = np.zeros(4 * H)
    b[H:2 * H] = 1.0  # forget-gate bias
    return {
        prefix + "Wx": glorot(rng, d, 4 * H),
        prefix + "Wh": glorot(rng, H, 4 * H),
        prefix + "b": b,
    }


def run_lstm(x: Tensor, mask: np.ndarray, Wx: Tensor, Wh: Tensor, b: Tensor) -> Tensor:
    """Run an LSTM over ``x (B, T, d)`` and return the last valid hidden state.

    Steps where ``mask`` is 0 carry the previous state through unchanged.
    """
    B, T, _ = x.shape
    H = Wh.shape[0]
    xw = x @ Wx + b
    steps = xw.unbind(axis=1)
    h = Tensor(np.zeros((B, H)))
    c = Tensor(np.zeros((B, H)))
    for t in range(T):
        m = mask[:, t:t + 1].astype(np.float64)
        if not m.any():
            continue
        z = steps[t] + h @ Wh
        i = z[:, 0:H].sigmoid()
        f = z[:, H:2 * H].sigmoid()
        g = z[:, 2 * H:3 * H].tanh()
        o = z[:, 3 * H:4 * H].sigmoid()
        c_new = f * c + i * g
        h_new = o * c_new.tanh()
        if m.all():
            h, c = h_new, c_new
        else:
            h = h_new * m + h * (1.0 - m)
            c = c_new * m + c * (1.0 - m)
    return h


class Network:
    """Parameters plus the forward pass of one architecture."""

    def __init__(self, arch: str, config: TrainConfig, dim: int, n_classes: int,
                 table: np.ndarray | None = None, rng=None, params: dict | None = None):
        if arch not in ARCHITECTURES:
            raise NeuralError(f"unknown architecture {arch!r}")
        self.arch = arch
        self.config = config
        self.dim = dim
        self.n_classes = n_classes
        if params is None:
            params = self._init_params(rng, table)
        self.params = {k: Tensor(v, requires_grad=True, name=k) for k, v in params.items()}

    def _init_params(self, rng, table):
        cfg, d, k = self.config, self.dim, self.n_classes
        p = {}
        if table is not None and len(table):
            p["embedding"] = np.array(table, dtype=np.float64)
        if self.arch == "CNN":
            F = cfg.filters_per_size
            for m in cfg.filter_sizes:
                p[f"conv{m}.W"] = glorot(rng, m * d, F)
                p[f"conv{m}.b"] = np.zeros(F)
            feat = F * len(cfg.filter_sizes)
        elif self.arch == "LSTM":
            p.update(_lstm_params(rng, d, cfg.hidden_size, "lstm."))
            feat = cfg.hidden_size
        else:
            F = cfg.filters
            for m in cfg.kernel_sizes:
                p[f"conv{m}.W"] = glorot(rng, m * d, F)
                p[f"conv{m}.b"] = np.zeros(F)
            p.update(_lstm_params(rng, F * len(cfg.kernel_sizes), cfg.hidden_size, "lstm."))
            feat = cfg.hidden_size
        p["out.W"] = glorot(rng, feat, k)
        p["out.b"] = np.zeros(k)
        return p

    @property
    def min_len(self) -> int:
        cfg = self.config
        sizes = cfg.filter_sizes if self.arch == "CNN" else getattr(cfg, "kernel_sizes", (1,))
        return max(cfg.min_len, max(sizes))

    def inputs(self, batch: Batch) -> Tensor:
        x = Tensor(batch.fixed)
        if "embedding" in self.params and (batch.idx >= 0).any():
            x = embedding(self.params["embedding"], batch.idx) + x
        return x

    def features(self, batch: Batch) -> Tensor:
        """Sentence feature vectors before dropout and the output layer."""
        P, cfg = self.params, self.config
        x = self.inputs(batch)
        B, T, _ = x.shape
        eff = np.maximum(batch.lengths, self.min_len)
        if self.arch == "CNN":
            pooled = []
            for m in cfg.filter_sizes:
                a = (unfold_time(x, m) @ P[f"conv{m}.W"] + P[f"conv{m}.b"]).relu()
                valid = np.arange(T - m + 1)[None, :] <= (eff - m)[:, None]
                a = a * valid[:, :, None].astype(np.float64)
                pooled.append(a.max(axis=1))
            return concat(pooled, axis=1)
        if self.arch == "LSTM":
            mask = np.arange(T)[None, :] < batch.lengths[:, None]
            return run_lstm(x, mask, P["lstm.Wx"], P["lstm.Wh"], P["lstm.b"])
        # C-LSTM: conv feature sequences truncated to the shortest branch
        span = max(cfg.kernel_sizes)
        n = T - span + 1
        maps = []
        for m in cfg.kernel_sizes:
            a = (unfold_time(x, m) @ P[f"conv{m}.W"] + P[f"conv{m}.b"]).relu()
            maps.append(a[:, 0:n, :] if a.shape[1] != n else a)
        seq = concat(maps, axis=2)
        mask = np.arange(n)[None, :] < (eff - span + 1)[:, None]
        return run_lstm(seq, mask, P["lstm.Wx"], P["lstm.Wh"], P["lstm.b"])

    def logits(self, batch: Batch, train: bool = False, rng=None) -> Tensor:
        feats = self.features(batch)
        feats = dropout(feats, self.config.dropout, train, rng)
        return feats @ self.params["out.W"] + self.params["out.b"]

    def zero_grad(self):
        for p in self.params.values():
            p.grad = None


@dataclass
class TrainedClassifier:
    arch: str
    labels: list
    config: TrainConfig
    network: Network
    token_index: dict = field(default_factory=dict)
    embedding_ref: dict = field(default_factory=dict)
    log_rows: list = field(default_factory=list)
    best_epoch: int = 0

    @property
    def dim(self) -> int:
        return self.network.dim

    def encode(self, matrix):
        if matrix.dim != self.dim:
            raise NeuralError(f"dimension mismatch: model expects {self.dim}, got {matrix.dim}")
        return _encode(matrix, self.token_index)

    def predict_proba(self, matrices, batch_size: int = 256) -> np.ndarray:
        out = []
        for s in range(0, len(matrices), batch_size):
            enc = [self.encode(m) for m in matrices[s:s + batch_size]]
            z = self.network.logits(make_batch(enc, self.network.min_len), train=False).data
            z = z - z.max(axis=1, keepdims=True)
            e = np.exp(z)
            out.append(e / e.sum(axis=1, keepdims=True))
        return np.vstack(out) if out else np.zeros((0, len(self.labels)))

    def predict(self, matrices) -> list:
        return [self.labels[i] for i in np.argmax(self.predict_proba(matrices), axis=1)]

    def config_dict(self) -> dict:
        return asdict(self.config)

    def save(self, path) -> None:
        tokens = sorted(self.token_index, key=self.token_index.get)
        cfg = self.config_dict()
        meta = {
            "architecture": self.arch,
            "labels": self.labels,
            "config": cfg,
            "config_hash": config_hash({"arch": self.arch, **cfg}),
            "dim": self.dim,
            "tokens": tokens,
            "embedding": self.embedding_ref,
            "best_epoch": self.best_epoch,
        }
        write_container(path, MAGIC, VERSION, meta,
                        {k: p.data for k, p in self.network.params.items()})

    @classmethod
    def load(cls, path) -> "TrainedClassifier":
        meta, arrays = read_container(path, MAGIC, VERSION)
        arch = meta["architecture"]
        cfg = make_config(arch, **meta["config"])
        net = Network(arch, cfg, meta["dim"], len(meta["labels"]), params=arrays)
        index = {t: i for i, t in enumerate(meta["tokens"])}
        return cls(arch, meta["labels"], cfg, net, index, meta.get("embedding", {}),
                   best_epoch=meta.get("best_epoch", 0))

    def write_log(self, path) -> None:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["epoch", "train_loss", "heldout_loss"])
            for r in self.log_rows:
                w.writerow([r["epoch"], f"{r['train_loss']:.6f}", f"{r['heldout_loss']:.6f}"])


def _stratified_holdout(targets, fraction, rng):
    """Hold out ``round(fraction * n_c)`` items of every class, keeping at least one for training."""
    hold = []
    for c in np.unique(targets):
        idx = np.flatnonzero(targets == c)
        n = min(int(round(fraction * len(idx))), len(idx) - 1)
        if n > 0:
            hold.extend(rng.permutation(idx)[:n].tolist())
    hold = np.array(sorted(hold), dtype=np.int64)
    train = np.setdiff1d(np.arange(len(targets)), hold)
    return hold, train


def _mean_loss(net, encoded, targets, min_len, batch_size=256):
    total = 0.0
    for s in range(0, len(encoded), batch_size):
        batch = make_batch(encoded[s:s + batch_size], min_len)
        loss, _ = softmax_cross_entropy(net.logits(batch, train=False), targets[s:s + batch_size])
        total += float(loss.data) * len(batch.lengths)
    return total / len(encoded)


def train_classifier(arch: str, data: Sequence, config: TrainConfig | None = None,
                     labels: Sequence | None = None) -> TrainedClassifier:
    """Train one of CNN / LSTM / CLSTM on labelled SentenceMatrix objects.

    A ``config.holdout`` fraction of the data is set aside; training stops
    once the held-out loss has not improved for ``config.patience`` epochs,
    and the parameters of the best held-out epoch are returned.
    """
    arch = arch.upper()
    if arch not in ARCHITECTURES:
        raise NeuralError(f"unknown architecture {arch!r}; expected one of {ARCHITECTURES}")
    config = config or CONFIGS[arch]()
    if not data:
        raise NeuralError("no training data")
    labels = list(labels) if labels is not None else sorted({m.label for m in data})
    if len(set(m.label for m in data)) < 2 or len(labels) < 2:
        raise NeuralError("need at least two classes to train a classifier")
    label_index = {l: i for i, l in enumerate(labels)}
    dim = data[0].dim
    if any(m.dim != dim for m in data):
        raise NeuralError("all sentence matrices must share one embedding width")

    # fine-tuned copy of the token vectors seen in training
    token_index, rows = {}, []
    if config.fine_tune_embeddings:
        for m in data:
            for r, tok in enumerate(m.tokens[: m.n_valid]):
                if tok not in token_index:
                    token_index[tok] = len(rows)
                    rows.append(m.valid[r])
    table = np.array(rows) if rows else None

    net = Network(arch, config, dim, len(labels), table, rng_for(config.seed, "init", arch))
    encoded = [_encode(m, token_index) for m in data]
    targets = np.array([label_index[m.label] for m in data])

    hold, train = _stratified_holdout(targets, config.holdout, rng_for(config.seed, "holdout"))
    n_hold = len(hold)
    hold_enc = [encoded[i] for i in hold]
    hold_t = targets[hold]

    opt = Adam(net.params, lr=config.learning_rate)
    min_len = net.min_len
    best = (np.inf, 0, {k: p.data.copy() for k, p in net.params.items()})
    bad = 0
    log_rows = []
    for epoch in range(1, config.epochs + 1):
        perm = rng_for(config.seed, "shuffle", epoch).permutation(train)
        drop_rng = rng_for(config.seed, "dropout", epoch)
        total = 0.0
        for s in range(0, len(perm), config.batch_size):
            ids = perm[s:s + config.batch_size]
            batch = make_batch([encoded[i] for i in ids], min_len)
            loss, _ = softmax_cross_entropy(net.logits(batch, train=True, rng=drop_rng), targets[ids])
            opt.zero_grad()
            loss.backward()
            opt.step()
            total += float(loss.data) * len(ids)
        train_loss = total / len(perm)
        held = _mean_loss(net, hold_enc, hold_t, min_len) if n_hold else train_loss
        log_rows.append({"epoch": epoch, "train_loss": train_loss, "heldout_loss": held})
        log.info("%s epoch %d: train %.4f held-out %.4f", arch, epoch, train_loss, held)
        if held < best[0]:
            best = (held, epoch, {k: p.data.copy() for k, p in net.params.items()})
            bad = 0
        else:
            bad += 1
            if bad >= config.patience:
                log.info("%s early stop after epoch %d (best %d)", arch, epoch, best[1])
                break
    for k, p in net.params.items():
        p.data = best[2][k]
    return TrainedClassifier(arch, labels, config, net, token_index, log_rows=log_rows,
                             best_epoch=best[1])


def predict_classifier(model: TrainedClassifier, matrix) -> tuple:
    probs = model.predict_proba([matrix])[0]
    return model.labels[int(np.argmax(probs))], probs
