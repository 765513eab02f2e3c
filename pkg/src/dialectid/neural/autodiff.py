"""A small reverse-mode automatic differentiation engine over float64 numpy arrays."""

from __future__ import annotations

import numpy as np


class SparseRows:
    """Row-sparse gradient: ``values[k]`` belongs to row ``rows[k]`` (rows unique)."""

    __slots__ = ("rows", "values")

    def __init__(self, rows, values):
        self.rows = rows
        self.values = values

    def to_dense(self, shape):
        out = np.zeros(shape)
        np.add.at(out, self.rows, self.values)
        return out

    def merge(self, rows, values):
        allr = np.concatenate([self.rows, rows])
        uniq, inv = np.unique(allr, return_inverse=True)
        vals = np.zeros((len(uniq),) + self.values.shape[1:])
        np.add.at(vals, inv, np.concatenate([self.values, values]))
        return SparseRows(uniq, vals)


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for ax, n in enumerate(shape):
        if n == 1 and grad.shape[ax] != 1:
            grad = grad.sum(axis=ax, keepdims=True)
    return grad


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "name")

    # ``grad`` is a dense array, or a SparseRows for embedding tables

    def __init__(self, data, requires_grad=False, name=None, _parents=()):
        self.data = np.asarray(data, dtype=np.float64)
        self.requires_grad = requires_grad
        self.grad = None
        self._parents = _parents
        self._backward = None
        self.name = name

    @property
    def shape(self):
        return self.data.shape

    def __repr__(self):
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"

    def _accum(self, g):
        if self.grad is None:
            self.grad = np.array(g, dtype=np.float64, copy=True)
        elif isinstance(self.grad, SparseRows):
            self.grad = self.grad.to_dense(self.shape) + g
        else:
            self.grad += g

    def _accum_at(self, idx, g):
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        elif isinstance(self.grad, SparseRows):
            self.grad = self.grad.to_dense(self.shape)
        self.grad[idx] += g

    def _accum_rows(self, rows, values):
        if self.grad is None:
            self.grad = SparseRows(rows, values)
        elif isinstance(self.grad, SparseRows):
            self.grad = self.grad.merge(rows, values)
        else:
            np.add.at(self.grad, rows, values)

    def zero_grad(self):
        self.grad = None

    def backward(self, grad=None):
        """Accumulate d(self)/d(leaf) into every leaf that requires a gradient."""
        topo, seen = [], set()
        stack = [(self, False)]
        while stack:
            node, done = stack.pop()
            if done:
                topo.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if p.requires_grad and id(p) not in seen:
                    stack.append((p, False))
        self.grad = np.ones_like(self.data) if grad is None else np.asarray(grad, dtype=np.float64)
        for node in reversed(topo):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)
        # free intermediate gradients; leaves keep theirs
        for node in topo:
            if node._parents:
                node.grad = None

    # -- graph construction -------------------------------------------------

    @staticmethod
    def _wrap(x):
        return x if isinstance(x, Tensor) else Tensor(x)

    def _op(self, data, parents, backward):
        rg = any(p.requires_grad for p in parents)
        out = Tensor(data, rg, _parents=tuple(parents) if rg else ())
        if rg:
            out._backward = backward
        return out

    def __add__(self, other):
        other = self._wrap(other)
        a, b = self, other

        def bw(g):
            if a.requires_grad:
                a._accum(_unbroadcast(g, a.shape))
            if b.requires_grad:
                b._accum(_unbroadcast(g, b.shape))
        return self._op(a.data + b.data, (a, b), bw)

    __radd__ = __add__

    def __neg__(self):
        return self * -1.0

    def __sub__(self, other):
        return self + (-self._wrap(other))

    def __rsub__(self, other):
        return self._wrap(other) + (-self)

    def __mul__(self, other):
        other = self._wrap(other)
        a, b = self, other

        def bw(g):
            if a.requires_grad:
                a._accum(_unbroadcast(g * b.data, a.shape))
            if b.requires_grad:
                b._accum(_unbroadcast(g * a.data, b.shape))
        return self._op(a.data * b.data, (a, b), bw)

    __rmul__ = __mul__

    def __matmul__(self, other):
        other = self._wrap(other)
        a, b = self, other

        def bw(g):
            if a.requires_grad:
                ga = g @ np.swapaxes(b.data, -1, -2) if b.data.ndim > 1 else np.multiply.outer(g, b.data)
                a._accum(_unbroadcast(ga, a.shape))
            if b.requires_grad:
                if a.data.ndim == 1:
                    gb = np.multiply.outer(a.data, g)
                elif b.data.ndim == 2:
                    # fold batch axes into one product instead of summing per-batch results
                    gb = a.data.reshape(-1, a.shape[-1]).T @ g.reshape(-1, g.shape[-1])
                else:
                    gb = np.swapaxes(a.data, -1, -2) @ g
                b._accum(_unbroadcast(gb, b.shape))
        return self._op(a.data @ b.data, (a, b), bw)

    def __getitem__(self, idx):
        a = self
        parts = idx if isinstance(idx, tuple) else (idx,)
        basic = all(isinstance(p, (slice, int)) or p is Ellipsis for p in parts)

        def bw(g):
            if basic:
                a._accum_at(idx, g)
            else:
                full = np.zeros_like(a.data)
                np.add.at(full, idx, g)
                a._accum(full)
        return self._op(a.data[idx], (a,), bw)

    def unbind(self, axis=1):
        """Split along ``axis`` into a list of views sharing one gradient buffer."""
        return [self[(slice(None),) * axis + (t,)] for t in range(self.shape[axis])]

    def reshape(self, *shape):
        a = self

        def bw(g):
            a._accum(g.reshape(a.shape))
        return self._op(a.data.reshape(*shape), (a,), bw)

    def sum(self, axis=None):
        a = self

        def bw(g):
            if axis is not None:
                g = np.expand_dims(g, axis)
            a._accum(np.broadcast_to(g, a.shape))
        return self._op(a.data.sum(axis=axis), (a,), bw)

    def max(self, axis):
        """Maximum along ``axis``; the gradient goes to the first maximal entry."""
        a = self
        arg = np.argmax(a.data, axis=axis)
        out = np.take_along_axis(a.data, np.expand_dims(arg, axis), axis).squeeze(axis)

        def bw(g):
            full = np.zeros_like(a.data)
            np.put_along_axis(full, np.expand_dims(arg, axis), np.expand_dims(g, axis), axis)
            a._accum(full)
        return self._op(out, (a,), bw)

    def sigmoid(self):
        a = self
        x = a.data
        s = np.empty_like(x)
        pos = x >= 0
        s[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
        e = np.exp(x[~pos])
        s[~pos] = e / (1.0 + e)

        def bw(g):
            a._accum(g * s * (1.0 - s))
        return self._op(s, (a,), bw)

    def tanh(self):
        a = self
        t = np.tanh(a.data)

        def bw(g):
            a._accum(g * (1.0 - t * t))
        return self._op(t, (a,), bw)

    def relu(self):
        a = self
        m = a.data > 0

        def bw(g):
            a._accum(g * m)
        return self._op(a.data * m, (a,), bw)


def concat(tensors, axis=-1) -> Tensor:
    tensors = [Tensor._wrap(t) for t in tensors]
    data = np.concatenate([t.data for t in tensors], axis=axis)
    sizes = np.cumsum([t.shape[axis] for t in tensors])[:-1]

    def bw(g):
        for t, piece in zip(tensors, np.split(g, sizes, axis=axis)):
            if t.requires_grad:
                t._accum(piece)
    return tensors[0]._op(data, tensors, bw)


def embedding(table: Tensor, idx: np.ndarray) -> Tensor:
    """Gather rows ``table[idx]``; negative indices give zero rows.

    The gradient is returned to the table as row-sparse ``SparseRows``.
    """
    idx = np.asarray(idx)
    valid = idx >= 0
    data = table.data[np.where(valid, idx, 0)] * valid[..., None]
    flat = idx.reshape(-1)
    keep = flat >= 0
    uniq, inv = np.unique(flat[keep], return_inverse=True)

    def bw(g):
        vals = np.zeros((len(uniq), table.shape[-1]))
        np.add.at(vals, inv, g.reshape(-1, table.shape[-1])[keep])
        table._accum_rows(uniq, vals)
    return table._op(data, (table,), bw)


def unfold_time(x: Tensor, width: int) -> Tensor:
    """(B, T, d) -> (B, T - width + 1, width * d): sliding windows over time."""
    B, T, d = x.shape
    n = T - width + 1
    if n < 1:
        raise ValueError(f"sequence length {T} shorter than window {width}")
    idx = np.arange(n)[:, None] + np.arange(width)[None, :]
    data = x.data[:, idx, :].reshape(B, n, width * d)

    def bw(g):
        full = np.zeros_like(x.data)
        g4 = g.reshape(B, n, width, d)
        for k in range(width):
            full[:, k:k + n, :] += g4[:, :, k, :]
        x._accum(full)
    return x._op(data, (x,), bw)


def softmax_cross_entropy(logits: Tensor, targets: np.ndarray):
    """Mean cross-entropy over a batch of logits ``(B, k)``.

    Returns ``(loss tensor, probabilities)``; max-subtraction keeps it stable.
    """
    z = logits.data
    if z.ndim == 1:
        z = z[None, :]
    targets = np.atleast_1d(np.asarray(targets))
    shifted = z - z.max(axis=1, keepdims=True)
    ez = np.exp(shifted)
    probs = ez / ez.sum(axis=1, keepdims=True)
    logp = shifted - np.log(ez.sum(axis=1, keepdims=True))
    n = z.shape[0]
    loss = -logp[np.arange(n), targets].mean()

    def bw(g):
        d = probs.copy()
        d[np.arange(n), targets] -= 1.0
        d *= g / n
        logits._accum(d.reshape(logits.shape))
    out = logits._op(np.asarray(loss), (logits,), bw)
    return out, probs.reshape(logits.shape)
