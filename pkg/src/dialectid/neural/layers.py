"""Layer functions and the Adam optimizer built on the autodiff Tensor."""

from __future__ import annotations

import numpy as np

from .autodiff import SparseRows, Tensor, softmax_cross_entropy, unfold_time

__all__ = [
    "conv1d", "max_over_time", "lstm_step", "dropout", "softmax_cross_entropy",
    "Adam", "glorot",
]


def glorot(rng, fan_in, fan_out, shape=None):
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape or (fan_in, fan_out))


def conv1d(x, kernels, bias):
    """Valid cross-correlation over time followed by ReLU.

    ``x`` is ``(L, d)`` or ``(B, L, d)``; ``kernels`` is ``(m * d, F)`` with the
    window flattened time-major, so output is ``(..., L - m + 1, F)``.
    """
    x = Tensor._wrap(x)
    kernels = Tensor._wrap(kernels)
    squeeze = x.data.ndim == 2
    if squeeze:
        x = x.reshape(1, *x.shape)
    d = x.shape[-1]
    m, rem = divmod(kernels.shape[0], d)
    if rem:
        raise ValueError("kernel rows must be a multiple of the embedding width")
    if x.shape[1] < m:
        raise ValueError(f"sequence length {x.shape[1]} is shorter than kernel size {m}")
    out = (unfold_time(x, m) @ kernels + bias).relu()
    if squeeze:
        out = out.reshape(*out.shape[1:])
    return out


def max_over_time(fmap):
    """Column-wise maximum of a ``(T, F)`` or ``(B, T, F)`` feature map."""
    fmap = Tensor._wrap(fmap)
    if fmap.shape[-2] < 1:
        raise ValueError("empty feature map")
    return fmap.max(axis=fmap.data.ndim - 2)


def lstm_step(x_t, h_prev, c_prev, params):
    """One LSTM step. ``params`` holds ``Wx (d, 4H)``, ``Wh (H, 4H)``, ``b (4H,)``.

    Gate blocks are laid out as input, forget, candidate, output.
    """
    Wx, Wh, b = params["Wx"], params["Wh"], params["b"]
    H = Wh.shape[0]
    z = Tensor._wrap(x_t) @ Wx + Tensor._wrap(h_prev) @ Wh + b
    i = z[..., 0:H].sigmoid()
    f = z[..., H:2 * H].sigmoid()
    g = z[..., 2 * H:3 * H].tanh()
    o = z[..., 3 * H:4 * H].sigmoid()
    c = f * c_prev + i * g
    h = o * c.tanh()
    return h, c


def dropout(x, rate, train, rng):
    """Inverted dropout; identity when not training or ``rate == 0``."""
    if not 0 <= rate < 1:
        raise ValueError("dropout rate must be in [0, 1)")
    x = Tensor._wrap(x)
    if not train or rate == 0:
        return x
    keep = rng.random(x.shape) >= rate
    return x * (keep / (1.0 - rate))


class Adam:
    """Adam with bias correction. Row-sparse gradients update only their rows."""

    def __init__(self, params: dict, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        self.params = params
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = {k: np.zeros_like(p.data) for k, p in params.items()}
        self.v = {k: np.zeros_like(p.data) for k, p in params.items()}

    def step(self):
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        c1 = 1.0 - b1 ** self.t
        c2 = 1.0 - b2 ** self.t
        for k, p in self.params.items():
            g = p.grad
            if g is None:
                continue
            m, v = self.m[k], self.v[k]
            if isinstance(g, SparseRows):
                r, gv = g.rows, g.values
                m[r] = b1 * m[r] + (1 - b1) * gv
                v[r] = b2 * v[r] + (1 - b2) * gv * gv
                p.data[r] -= self.lr * (m[r] / c1) / (np.sqrt(v[r] / c2) + self.eps)
            else:
                m *= b1
                m += (1 - b1) * g
                v *= b2
                v += (1 - b2) * g * g
                p.data -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)

    def zero_grad(self):
        for p in self.params.values():
            p.grad = None


def adam_update(params: dict, grads: dict, state: dict | None = None, lr=1e-3,
                beta1=0.9, beta2=0.999, eps=1e-8):
    """Functional Adam step on plain arrays; returns ``(new_params, new_state)``."""
    state = state or {"t": 0, "m": {k: np.zeros_like(v) for k, v in params.items()},
                      "v": {k: np.zeros_like(v) for k, v in params.items()}}
    t = state["t"] + 1
    new_p, new_m, new_v = {}, {}, {}
    for k, p in params.items():
        g = grads[k]
        m = beta1 * state["m"][k] + (1 - beta1) * g
        v = beta2 * state["v"][k] + (1 - beta2) * g * g
        new_p[k] = p - lr * (m / (1 - beta1 ** t)) / (np.sqrt(v / (1 - beta2 ** t)) + eps)
        new_m[k], new_v[k] = m, v
    return new_p, {"t": t, "m": new_m, "v": new_v}
