"""Pure-Python fallback for the skip-gram negative-sampling update loop."""

import math

import numpy as np


def _sigmoid(x):
    if x >= 0:
        return 1.0 / (1.0 + math.exp(-x))
    e = math.exp(x)
    return e / (1.0 + e)


def train_pairs(w_in, w_out, comp_ptr, comp_idx, centers, contexts, negatives, lr):
    """Apply one SGD step per (center, context) pair; returns summed loss."""
    loss = 0.0
    n_neg = negatives.shape[1]
    for p in range(centers.shape[0]):
        c = centers[p]
        rows = comp_idx[comp_ptr[c]:comp_ptr[c + 1]]
        h = w_in[rows].astype(np.float64).sum(axis=0)
        gh = np.zeros_like(h)
        ctx = contexts[p]
        for k in range(-1, n_neg):
            if k < 0:
                target, label = ctx, 1.0
            else:
                target = negatives[p, k]
                if target == ctx:
                    continue
                label = 0.0
            out = w_out[target].astype(np.float64)
            sig = _sigmoid(float(h @ out))
            loss -= math.log(sig + 1e-12) if label > 0 else math.log(1.0 - sig + 1e-12)
            g = (label - sig) * lr
            gh += g * out
            w_out[target] += (g * h).astype(np.float32)
        upd = (gh / len(rows)).astype(np.float32)
        # rows may repeat (hash collisions); apply sequentially like the compiled loop
        for r in rows:
            w_in[r] += upd
    return loss
