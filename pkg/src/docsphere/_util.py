"""Small numeric helpers shared across modules."""

from __future__ import annotations

import numpy as np


def sigmoid(x):
    """Numerically stable logistic function, elementwise."""
    x = np.asarray(x, dtype=np.float64)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out if out.ndim else float(out)


def log_sigmoid(x):
    """log(sigmoid(x)) without overflow for large |x|."""
    x = np.asarray(x, dtype=np.float64)
    out = np.where(x >= 0, -np.log1p(np.exp(-np.abs(x))), x - np.log1p(np.exp(-np.abs(x))))
    return out if out.ndim else float(out)


def softmax(x):
    """Stable softmax over the last axis."""
    x = np.asarray(x, dtype=np.float64)
    shifted = x - x.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def unit_rows(mat, eps=1e-30):
    """Project every row of ``mat`` onto the unit sphere, in place."""
    norms = np.linalg.norm(mat, axis=-1, keepdims=True)
    np.maximum(norms, eps, out=norms)
    mat /= norms
    return mat


def derive_seed(root, *key):
    """Deterministic child seed from a root seed and a tuple key."""
    ss = np.random.SeedSequence(entropy=int(root), spawn_key=tuple(int(k) for k in key))
    return int(ss.generate_state(1, dtype=np.uint64)[0])
