"""Convolutional text classifier over frozen spherical embeddings.

Input: the rows of a document's word embeddings followed by its local
metadata embeddings. Filters of widths 2-5 (20 feature maps each) with a
logistic activation, max-over-time pooling, one fully connected layer, and
a softmax head trained by batched SGD on the summed negative log-likelihood.
Embeddings are inputs, not parameters: they receive no gradient.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin

from ._util import derive_seed, sigmoid, softmax
from .embedding import EmbeddingSpace

WIDTHS = (2, 3, 4, 5)
MAPS_PER_WIDTH = 20
MIN_ROWS = 5  # inputs are zero-padded up to the largest filter width

_MAGIC = b"DSPH-CNN"
_VERSION = 1


@dataclass
class TrainConfig:
    batch_size: int = 256
    learning_rate: float = 0.05
    epochs: int = 20
    seed: int = 0

    def __post_init__(self):
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")


@dataclass
class CnnModel:
    input_dim: int
    num_labels: int
    filter_w: dict  # width -> (MAPS_PER_WIDTH, width * input_dim)
    filter_b: dict  # width -> (MAPS_PER_WIDTH,)
    fc_w: np.ndarray  # (len(WIDTHS) * MAPS_PER_WIDTH, num_labels)
    fc_b: np.ndarray  # (num_labels,)

    def params(self):
        for h in WIDTHS:
            yield self.filter_w[h]
            yield self.filter_b[h]
        yield self.fc_w
        yield self.fc_b


@dataclass
class Prediction:
    probs: np.ndarray
    label: int


def init_model(input_dim: int, num_labels: int, seed: int = 0) -> CnnModel:
    """All parameters i.i.d. uniform in [-0.05, 0.05], seeded."""
    if num_labels < 1:
        raise ValueError("num_labels must be >= 1")
    rng = np.random.default_rng(derive_seed(seed, 6))
    u = lambda *shape: rng.uniform(-0.05, 0.05, size=shape)
    filter_w = {h: u(MAPS_PER_WIDTH, h * input_dim) for h in WIDTHS}
    filter_b = {h: u(MAPS_PER_WIDTH) for h in WIDTHS}
    fc_w = u(len(WIDTHS) * MAPS_PER_WIDTH, num_labels)
    fc_b = u(num_labels)
    return CnnModel(input_dim, num_labels, filter_w, filter_b, fc_w, fc_b)


def embed_input(doc, space: EmbeddingSpace) -> np.ndarray:
    """Document input matrix: word embedding rows in token order, then local
    metadata rows (field order, then index order, duplicates kept).
    Out-of-vocabulary tokens (negative indices) are skipped. Padded with
    zero rows to at least MIN_ROWS."""
    rows = []
    words = space.word_center
    for w in doc.tokens:
        if 0 <= w < len(words):
            rows.append(words[w])
    for fname, instances in doc.local_meta.items():  # insertion order = field order
        mat = space.matrices[fname]
        for t in sorted(instances):
            rows.append(mat[t])
    n = len(rows)
    if n < MIN_ROWS:
        rows.extend([np.zeros(space.dim)] * (MIN_ROWS - n))
    return np.asarray(rows, dtype=np.float64)


def _forward_batch(model: CnnModel, X: np.ndarray, n_rows: np.ndarray):
    """Forward over a zero-padded batch X of shape (B, R, p); n_rows gives
    each item's true row count (>= MIN_ROWS). Returns (q, cache)."""
    B, R, p = X.shape
    feats = np.empty((B, len(WIDTHS), MAPS_PER_WIDTH))
    cache = {"X": X, "n_rows": n_rows, "per_width": {}}
    for wi, h in enumerate(WIDTHS):
        n_pos = R - h + 1
        win = np.lib.stride_tricks.sliding_window_view(X, h, axis=1)  # (B, n_pos, p, h)
        win = win.transpose(0, 1, 3, 2).reshape(B, n_pos, h * p)
        pre = win @ model.filter_w[h].T + model.filter_b[h]  # (B, n_pos, 20)
        valid = np.arange(n_pos)[None, :] <= (n_rows - h)[:, None]
        pre = np.where(valid[:, :, None], pre, -np.inf)
        c = sigmoid(pre)
        arg = c.argmax(axis=1)  # (B, 20)
        cmax = np.take_along_axis(c, arg[:, None, :], axis=1)[:, 0, :]
        feats[:, wi, :] = cmax
        cache["per_width"][h] = (win, arg, cmax)
    features = feats.reshape(B, -1)
    logits = features @ model.fc_w + model.fc_b
    q = softmax(logits)
    cache["features"] = features
    cache["q"] = q
    return q, cache


def forward(model: CnnModel, x: np.ndarray):
    """Single-document forward pass. Returns (Prediction, cache)."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] < MIN_ROWS:
        raise ValueError(f"input must be a matrix with >= {MIN_ROWS} rows")
    q, cache = _forward_batch(model, x[None, :, :], np.array([x.shape[0]]))
    probs = q[0]
    return Prediction(probs=probs, label=int(np.argmax(probs))), cache


def nll_loss(predictions, gold) -> float:
    """Summed negative log-likelihood; probabilities clamped at 1e-12."""
    if len(predictions) != len(gold):
        raise ValueError("predictions and gold have different lengths")
    total = 0.0
    for pred, g in zip(predictions, gold):
        total -= float(np.log(max(float(pred.probs[g]), 1e-12)))
    return total


def _backward_batch(model: CnnModel, cache, gold: np.ndarray):
    """Gradients of the summed NLL w.r.t. all parameters. The max-pool
    routes each feature map's gradient to its argmax window only."""
    q = cache["q"]
    B = q.shape[0]
    dlogits = q.copy()
    dlogits[np.arange(B), gold] -= 1.0  # (B, L)
    grads = {
        "fc_w": cache["features"].T @ dlogits,
        "fc_b": dlogits.sum(axis=0),
    }
    dfeat = (dlogits @ model.fc_w.T).reshape(B, len(WIDTHS), MAPS_PER_WIDTH)
    for wi, h in enumerate(WIDTHS):
        win, arg, cmax = cache["per_width"][h]
        dpre = dfeat[:, wi, :] * cmax * (1.0 - cmax)  # (B, 20)
        # windows at each map's argmax: (B, 20, h*p)
        sel = np.take_along_axis(win, arg[:, :, None], axis=1)
        grads[("w", h)] = np.einsum("bj,bjq->jq", dpre, sel)
        grads[("b", h)] = dpre.sum(axis=0)
    return grads


def backward(model: CnnModel, cache, gold) -> dict:
    """Single-example gradients (see _backward_batch); gold is one label."""
    return _backward_batch(model, cache, np.asarray([gold]))


def _pad_batch(inputs):
    R = max(x.shape[0] for x in inputs)
    p = inputs[0].shape[1]
    X = np.zeros((len(inputs), R, p))
    n_rows = np.empty(len(inputs), dtype=np.int64)
    for i, x in enumerate(inputs):
        X[i, : x.shape[0]] = x
        n_rows[i] = x.shape[0]
    return X, n_rows


def train_classifier(space: EmbeddingSpace, real, synthetic: dict,
                     config: TrainConfig) -> CnnModel:
    """SGD on real + synthetic documents.

    real: list of (document, label) pairs; synthetic: map label -> list of
    synthetic documents. Batches average the summed-NLL gradient; epochs
    reshuffle with a seeded generator. The embedding space is read-only
    throughout.
    """
    items = [(embed_input(doc, space), lab) for doc, lab in real]
    for lab in sorted(synthetic):
        for doc in synthetic[lab]:
            items.append((embed_input(doc, space), lab))
    if not items:
        raise ValueError("no training documents")
    num_labels = len(space.label) if len(space.label) else max(lab for _, lab in items) + 1
    model = init_model(space.dim, num_labels, config.seed)
    rng = np.random.default_rng(derive_seed(config.seed, 7))
    for _ in range(config.epochs):
        order = rng.permutation(len(items))
        for s in range(0, len(items), config.batch_size):
            batch = order[s:s + config.batch_size]
            X, n_rows = _pad_batch([items[i][0] for i in batch])
            gold = np.asarray([items[i][1] for i in batch])
            _, cache = _forward_batch(model, X, n_rows)
            grads = _backward_batch(model, cache, gold)
            scale = config.learning_rate / len(batch)
            model.fc_w -= scale * grads["fc_w"]
            model.fc_b -= scale * grads["fc_b"]
            for h in WIDTHS:
                model.filter_w[h] -= scale * grads[("w", h)]
                model.filter_b[h] -= scale * grads[("b", h)]
    return model


def predict(model: CnnModel, space: EmbeddingSpace, docs, batch_size: int = 256):
    """Forward pass per document; argmax label, lowest index on ties."""
    preds = []
    docs = list(docs)
    for s in range(0, len(docs), batch_size):
        chunk = docs[s:s + batch_size]
        X, n_rows = _pad_batch([embed_input(d, space) for d in chunk])
        q, _ = _forward_batch(model, X, n_rows)
        for row in q:
            preds.append(Prediction(probs=row, label=int(np.argmax(row))))
    return preds


def save_model(path, model: CnnModel) -> None:
    with open(path, "wb") as f:
        f.write(_MAGIC)
        f.write(struct.pack("<III", _VERSION, model.input_dim, model.num_labels))
        f.write(struct.pack("<I", len(WIDTHS)))
        for h in WIDTHS:
            f.write(struct.pack("<I", h))
        for arr in model.params():
            f.write(np.ascontiguousarray(arr, dtype=np.float64).tobytes())


def load_model(path) -> CnnModel:
    with open(path, "rb") as f:
        if f.read(len(_MAGIC)) != _MAGIC:
            raise ValueError(f"{path}: not a classifier model file")
        version, p, L = struct.unpack("<III", f.read(12))
        if version != _VERSION:
            raise ValueError(f"{path}: unsupported version {version}")
        (nw,) = struct.unpack("<I", f.read(4))
        widths = struct.unpack(f"<{nw}I", f.read(4 * nw))
        if tuple(widths) != WIDTHS:
            raise ValueError(f"{path}: unexpected filter widths {widths}")

        def block(*shape):
            count = int(np.prod(shape))
            return np.frombuffer(f.read(count * 8), dtype=np.float64).reshape(shape).copy()

        filter_w = {}
        filter_b = {}
        for h in WIDTHS:
            filter_w[h] = block(MAPS_PER_WIDTH, h * p)
            filter_b[h] = block(MAPS_PER_WIDTH)
        fc_w = block(nw * MAPS_PER_WIDTH, L)
        fc_b = block(L)
    return CnnModel(p, L, filter_w, filter_b, fc_w, fc_b)


class ConvTextClassifier(BaseEstimator, ClassifierMixin):
    """Estimator-style wrapper around train_classifier/predict.

    fit(docs, y, space=...) trains on (doc, label) pairs; synthetic
    documents can be folded in by passing them in docs/y like any other
    sample. predict/predict_proba run the frozen-embedding forward pass.
    """

    def __init__(self, batch_size=256, learning_rate=0.05, epochs=20, seed=0):
        self.batch_size = batch_size
        self.learning_rate = learning_rate
        self.epochs = epochs
        self.seed = seed

    def fit(self, X, y, *, space: EmbeddingSpace):
        y = np.asarray(y, dtype=np.int64)
        cfg = TrainConfig(batch_size=self.batch_size, learning_rate=self.learning_rate,
                          epochs=self.epochs, seed=self.seed)
        self.space_ = space
        self.model_ = train_classifier(space, list(zip(X, y)), {}, cfg)
        self.classes_ = np.arange(self.model_.num_labels)
        return self

    def predict_proba(self, X):
        return np.vstack([p.probs for p in predict(self.model_, self.space_, X)])

    def predict(self, X):
        return np.asarray([p.label for p in predict(self.model_, self.space_, X)])
