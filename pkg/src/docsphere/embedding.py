"""Joint spherical embeddings of words, documents, labels, and metadata.

All element kinds live on the same unit sphere and are trained together by
maximizing a generative log-likelihood through negative sampling. Each
element is addressed as a (namespace, index) pair; namespaces are "word",
"word_ctx" (the separate context table for word-word pairs), "doc", "label",
and one namespace per metadata field.

The positive-pair stream realizes, per document d:
  (z, d)    for each global metadata instance z of d
  (l, d)    only when d is in the labeled split
  (d, t)    for each local metadata instance t of d
  (d, w)    for each token w of d
  (w, w')   for each token pair with w' in the size-h window around w,
            w' addressed in the context table
Negatives for a pair are drawn from the target (second) element's namespace
under its unigram distribution raised to 0.75 (documents are uniform).
"""

from __future__ import annotations

import struct
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator

from ._util import derive_seed, log_sigmoid, sigmoid, unit_rows
from .corpus import CorpusSplit, Document, MetadataSchema, Vocabulary

NOISE_EXPONENT = 0.75

_MAGIC = b"DSPH-EMB"
_VERSION = 1


@dataclass
class EmbedConfig:
    dim: int = 100
    window: int = 5
    negatives: int = 5
    learning_rate: float = 0.025
    learning_rate_floor: float = 1e-4
    epochs: int = 10
    batch: int = 512
    seed: int = 0
    # Namespaces whose pairs are dropped entirely: a metadata field name
    # ("user"), or "word_ctx" to ablate the word-context relation.
    exclude: tuple = ()
    # Every N batches, remove each namespace's mean direction and re-project.
    # On a sphere the summed negative-sampling push has an unstable mode
    # where centers and contexts herd to antipodal poles (growth rate rises
    # with the negative count); recentering removes exactly that common
    # direction while leaving relative structure intact. 0 disables.
    center_every: int = 10
    # workers > 1 enables lock-free parallel batches: faster, tolerated
    # races, NOT deterministic. Keep at 1 for reproducible runs.
    workers: int = 1
    # After the main pass, snap each label to the mean direction of its
    # labeled documents (the maximum-likelihood estimate under the
    # document-generation model). See _refit_labels for why SGD alone
    # leaves labels short of their cluster.
    label_refit: bool = True

    def __post_init__(self):
        if self.dim < 2:
            raise ValueError("dim must be >= 2")
        if self.window < 1:
            raise ValueError("window must be >= 1")
        if self.negatives < 1:
            raise ValueError("negatives must be >= 1")
        if self.epochs < 0 or self.batch < 1 or self.workers < 1:
            raise ValueError("epochs >= 0, batch >= 1, workers >= 1 required")
        if self.center_every < 0:
            raise ValueError("center_every must be >= 0")
        self.exclude = tuple(self.exclude)


@dataclass
class EmbeddingSpace:
    """Unit-row matrices keyed by namespace, all with a shared dimension."""

    dim: int
    matrices: dict  # namespace -> (size, dim) float64 array

    @property
    def word_center(self) -> np.ndarray:
        return self.matrices["word"]

    @property
    def word_context(self) -> np.ndarray:
        return self.matrices["word_ctx"]

    @property
    def doc(self) -> np.ndarray:
        return self.matrices["doc"]

    @property
    def label(self) -> np.ndarray:
        return self.matrices["label"]

    def vector(self, namespace: str, index: int) -> np.ndarray:
        return self.matrices[namespace][index]

    def namespaces(self) -> list:
        return list(self.matrices)

    def copy(self) -> "EmbeddingSpace":
        return EmbeddingSpace(self.dim, {ns: m.copy() for ns, m in self.matrices.items()})

    def max_norm_deviation(self) -> float:
        dev = 0.0
        for m in self.matrices.values():
            if len(m):
                dev = max(dev, float(np.abs(np.linalg.norm(m, axis=1) - 1.0).max()))
        return dev


def _namespace_order(schema: MetadataSchema) -> list:
    return ["word", "word_ctx", "doc", "label"] + list(schema.global_fields) + list(schema.local_fields)


def init_embeddings(vocab: Vocabulary, corpus_size: int, schema: MetadataSchema,
                    config: EmbedConfig) -> EmbeddingSpace:
    """Seeded isotropic Gaussian rows projected to the unit sphere."""
    sizes = {
        "word": len(vocab.words),
        "word_ctx": len(vocab.words),
        "doc": corpus_size,
        "label": len(vocab.labels),
    }
    for name in schema.fields:
        sizes[name] = len(vocab.field_namespace(name))
    rng = np.random.default_rng(derive_seed(config.seed, 1))
    matrices = {}
    for ns in _namespace_order(schema):
        m = rng.standard_normal((sizes[ns], config.dim))
        matrices[ns] = unit_rows(m) if len(m) else m
    return EmbeddingSpace(config.dim, matrices)


def positive_pairs(doc: Document, doc_row: int, split: CorpusSplit, window: int = 5):
    """All positive training pairs contributed by one document, in a fixed
    order: global metadata, label (labeled docs only), local metadata,
    doc-word, then word-context pairs."""
    return _doc_pairs(doc, doc_row, split.labeled_ids(), window)


def _doc_pairs(doc: Document, doc_row: int, labeled_ids: dict, window: int):
    d = ("doc", doc_row)
    pairs = []
    for name, z in doc.global_meta.items():
        pairs.append(((name, z), d))
    lab = labeled_ids.get(doc.id)
    if lab is not None:
        pairs.append((("label", lab), d))
    for name, instances in doc.local_meta.items():
        for t in instances:
            pairs.append((d, (name, t)))
    toks = [w for w in doc.tokens if w >= 0]
    for w in toks:
        pairs.append((d, ("word", w)))
    n = len(toks)
    for i in range(n):
        lo = max(0, i - window)
        hi = min(n, i + window + 1)
        for j in range(lo, hi):
            if j != i:
                pairs.append((("word", toks[i]), ("word_ctx", toks[j])))
    return pairs


def pair_objective(space: EmbeddingSpace, pair, negatives):
    """Negative-sampling objective for one pair and its gradient.

    l = log s(x_a . x_b) + sum_n log s(-x_a . x_n)  with s the logistic
    function. Returns (l, grads) where grads maps (namespace, index) to the
    summed dl/dx for that row (duplicates among b/negatives accumulate).
    """
    (ns_a, ia), (ns_b, ib) = pair
    xa = space.matrices[ns_a][ia]
    xb = space.matrices[ns_b][ib]
    grads = {}

    def _add(key, vec):
        if key in grads:
            grads[key] = grads[key] + vec
        else:
            grads[key] = vec.copy()

    dot = float(xa @ xb)
    value = float(log_sigmoid(dot))
    s_pos = sigmoid(-dot)
    _add((ns_a, ia), s_pos * xb)
    _add((ns_b, ib), s_pos * xa)
    for ns_n, ni in negatives:
        xn = space.matrices[ns_n][ni]
        dn = float(xa @ xn)
        value += float(log_sigmoid(-dn))
        s_neg = sigmoid(dn)
        _add((ns_a, ia), -s_neg * xn)
        _add((ns_n, ni), -s_neg * xa)
    return value, grads


def sgd_step(space: EmbeddingSpace, pair, negatives, lr: float) -> EmbeddingSpace:
    """One ascent step on the pair objective, in place; every touched row is
    re-projected to the unit sphere afterward."""
    if lr == 0.0:
        return space
    _, grads = pair_objective(space, pair, negatives)
    touched = {}
    for (ns, idx), g in grads.items():
        space.matrices[ns][idx] += lr * g
        touched.setdefault(ns, set()).add(idx)
    for ns, idxs in touched.items():
        rows = np.fromiter(idxs, dtype=np.intp)
        sub = space.matrices[ns][rows]
        space.matrices[ns][rows] = sub / np.linalg.norm(sub, axis=1, keepdims=True)
    return space


class _PairArrays:
    """All positive pairs of a corpus as flat integer arrays.

    Namespaces are coded as small ints following the schema's canonical
    order so batched gathers/scatters can group by code.
    """

    def __init__(self, docs, vocab, schema, split, window, exclude=()):
        order = _namespace_order(schema)
        self.order = order
        self.code = {ns: i for i, ns in enumerate(order)}
        labeled_ids = split.labeled_ids()
        a_ns, a_ix, b_ns, b_ix = [], [], [], []
        dropped = set(exclude)
        for row, doc in enumerate(docs):
            for (nsa, ia), (nsb, ib) in _doc_pairs(doc, row, labeled_ids, window):
                if nsa in dropped or nsb in dropped:
                    continue
                a_ns.append(self.code[nsa])
                a_ix.append(ia)
                b_ns.append(self.code[nsb])
                b_ix.append(ib)
        self.a_ns = np.asarray(a_ns, dtype=np.int8)
        self.a_ix = np.asarray(a_ix, dtype=np.int64)
        self.b_ns = np.asarray(b_ns, dtype=np.int8)
        self.b_ix = np.asarray(b_ix, dtype=np.int64)
        self.noise = _noise_tables(vocab, schema, len(docs))

    def __len__(self):
        return len(self.a_ix)


def _noise_tables(vocab: Vocabulary, schema: MetadataSchema, corpus_size: int) -> dict:
    """Cumulative noise distributions per namespace (unigram^0.75)."""
    tables = {}

    def _cdf(counts):
        w = np.asarray(counts, dtype=np.float64) ** NOISE_EXPONENT
        total = w.sum()
        if total <= 0:
            return None
        return np.cumsum(w / total)

    tables["word"] = _cdf(vocab.words.counts)
    tables["word_ctx"] = tables["word"]
    tables["doc"] = _cdf(np.ones(corpus_size)) if corpus_size else None
    tables["label"] = _cdf(vocab.labels.counts)
    for name in schema.fields:
        tables[name] = _cdf(vocab.field_namespace(name).counts)
    return tables


def _draw_negatives(pairs: _PairArrays, batch_bns, k: int, rng) -> np.ndarray:
    """Negative indices (B, k), each row drawn from its target namespace.

    Namespaces are visited in canonical-code order so the draw sequence is
    independent of how pairs interleave within the batch."""
    out = np.empty((len(batch_bns), k), dtype=np.int64)
    for code in np.unique(batch_bns):
        mask = batch_bns == code
        cdf = pairs.noise[pairs.order[code]]
        u = rng.random((int(mask.sum()), k))
        out[mask] = np.searchsorted(cdf, u, side="right")
    return out


def _apply_batch(space, pairs, sl, neg_ix, lr, k):
    """Vectorized ascent on one batch of pairs; renormalizes touched rows."""
    a_ns = pairs.a_ns[sl]
    a_ix = pairs.a_ix[sl]
    b_ns = pairs.b_ns[sl]
    b_ix = pairs.b_ix[sl]
    B = len(a_ix)
    p = space.dim
    mats = [space.matrices[ns] for ns in pairs.order]

    A = np.empty((B, p))
    Bv = np.empty((B, p))
    for code in np.unique(a_ns):
        m = a_ns == code
        A[m] = mats[code][a_ix[m]]
    for code in np.unique(b_ns):
        m = b_ns == code
        Bv[m] = mats[code][b_ix[m]]
    N = np.empty((B, k, p))
    for code in np.unique(b_ns):
        m = b_ns == code
        N[m] = mats[code][neg_ix[m]]

    s_pos = sigmoid(-np.einsum("bp,bp->b", A, Bv))
    s_neg = sigmoid(np.einsum("bp,bkp->bk", A, N))
    gA = s_pos[:, None] * Bv - np.einsum("bk,bkp->bp", s_neg, N)
    gB = s_pos[:, None] * A
    gN = -s_neg[:, :, None] * A[:, None, :]

    for code in np.unique(a_ns):
        m = a_ns == code
        np.add.at(mats[code], a_ix[m], lr * gA[m])
    for code in np.unique(b_ns):
        m = b_ns == code
        np.add.at(mats[code], b_ix[m], lr * gB[m])
        flat_ix = neg_ix[m].ravel()
        np.add.at(mats[code], flat_ix, lr * gN[m].reshape(-1, p))
        touched = np.unique(np.concatenate([b_ix[m], flat_ix]))
        sub = mats[code][touched]
        mats[code][touched] = sub / np.linalg.norm(sub, axis=1, keepdims=True)
    for code in np.unique(a_ns):
        m = a_ns == code
        touched = np.unique(a_ix[m])
        sub = mats[code][touched]
        mats[code][touched] = sub / np.linalg.norm(sub, axis=1, keepdims=True)


def _refit_labels(space, pairs):
    """Close each label at the mean direction of its labeled documents.

    The generative reading of a label vector is the mean direction of its
    class's documents, and the maximum-likelihood estimate of that mean
    from the labeled docs is their normalized vector sum. SGD never gets
    there: noise documents are drawn uniformly, so a quarter of a label's
    negatives are its own class and the repulsion grows exactly as the
    label approaches its cluster, capping the alignment well short of the
    center. Every non-label row is left untouched."""
    lcode = pairs.code.get("label")
    if lcode is None:
        return
    mask = pairs.a_ns == lcode
    if not mask.any():
        return
    uniq = np.unique(np.stack([pairs.a_ix[mask], pairs.b_ix[mask]]), axis=1)
    labels = space.matrices["label"]
    doc_m = space.matrices["doc"]
    for lab in np.unique(uniq[0]):
        rows = uniq[1][uniq[0] == lab]
        mean = doc_m[rows].mean(axis=0)
        norm = np.linalg.norm(mean)
        if norm > 0:
            labels[lab] = mean / norm


def train_embeddings(docs, vocab: Vocabulary, schema: MetadataSchema,
                     split: CorpusSplit, config: EmbedConfig) -> EmbeddingSpace:
    """Negative-sampling SGD over seeded shuffles of all positive pairs.

    Learning rate decays linearly from config.learning_rate to the floor
    across the full run. With workers == 1 the result is bit-reproducible
    for a given seed; workers > 1 trades determinism for speed (batches are
    applied concurrently without locks, then re-normalized).
    """
    space = init_embeddings(vocab, len(docs), schema, config)
    pairs = _PairArrays(docs, vocab, schema, split, config.window, config.exclude)
    n_pairs = len(pairs)
    if n_pairs == 0 or config.epochs == 0:
        return space

    shuffle_rng = np.random.default_rng(derive_seed(config.seed, 2))
    noise_rng = np.random.default_rng(derive_seed(config.seed, 3))
    k = config.negatives
    lr0, lr1 = config.learning_rate, config.learning_rate_floor
    total_batches = config.epochs * ((n_pairs + config.batch - 1) // config.batch)
    batch_no = 0

    def recenter():
        for m in space.matrices.values():
            if len(m):
                m -= m.mean(axis=0)
                unit_rows(m)

    for _ in range(config.epochs):
        perm = shuffle_rng.permutation(n_pairs)
        starts = range(0, n_pairs, config.batch)
        jobs = []
        for s in starts:
            sl = perm[s:s + config.batch]
            neg_ix = _draw_negatives(pairs, pairs.b_ns[sl], k, noise_rng)
            frac = batch_no / max(1, total_batches - 1) if total_batches > 1 else 1.0
            lr = lr0 + (lr1 - lr0) * frac
            jobs.append((sl, neg_ix, lr))
            batch_no += 1
        if config.workers == 1:
            for i, (sl, neg_ix, lr) in enumerate(jobs, start=batch_no - len(jobs) + 1):
                _apply_batch(space, pairs, sl, neg_ix, lr, k)
                if config.center_every and i % config.center_every == 0:
                    recenter()
        else:
            with ThreadPoolExecutor(max_workers=config.workers) as pool:
                list(pool.map(lambda j: _apply_batch(space, pairs, j[0], j[1], j[2], k), jobs))
            for m in space.matrices.values():  # races can leave norms off
                if len(m):
                    unit_rows(m)
            if config.center_every:
                recenter()
    if config.label_refit:
        _refit_labels(space, pairs)
    return space


def estimate_log_likelihood(space: EmbeddingSpace, docs, vocab: Vocabulary,
                            schema: MetadataSchema, split: CorpusSplit,
                            negatives: int = 5, seed: int = 0,
                            window: int = 5) -> float:
    """Negative-sampling surrogate of the corpus log-likelihood with a
    frozen seeded negative set; a monitoring quantity, not a true
    likelihood."""
    pairs = _PairArrays(docs, vocab, schema, split, window)
    if len(pairs) == 0:
        return 0.0
    rng = np.random.default_rng(derive_seed(seed, 4))
    mats = [space.matrices[ns] for ns in pairs.order]
    total = 0.0
    for s in range(0, len(pairs), 8192):
        sl = slice(s, min(s + 8192, len(pairs)))
        a_ns, a_ix = pairs.a_ns[sl], pairs.a_ix[sl]
        b_ns, b_ix = pairs.b_ns[sl], pairs.b_ix[sl]
        neg_ix = _draw_negatives(pairs, b_ns, negatives, rng)
        B = len(a_ix)
        A = np.empty((B, space.dim))
        Bv = np.empty((B, space.dim))
        N = np.empty((B, negatives, space.dim))
        for code in np.unique(a_ns):
            m = a_ns == code
            A[m] = mats[code][a_ix[m]]
        for code in np.unique(b_ns):
            m = b_ns == code
            Bv[m] = mats[code][b_ix[m]]
            N[m] = mats[code][neg_ix[m]]
        total += float(log_sigmoid(np.einsum("bp,bp->b", A, Bv)).sum())
        total += float(log_sigmoid(-np.einsum("bp,bkp->bk", A, N)).sum())
    return total


def top_similar(space: EmbeddingSpace, query, k: int, namespace: str):
    """k highest-cosine elements of a namespace, ties broken by index.

    query is (namespace, index); rows are unit vectors so cosine = dot.
    Asking for more than the namespace holds returns the whole namespace,
    ranked."""
    ns_q, iq = query
    xq = space.matrices[ns_q][iq]
    mat = space.matrices[namespace]
    if len(mat) == 0 or k <= 0:
        return []
    sims = mat @ xq
    k = min(k, len(mat))
    order = np.argsort(-sims, kind="stable")[:k]
    return [(int(i), float(sims[i])) for i in order]


def save_space(path, space: EmbeddingSpace, names: dict) -> None:
    """Binary persistence: header + row-major float64 blocks, plus a text
    sidecar (<path>.idx) mapping each row to its string. Round-trips
    bit-exactly."""
    with open(path, "wb") as f:
        f.write(_MAGIC)
        f.write(struct.pack("<II", _VERSION, space.dim))
        f.write(struct.pack("<I", len(space.matrices)))
        for ns, mat in space.matrices.items():
            raw = ns.encode("utf-8")
            f.write(struct.pack("<H", len(raw)))
            f.write(raw)
            f.write(struct.pack("<Q", len(mat)))
        for mat in space.matrices.values():
            f.write(np.ascontiguousarray(mat, dtype=np.float64).tobytes())
    with open(str(path) + ".idx", "w", encoding="utf-8") as f:
        for ns in space.matrices:
            for row, s in enumerate(names.get(ns, [])):
                f.write(f"{ns}\t{row}\t{s}\n")


def load_space(path):
    """Inverse of save_space: returns (EmbeddingSpace, names dict)."""
    with open(path, "rb") as f:
        if f.read(len(_MAGIC)) != _MAGIC:
            raise ValueError(f"{path}: not an embedding file")
        version, dim = struct.unpack("<II", f.read(8))
        if version != _VERSION:
            raise ValueError(f"{path}: unsupported version {version}")
        (count,) = struct.unpack("<I", f.read(4))
        sizes = []
        for _ in range(count):
            (nlen,) = struct.unpack("<H", f.read(2))
            ns = f.read(nlen).decode("utf-8")
            (rows,) = struct.unpack("<Q", f.read(8))
            sizes.append((ns, rows))
        matrices = {}
        for ns, rows in sizes:
            buf = f.read(rows * dim * 8)
            matrices[ns] = np.frombuffer(buf, dtype=np.float64).reshape(rows, dim).copy()
    names = {ns: [""] * rows for ns, rows in sizes}
    try:
        with open(str(path) + ".idx", encoding="utf-8") as f:
            for line in f:
                ns, row, s = line.rstrip("\n").split("\t", 2)
                names[ns][int(row)] = s
    except FileNotFoundError:
        names = {}
    return EmbeddingSpace(dim, matrices), names


def space_names(vocab: Vocabulary, doc_ids, schema: MetadataSchema) -> dict:
    """String identities for every embedding row, for the sidecar index."""
    names = {
        "word": list(vocab.words.items),
        "word_ctx": list(vocab.words.items),
        "doc": list(doc_ids),
        "label": list(vocab.labels.items),
    }
    for name in schema.fields:
        names[name] = list(vocab.field_namespace(name).items)
    return names


class JointEmbedding(BaseEstimator):
    """Estimator-style wrapper around train_embeddings.

    fit(docs, vocab=..., schema=..., split=...) learns the space (stored as
    space_); transform(doc_rows) returns document vectors by corpus row.
    Transductive by design: it embeds the corpus it was fit on.
    """

    def __init__(self, dim=100, window=5, negatives=5, learning_rate=0.025,
                 learning_rate_floor=1e-4, epochs=10, batch=512, seed=0,
                 exclude=(), center_every=10, workers=1):
        self.dim = dim
        self.window = window
        self.negatives = negatives
        self.learning_rate = learning_rate
        self.learning_rate_floor = learning_rate_floor
        self.epochs = epochs
        self.batch = batch
        self.seed = seed
        self.exclude = exclude
        self.center_every = center_every
        self.workers = workers

    def _config(self) -> EmbedConfig:
        return EmbedConfig(dim=self.dim, window=self.window, negatives=self.negatives,
                           learning_rate=self.learning_rate,
                           learning_rate_floor=self.learning_rate_floor,
                           epochs=self.epochs, batch=self.batch, seed=self.seed,
                           exclude=tuple(self.exclude), center_every=self.center_every,
                           workers=self.workers)

    def fit(self, X, y=None, *, vocab: Vocabulary, schema: MetadataSchema,
            split: CorpusSplit):
        self.space_ = train_embeddings(list(X), vocab, schema, split, self._config())
        return self

    def transform(self, doc_rows):
        rows = np.asarray(doc_rows, dtype=np.intp)
        return self.space_.doc[rows]

    def fit_transform(self, X, y=None, **kwargs):
        self.fit(X, y, **kwargs)
        return self.space_.doc.copy()
