"""Synthetic training document generation.

For a class l, document vectors are drawn from vMF(e_l, kappa) on the
embedding sphere; tokens and local metadata instances are then sampled
i.i.d. from softmax distributions restricted to the top-tau namespace
elements nearest the drawn vector. Document lengths follow the empirical
length statistics of the real labeled documents. Global metadata is never
generated: it names real-world entities (a specific user), which a
synthetic document does not have.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from . import vmf
from ._util import derive_seed, softmax
from .corpus import MetadataSchema, Vocabulary
from .embedding import EmbeddingSpace


@dataclass
class LengthModel:
    """Empirical joint (token count, per-field instance counts) sampler.

    per_class holds one record list per label, taken from that class's real
    labeled documents; classes without any token-bearing labeled document
    fall back to the corpus-wide record list.
    """

    per_class: dict  # label -> list of (n_tokens, {field: count})
    corpus_wide: list = field(default_factory=list)

    def sample(self, label: int, rng: np.random.Generator):
        records = self.per_class.get(label)
        if not records or all(r[0] == 0 for r in records):
            records = self.corpus_wide
        if not records:
            return 0, {}
        n, meta = records[int(rng.integers(len(records)))]
        return n, dict(meta)


def build_length_model(docs, labeled_ids: dict, schema: MetadataSchema) -> LengthModel:
    """labeled_ids maps document id -> label for the real training docs."""
    def record(doc):
        return (len(doc.tokens),
                {f: len(doc.local_meta.get(f, ())) for f in schema.local_fields})

    per_class = {}
    corpus_wide = []
    for doc in docs:
        corpus_wide.append(record(doc))
        lab = labeled_ids.get(doc.id)
        if lab is not None:
            per_class.setdefault(lab, []).append(record(doc))
    return LengthModel(per_class=per_class, corpus_wide=corpus_wide)


@dataclass
class GenConfig:
    samples_per_class: int = 100
    kappa: float = 50.0
    tau: int = 50
    length_model: LengthModel = None
    seed: int = 0

    def __post_init__(self):
        if self.samples_per_class < 0:
            raise ValueError("samples_per_class must be >= 0")
        if not self.kappa > 0:
            raise ValueError("kappa must be positive")
        if self.tau < 1:
            raise ValueError("tau must be >= 1")


@dataclass
class SyntheticDocument:
    label: int
    doc_vector: np.ndarray  # None when reloaded from disk
    tokens: list
    local_meta: dict  # field -> tuple of instance indices (multiset, draw order)

    def num_rows(self):
        return len(self.tokens) + sum(len(v) for v in self.local_meta.values())


def restricted_softmax_pool(space: EmbeddingSpace, doc_vector: np.ndarray,
                            namespace: str, tau: int):
    """The tau namespace elements with largest dot product to doc_vector
    (ties broken by index), and the softmax of those dot products.

    tau larger than the namespace returns the whole namespace, in which
    case the distribution is the unrestricted softmax.
    """
    mat = space.matrices[namespace]
    if len(mat) == 0:
        raise ValueError(f"namespace {namespace!r} is empty")
    dots = mat @ np.asarray(doc_vector, dtype=np.float64)
    tau = min(tau, len(mat))
    order = np.argsort(-dots, kind="stable")[:tau]
    return order.tolist(), softmax(dots[order])


def generate_for_class(space: EmbeddingSpace, label: int, config: GenConfig,
                       schema: MetadataSchema):
    """samples_per_class synthetic documents for one label.

    Per document, in a fixed draw order: the document vector from
    vMF(e_l, kappa), then lengths (n, m_f), then n tokens, then m_f
    instances per local field. Deterministic given config.seed and label.
    """
    if label < 0 or label >= len(space.label):
        raise ValueError(f"label index {label} out of range")
    rng = np.random.default_rng(derive_seed(config.seed, 5, label))
    params = vmf.VmfParams(mu=space.label[label], kappa=config.kappa)
    length_model = config.length_model or LengthModel(per_class={})
    out = []
    for _ in range(config.samples_per_class):
        e_d = vmf.sample(params, 1, rng)[0]
        n, meta_counts = length_model.sample(label, rng)
        tokens = []
        if n > 0:
            pool, probs = restricted_softmax_pool(space, e_d, "word", config.tau)
            picks = rng.choice(len(pool), size=n, p=probs)
            tokens = [pool[i] for i in picks]
        local = {}
        for f in schema.local_fields:
            m = meta_counts.get(f, 0)
            if m <= 0 or len(space.matrices[f]) == 0:
                local[f] = ()
                continue
            pool, probs = restricted_softmax_pool(space, e_d, f, config.tau)
            picks = rng.choice(len(pool), size=m, p=probs)
            local[f] = tuple(pool[i] for i in picks)
        out.append(SyntheticDocument(label=label, doc_vector=e_d,
                                     tokens=tokens, local_meta=local))
    return out


def generate_all(space: EmbeddingSpace, labels, config: GenConfig,
                 schema: MetadataSchema) -> dict:
    """generate_for_class for every label, with per-label derived seeds;
    output keyed by label in the given order."""
    return {lab: generate_for_class(space, lab, config, schema) for lab in labels}


def save_synthetic(path, synth: dict, vocab: Vocabulary, schema: MetadataSchema) -> None:
    """Persist synthetic documents in the corpus record format, flagged
    "synthetic": true, with no global metadata keys."""
    with open(path, "w", encoding="utf-8") as f:
        for label in sorted(synth):
            for i, doc in enumerate(synth[label]):
                rec = {
                    "id": f"synth-{vocab.labels.name(label)}-{i}",
                    "text": " ".join(vocab.words.name(w) for w in doc.tokens),
                    "label": vocab.labels.name(label),
                    "synthetic": True,
                }
                for fname in schema.local_fields:
                    ns = vocab.field_namespace(fname)
                    rec[fname] = [ns.name(t) for t in doc.local_meta.get(fname, ())]
                f.write(json.dumps(rec, sort_keys=True) + "\n")


def load_synthetic(path, vocab: Vocabulary, schema: MetadataSchema) -> dict:
    """Read a save_synthetic file back, preserving token order and local
    metadata multiplicity. Document vectors are not persisted and come
    back as None."""
    out = {}
    with open(path, encoding="utf-8") as f:
        for line_no, line in enumerate(f, start=1):
            line = line.strip()
            if not line:
                continue
            rec = json.loads(line)
            label = vocab.labels.index(rec["label"])
            tokens = [vocab.words.index(w) for w in rec["text"].split() if w in vocab.words]
            local = {}
            for fname in schema.local_fields:
                ns = vocab.field_namespace(fname)
                local[fname] = tuple(ns.index(t) for t in rec.get(fname, ()))
            out.setdefault(label, []).append(
                SyntheticDocument(label=label, doc_vector=None,
                                  tokens=tokens, local_meta=local))
    return out
