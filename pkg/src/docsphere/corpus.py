"""Corpus data model and ingestion.

Documents arrive as line-delimited JSON records, one document per line:

    {"id": "r1", "text": "deep learning for genomics",
     "label": "genomics", "user": "u17", "tags": ["ml", "bio"]}

``id`` and ``label`` are optional (``id`` defaults to the 1-based line
number). ``text`` holds the document body; a list of strings is
concatenated with spaces before tokenization. Every other key must be a
metadata field declared in the :class:`MetadataSchema`: global fields map
to a single string value, local fields to an array of strings. A boolean
``synthetic`` key is accepted and ignored so generated corpora round-trip
through the same loader.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field

import numpy as np

_TOKEN_RE = re.compile(r"[^\W_]+", re.UNICODE)

_RESERVED_KEYS = {"id", "text", "label", "synthetic"}


class CorpusFormatError(ValueError):
    """Raised for malformed corpus files; the message carries the line number."""


@dataclass(frozen=True)
class MetadataSchema:
    """Declares which metadata fields are global (document causes) and local
    (document descriptors). The two lists are disjoint; either may be empty."""

    global_fields: tuple[str, ...] = ()
    local_fields: tuple[str, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "global_fields", tuple(self.global_fields))
        object.__setattr__(self, "local_fields", tuple(self.local_fields))
        seen = set()
        for name in self.global_fields + self.local_fields:
            if name in _RESERVED_KEYS:
                raise ValueError(f"metadata field name {name!r} is reserved")
            if name in seen:
                raise ValueError(f"duplicate metadata field {name!r}")
            seen.add(name)

    @property
    def fields(self):
        return self.global_fields + self.local_fields


@dataclass
class Document:
    """One document: token indices plus typed metadata instance indices.

    ``global_meta`` holds at most one instance per global field;
    ``local_meta`` holds a sorted tuple of distinct instances per local
    field. ``label`` is the gold label index (hidden from training unless
    the document lands in the labeled split).
    """

    id: str
    tokens: list[int]
    global_meta: dict[str, int] = field(default_factory=dict)
    local_meta: dict[str, tuple[int, ...]] = field(default_factory=dict)
    label: int | None = None

    def __post_init__(self):
        if not self.tokens and not any(self.local_meta.values()):
            raise ValueError(
                f"document {self.id!r} has no tokens and no local metadata"
            )

    def num_local_instances(self):
        return sum(len(v) for v in self.local_meta.values())


class Namespace:
    """Dense string <-> index mapping with occurrence counts for one element kind."""

    def __init__(self):
        self.items: list[str] = []
        self.counts: list[int] = []
        self._index: dict[str, int] = {}

    def add(self, item: str, count: int = 1) -> int:
        idx = self._index.get(item)
        if idx is None:
            idx = len(self.items)
            self._index[item] = idx
            self.items.append(item)
            self.counts.append(0)
        self.counts[idx] += count
        return idx

    def index(self, item: str) -> int:
        return self._index[item]

    def get(self, item: str, default=None):
        return self._index.get(item, default)

    def name(self, idx: int) -> str:
        return self.items[idx]

    def __contains__(self, item: str) -> bool:
        return item in self._index

    def __len__(self) -> int:
        return len(self.items)

    @property
    def size(self) -> int:
        return len(self.items)


@dataclass
class Vocabulary:
    """Per-kind namespaces: words, labels, and one namespace per metadata field."""

    words: Namespace = field(default_factory=Namespace)
    labels: Namespace = field(default_factory=Namespace)
    fields: dict[str, Namespace] = field(default_factory=dict)

    def field_namespace(self, name: str) -> Namespace:
        return self.fields[name]


@dataclass
class CorpusSplit:
    """Labeled/test partition of a corpus plus the id list the embedding
    stage trains text on (all documents; labels stay visible only for the
    labeled lists)."""

    labeled: dict[int, list[str]]
    unlabeled: list[str]
    test: list[str]

    def labeled_ids(self) -> dict[str, int]:
        """Map doc id -> visible label index."""
        out: dict[str, int] = {}
        for label, ids in self.labeled.items():
            for doc_id in ids:
                out[doc_id] = label
        return out


def tokenize(text: str) -> list[str]:
    """Lowercase and split on runs of non-alphanumeric characters."""
    return _TOKEN_RE.findall(text.lower())


def _text_of(record, line_no):
    raw = record.get("text", "")
    if isinstance(raw, list):
        if not all(isinstance(seg, str) for seg in raw):
            raise CorpusFormatError(f"line {line_no}: 'text' list must contain strings")
        return " ".join(raw)
    if not isinstance(raw, str):
        raise CorpusFormatError(f"line {line_no}: 'text' must be a string")
    return raw


def _meta_str(value, field_name, line_no):
    if isinstance(value, bool) or not isinstance(value, (str, int)):
        raise CorpusFormatError(
            f"line {line_no}: field {field_name!r} must be a string"
        )
    return str(value)


def _parse_records(path, schema):
    records = []
    seen_ids = {}
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                raw = json.loads(line)
            except json.JSONDecodeError as exc:
                raise CorpusFormatError(f"line {line_no}: invalid JSON ({exc.msg})") from exc
            if not isinstance(raw, dict):
                raise CorpusFormatError(f"line {line_no}: record must be a JSON object")

            for key in raw:
                if key not in _RESERVED_KEYS and key not in schema.global_fields \
                        and key not in schema.local_fields:
                    raise CorpusFormatError(
                        f"line {line_no}: unknown metadata field {key!r}"
                    )

            doc_id = str(raw.get("id", line_no))
            if doc_id in seen_ids:
                raise CorpusFormatError(
                    f"line {line_no}: duplicate document id {doc_id!r} "
                    f"(first seen on line {seen_ids[doc_id]})"
                )
            seen_ids[doc_id] = line_no

            tokens = tokenize(_text_of(raw, line_no))

            gmeta = {}
            for name in schema.global_fields:
                if name in raw and raw[name] is not None:
                    gmeta[name] = _meta_str(raw[name], name, line_no)

            lmeta = {}
            for name in schema.local_fields:
                if name in raw and raw[name] is not None:
                    values = raw[name]
                    if not isinstance(values, list):
                        raise CorpusFormatError(
                            f"line {line_no}: local field {name!r} must be an array"
                        )
                    lmeta[name] = [_meta_str(v, name, line_no) for v in values]

            label = raw.get("label")
            if label is not None:
                label = _meta_str(label, "label", line_no)

            records.append((line_no, doc_id, tokens, gmeta, lmeta, label))
    return records


def load_corpus(path, schema: MetadataSchema, min_count: int = 2):
    """Load a line-delimited corpus and build its vocabulary.

    Words occurring fewer than ``min_count`` times corpus-wide are dropped
    from the vocabulary and from every token sequence. Labels and metadata
    instances are never frequency-filtered: they stay topic-indicative
    even when rare.

    Returns ``(documents, vocabulary)`` with documents in file order.
    """
    records = _parse_records(path, schema)

    word_counts: dict[str, int] = {}
    for _, _, tokens, _, _, _ in records:
        for tok in tokens:
            word_counts[tok] = word_counts.get(tok, 0) + 1

    vocab = Vocabulary()
    vocab.fields = {name: Namespace() for name in schema.fields}

    kept = {w for w, c in word_counts.items() if c >= min_count}

    documents = []
    for line_no, doc_id, tokens, gmeta, lmeta, label in records:
        token_idx = [vocab.words.add(t) for t in tokens if t in kept]

        gidx = {name: vocab.fields[name].add(v) for name, v in gmeta.items()}

        lidx = {}
        for name, values in lmeta.items():
            ns = vocab.fields[name]
            distinct = []
            for v in values:
                if v not in distinct:
                    distinct.append(v)
            lidx[name] = tuple(sorted(ns.add(v) for v in distinct))

        label_idx = vocab.labels.add(label) if label is not None else None

        try:
            documents.append(
                Document(doc_id, token_idx, gidx, lidx, label_idx)
            )
        except ValueError as exc:
            raise CorpusFormatError(f"line {line_no}: {exc}") from exc

    return documents, vocab


def take_k_per_class(docs: list[Document], k: int, seed: int) -> CorpusSplit:
    """Sample ``k`` labeled documents per class (uniform, without
    replacement, seeded); everything else becomes the test set. The
    ``unlabeled`` list carries every id in file order so the embedding
    stage can train on all text while seeing labels only for the k picks.
    """
    if k < 0:
        raise ValueError("k must be >= 0")

    by_class: dict[int, list[str]] = {}
    for doc in docs:
        if doc.label is not None:
            by_class.setdefault(doc.label, []).append(doc.id)

    rng = np.random.default_rng(seed)
    labeled: dict[int, list[str]] = {}
    chosen: set[str] = set()
    for label in sorted(by_class):
        candidates = by_class[label]
        if len(candidates) < k:
            raise ValueError(
                f"class {label} has only {len(candidates)} labeled documents, need {k}"
            )
        picks = rng.choice(len(candidates), size=k, replace=False)
        ids = [candidates[i] for i in sorted(picks)]
        labeled[label] = ids
        chosen.update(ids)

    all_ids = [doc.id for doc in docs]
    test = [doc_id for doc_id in all_ids if doc_id not in chosen]
    return CorpusSplit(labeled=labeled, unlabeled=list(all_ids), test=test)


def save_documents(path, docs, vocab: Vocabulary, schema: MetadataSchema):
    """Write documents back out in the line-delimited record format."""
    inv_fields = {name: vocab.fields[name].items for name in schema.fields}
    with open(path, "w", encoding="utf-8") as fh:
        for doc in docs:
            rec = {
                "id": doc.id,
                "text": " ".join(vocab.words.items[i] for i in doc.tokens),
            }
            if doc.label is not None:
                rec["label"] = vocab.labels.items[doc.label]
            for name, idx in doc.global_meta.items():
                rec[name] = inv_fields[name][idx]
            for name, idxs in doc.local_meta.items():
                rec[name] = [inv_fields[name][i] for i in idxs]
            fh.write(json.dumps(rec, sort_keys=True) + "\n")
