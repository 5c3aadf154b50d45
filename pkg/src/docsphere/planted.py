"""Planted-topic corpus simulator.

Builds a corpus with known class-conditional structure so that embedding
and classification behavior can be checked against ground truth. Each class
owns a word pool (size vocab_per_class), a disjoint user pool, and a tag
pool; tokens are drawn uniformly from the class pool except for a
Bernoulli(noise_rate) fraction drawn from a shared pool.

Three structural knobs shape how hard the corpus is:

* ``boundary``: classes sit on a ring and adjacent classes share a slice of
  `boundary` words, so each pool is `vocab_per_class - 2*boundary` exclusive
  words plus one shared slice per neighbor. Boundary words belong to both
  pools; they keep every class cone coherent while pulling neighboring cones
  together, which is what makes a handful of labeled documents insufficient
  to place the decision boundary.
* ``tag_boundary``: the same ring overlap applied to tag pools, so tags
  alone cannot resolve adjacent classes either.
* ``subtopics``: each class's word and tag pools are split into that many
  sub-pools and every document draws from a single sub-pool, while users
  stay class-wide. Word co-occurrence then fragments a class into islands
  that only the shared users tie together.

Written in the standard corpus record format with gold labels;
byte-identical output for identical arguments.
"""

from __future__ import annotations

import json

import numpy as np

from .corpus import MetadataSchema

PLANTED_SCHEMA = MetadataSchema(global_fields=("user",), local_fields=("tags",))


def _ring_pool(prefix: str, c: int, pool_size: int, num_classes: int, boundary: int):
    """Pool of class c under ring overlap: exclusive items plus the slices
    shared with the previous and next class on the ring."""
    pool = [f"{prefix}{c}x{i}" for i in range(pool_size - 2 * boundary)]
    if boundary:
        p = (c - 1) % num_classes
        pool += [f"{prefix}b{p}_{c}x{i}" for i in range(boundary)]
        n = (c + 1) % num_classes
        pool += [f"{prefix}b{c}_{n}x{i}" for i in range(boundary)]
    return pool


def _split(pool, parts: int):
    """Partition a list into `parts` contiguous chunks, sizes differing by
    at most one."""
    q, r = divmod(len(pool), parts)
    out, start = [], 0
    for s in range(parts):
        size = q + (1 if s < r else 0)
        out.append(pool[start:start + size])
        start += size
    return out


def exclusive_words(c: int, vocab_per_class: int, boundary: int = 0):
    return [f"w{c}x{i}" for i in range(vocab_per_class - 2 * boundary)]


def edge_words(c: int, num_classes: int, boundary: int):
    """Words shared by class c and class (c+1) mod num_classes."""
    n = (c + 1) % num_classes
    return [f"wb{c}_{n}x{i}" for i in range(boundary)]


def class_word_pool(c: int, vocab_per_class: int, num_classes: int = 4,
                    boundary: int = 0):
    """The full word pool of class c: exclusive words plus the slices
    shared with each ring neighbor."""
    return _ring_pool("w", c, vocab_per_class, num_classes, boundary)


def shared_word_pool(shared_vocab: int):
    return [f"shared{i}" for i in range(shared_vocab)]


def class_user_pool(c: int, users_per_class: int):
    return [f"user{c}x{j}" for j in range(users_per_class)]


def class_tag_pool(c: int, tags_per_class: int, num_classes: int = 4,
                   tag_boundary: int = 0):
    """The full tag pool of class c, ring-overlapped when tag_boundary > 0."""
    return _ring_pool("tag", c, tags_per_class, num_classes, tag_boundary)


def label_name(c: int):
    return f"c{c}"


def make_planted_corpus(path, num_classes: int = 4, docs_per_class: int = 200,
                        vocab_per_class: int = 50, shared_vocab: int = 100,
                        users_per_class: int = 4, tags_per_class: int = 8,
                        noise_rate: float = 0.3, seed: int = 0,
                        doc_len: tuple = (8, 20), tags_per_doc: tuple = (1, 3),
                        boundary: int = 0, tag_boundary: int = 0,
                        subtopics: int = 1) -> None:
    """Write a planted corpus to path.

    doc_len and tags_per_doc are inclusive (low, high) ranges for the
    per-document token and tag counts. boundary=0 and tag_boundary=0 make
    the word and tag pools fully disjoint across classes; subtopics=1
    keeps each class a single topical block.
    """
    if num_classes < 1 or docs_per_class < 1 or vocab_per_class < 1:
        raise ValueError("num_classes, docs_per_class, vocab_per_class must be positive")
    if not 0.0 <= noise_rate < 1.0:
        raise ValueError("noise_rate must be in [0, 1)")
    if users_per_class < 1 or tags_per_class < 1:
        raise ValueError("users_per_class and tags_per_class must be positive")
    if boundary < 0 or 2 * boundary >= vocab_per_class:
        raise ValueError("boundary must satisfy 0 <= 2*boundary < vocab_per_class")
    if tag_boundary < 0 or 2 * tag_boundary >= tags_per_class:
        raise ValueError("tag_boundary must satisfy 0 <= 2*tag_boundary < tags_per_class")
    if (boundary or tag_boundary) and num_classes < 2:
        raise ValueError("ring overlap needs at least two classes")
    if subtopics < 1 or subtopics > min(vocab_per_class, tags_per_class):
        raise ValueError("subtopics must be in [1, min(vocab_per_class, tags_per_class)]")
    if subtopics > 1 and (boundary or tag_boundary):
        raise ValueError("subtopics cannot be combined with ring overlap")

    rng = np.random.default_rng(seed)
    shared = shared_word_pool(shared_vocab)
    with open(path, "w", encoding="utf-8") as f:
        for c in range(num_classes):
            words = class_word_pool(c, vocab_per_class, num_classes, boundary)
            users = class_user_pool(c, users_per_class)
            tags = class_tag_pool(c, tags_per_class, num_classes, tag_boundary)
            word_subs = _split(words, subtopics)
            tag_subs = _split(tags, subtopics)
            for j in range(docs_per_class):
                sub = int(rng.integers(subtopics)) if subtopics > 1 else 0
                sub_words, sub_tags = word_subs[sub], tag_subs[sub]
                n = int(rng.integers(doc_len[0], doc_len[1] + 1))
                from_shared = rng.random(n) < noise_rate
                tokens = [
                    shared[int(rng.integers(len(shared)))] if hit and shared
                    else sub_words[int(rng.integers(len(sub_words)))]
                    for hit in from_shared
                ]
                n_tags = int(rng.integers(tags_per_doc[0], tags_per_doc[1] + 1))
                n_tags = min(n_tags, len(sub_tags))
                doc_tags = [sub_tags[int(i)]
                            for i in rng.choice(len(sub_tags), n_tags, replace=False)]
                rec = {
                    "id": f"{label_name(c)}-d{j}",
                    "text": " ".join(tokens),
                    "label": label_name(c),
                    "user": users[int(rng.integers(len(users)))],
                    "tags": doc_tags,
                }
                f.write(json.dumps(rec, sort_keys=True) + "\n")
