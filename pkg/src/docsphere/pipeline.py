"""End-to-end orchestration: ingest, split, embed, generate, train,
predict, evaluate, persist. Every run is a pure function of its RunConfig;
reports and model files are byte-identical across reruns with the same
seeds (timings are logged, never persisted)."""

from __future__ import annotations

import json
import logging
import os
import time
from dataclasses import dataclass, replace

import numpy as np
from sklearn.base import BaseEstimator

from . import classifier, embedding, evaluation, generator
from ._util import derive_seed
from .config import RunConfig
from .corpus import CorpusSplit, Vocabulary, load_corpus, take_k_per_class

log = logging.getLogger("docsphere")


class PipelineError(RuntimeError):
    def __init__(self, stage: str, message: str):
        super().__init__(f"[{stage}] {message}")
        self.stage = stage


class _Stage:
    """Context manager that tags failures with their stage and logs wall
    time (log only: timings never enter persisted artifacts)."""

    def __init__(self, name):
        self.name = name

    def __enter__(self):
        self.t0 = time.perf_counter()
        return self

    def __exit__(self, exc_type, exc, tb):
        if exc is not None:
            if isinstance(exc, PipelineError):
                return False
            raise PipelineError(self.name, str(exc)) from exc
        log.info("stage %s finished in %.2fs", self.name, time.perf_counter() - self.t0)
        return False


@dataclass
class PipelineState:
    """Artifacts of a full or partial run, for reuse across stages."""
    config: RunConfig
    docs: list = None
    vocab: Vocabulary = None
    split: CorpusSplit = None
    space: embedding.EmbeddingSpace = None
    synthetic: dict = None
    model: classifier.CnnModel = None
    report: evaluation.EvalReport = None


def ingest(config: RunConfig) -> PipelineState:
    with _Stage("ingest"):
        docs, vocab = load_corpus(config.corpus, config.schema(), config.min_count)
        return PipelineState(config=config, docs=docs, vocab=vocab)


def split(state: PipelineState) -> PipelineState:
    with _Stage("split"):
        state.split = take_k_per_class(state.docs, state.config.k_per_class,
                                       state.config.split_seed())
        return state


def embed(state: PipelineState) -> PipelineState:
    with _Stage("embed"):
        state.space = embedding.train_embeddings(
            state.docs, state.vocab, state.config.schema(), state.split,
            state.config.embed_config())
        return state


def generate(state: PipelineState) -> PipelineState:
    with _Stage("generate"):
        schema = state.config.schema()
        lm = generator.build_length_model(state.docs, state.split.labeled_ids(), schema)
        cfg = state.config.gen_config(length_model=lm)
        labels = range(len(state.vocab.labels))
        state.synthetic = generator.generate_all(state.space, labels, cfg, schema)
        return state


def train(state: PipelineState) -> PipelineState:
    with _Stage("train"):
        by_id = {d.id: d for d in state.docs}
        real = [(by_id[i], lab) for i, lab in sorted(state.split.labeled_ids().items())]
        state.model = classifier.train_classifier(
            state.space, real, state.synthetic or {}, state.config.train_config())
        return state


def evaluate_test(state: PipelineState) -> PipelineState:
    with _Stage("evaluate"):
        by_id = {d.id: d for d in state.docs}
        test_docs = [by_id[i] for i in state.split.test if by_id[i].label is not None]
        if not test_docs:
            raise ValueError("no labeled test documents to evaluate")
        preds = classifier.predict(state.model, state.space, test_docs)
        gold = [d.label for d in test_docs]
        meta = {"config": state.config.as_mapping(),
                "stage_seeds": {"split": state.config.split_seed(),
                                "embed": derive_seed(state.config.seed, 11),
                                "generate": derive_seed(state.config.seed, 12),
                                "classifier": derive_seed(state.config.seed, 13)}}
        state.report = evaluation.evaluate([p.label for p in preds], gold,
                                           len(state.vocab.labels), metadata=meta)
        state.predictions_ = list(zip((d.id for d in test_docs), preds))
        return state


def persist(state: PipelineState) -> None:
    with _Stage("persist"):
        out = state.config.out_dir
        os.makedirs(out, exist_ok=True)
        schema = state.config.schema()
        names = embedding.space_names(state.vocab, [d.id for d in state.docs], schema)
        embedding.save_space(os.path.join(out, "embeddings.bin"), state.space, names)
        if state.synthetic is not None:
            generator.save_synthetic(os.path.join(out, "synthetic.jsonl"),
                                     state.synthetic, state.vocab, schema)
        classifier.save_model(os.path.join(out, "model.bin"), state.model)
        label_names = list(state.vocab.labels.items)
        with open(os.path.join(out, "report.txt"), "w", encoding="utf-8") as f:
            f.write(evaluation.render_report_text(state.report, label_names))
        evaluation.save_report(os.path.join(out, "report.jsonl"), state.report, label_names)
        with open(os.path.join(out, "predictions.jsonl"), "w", encoding="utf-8") as f:
            for doc_id, pred in state.predictions_:
                rec = {"id": doc_id,
                       "predicted_label": label_names[pred.label],
                       "probs": [round(float(p), 9) for p in pred.probs]}
                f.write(json.dumps(rec, sort_keys=True) + "\n")
        with open(os.path.join(out, "nearest.txt"), "w", encoding="utf-8") as f:
            f.write(nearest_report(state.space, state.vocab))


def run_pipeline(config: RunConfig, persist_artifacts: bool = True) -> evaluation.EvalReport:
    """The full chain. Any stage failure raises a stage-tagged
    PipelineError."""
    state = ingest(config)
    split(state)
    embed(state)
    generate(state)
    train(state)
    evaluate_test(state)
    if persist_artifacts:
        persist(state)
    return state.report


SWEEP_AXES = ("samples_per_class", "k_per_class", "dim")


def sweep(config: RunConfig, axis: str, values, repeats: int = None):
    """run_pipeline once per (value, repeat) with shared derived base seeds.

    Embeddings do not depend on samples_per_class, so sweeps along that
    axis retrain only generation + classification per value. Returns a list
    of row dicts (axis, value, repeat, seed, micro_f1, macro_f1).
    """
    if axis not in SWEEP_AXES:
        raise ValueError(f"axis must be one of {SWEEP_AXES}")
    repeats = config.repeats if repeats is None else repeats
    rows = []
    base = ingest(config)
    for r in range(repeats):
        seed_r = derive_seed(config.seed, 20, r)
        embedded = {}  # (k_per_class, dim, exclude) -> embedded state
        for value in values:
            cfg = replace(config, seed=seed_r, **{axis: type(getattr(config, axis))(value)})
            key = (cfg.k_per_class, cfg.dim, cfg.exclude)
            if key not in embedded:
                st = PipelineState(config=cfg, docs=base.docs, vocab=base.vocab)
                split(st)
                embed(st)
                embedded[key] = st
            st = embedded[key]
            st = PipelineState(config=cfg, docs=st.docs, vocab=st.vocab,
                               split=st.split, space=st.space)
            generate(st)
            train(st)
            evaluate_test(st)
            rows.append({"axis": axis, "value": value, "repeat": r, "seed": seed_r,
                         "micro_f1": st.report.micro_f1, "macro_f1": st.report.macro_f1})
            log.info("sweep %s=%s repeat %d: micro %.4f macro %.4f",
                     axis, value, r, st.report.micro_f1, st.report.macro_f1)
    return rows


def sweep_summary(rows) -> str:
    """Mean and std of micro F1 per axis value, as a text table."""
    by_value = {}
    for row in rows:
        by_value.setdefault(row["value"], []).append(row["micro_f1"])
    lines = [f"{'value':>12}  {'mean micro F1':>14}  {'std':>8}  {'runs':>5}"]
    for value in by_value:
        xs = np.asarray(by_value[value])
        lines.append(f"{value!s:>12}  {xs.mean():>14.4f}  {xs.std():>8.4f}  {len(xs):>5}")
    return "\n".join(lines) + "\n"


def save_sweep(path, rows) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for row in rows:
            f.write(json.dumps(row, sort_keys=True) + "\n")


def nearest_report(space: embedding.EmbeddingSpace, vocab: Vocabulary, k: int = 5) -> str:
    """Per label, the k most similar words by cosine: the case-study table
    showing what each class embedding has locked onto."""
    lines = []
    for lab in range(len(vocab.labels)):
        hits = embedding.top_similar(space, ("label", lab), k, "word")
        words = ", ".join(f"{vocab.words.name(i)} ({sim:.3f})" for i, sim in hits)
        lines.append(f"{vocab.labels.name(lab)}: {words}")
    return "\n".join(lines) + "\n"


class Categorizer(BaseEstimator):
    """End-to-end estimator: joint embedding + synthetic generation + CNN.

    fit(docs, vocab=..., schema=..., split=...) runs the embed/generate/
    train stages on an ingested corpus; predict(docs) classifies documents
    made of known vocabulary indices (unknown tokens are skipped).
    """

    def __init__(self, dim=100, window=5, negatives=5, embed_lr=0.025,
                 embed_epochs=10, kappa=50.0, tau=50, samples_per_class=100,
                 cls_lr=0.4, cls_epochs=40, cls_batch=96, seed=0, exclude=()):
        self.dim = dim
        self.window = window
        self.negatives = negatives
        self.embed_lr = embed_lr
        self.embed_epochs = embed_epochs
        self.kappa = kappa
        self.tau = tau
        self.samples_per_class = samples_per_class
        self.cls_lr = cls_lr
        self.cls_epochs = cls_epochs
        self.cls_batch = cls_batch
        self.seed = seed
        self.exclude = exclude

    def fit(self, X, y=None, *, vocab: Vocabulary, schema, split: CorpusSplit):
        docs = list(X)
        cfg = RunConfig(global_fields=tuple(schema.global_fields),
                        local_fields=tuple(schema.local_fields),
                        dim=self.dim, window=self.window, negatives=self.negatives,
                        embed_lr=self.embed_lr, embed_epochs=self.embed_epochs,
                        kappa=self.kappa, tau=self.tau,
                        samples_per_class=self.samples_per_class,
                        cls_lr=self.cls_lr, cls_epochs=self.cls_epochs,
                        cls_batch=self.cls_batch, seed=self.seed,
                        exclude=tuple(self.exclude))
        state = PipelineState(config=cfg, docs=docs, vocab=vocab, split=split)
        embed(state)
        generate(state)
        train(state)
        self.space_ = state.space
        self.model_ = state.model
        self.classes_ = np.arange(len(vocab.labels))
        return self

    def predict(self, X):
        preds = classifier.predict(self.model_, self.space_, list(X))
        return np.asarray([p.label for p in preds])

    def predict_proba(self, X):
        preds = classifier.predict(self.model_, self.space_, list(X))
        return np.vstack([p.probs for p in preds])
