"""Command line interface.

Every command reads an optional flat key = value config file; any flag with
the same name overrides the file. `run` is the end-to-end pipeline; the
stage commands (ingest/embed/generate/train/evaluate) persist and reuse
artifacts in out_dir so stages can be rerun independently.
"""

from __future__ import annotations

import json
import logging
import os
import sys

import click

from . import classifier, embedding, evaluation, generator, pipeline
from .config import _COERCE, build_run_config, parse_config_file
from .corpus import load_corpus, take_k_per_class
from .planted import make_planted_corpus


def _assemble(config_path, overrides) -> "RunConfig":
    mapping = parse_config_file(config_path) if config_path else {}
    for key, value in overrides.items():
        if value is not None:
            mapping[key] = value
    return build_run_config(mapping)


def _config_options(cmd):
    """Attach one override flag per config key, plus --config."""
    for key in reversed(list(_COERCE)):
        cmd = click.option(f"--{key.replace('_', '-')}", key, default=None,
                           type=str, help=f"override config key {key}")(cmd)
    cmd = click.option("--config", "-c", "config_path", default=None,
                       type=click.Path(exists=True), help="flat key = value config file")(cmd)
    return cmd


def _state_through_split(cfg):
    state = pipeline.ingest(cfg)
    return pipeline.split(state)


@click.group()
@click.option("--verbose", "-v", is_flag=True, help="log stage progress")
def main(verbose):
    """Metadata-aware minimally supervised document categorization."""
    logging.basicConfig(level=logging.INFO if verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")


@main.command()
@_config_options
def ingest(config_path, **overrides):
    """Load a corpus and print its vocabulary statistics."""
    cfg = _assemble(config_path, overrides)
    docs, vocab = load_corpus(cfg.corpus, cfg.schema(), cfg.min_count)
    labeled = sum(1 for d in docs if d.label is not None)
    click.echo(f"documents: {len(docs)} ({labeled} labeled)")
    click.echo(f"words: {len(vocab.words)} (min_count={cfg.min_count})")
    click.echo(f"labels: {len(vocab.labels)}")
    for name, ns in vocab.fields.items():
        click.echo(f"field {name}: {len(ns)} instances")


@main.command()
@_config_options
def embed(config_path, **overrides):
    """Train the joint embedding space and save it to out_dir."""
    cfg = _assemble(config_path, overrides)
    state = _state_through_split(cfg)
    pipeline.embed(state)
    os.makedirs(cfg.out_dir, exist_ok=True)
    path = os.path.join(cfg.out_dir, "embeddings.bin")
    names = embedding.space_names(state.vocab, [d.id for d in state.docs], cfg.schema())
    embedding.save_space(path, state.space, names)
    click.echo(f"saved {path} (dim={state.space.dim})")


@main.command()
@_config_options
def generate(config_path, **overrides):
    """Generate synthetic labeled documents from a saved embedding space."""
    cfg = _assemble(config_path, overrides)
    state = _state_through_split(cfg)
    state.space, _ = embedding.load_space(os.path.join(cfg.out_dir, "embeddings.bin"))
    pipeline.generate(state)
    path = os.path.join(cfg.out_dir, "synthetic.jsonl")
    generator.save_synthetic(path, state.synthetic, state.vocab, cfg.schema())
    total = sum(len(v) for v in state.synthetic.values())
    click.echo(f"saved {path} ({total} synthetic documents)")


@main.command()
@_config_options
def train(config_path, **overrides):
    """Train the classifier on real + saved synthetic documents."""
    cfg = _assemble(config_path, overrides)
    state = _state_through_split(cfg)
    state.space, _ = embedding.load_space(os.path.join(cfg.out_dir, "embeddings.bin"))
    synth_path = os.path.join(cfg.out_dir, "synthetic.jsonl")
    if os.path.exists(synth_path):
        state.synthetic = generator.load_synthetic(synth_path, state.vocab, cfg.schema())
    pipeline.train(state)
    path = os.path.join(cfg.out_dir, "model.bin")
    classifier.save_model(path, state.model)
    click.echo(f"saved {path}")


@main.command()
@_config_options
def evaluate(config_path, **overrides):
    """Predict the test split with a saved model and report F1."""
    cfg = _assemble(config_path, overrides)
    state = _state_through_split(cfg)
    state.space, _ = embedding.load_space(os.path.join(cfg.out_dir, "embeddings.bin"))
    state.model = classifier.load_model(os.path.join(cfg.out_dir, "model.bin"))
    pipeline.evaluate_test(state)
    label_names = list(state.vocab.labels.items)
    text = evaluation.render_report_text(state.report, label_names)
    with open(os.path.join(cfg.out_dir, "report.txt"), "w", encoding="utf-8") as f:
        f.write(text)
    evaluation.save_report(os.path.join(cfg.out_dir, "report.jsonl"),
                           state.report, label_names)
    click.echo(text, nl=False)


@main.command()
@_config_options
def run(config_path, **overrides):
    """End-to-end: ingest, split, embed, generate, train, evaluate."""
    cfg = _assemble(config_path, overrides)
    try:
        report = pipeline.run_pipeline(cfg)
    except pipeline.PipelineError as e:
        click.echo(str(e), err=True)
        sys.exit(1)
    click.echo(f"micro F1: {report.micro_f1:.4f}  macro F1: {report.macro_f1:.4f}")
    click.echo(f"artifacts in {cfg.out_dir}")


@main.command()
@_config_options
@click.option("--axis", required=True, type=click.Choice(pipeline.SWEEP_AXES))
@click.option("--values", required=True, help="comma-separated axis values")
def sweep(config_path, axis, values, **overrides):
    """Repeat the pipeline along one axis and tabulate F1 per value."""
    cfg = _assemble(config_path, overrides)
    vals = [int(v) for v in values.split(",") if v.strip()]
    rows = pipeline.sweep(cfg, axis, vals)
    os.makedirs(cfg.out_dir, exist_ok=True)
    pipeline.save_sweep(os.path.join(cfg.out_dir, "sweep.jsonl"), rows)
    summary = pipeline.sweep_summary(rows)
    with open(os.path.join(cfg.out_dir, "sweep.txt"), "w", encoding="utf-8") as f:
        f.write(f"axis: {axis}\n" + summary)
    click.echo(summary, nl=False)


@main.command()
@_config_options
@click.option("--top", default=5, help="words per label")
def nearest(config_path, top, **overrides):
    """Most similar words per label from a saved embedding space."""
    cfg = _assemble(config_path, overrides)
    docs, vocab = load_corpus(cfg.corpus, cfg.schema(), cfg.min_count)
    space, _ = embedding.load_space(os.path.join(cfg.out_dir, "embeddings.bin"))
    text = pipeline.nearest_report(space, vocab, k=top)
    with open(os.path.join(cfg.out_dir, "nearest.txt"), "w", encoding="utf-8") as f:
        f.write(text)
    click.echo(text, nl=False)


@main.command("make-corpus")
@click.argument("path", type=click.Path())
@click.option("--num-classes", default=4)
@click.option("--docs-per-class", default=200)
@click.option("--vocab-per-class", default=50)
@click.option("--shared-vocab", default=100)
@click.option("--users-per-class", default=4)
@click.option("--tags-per-class", default=8)
@click.option("--noise-rate", default=0.3)
@click.option("--seed", default=0)
@click.option("--min-len", default=8)
@click.option("--max-len", default=20)
def make_corpus(path, num_classes, docs_per_class, vocab_per_class, shared_vocab,
                users_per_class, tags_per_class, noise_rate, seed, min_len, max_len):
    """Write a planted-topic benchmark corpus."""
    make_planted_corpus(path, num_classes=num_classes, docs_per_class=docs_per_class,
                        vocab_per_class=vocab_per_class, shared_vocab=shared_vocab,
                        users_per_class=users_per_class, tags_per_class=tags_per_class,
                        noise_rate=noise_rate, seed=seed, doc_len=(min_len, max_len))
    click.echo(f"wrote {path}")


if __name__ == "__main__":
    main()
