"""Acceptance battery.

Each test here enforces one of the package's binding numeric guarantees
end to end and prints a single PASS/FAIL line (run with `pytest -s` to see
them as they happen). Thresholds, corpus parameterizations, and runtime
budgets are stated inline; trend checks use 5-repetition means via the
sweep protocol. These tests are slower than the unit suites by design.
"""

import os
import time

import numpy as np
import pytest
import scipy.special  # oracle only; library code computes Bessel terms itself

from docsphere import vmf
from docsphere._util import derive_seed
from docsphere.classifier import (
    WIDTHS,
    _backward_batch,
    _forward_batch,
    _pad_batch,
    init_model,
)
from docsphere.config import RunConfig
from docsphere.corpus import load_corpus, take_k_per_class
from docsphere.embedding import (
    EmbedConfig,
    EmbeddingSpace,
    pair_objective,
    train_embeddings,
)
from docsphere.generator import (
    GenConfig,
    build_length_model,
    generate_all,
    restricted_softmax_pool,
)
from docsphere.pipeline import nearest_report, run_pipeline, sweep
from docsphere.planted import (
    PLANTED_SCHEMA,
    class_word_pool,
    make_planted_corpus,
)

NUM_CLASSES = 4
WORDS_PER_CLASS = 50


def announce(name, ok, detail):
    print(f"\nACCEPTANCE {name}: {'PASS' if ok else 'FAIL'} ({detail})")
    assert ok, f"{name}: {detail}"


# ------------------------------------------------------------ fixtures

@pytest.fixture(scope="session")
def workdir(tmp_path_factory):
    return tmp_path_factory.mktemp("acceptance")


@pytest.fixture(scope="session")
def corpus_path(workdir):
    path = workdir / "planted.jsonl"
    make_planted_corpus(path, seed=0)  # 4x200 docs, 50 words/class, 100 shared, noise 0.3
    return path


def base_config(corpus_path, out_dir, **over):
    kwargs = dict(corpus=str(corpus_path), out_dir=str(out_dir),
                  global_fields=("user",), local_fields=("tags",),
                  repeats=5)
    kwargs.update(over)
    return RunConfig(**kwargs)


_shared = {}


def default_space(corpus_path):
    """Embedding of the acceptance corpus under default settings, built
    once and reused by the geometry and generation checks."""
    if "space" not in _shared:
        docs, vocab = load_corpus(str(corpus_path), PLANTED_SCHEMA, 2)
        split = take_k_per_class(docs, 10, 0)
        space = train_embeddings(docs, vocab, PLANTED_SCHEMA, split,
                                 EmbedConfig(seed=0))
        _shared.update(docs=docs, vocab=vocab, split=split, space=space)
    return _shared


@pytest.fixture(scope="session")
def samples_sweep(corpus_path, workdir):
    """5-repetition sweep over samples_per_class at k=10, timed."""
    cfg = base_config(corpus_path, workdir / "sweep10", k_per_class=10)
    t0 = time.monotonic()
    rows = sweep(cfg, "samples_per_class", [0, 20, 100, 1000])
    return rows, time.monotonic() - t0


@pytest.fixture(scope="session")
def k100_sweep(corpus_path, workdir):
    cfg = base_config(corpus_path, workdir / "sweep100", k_per_class=100)
    return sweep(cfg, "samples_per_class", [0, 100])


def mean_by_value(rows):
    vals = sorted({r["value"] for r in rows})
    return {v: float(np.mean([r["micro_f1"] for r in rows if r["value"] == v]))
            for v in vals}


# ------------------------------------------------------- vMF sampling

def test_vmf_sampler_statistics():
    t0 = time.monotonic()
    p, kappa, n = 100, 50.0, 10_000
    rng = np.random.default_rng(0)
    mu = rng.standard_normal(p)
    mu /= np.linalg.norm(mu)
    x = vmf.sample(vmf.VmfParams(mu=mu, kappa=kappa), n, rng)

    mean = x.mean(axis=0)
    direction_cos = float(mean @ mu / np.linalg.norm(mean))
    mean_dot = float((x @ mu).mean())
    a_p = scipy.special.ive(p / 2, kappa) / scipy.special.ive(p / 2 - 1, kappa)

    worst_c3 = worst_a3 = 0.0
    for k in (0.5, 2.0, 10.0, 50.0):
        log_c3 = np.log(k) - np.log(4 * np.pi) - (k - np.log(2)
                                                  + np.log1p(-np.exp(-2 * k)))
        worst_c3 = max(worst_c3, abs(vmf.log_norm_const(3, k) - log_c3))
        a3 = 1.0 / np.tanh(k) - 1.0 / k
        worst_a3 = max(worst_a3, abs(vmf.mean_resultant_length(3, k) - a3))
    elapsed = time.monotonic() - t0

    ok = (direction_cos >= 0.99 and abs(mean_dot - a_p) <= 0.02
          and worst_c3 < 1e-9 and worst_a3 < 1e-9 and elapsed < 10)
    announce("vmf sampling",
             ok,
             f"dir_cos={direction_cos:.5f} mean_dot={mean_dot:.5f} "
             f"A_p={a_p:.5f} c3_err={worst_c3:.2e} a3_err={worst_a3:.2e} "
             f"{elapsed:.1f}s")


# -------------------------------------------------- gradient fidelity

def _random_space(rng, dim, sizes):
    mats = {}
    for ns, n in sizes.items():
        m = rng.standard_normal((n, dim))
        mats[ns] = m / np.linalg.norm(m, axis=1, keepdims=True)
    return EmbeddingSpace(dim, mats)


def _embedding_fd_worst(rng, trials=100):
    worst = 0.0
    sizes = {"word": 6, "word_ctx": 6, "doc": 4, "label": 3}
    kinds = list(sizes)
    for _ in range(trials):
        dim = int(rng.integers(2, 17))
        space = _random_space(rng, dim, sizes)
        ns_a = kinds[rng.integers(len(kinds))]
        ns_b = kinds[rng.integers(len(kinds))]
        pair = ((ns_a, int(rng.integers(sizes[ns_a]))),
                (ns_b, int(rng.integers(sizes[ns_b]))))
        negs = [(ns_b, int(rng.integers(sizes[ns_b])))
                for _ in range(int(rng.integers(0, 6)))]
        _, grads = pair_objective(space, pair, negs)
        for (ns, idx), g in grads.items():
            row = space.matrices[ns][idx]
            fd = np.zeros_like(row)
            for j in range(len(row)):
                keep = row[j]
                row[j] = keep + 1e-5
                hi, _ = pair_objective(space, pair, negs)
                row[j] = keep - 1e-5
                lo, _ = pair_objective(space, pair, negs)
                row[j] = keep
                fd[j] = (hi - lo) / 2e-5
            denom = max(float(np.linalg.norm(g)), 1e-8)
            worst = max(worst, float(np.linalg.norm(fd - g)) / denom)
    return worst


def _classifier_fd_worst(rng, trials=100):
    """Directional derivative over all parameter blocks at once."""
    worst = 0.0
    for _ in range(trials):
        dim = int(rng.integers(4, 17))
        labels = int(rng.integers(2, 5))
        model = init_model(dim, labels, int(rng.integers(1 << 30)))
        x = rng.standard_normal((int(rng.integers(5, 10)), dim))
        gold = np.asarray([int(rng.integers(labels))])
        batch, n_rows = _pad_batch([x])

        probs, cache = _forward_batch(model, batch, n_rows)
        grads = _backward_batch(model, cache, gold)
        blocks = [("fc_w", model.fc_w, grads["fc_w"]),
                  ("fc_b", model.fc_b, grads["fc_b"])]
        for h in WIDTHS:
            blocks.append((("w", h), model.filter_w[h], grads[("w", h)]))
            blocks.append((("b", h), model.filter_b[h], grads[("b", h)]))

        vs = [rng.standard_normal(p.shape) for _, p, _ in blocks]
        scale = np.sqrt(sum(float((v * v).sum()) for v in vs))
        vs = [v / scale for v in vs]
        analytic = sum(float((g * v).sum()) for (_, _, g), v in zip(blocks, vs))

        eps = 1e-5
        def loss_at(sign):
            for (_, p, _), v in zip(blocks, vs):
                p += sign * eps * v
            probs = _forward_batch(model, batch, n_rows)[0]
            picked = probs[np.arange(len(gold)), gold]
            out = -float(np.log(np.maximum(picked, 1e-12)).sum())
            for (_, p, _), v in zip(blocks, vs):
                p -= sign * eps * v
            return out

        fd = (loss_at(+1.0) - loss_at(-1.0)) / (2 * eps)
        denom = max(abs(fd), abs(analytic), 1e-8)
        worst = max(worst, abs(fd - analytic) / denom)
    return worst


def test_gradients_match_finite_differences():
    t0 = time.monotonic()
    emb_worst = _embedding_fd_worst(np.random.default_rng(1))
    cls_worst = _classifier_fd_worst(np.random.default_rng(2))
    elapsed = time.monotonic() - t0
    ok = emb_worst < 1e-4 and cls_worst < 1e-4 and elapsed < 30
    announce("gradient fidelity", ok,
             f"embedding_rel={emb_worst:.2e} classifier_rel={cls_worst:.2e} "
             f"{elapsed:.1f}s")


# ------------------------------------------------- embedding geometry

def test_embedding_separates_planted_classes(corpus_path):
    t0 = time.monotonic()
    shared = default_space(corpus_path)
    space, vocab = shared["space"], shared["vocab"]

    pools = [set(class_word_pool(c, WORDS_PER_CLASS, NUM_CLASSES))
             for c in range(NUM_CLASSES)]
    rows = [[i for i, w in enumerate(vocab.words.items) if w in pools[c]]
            for c in range(NUM_CLASSES)]
    w = space.matrices["word"]
    intra, inter = [], []
    for c in range(NUM_CLASSES):
        v = w[rows[c]]
        gram = v @ v.T
        intra.append((gram.sum() - len(v)) / (len(v) * (len(v) - 1)))
        for o in range(c + 1, NUM_CLASSES):
            inter.append(float((v @ w[rows[o]].T).mean()))
    margin = float(np.mean(intra) - np.mean(inter))

    hits = []
    for line in nearest_report(space, vocab, k=5).splitlines():
        label, rest = line.split(": ", 1)
        c = int(label[1:])
        names = [part.split(" ")[0] for part in rest.split(", ")]
        hits.append(sum(n in pools[c] for n in names))
    elapsed = time.monotonic() - t0

    ok = margin >= 0.2 and min(hits) >= 4 and elapsed < 180
    announce("embedding geometry", ok,
             f"intra-inter={margin:.3f} nearest_hits={hits} {elapsed:.1f}s")


# ------------------------------------------------- generation quality

def test_synthetic_generation_purity(corpus_path):
    shared = default_space(corpus_path)
    space, vocab, docs, split = (shared["space"], shared["vocab"],
                                 shared["docs"], shared["split"])
    t0 = time.monotonic()
    lengths = build_length_model(docs, split.labeled_ids(), PLANTED_SCHEMA)
    synth = generate_all(space, range(NUM_CLASSES),
                         GenConfig(samples_per_class=100, kappa=50.0, tau=50,
                                   length_model=lengths, seed=0),
                         PLANTED_SCHEMA)

    pools = [set(class_word_pool(c, WORDS_PER_CLASS, NUM_CLASSES))
             for c in range(NUM_CLASSES)]
    purity = []
    membership_ok = True
    for label, items in synth.items():
        own = total = 0
        for sd in items:
            pool, _ = restricted_softmax_pool(space, sd.doc_vector, "word", 50)
            membership_ok &= set(sd.tokens) <= set(pool)
            tag_pool, _ = restricted_softmax_pool(space, sd.doc_vector, "tags", 50)
            membership_ok &= set(sd.local_meta.get("tags", ())) <= set(tag_pool)
            for t in sd.tokens:
                total += 1
                own += vocab.words.items[t] in pools[label]
        purity.append(own / total)
    elapsed = time.monotonic() - t0

    ok = min(purity) >= 0.80 and membership_ok and elapsed < 60
    announce("generation purity", ok,
             f"min_class_purity={min(purity):.3f} pool_membership={membership_ok} "
             f"{elapsed:.1f}s")


# ------------------------------------------------------- trend checks

def test_synthetic_data_lifts_minimal_supervision(samples_sweep):
    rows, elapsed = samples_sweep
    means = mean_by_value(rows)
    lift = means[100] - means[0]
    plateau = means[1000] - means[100]
    ok = lift >= 0.03 and plateau < 0.02 and elapsed < 900
    announce("synthetic lift at k=10", ok,
             f"F1(0)={means[0]:.3f} F1(100)={means[100]:.3f} "
             f"F1(1000)={means[1000]:.3f} lift={lift:+.3f} "
             f"plateau={plateau:+.3f} {elapsed:.0f}s")


def test_synthetic_gain_shrinks_with_more_labels(samples_sweep, k100_sweep):
    means10 = mean_by_value(samples_sweep[0])
    means100 = mean_by_value(k100_sweep)
    gap10 = means10[100] - means10[0]
    gap100 = means100[100] - means100[0]
    ok = gap10 > gap100
    announce("gain vs supervision", ok,
             f"gap(k=10)={gap10:+.3f} gap(k=100)={gap100:+.3f}")


def test_sweep_samples_nondecreasing(samples_sweep):
    rows, _ = samples_sweep
    repeats = sorted({r["repeat"] for r in rows})
    good = 0
    for rep in repeats:
        f1 = {r["value"]: r["micro_f1"] for r in rows if r["repeat"] == rep}
        good += f1[0] <= f1[20] + 1e-9 and f1[20] <= f1[100] + 1e-9
    ok = good >= 4
    announce("samples sweep monotone", ok,
             f"non-decreasing in {good}/{len(repeats)} repeats")


def test_k_sweep_gap_shrinks(corpus_path, workdir, samples_sweep):
    gaps = {}
    for k in (2, 50):
        cfg = base_config(corpus_path, workdir / f"sweepk{k}", k_per_class=k)
        means = mean_by_value(sweep(cfg, "samples_per_class", [0, 100]))
        gaps[k] = means[100] - means[0]
    means10 = mean_by_value(samples_sweep[0])
    gaps[10] = means10[100] - means10[0]
    ok = gaps[50] < gaps[10] and gaps[50] < gaps[2]
    announce("gap shrinks with k", ok,
             f"gap(k=2)={gaps[2]:+.3f} gap(k=10)={gaps[10]:+.3f} "
             f"gap(k=50)={gaps[50]:+.3f}")


# -------------------------------------------------- metadata ablation

def test_user_ablation_costs_f1(workdir):
    # Corpus regime where text alone is weak (heavy shared-token noise,
    # short documents) so the class-correlated users carry real signal.
    path = workdir / "usercorpus.jsonl"
    make_planted_corpus(path, noise_rate=0.55, doc_len=(3, 7),
                        users_per_class=2, seed=0)
    with_user, without_user = [], []
    for rep in range(5):
        for arm, exclude in ((with_user, ()), (without_user, ("user",))):
            cfg = base_config(path, workdir / "ablation", seed=rep,
                              exclude=exclude, cls_lr=0.3, cls_epochs=60)
            report = run_pipeline(cfg, persist_artifacts=False)
            arm.append(report.micro_f1)
    drop = float(np.mean(with_user) - np.mean(without_user))
    ok = drop >= 0.02
    announce("user ablation", ok,
             f"with={np.mean(with_user):.3f} without={np.mean(without_user):.3f} "
             f"drop={drop:+.3f}")


# ------------------------------------------------------- determinism

def test_pipeline_byte_determinism(corpus_path, workdir):
    out = workdir / "determinism"
    cfg = base_config(corpus_path, out, dim=32, embed_epochs=4,
                      samples_per_class=20, cls_epochs=6, seed=123)
    run_pipeline(cfg)
    names = ("report.txt", "report.jsonl", "model.bin", "predictions.jsonl",
             "embeddings.bin", "synthetic.jsonl")
    first = {n: (out / n).read_bytes() for n in names}
    run_pipeline(cfg)
    same = [n for n in names if (out / n).read_bytes() == first[n]]
    ok = len(same) == len(names)
    announce("byte determinism", ok, f"identical={len(same)}/{len(names)}")


# ------------------------------------------------ defaults benchmark

def test_pipeline_defaults_reach_benchmark(corpus_path, workdir):
    cfg = base_config(corpus_path, workdir / "defaults")
    report = run_pipeline(cfg, persist_artifacts=False)
    ok = report.micro_f1 >= 0.85
    announce("pipeline defaults", ok, f"micro_f1={report.micro_f1:.3f}")


# ---------------------------------------------- optional dataset track

def test_reference_dataset_score(workdir):
    path = os.environ.get("DOCSPHERE_GITHUB_BIO", "")
    if not path or not os.path.exists(path):
        pytest.skip("reference dataset not supplied "
                    "(set DOCSPHERE_GITHUB_BIO to the record file)")
    cfg = RunConfig(corpus=path, out_dir=str(workdir / "refdata"),
                    global_fields=("user",), local_fields=("tags",),
                    k_per_class=10)
    report = run_pipeline(cfg, persist_artifacts=False)
    ok = abs(report.micro_f1 - 0.5258) <= 0.05
    announce("reference dataset", ok, f"micro_f1={report.micro_f1:.4f}")
