"""Micro/Macro F1 evaluation for single-label multiclass prediction."""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np


@dataclass
class EvalReport:
    micro_f1: float
    macro_f1: float
    precision: np.ndarray  # per class
    recall: np.ndarray
    f1: np.ndarray
    support: np.ndarray  # gold count per class
    confusion: np.ndarray  # rows = gold, cols = predicted
    metadata: dict = field(default_factory=dict)


def evaluate(preds, gold, num_labels: int, metadata: dict = None) -> EvalReport:
    """Micro F1 (= accuracy for single-label multiclass) and macro F1 over
    all num_labels classes; a class with no gold and no predicted documents
    scores F1 = 0."""
    preds = np.asarray(preds, dtype=np.int64)
    gold = np.asarray(gold, dtype=np.int64)
    if preds.shape != gold.shape or preds.ndim != 1:
        raise ValueError("preds and gold must be aligned 1-d sequences")
    if len(preds) == 0:
        raise ValueError("nothing to evaluate")
    if preds.min() < 0 or preds.max() >= num_labels or gold.min() < 0 or gold.max() >= num_labels:
        raise ValueError("label index out of range")

    confusion = np.zeros((num_labels, num_labels), dtype=np.int64)
    np.add.at(confusion, (gold, preds), 1)

    tp = np.diag(confusion).astype(np.float64)
    pred_count = confusion.sum(axis=0).astype(np.float64)
    gold_count = confusion.sum(axis=1).astype(np.float64)

    with np.errstate(divide="ignore", invalid="ignore"):
        precision = np.where(pred_count > 0, tp / pred_count, 0.0)
        recall = np.where(gold_count > 0, tp / gold_count, 0.0)
        denom = precision + recall
        f1 = np.where(denom > 0, 2.0 * precision * recall / denom, 0.0)

    micro = float(tp.sum() / len(preds))
    accuracy = float((preds == gold).mean())
    assert abs(micro - accuracy) < 1e-12  # identical by construction
    macro = float(f1.mean())

    return EvalReport(
        micro_f1=micro,
        macro_f1=macro,
        precision=precision,
        recall=recall,
        f1=f1,
        support=confusion.sum(axis=1),
        confusion=confusion,
        metadata=dict(metadata or {}),
    )


def render_report_text(report: EvalReport, label_names=None) -> str:
    """Human-readable report; deterministic for identical reports."""
    L = len(report.f1)
    names = list(label_names) if label_names else [str(i) for i in range(L)]
    width = max([5] + [len(n) for n in names])
    lines = [
        f"micro F1: {report.micro_f1:.6f}",
        f"macro F1: {report.macro_f1:.6f}",
        "",
        f"{'class':<{width}}  {'prec':>8}  {'recall':>8}  {'f1':>8}  {'support':>8}",
    ]
    for i in range(L):
        lines.append(
            f"{names[i]:<{width}}  {report.precision[i]:>8.4f}  {report.recall[i]:>8.4f}"
            f"  {report.f1[i]:>8.4f}  {int(report.support[i]):>8}"
        )
    lines.append("")
    lines.append("confusion (rows gold, cols predicted):")
    cw = max(5, len(str(int(report.confusion.max(initial=0)))))
    header = " " * (width + 2) + "  ".join(f"{n[:cw]:>{cw}}" for n in names)
    lines.append(header)
    for i in range(L):
        row = "  ".join(f"{int(v):>{cw}}" for v in report.confusion[i])
        lines.append(f"{names[i]:<{width}}  {row}")
    if report.metadata:
        lines.append("")
        lines.append("metadata: " + json.dumps(report.metadata, sort_keys=True))
    return "\n".join(lines) + "\n"


def report_records(report: EvalReport, label_names=None):
    """Machine-readable form: one summary record plus one record per class."""
    L = len(report.f1)
    names = list(label_names) if label_names else [str(i) for i in range(L)]
    records = [{
        "record": "summary",
        "micro_f1": report.micro_f1,
        "macro_f1": report.macro_f1,
        "total": int(report.support.sum()),
        "metadata": report.metadata,
    }]
    for i in range(L):
        records.append({
            "record": "class",
            "label": names[i],
            "precision": float(report.precision[i]),
            "recall": float(report.recall[i]),
            "f1": float(report.f1[i]),
            "support": int(report.support[i]),
            "confusion_row": [int(v) for v in report.confusion[i]],
        })
    return records


def save_report(path, report: EvalReport, label_names=None) -> None:
    """Line-delimited JSON records; byte-identical for identical reports."""
    with open(path, "w", encoding="utf-8") as f:
        for rec in report_records(report, label_names):
            f.write(json.dumps(rec, sort_keys=True) + "\n")
