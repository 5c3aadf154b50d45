"""Evaluation harness checks, with sklearn.metrics as the independent oracle."""

import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from sklearn.metrics import confusion_matrix, f1_score

from docsphere.evaluation import evaluate, render_report_text, report_records, save_report


class TestEvaluate:
    def test_perfect_predictions(self):
        r = evaluate([0, 1, 2, 1], [0, 1, 2, 1], 3)
        assert r.micro_f1 == 1.0
        assert r.macro_f1 == 1.0
        assert np.array_equal(np.diag(r.confusion), r.support)

    def test_hand_worked_three_docs(self):
        # preds [A,A,B] vs gold [A,B,B]: micro 2/3, both class F1 2/3
        r = evaluate([0, 0, 1], [0, 1, 1], 2)
        assert r.micro_f1 == pytest.approx(2 / 3)
        assert r.f1[0] == pytest.approx(2 / 3)
        assert r.f1[1] == pytest.approx(2 / 3)
        assert r.macro_f1 == pytest.approx(2 / 3)

    def test_degenerate_single_class_predictor(self):
        # everything predicted class 0 on a balanced 2-class gold
        n = 6
        preds = [0] * (2 * n)
        gold = [0] * n + [1] * n
        r = evaluate(preds, gold, 2)
        assert r.micro_f1 == pytest.approx(0.5)
        assert r.macro_f1 == pytest.approx((2 / 3 + 0.0) / 2)

    def test_empty_class_contributes_zero(self):
        # class 2 never appears in gold or preds -> F1 0, drags macro down
        r = evaluate([0, 1], [0, 1], 3)
        assert r.f1[2] == 0.0
        assert r.macro_f1 == pytest.approx(2 / 3)

    def test_confusion_row_sums_are_gold_counts(self):
        rng = np.random.default_rng(0)
        gold = rng.integers(0, 5, size=200)
        preds = rng.integers(0, 5, size=200)
        r = evaluate(preds, gold, 5)
        assert r.confusion.sum() == 200
        for c in range(5):
            assert r.confusion[c].sum() == int((gold == c).sum())

    def test_against_sklearn_oracle(self):
        rng = np.random.default_rng(7)
        for trial in range(20):
            L = int(rng.integers(2, 8))
            n = int(rng.integers(5, 100))
            gold = rng.integers(0, L, size=n)
            preds = rng.integers(0, L, size=n)
            r = evaluate(preds, gold, L)
            labels = np.arange(L)
            assert r.micro_f1 == pytest.approx(
                f1_score(gold, preds, labels=labels, average="micro"))
            assert r.macro_f1 == pytest.approx(
                f1_score(gold, preds, labels=labels, average="macro", zero_division=0))
            assert np.array_equal(r.confusion, confusion_matrix(gold, preds, labels=labels))

    def test_input_validation(self):
        with pytest.raises(ValueError):
            evaluate([0], [0, 1], 2)
        with pytest.raises(ValueError):
            evaluate([], [], 2)
        with pytest.raises(ValueError):
            evaluate([2], [0], 2)

    @given(st.lists(st.tuples(st.integers(0, 3), st.integers(0, 3)), min_size=1, max_size=60))
    @settings(max_examples=60, deadline=None)
    def test_micro_equals_accuracy_property(self, pairs):
        preds = [p for p, _ in pairs]
        gold = [g for _, g in pairs]
        r = evaluate(preds, gold, 4)
        acc = sum(p == g for p, g in pairs) / len(pairs)
        assert r.micro_f1 == pytest.approx(acc)
        assert 0.0 <= r.macro_f1 <= 1.0


class TestReportOutput:
    def test_text_rendering_is_deterministic(self):
        r = evaluate([0, 1, 1], [0, 1, 0], 2)
        a = render_report_text(r, ["alpha", "beta"])
        b = render_report_text(r, ["alpha", "beta"])
        assert a == b
        assert "micro F1" in a and "alpha" in a

    def test_records_round_trip_values(self):
        r = evaluate([0, 1, 1], [0, 1, 0], 2)
        recs = report_records(r)
        assert recs[0]["record"] == "summary"
        assert recs[0]["micro_f1"] == pytest.approx(r.micro_f1)
        assert len(recs) == 3
        assert recs[1]["confusion_row"] == [int(v) for v in r.confusion[0]]

    def test_saved_report_bytes_stable(self, tmp_path):
        r = evaluate([0, 1, 2, 2], [0, 2, 2, 1], 3, metadata={"seed": 5})
        p1, p2 = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
        save_report(p1, r)
        save_report(p2, r)
        assert p1.read_bytes() == p2.read_bytes()
        lines = p1.read_text().splitlines()
        assert json.loads(lines[0])["metadata"] == {"seed": 5}
