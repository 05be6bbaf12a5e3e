import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fedboost.errors import LengthMismatch
from fedboost.metrics import MetricRecord, f1_macro, read_report, write_report


class TestF1Macro:
    def test_perfect_predictions(self):
        labels = np.array([0, 1, 2, 1, 0])
        assert f1_macro(labels, labels, 3) == 1.0

    def test_all_one_class_on_balanced_binary(self):
        labels = np.array([0, 0, 1, 1])
        predictions = np.zeros(4, dtype=int)
        assert f1_macro(predictions, labels, 2) == pytest.approx((2 / 3 + 0) / 2)

    def test_class_absent_everywhere_counts_as_one(self):
        labels = np.array([0, 1, 0])
        predictions = np.array([0, 1, 0])
        assert f1_macro(predictions, labels, 3) == 1.0  # class 2 contributes 1.0

    def test_matches_hand_computed_confusion_fixture(self):
        # oracle: per-class harmonic means recomputed by hand below
        #   class 0: tp=2 fp=1 fn=1 -> p=2/3 r=2/3 f1=2/3
        #   class 1: tp=1 fp=2 fn=1 -> p=1/3 r=1/2 f1=2/5
        #   class 2: tp=1 fp=1 fn=2 -> p=1/2 r=1/3 f1=2/5
        labels = np.array([0, 0, 0, 1, 1, 2, 2, 2])
        predictions = np.array([0, 0, 1, 1, 2, 2, 0, 1])
        expected = (2 / 3 + 2 / 5 + 2 / 5) / 3
        assert f1_macro(predictions, labels, 3) == pytest.approx(expected, rel=1e-12)

    def test_length_mismatch(self):
        with pytest.raises(LengthMismatch):
            f1_macro(np.array([0, 1]), np.array([0]), 2)

    @given(st.integers(2, 6), st.integers(1, 60), st.integers(0, 10_000))
    @settings(max_examples=100, deadline=None)
    def test_bounded_in_unit_interval(self, k, n, seed):
        rng = np.random.default_rng(seed)
        value = f1_macro(rng.integers(0, k, n), rng.integers(0, k, n), k)
        assert 0.0 <= value <= 1.0


class TestReportFile:
    def test_write_read_round_trip(self, tmp_path):
        path = tmp_path / "report.jsonl"
        records = [
            MetricRecord(1, "0", "f1_macro", 0.5),
            MetricRecord(1, "global", "f1_macro", 0.5),
            MetricRecord(1, "global", "error", 0.25),
        ]
        write_report(path, records, {"rounds": 1})
        loaded, summary = read_report(path)
        assert loaded == records
        assert summary == {"rounds": 1}
        assert len(path.read_text().strip().splitlines()) == 4
