"""Quality measures against hand-worked values and library cross-checks."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from sklearn.metrics import accuracy_score, cohen_kappa_score, f1_score

from amcnet.metrics import (
    ConfusionMatrix,
    build_report,
    compute_metrics,
    per_snr_accuracy,
    write_confusion_csv,
    write_metrics_csv,
    write_per_snr_csv,
)


class TestHandWorkedCases:
    def test_perfect_prediction(self):
        report = compute_metrics([0, 1, 2, 1], [0, 1, 2, 1], 3)
        assert report.overall_accuracy == 1.0
        assert report.macro_f1 == 1.0
        assert report.kappa == 1.0

    def test_chance_level_two_classes(self):
        report = compute_metrics([0, 0, 1, 1], [0, 1, 0, 1], 2)
        assert report.overall_accuracy == 0.5
        assert report.kappa == 0.0

    def test_three_class_mixed(self):
        truth, pred = [0, 1, 2, 0], [0, 1, 1, 0]
        report = compute_metrics(truth, pred, 3)
        assert report.overall_accuracy == 0.75
        # class 0: perfect; class 1: one tp, one fp; class 2: never predicted
        cm = report.confusion
        tp = np.diag(cm.counts).astype(float)
        fp = cm.counts.sum(axis=0) - tp
        fn = cm.counts.sum(axis=1) - tp
        per_class = 2 * tp / np.maximum(2 * tp + fp + fn, 1)
        np.testing.assert_allclose(per_class, [1.0, 2 / 3, 0.0])
        assert report.macro_f1 == pytest.approx(5 / 9)

    def test_single_class_agreement_degenerate_kappa(self):
        report = compute_metrics([0, 0, 0], [0, 0, 0], 2)
        assert report.overall_accuracy == 1.0
        assert report.kappa == 1.0

    def test_confusion_layout_rows_are_truth(self):
        cm = ConfusionMatrix.from_labels([0, 0, 1], [1, 1, 1], 2)
        np.testing.assert_array_equal(cm.counts, [[0, 2], [0, 1]])


class TestInputValidation:
    def test_length_mismatch(self):
        with pytest.raises(ValueError, match="length"):
            compute_metrics([0, 1], [0], 2)

    def test_empty_vectors(self):
        with pytest.raises(ValueError, match="zero examples"):
            compute_metrics([], [], 2)

    def test_out_of_range_labels(self):
        with pytest.raises(ValueError, match="pred"):
            compute_metrics([0, 1], [0, 5], 2)

    def test_non_integer_labels(self):
        with pytest.raises(ValueError, match="integer"):
            ConfusionMatrix.from_labels([0.5, 1.0], [0, 1], 2)

    def test_rectangular_counts_rejected(self):
        with pytest.raises(ValueError, match="square"):
            ConfusionMatrix(np.zeros((2, 3), dtype=np.int64))


class TestAgainstSklearn:
    @pytest.mark.parametrize("seed", [0, 1, 2])
    def test_random_labelings_match_reference_library(self, seed):
        rng = np.random.default_rng(seed)
        k = int(rng.integers(2, 6))
        truth = rng.integers(0, k, size=500)
        pred = rng.integers(0, k, size=500)
        report = compute_metrics(truth, pred, k)
        assert report.overall_accuracy == pytest.approx(
            accuracy_score(truth, pred), abs=1e-12)
        assert report.macro_f1 == pytest.approx(
            f1_score(truth, pred, average="macro", zero_division=0), abs=1e-12)
        assert report.kappa == pytest.approx(
            cohen_kappa_score(truth, pred), abs=1e-12)

    def test_skewed_predictions_match_reference_library(self):
        truth = np.array([0, 1, 2, 3] * 25)
        pred = np.zeros(100, dtype=np.int64)  # all mass on one class
        report = compute_metrics(truth, pred, 4)
        assert report.macro_f1 == pytest.approx(
            f1_score(truth, pred, average="macro", zero_division=0), abs=1e-12)
        assert report.kappa == pytest.approx(
            cohen_kappa_score(truth, pred), abs=1e-12)


class TestProperties:
    @given(st.integers(min_value=0, max_value=10_000))
    @settings(max_examples=25, deadline=None)
    def test_accuracy_is_trace_over_total(self, seed):
        rng = np.random.default_rng(seed)
        n = int(rng.integers(1, 200))
        k = int(rng.integers(2, 7))
        truth = rng.integers(0, k, size=n)
        pred = rng.integers(0, k, size=n)
        cm = ConfusionMatrix.from_labels(truth, pred, k)
        assert cm.overall_accuracy() == np.trace(cm.counts) / n

    @given(st.integers(min_value=0, max_value=10_000))
    @settings(max_examples=25, deadline=None)
    def test_metrics_invariant_under_class_relabeling(self, seed):
        rng = np.random.default_rng(seed)
        k = int(rng.integers(2, 6))
        n = int(rng.integers(5, 100))
        truth = rng.integers(0, k, size=n)
        pred = rng.integers(0, k, size=n)
        perm = rng.permutation(k)
        base = compute_metrics(truth, pred, k)
        swapped = compute_metrics(perm[truth], perm[pred], k)
        assert swapped.overall_accuracy == pytest.approx(base.overall_accuracy)
        assert swapped.macro_f1 == pytest.approx(base.macro_f1)
        assert swapped.kappa == pytest.approx(base.kappa)


class TestPerSnr:
    def test_buckets_only_for_present_snrs(self):
        truth = [0, 0, 1, 1]
        pred = [0, 1, 1, 1]
        snrs = [-10, -10, 6, 6]
        curve = per_snr_accuracy(truth, pred, snrs)
        assert list(curve.keys()) == [-10, 6]
        assert curve[-10] == 0.5
        assert curve[6] == 1.0

    def test_keys_sorted_ascending(self):
        curve = per_snr_accuracy([0] * 6, [0] * 6, [8, -20, 0, 8, -20, 0])
        assert list(curve.keys()) == [-20, 0, 8]

    def test_length_mismatch(self):
        with pytest.raises(ValueError, match="length"):
            per_snr_accuracy([0, 1], [0, 1], [0])


class TestReportFiles:
    def make_report(self):
        truth = [0, 1, 2, 0, 1, 2]
        pred = [0, 1, 1, 0, 1, 2]
        snrs = [0, 0, 0, 10, 10, 10]
        return build_report(truth, pred, snrs, ("BPSK", "QPSK", "PAM4"))

    def test_metrics_csv(self, tmp_path):
        path = tmp_path / "metrics.csv"
        write_metrics_csv(self.make_report(), path)
        lines = path.read_text().strip().splitlines()
        assert lines[0] == "metric,value"
        names = [line.split(",")[0] for line in lines[1:]]
        assert names == ["overall_accuracy", "macro_f1", "kappa"]
        assert float(lines[1].split(",")[1]) == pytest.approx(5 / 6)

    def test_confusion_csv(self, tmp_path):
        path = tmp_path / "confusion.csv"
        write_confusion_csv(self.make_report(), path)
        lines = path.read_text().strip().splitlines()
        assert lines[0] == "BPSK,QPSK,PAM4"
        grid = [[int(v) for v in line.split(",")] for line in lines[1:]]
        np.testing.assert_array_equal(grid, [[2, 0, 0], [0, 2, 0], [0, 1, 1]])

    def test_per_snr_csv(self, tmp_path):
        path = tmp_path / "per_snr_accuracy.csv"
        write_per_snr_csv(self.make_report(), path)
        lines = path.read_text().strip().splitlines()
        assert lines[0] == "snr_db,accuracy"
        assert lines[1].startswith("0,")
        assert lines[2].startswith("10,")
        assert float(lines[2].split(",")[1]) == 1.0

    def test_report_carries_class_names_and_curve(self):
        report = self.make_report()
        assert report.class_names == ("BPSK", "QPSK", "PAM4")
        assert set(report.per_snr) == {0, 10}
