"""Classification quality measures: accuracy, macro F1, kappa, per-SNR curves.

Everything here is a pure function of label vectors. Conventions that the
formulas leave open are fixed as: per-class F1 is 0 when a class has no
true or predicted examples (so macro F1 averages over all K classes), and
kappa degenerates to 1 for perfect agreement when chance agreement is also
perfect, else 0.
"""

from __future__ import annotations

import csv
import os
import tempfile
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "ConfusionMatrix",
    "EvalReport",
    "compute_metrics",
    "per_snr_accuracy",
    "build_report",
    "write_metrics_csv",
    "write_confusion_csv",
    "write_per_snr_csv",
]


def _as_labels(arr, name: str) -> np.ndarray:
    out = np.asarray(arr)
    if out.ndim != 1:
        raise ValueError(f"{name} must be a 1-d label vector, got shape {out.shape}")
    if out.size and not np.issubdtype(out.dtype, np.integer):
        if not np.all(out == out.astype(np.int64)):
            raise ValueError(f"{name} must hold integer labels")
    return out.astype(np.int64)


@dataclass
class ConfusionMatrix:
    """K x K count grid; rows are true classes, columns predicted ones."""

    counts: np.ndarray

    def __post_init__(self):
        self.counts = np.asarray(self.counts, dtype=np.int64)
        k = self.counts.shape[0]
        if self.counts.ndim != 2 or self.counts.shape != (k, k):
            raise ValueError(f"confusion matrix must be square, got {self.counts.shape}")
        if (self.counts < 0).any():
            raise ValueError("confusion counts must be nonnegative")

    @classmethod
    def from_labels(cls, truth, pred, num_classes: int) -> "ConfusionMatrix":
        truth = _as_labels(truth, "truth")
        pred = _as_labels(pred, "pred")
        if len(truth) != len(pred):
            raise ValueError(
                f"label vectors differ in length: {len(truth)} vs {len(pred)}"
            )
        if len(truth) == 0:
            raise ValueError("cannot build a confusion matrix from zero examples")
        for name, vec in (("truth", truth), ("pred", pred)):
            if vec.min() < 0 or vec.max() >= num_classes:
                raise ValueError(
                    f"{name} labels must lie in [0, {num_classes}), "
                    f"got [{vec.min()}, {vec.max()}]"
                )
        counts = np.zeros((num_classes, num_classes), dtype=np.int64)
        np.add.at(counts, (truth, pred), 1)
        return cls(counts)

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def overall_accuracy(self) -> float:
        return float(np.trace(self.counts)) / self.total

    def macro_f1(self) -> float:
        tp = np.diag(self.counts).astype(np.float64)
        fp = self.counts.sum(axis=0) - tp
        fn = self.counts.sum(axis=1) - tp
        denom = 2 * tp + fp + fn
        # 2PR/(P+R) rewritten as 2tp/(2tp+fp+fn); empty classes contribute 0
        f1 = np.divide(2 * tp, denom, out=np.zeros_like(tp), where=denom > 0)
        return float(f1.mean())

    def kappa(self) -> float:
        n = self.total
        p_o = np.trace(self.counts) / n
        p_e = float(self.counts.sum(axis=1) @ self.counts.sum(axis=0)) / (n * n)
        if p_e >= 1.0:
            return 1.0 if p_o == 1.0 else 0.0
        return float((p_o - p_e) / (1.0 - p_e))


@dataclass
class EvalReport:
    overall_accuracy: float
    macro_f1: float
    kappa: float
    confusion: ConfusionMatrix
    per_snr: dict[int, float] = field(default_factory=dict)
    class_names: tuple[str, ...] = ()


def compute_metrics(truth, pred, num_classes: int) -> EvalReport:
    """Overall accuracy, macro F1 and kappa from aligned label vectors."""
    confusion = ConfusionMatrix.from_labels(truth, pred, num_classes)
    return EvalReport(
        overall_accuracy=confusion.overall_accuracy(),
        macro_f1=confusion.macro_f1(),
        kappa=confusion.kappa(),
        confusion=confusion,
    )


def per_snr_accuracy(truth, pred, snr_tags) -> dict[int, float]:
    """Accuracy within each SNR bucket; only buckets that occur appear."""
    truth = _as_labels(truth, "truth")
    pred = _as_labels(pred, "pred")
    snr_tags = np.asarray(snr_tags)
    if not (len(truth) == len(pred) == len(snr_tags)):
        raise ValueError(
            f"vectors differ in length: {len(truth)}, {len(pred)}, {len(snr_tags)}"
        )
    out: dict[int, float] = {}
    for snr in sorted(set(int(s) for s in snr_tags)):
        mask = snr_tags == snr
        out[snr] = float(np.mean(truth[mask] == pred[mask]))
    return out


def build_report(truth, pred, snr_tags, class_names) -> EvalReport:
    """Full report: core metrics plus the per-SNR curve and class names."""
    report = compute_metrics(truth, pred, len(class_names))
    report.per_snr = per_snr_accuracy(truth, pred, snr_tags)
    report.class_names = tuple(class_names)
    return report


# ---------------------------------------------------------------------------
# report files


def _atomic_csv(path, rows: list[list]) -> None:
    directory = os.path.dirname(os.path.abspath(path)) or "."
    fd, tmp = tempfile.mkstemp(dir=directory, suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            csv.writer(fh).writerows(rows)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_metrics_csv(report: EvalReport, path) -> None:
    _atomic_csv(path, [
        ["metric", "value"],
        ["overall_accuracy", f"{report.overall_accuracy:.6f}"],
        ["macro_f1", f"{report.macro_f1:.6f}"],
        ["kappa", f"{report.kappa:.6f}"],
    ])


def write_confusion_csv(report: EvalReport, path) -> None:
    names = report.class_names or tuple(
        str(i) for i in range(report.confusion.counts.shape[0])
    )
    rows: list[list] = [list(names)]
    rows += [[int(v) for v in row] for row in report.confusion.counts]
    _atomic_csv(path, rows)


def write_per_snr_csv(report: EvalReport, path) -> None:
    rows: list[list] = [["snr_db", "accuracy"]]
    rows += [[snr, f"{acc:.6f}"] for snr, acc in sorted(report.per_snr.items())]
    _atomic_csv(path, rows)
