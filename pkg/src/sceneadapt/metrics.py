"""Segmentation quality metrics over an integer confusion matrix.

Rows index ground-truth classes, columns predicted classes. Class accuracy
averages n_ii / t_i over classes that appear in the ground truth. Mean IoU
averages n_ii / (t_i + sum_j n_ji - n_ii) over classes present in ground
truth or predictions; a class predicted but never present scores 0 and is
included, which penalizes hallucinated classes.
"""

from __future__ import annotations

import io

import numpy as np

from .errors import DataError, UsageError


class ConfusionMatrix:
    def __init__(self, num_classes: int):
        if num_classes < 1:
            raise UsageError(f"need at least one class, got {num_classes}")
        self.num_classes = int(num_classes)
        self.counts = np.zeros((num_classes, num_classes), dtype=np.int64)

    def accumulate(self, predicted: np.ndarray, gt: np.ndarray) -> None:
        """Add one predicted/ground-truth mask pair to the counts."""
        predicted = np.asarray(predicted)
        gt = np.asarray(gt)
        if predicted.shape != gt.shape:
            raise UsageError(f"mask shapes differ: {predicted.shape} vs {gt.shape}")
        c = self.num_classes
        for name, mask in (("predicted", predicted), ("ground-truth", gt)):
            if mask.size and (mask.min() < 0 or mask.max() >= c):
                raise DataError(f"{name} mask holds ids outside [0, {c})")
        flat = c * gt.reshape(-1).astype(np.int64) + predicted.reshape(-1)
        self.counts += np.bincount(flat, minlength=c * c).reshape(c, c)

    def merge(self, other: "ConfusionMatrix") -> None:
        if other.num_classes != self.num_classes:
            raise UsageError("cannot merge matrices with different class counts")
        self.counts += other.counts

    def _require_support(self) -> None:
        if not self.counts.any():
            raise DataError("metrics undefined: no pixels accumulated")

    def per_class_accuracy(self) -> tuple[float, list[float | None]]:
        """Mean accuracy over present classes plus the per-class values.

        Classes absent from the ground truth get None and are excluded
        from the mean.
        """
        self._require_support()
        t = self.counts.sum(axis=1)
        diag = self.counts.diagonal()
        values: list[float | None] = [
            (diag[i] / t[i]) if t[i] > 0 else None for i in range(self.num_classes)]
        present = [v for v in values if v is not None]
        return float(np.mean(present)), values

    def mean_iou(self) -> tuple[float, list[float | None]]:
        """Mean IoU over classes present in ground truth or predictions."""
        self._require_support()
        t = self.counts.sum(axis=1)
        col = self.counts.sum(axis=0)
        diag = self.counts.diagonal()
        values: list[float | None] = []
        for i in range(self.num_classes):
            union = t[i] + col[i] - diag[i]
            values.append((diag[i] / union) if union > 0 else None)
        present = [v for v in values if v is not None]
        return float(np.mean(present)), values

    def report_csv(self, class_names: list[str]) -> str:
        """Per-class table with the averages on top, formatted to 4 decimals."""
        if len(class_names) != self.num_classes:
            raise UsageError(
                f"got {len(class_names)} names for {self.num_classes} classes")
        acc_mean, acc = self.per_class_accuracy()
        iou_mean, iou = self.mean_iou()
        out = io.StringIO()
        out.write("class,c_acc,m_iou\n")
        out.write(f"Average,{acc_mean:.4f},{iou_mean:.4f}\n")
        for name, a, i in zip(class_names, acc, iou):
            a_s = "" if a is None else f"{a:.4f}"
            i_s = "" if i is None else f"{i:.4f}"
            out.write(f"{name},{a_s},{i_s}\n")
        return out.getvalue()
