"""Classification metrics: per-class P/R/F1, macro and weighted averages."""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Hashable, Sequence

import numpy as np

from ..errors import InvalidInputError

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class ClassScores:
    precision: float
    recall: float
    f1: float
    support: int


@dataclass
class MetricsReport:
    classes: tuple[str, ...]
    per_class: dict[str, ClassScores]
    accuracy: float
    macro: ClassScores
    weighted: ClassScores
    confusion: np.ndarray  # rows: gold, columns: predicted
    warnings: list[str] = field(default_factory=list)
    extra: dict = field(default_factory=dict)

    @property
    def n(self) -> int:
        return int(self.confusion.sum())

    def rows(self) -> list[list]:
        out = [["class", "precision", "recall", "f1", "support"]]
        for name in self.classes:
            s = self.per_class[name]
            out.append([name, s.precision, s.recall, s.f1, s.support])
        out.append(["macro avg", self.macro.precision, self.macro.recall, self.macro.f1, self.macro.support])
        out.append(
            ["weighted avg", self.weighted.precision, self.weighted.recall, self.weighted.f1, self.weighted.support]
        )
        out.append(["accuracy", "", "", self.accuracy, self.n])
        for key in sorted(self.extra):
            out.append([key, "", "", self.extra[key], ""])
        return out

    def write_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            csv.writer(fh, lineterminator="\n").writerows(self.rows())

    def write_confusion_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["gold\\pred", *self.classes])
            for name, row in zip(self.classes, self.confusion):
                writer.writerow([name, *(int(x) for x in row)])

    def format(self) -> str:
        lines = [f"{'':>14} {'prec':>7} {'rec':>7} {'f1':>7} {'supp':>6}"]
        for name in self.classes:
            s = self.per_class[name]
            lines.append(f"{name:>14} {s.precision:7.3f} {s.recall:7.3f} {s.f1:7.3f} {s.support:6d}")
        for name, s in (("macro avg", self.macro), ("weighted avg", self.weighted)):
            lines.append(f"{name:>14} {s.precision:7.3f} {s.recall:7.3f} {s.f1:7.3f} {s.support:6d}")
        lines.append(f"{'accuracy':>14} {self.accuracy:7.3f}")
        return "\n".join(lines)


def _label_name(label: Hashable) -> str:
    value = getattr(label, "value", label)
    return str(value)


def _safe_div(num: float, den: float) -> float:
    return num / den if den else 0.0


def classification_metrics(
    predictions: Sequence[Hashable],
    golds: Sequence[Hashable],
    class_set: Sequence[Hashable],
) -> MetricsReport:
    """Score predictions against gold labels over a fixed class ordering.

    Undefined ratios (no predictions for a class, no gold support) are
    reported as 0 and recorded in ``report.warnings``.
    """
    if len(predictions) != len(golds):
        raise InvalidInputError(f"length mismatch: {len(predictions)} predictions vs {len(golds)} golds")
    index = {label: i for i, label in enumerate(class_set)}
    k = len(class_set)
    confusion = np.zeros((k, k), dtype=np.int64)
    for p, g in zip(predictions, golds):
        if p not in index or g not in index:
            bad = p if p not in index else g
            raise InvalidInputError(f"label {bad!r} not in class set")
        confusion[index[g], index[p]] += 1

    names = tuple(_label_name(c) for c in class_set)
    tp = np.diag(confusion).astype(float)
    predicted = confusion.sum(axis=0).astype(float)
    support = confusion.sum(axis=1)
    n = int(support.sum())

    warnings: list[str] = []
    per_class: dict[str, ClassScores] = {}
    for i, name in enumerate(names):
        if predicted[i] == 0:
            warnings.append(f"precision undefined for {name} (no predictions); set to 0")
        if support[i] == 0:
            warnings.append(f"recall undefined for {name} (no gold support); set to 0")
        p = float(_safe_div(tp[i], predicted[i]))
        r = float(_safe_div(tp[i], float(support[i])))
        f = _safe_div(2 * p * r, p + r)
        per_class[name] = ClassScores(p, r, f, int(support[i]))
    for w in warnings:
        logger.warning(w)

    precisions = [per_class[c].precision for c in names]
    recalls = [per_class[c].recall for c in names]
    f1s = [per_class[c].f1 for c in names]
    macro = ClassScores(float(np.mean(precisions)), float(np.mean(recalls)), float(np.mean(f1s)), n)
    weights = support / n if n else np.zeros(k)
    weighted = ClassScores(
        float(np.dot(weights, precisions)),
        float(np.dot(weights, recalls)),
        float(np.dot(weights, f1s)),
        n,
    )
    accuracy = _safe_div(float(tp.sum()), float(n))
    return MetricsReport(names, per_class, accuracy, macro, weighted, confusion, warnings)


def binary_metrics(predictions: Sequence[int], golds: Sequence[int], positive: int = 1) -> MetricsReport:
    """Two-class report with positive-class P/R/F1 copied into ``extra``."""
    classes = (1 - positive, positive)
    report = classification_metrics(predictions, golds, classes)
    pos = report.per_class[str(positive)]
    report.extra.update(precision=pos.precision, recall=pos.recall, f1=pos.f1)
    return report
