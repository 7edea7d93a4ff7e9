"""Confusion matrices and support-weighted classification metrics."""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .engine import Aggregator, Engine, partition
from .prep import LabelScheme, get_scheme


class MetricsError(Exception):
    pass


class LabelOutOfScheme(MetricsError):
    pass


class EmptyMatrix(MetricsError):
    pass


@dataclass
class ConfusionMatrix:
    counts: np.ndarray  # rows true, cols predicted
    scheme: LabelScheme

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def to_dict(self) -> dict:
        return {"classes": list(self.scheme.classes), "counts": self.counts.tolist()}


def _as_index(labels, scheme: LabelScheme) -> np.ndarray:
    arr = np.asarray(labels)
    if arr.dtype.kind in "iu":
        if arr.size and (arr.min() < 0 or arr.max() >= scheme.n_classes):
            raise LabelOutOfScheme("class index out of range")
        return arr.astype(np.int64)
    lookup = {c: i for i, c in enumerate(scheme.classes)}
    try:
        return np.array([lookup[v] for v in arr.tolist()], dtype=np.int64)
    except KeyError as exc:
        raise LabelOutOfScheme(str(exc)) from None


def confusion(preds, truth, scheme, *, partitions: int = 1, engine: Engine | None = None) -> ConfusionMatrix:
    """Count (true, predicted) pairs; labels may be class names or indices."""
    scheme = get_scheme(scheme)
    if len(preds) != len(truth):
        raise ValueError("preds and truth differ in length")
    p = _as_index(preds, scheme)
    t = _as_index(truth, scheme)
    k = scheme.n_classes
    engine = engine or Engine()
    agg = Aggregator(
        zero=lambda: np.zeros((k, k), dtype=np.int64),
        merge=np.add,
        lift_block=lambda b: np.bincount(b[0] * k + b[1], minlength=k * k).reshape(k, k).astype(np.int64),
    )
    counts = engine.aggregate(partition((t, p), partitions), agg)
    return ConfusionMatrix(counts, scheme)


@dataclass
class MetricsReport:
    accuracy: float
    precision_weighted: float
    recall_weighted: float
    f1_weighted: float
    per_class: dict
    flags: list = field(default_factory=list)
    averaging: str = "weighted"

    def to_dict(self) -> dict:
        return {
            "accuracy": self.accuracy,
            "precision": self.precision_weighted,
            "recall": self.recall_weighted,
            "f1": self.f1_weighted,
            "averaging": self.averaging,
            "per_class": self.per_class,
            "flags": self.flags,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def metrics(cm: ConfusionMatrix, averaging: str = "weighted") -> MetricsReport:
    """Accuracy plus precision/recall/F1 averaged by class support.

    A class never predicted gets precision 0; a (0, 0) precision/recall pair
    gets F1 0. Both cases are listed in ``flags``. ``averaging="macro"``
    averages per-class values uniformly instead.
    """
    c = np.asarray(cm.counts, dtype=np.int64)
    total = int(c.sum())
    if total == 0:
        raise EmptyMatrix("confusion matrix is empty")
    diag = np.diag(c)
    rows = c.sum(axis=1)
    cols = c.sum(axis=0)
    per_class = {}
    flags = []
    prec, rec, f1 = [], [], []
    for i, name in enumerate(cm.scheme.classes):
        tp = int(diag[i])
        if cols[i] == 0:
            p = 0.0
            flags.append(f"{name}: never predicted, precision set to 0")
        else:
            p = tp / int(cols[i])
        r = tp / int(rows[i]) if rows[i] else 0.0
        if p + r == 0:
            f = 0.0
            if rows[i]:
                flags.append(f"{name}: precision and recall are 0, f1 set to 0")
        else:
            f = 2 * p * r / (p + r)
        prec.append(p)
        rec.append(r)
        f1.append(f)
        per_class[name] = {"precision": p, "recall": r, "f1": f, "support": int(rows[i])}
    if averaging == "weighted":
        w = rows / total
    elif averaging == "macro":
        w = np.full(len(rows), 1.0 / len(rows))
    else:
        raise ValueError(f"unknown averaging {averaging!r}")
    return MetricsReport(
        accuracy=int(diag.sum()) / total,
        precision_weighted=float(np.dot(w, prec)),
        recall_weighted=float(np.dot(w, rec)),
        f1_weighted=float(np.dot(w, f1)),
        per_class=per_class,
        flags=flags,
        averaging=averaging,
    )


MODEL_TITLES = {
    "dt": "Decision Tree",
    "lr": "Logistic Regression",
    "svm": "Linear SVM",
    "rf": "Random Forest",
    "gbt": "GBTs",
}


def format_table(reports: dict) -> str:
    """Aligned text table, one row per model: Accuracy, Precision, Recall, F1."""
    head = f"{'Model':<20} {'Accuracy':>9} {'Precision':>9} {'Recall':>9} {'F1':>9}"
    lines = [head, "-" * len(head)]
    for key, rep in reports.items():
        d = rep.to_dict() if isinstance(rep, MetricsReport) else rep
        title = MODEL_TITLES.get(key, key)
        lines.append(f"{title:<20} {d['accuracy']:>9.4f} {d['precision']:>9.4f} "
                     f"{d['recall']:>9.4f} {d['f1']:>9.4f}")
    return "\n".join(lines)
