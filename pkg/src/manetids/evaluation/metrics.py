"""Error, detection rate and false-alarm rate, plus the report record."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any

import numpy as np

from ..features import LABELS, Dataset


def classification_error(predictions, labels) -> float:
    """Mean 0/1 loss."""
    p = np.asarray(predictions)
    t = np.asarray(labels)
    if p.shape != t.shape or p.size == 0:
        raise ValueError(f"need equal non-empty inputs, got {p.shape} and {t.shape}")
    return float(np.count_nonzero(p != t) / p.size)


@dataclass
class ConfusionMatrix:
    """``counts[true, predicted]`` over ``classes``; class 0 is always normal."""

    classes: tuple[str, ...]
    counts: np.ndarray

    def __post_init__(self):
        self.classes = tuple(self.classes)
        self.counts = np.asarray(self.counts, dtype=np.int64)
        k = len(self.classes)
        if self.counts.shape != (k, k):
            raise ValueError(f"matrix shape {self.counts.shape} does not match {k} classes")
        if (self.counts < 0).any():
            raise ValueError("negative count in confusion matrix")

    @classmethod
    def from_predictions(cls, true, pred, classes) -> ConfusionMatrix:
        k = len(classes)
        m = np.zeros((k, k), dtype=np.int64)
        np.add.at(m, (np.asarray(true, dtype=np.int64), np.asarray(pred, dtype=np.int64)), 1)
        return cls(classes, m)

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def error(self) -> float:
        if self.total == 0:
            raise ValueError("empty confusion matrix")
        return float((self.total - np.trace(self.counts)) / self.total)

    def __eq__(self, other):
        if not isinstance(other, ConfusionMatrix):
            return NotImplemented
        return self.classes == other.classes and np.array_equal(self.counts, other.counts)


def detection_counts(m: ConfusionMatrix) -> tuple[int, int, int, int]:
    """(TP, FN, FP, TN) with every attack label lumped into the positive class."""
    c = m.counts
    return int(c[1:, 1:].sum()), int(c[1:, 0].sum()), int(c[0, 1:].sum()), int(c[0, 0])


def detection_metrics(m: ConfusionMatrix) -> tuple[float | None, float | None]:
    """(DR, FA); either is None when its denominator is zero."""
    tp, fn, fp, tn = detection_counts(m)
    dr = tp / (tp + fn) if tp + fn else None
    fa = fp / (tn + fp) if tn + fp else None
    return dr, fa


def per_attack_dr(m: ConfusionMatrix) -> dict[str, float]:
    """Share of each attack's rows flagged as any attack. Multiclass matrices only."""
    if m.classes != LABELS:
        raise ValueError("per-attack rates need a multiclass matrix; use per_attack_dr_sliced")
    out = {}
    for a in range(1, len(LABELS)):
        n = int(m.counts[a].sum())
        if n:
            out[LABELS[a]] = (n - int(m.counts[a, 0])) / n
    return out


def per_attack_dr_sliced(raw_labels, flagged) -> dict[str, float]:
    """Per-attack DR from raw row labels and a flagged-as-attack mask (any task mode)."""
    raw = np.asarray(raw_labels, dtype=object)
    flagged = np.asarray(flagged, dtype=bool)
    out = {}
    for name in LABELS[1:]:
        rows = raw == name
        n = int(rows.sum())
        if n:
            out[name] = int(flagged[rows].sum()) / n
    return out


@dataclass
class EvalReport:
    model_kind: str
    task: str
    hyperparameters: dict[str, Any]
    matrix: ConfusionMatrix
    dr: float | None
    fa: float | None
    error: float
    per_attack: dict[str, float]
    slicing: str                      # "matrix" (multiclass) or "slices" (binary)
    provenance: list[str] = field(default_factory=list)
    cell: dict[str, Any] = field(default_factory=dict)

    def consistent(self) -> bool:
        """Stored rates equal the ones recomputed from the stored matrix."""
        dr, fa = detection_metrics(self.matrix)
        return dr == self.dr and fa == self.fa and self.matrix.error() == self.error

    def to_dict(self) -> dict[str, Any]:
        return {
            "model_kind": self.model_kind, "task": self.task,
            "hyperparameters": dict(self.hyperparameters),
            "classes": list(self.matrix.classes), "matrix": self.matrix.counts.tolist(),
            "dr": self.dr, "fa": self.fa, "error": self.error,
            "per_attack": dict(self.per_attack), "slicing": self.slicing,
            "provenance": list(self.provenance), "cell": dict(self.cell),
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> EvalReport:
        return cls(d["model_kind"], d["task"], d["hyperparameters"],
                   ConfusionMatrix(d["classes"], d["matrix"]), d["dr"], d["fa"], d["error"],
                   d["per_attack"], d["slicing"], d.get("provenance", []), d.get("cell", {}))


class SchemaMismatch(ValueError):
    pass


def evaluate(model, data: Dataset, cell: dict[str, Any] | None = None) -> EvalReport:
    """Score ``model`` on ``data`` and build the report."""
    if len(data) == 0:
        raise ValueError("empty test set")
    if (model.sampling_interval is not None and data.sampling_interval is not None
            and model.sampling_interval != data.sampling_interval):
        raise SchemaMismatch(f"model sampling interval {model.sampling_interval:g} s vs "
                             f"dataset {data.sampling_interval:g} s")
    task = model.task
    truth = task.encode(data.labels)
    pred = model.predict(data.X)
    m = ConfusionMatrix.from_predictions(truth, pred, task.classes)
    dr, fa = detection_metrics(m)
    if task.classes == LABELS:
        per, slicing = per_attack_dr(m), "matrix"
    else:
        per, slicing = per_attack_dr_sliced(data.labels, pred != 0), "slices"
    scen = list(dict.fromkeys(data.scenarios.tolist()))
    return EvalReport(model.kind, task.mode.value, model.hp.to_dict(), m, dr, fa,
                      classification_error(pred, truth), per, slicing, scen, dict(cell or {}))
