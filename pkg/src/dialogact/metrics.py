"""Accuracy, confusion matrices, and the previous-label entropy analysis."""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Sequence

import numpy as np

from dialogact.corpus import Conversation, LabelSet
from dialogact.errors import ContractError, UndefinedCorrelationError
from dialogact.tensor import no_tape

if TYPE_CHECKING:
    from dialogact.model import ConversationModel


def accuracy(predictions: Sequence, gold: Sequence) -> float:
    """Exact-match fraction. Accepts flat label lists or lists of per-conversation lists."""
    p, g = _flatten(predictions), _flatten(gold)
    if len(p) != len(g):
        raise ContractError(f"{len(p)} predictions for {len(g)} gold labels")
    if not g:
        raise ContractError("accuracy of an empty set")
    return sum(a == b for a, b in zip(p, g)) / len(g)


def _flatten(xs: Sequence) -> list:
    if xs and isinstance(xs[0], (list, tuple)):
        return [y for x in xs for y in x]
    return list(xs)


@dataclass
class MetricsReport:
    labels: list[str]
    confusion: np.ndarray            # rows gold, columns predicted
    accuracy: float
    per_class: dict[str, float | None] = field(default_factory=dict)

    @property
    def support(self) -> dict[str, int]:
        return {lab: int(n) for lab, n in zip(self.labels, self.confusion.sum(axis=1))}

    @property
    def total(self) -> int:
        return int(self.confusion.sum())

    def to_dict(self) -> dict:
        return {"accuracy": self.accuracy, "per_class": self.per_class, "support": self.support,
                "confusion": self.confusion.tolist(), "labels": self.labels}


def metrics_report(predictions: Sequence[Sequence[int]], gold: Sequence[Sequence[int]], labels: LabelSet) -> MetricsReport:
    Y = len(labels)
    cm = np.zeros((Y, Y), dtype=np.int64)
    p, g = _flatten(predictions), _flatten(gold)
    if len(p) != len(g):
        raise ContractError(f"{len(p)} predictions for {len(g)} gold labels")
    if not g:
        raise ContractError("metrics of an empty set")
    np.add.at(cm, (np.asarray(g), np.asarray(p)), 1)
    support = cm.sum(axis=1)
    per_class = {lab: (float(cm[i, i] / support[i]) if support[i] else None) for i, lab in enumerate(labels.labels)}
    return MetricsReport(list(labels.labels), cm, float(np.trace(cm) / cm.sum()), per_class)


def predict_all(model: "ConversationModel", convs: Sequence[Conversation], decode: str = "crf") -> list[list[int]]:
    with no_tape():
        return [model.predict(c, decode) for c in convs]


def evaluate(model: "ConversationModel", convs: Sequence[Conversation], decode: str = "crf") -> MetricsReport:
    preds = predict_all(model, convs, decode)
    gold = [model.labels.encode(c.labels) for c in convs]
    return metrics_report(preds, gold, model.labels)


# -- previous-label entropy ---------------------------------------------------


@dataclass
class ClassEntropyRecord:
    label: str
    prev_entropy: float | None       # normalized to [0, 1]; None if undefined
    accuracy: float | None
    support: int


def predecessor_counts(convs: Sequence[Conversation], label: str) -> Counter:
    """Gold labels immediately preceding occurrences of ``label``; the first
    utterance of a conversation has no predecessor and is skipped."""
    counts: Counter = Counter()
    for c in convs:
        ys = c.labels
        for prev, cur in zip(ys, ys[1:]):
            if cur == label:
                counts[prev] += 1
    return counts


def prev_label_entropy(convs: Sequence[Conversation], label: str, n_labels: int) -> float:
    """Shannon entropy (bits) of the predecessor distribution of ``label``,
    divided by ``log2(n_labels)``."""
    counts = predecessor_counts(convs, label)
    total = sum(counts.values())
    if total == 0:
        raise ContractError(f"label {label!r} never occurs after another utterance")
    if n_labels < 2:
        return 0.0
    h = -sum((n / total) * math.log2(n / total) for n in counts.values())
    return h / math.log2(n_labels)


def pearson_correlation(x: Sequence[float], y: Sequence[float]) -> float:
    xa, ya = np.asarray(x, dtype=float), np.asarray(y, dtype=float)
    if xa.shape != ya.shape or xa.size < 2:
        raise ContractError("pearson correlation needs two equal-length sequences of length >= 2")
    dx, dy = xa - xa.mean(), ya - ya.mean()
    sx, sy = float(np.sqrt((dx * dx).sum())), float(np.sqrt((dy * dy).sum()))
    if sx == 0.0 or sy == 0.0:
        raise UndefinedCorrelationError("correlation undefined: zero variance")
    return float((dx * dy).sum() / (sx * sy))


@dataclass
class EntropyAnalysis:
    records: list[ClassEntropyRecord]
    correlation: float | None

    def to_dict(self) -> dict:
        return {
            "classes": [r.__dict__ for r in self.records],
            "pearson_r": self.correlation,
        }


def analyze_predictions(convs: Sequence[Conversation], predictions: Sequence[Sequence[str]],
                        labels: LabelSet) -> EntropyAnalysis:
    """Per-class previous-label entropy against per-class accuracy.

    Classes with no non-initial occurrence or no support are reported with
    ``None`` fields and left out of the correlation, which is itself ``None``
    when undefined.
    """
    hits: Counter = Counter()
    support: Counter = Counter()
    for c, pred in zip(convs, predictions):
        for g, p in zip(c.labels, pred):
            support[g] += 1
            hits[g] += g == p
    records = []
    for lab in labels.labels:
        try:
            ent = prev_label_entropy(convs, lab, len(labels))
        except ContractError:
            ent = None
        acc = hits[lab] / support[lab] if support[lab] else None
        records.append(ClassEntropyRecord(lab, ent, acc, support[lab]))
    pairs = [(r.prev_entropy, r.accuracy) for r in records if r.prev_entropy is not None and r.accuracy is not None]
    r = None
    if len(pairs) >= 2:
        try:
            r = pearson_correlation([a for a, _ in pairs], [b for _, b in pairs])
        except UndefinedCorrelationError:
            r = None
    return EntropyAnalysis(records, r)


def analyze(model: "ConversationModel", convs: Sequence[Conversation]) -> EntropyAnalysis:
    preds = predict_all(model, convs)
    return analyze_predictions(convs, [model.labels.decode(p) for p in preds], model.labels)
