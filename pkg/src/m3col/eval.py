"""Classification metrics, error crosstabs and robustness probes."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field
from itertools import combinations
from typing import Optional, Sequence

import numpy as np
from scipy.stats import rankdata

from .data import LabeledBatch, StandardizationStats, standardize
from .errors import ContractError, EmptyBatchError, LabelError, ShapeError
from .model import predict_logits


def _labels(x) -> np.ndarray:
    return np.asarray(x, dtype=np.int64).ravel()


def accuracy(pred, truth) -> float:
    pred, truth = _labels(pred), _labels(truth)
    if pred.shape != truth.shape:
        raise ShapeError(f"{pred.size} predictions for {truth.size} labels")
    if pred.size == 0:
        raise EmptyBatchError("accuracy of an empty prediction set is undefined")
    return float(np.mean(pred == truth))


def confusion_matrix(pred, truth, num_classes: int) -> np.ndarray:
    """``cm[t, p]`` counts samples with truth ``t`` predicted as ``p``."""
    pred, truth = _labels(pred), _labels(truth)
    if pred.shape != truth.shape:
        raise ShapeError(f"{pred.size} predictions for {truth.size} labels")
    for arr in (pred, truth):
        if arr.size and (arr.min() < 0 or arr.max() >= num_classes):
            raise LabelError(f"labels must lie in [0, {num_classes})")
    cm = np.zeros((num_classes, num_classes), dtype=np.int64)
    np.add.at(cm, (truth, pred), 1)
    return cm


@dataclass
class F1Scores:
    precision: np.ndarray
    recall: np.ndarray
    f1: np.ndarray
    support: np.ndarray
    macro: float
    weighted: float
    binary: Optional[float]


def f1_scores(pred, truth, num_classes: int) -> F1Scores:
    """Per-class precision/recall/F1 with 0 wherever a denominator is 0."""
    cm = confusion_matrix(pred, truth, num_classes)
    tp = np.diag(cm).astype(float)
    predicted = cm.sum(axis=0)
    support = cm.sum(axis=1)
    with np.errstate(invalid="ignore", divide="ignore"):
        precision = np.where(predicted > 0, tp / predicted, 0.0)
        recall = np.where(support > 0, tp / support, 0.0)
        denom = precision + recall
        f1 = np.where(denom > 0, 2 * precision * recall / denom, 0.0)
    total = support.sum()
    weighted = float(np.sum(f1 * support) / total) if total else 0.0
    binary = float(f1[1]) if num_classes == 2 else None
    return F1Scores(precision, recall, f1, support, float(f1.mean()), weighted, binary)


def auc_binary(scores, truth) -> float:
    """ROC AUC as the Mann-Whitney statistic, with midranks for ties."""
    scores = np.asarray(scores, dtype=np.float64).ravel()
    truth = _labels(truth)
    if scores.shape != truth.shape:
        raise ShapeError(f"{scores.size} scores for {truth.size} labels")
    pos = truth == 1
    n_pos = int(pos.sum())
    n_neg = int(truth.size - n_pos)
    if n_pos == 0 or n_neg == 0:
        raise ContractError("AUC is undefined unless both classes are present")
    ranks = rankdata(scores, method="average")
    return float((ranks[pos].sum() - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg))


def softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


@dataclass
class MetricsReport:
    acc: float
    n_samples: int
    f1_binary: Optional[float] = None
    auc: Optional[float] = None
    macro_f1: Optional[float] = None
    weighted_f1: Optional[float] = None
    per_class: list = field(default_factory=list)
    confidence: Optional[float] = None

    def to_dict(self) -> dict:
        return asdict(self)


def metrics_from_logits(logits: np.ndarray, truth, num_classes: int) -> MetricsReport:
    truth = _labels(truth)
    probs = softmax(np.asarray(logits, dtype=np.float64))
    pred = probs.argmax(axis=1)
    f1 = f1_scores(pred, truth, num_classes)
    auc = None
    if num_classes == 2 and 0 < truth.sum() < truth.size:
        auc = auc_binary(probs[:, 1], truth)
    per_class = [
        {"class": c, "precision": float(f1.precision[c]), "recall": float(f1.recall[c]),
         "f1": float(f1.f1[c]), "support": int(f1.support[c])}
        for c in range(num_classes)
    ]
    return MetricsReport(
        acc=accuracy(pred, truth),
        n_samples=int(truth.size),
        f1_binary=f1.binary,
        auc=auc,
        macro_f1=f1.macro,
        weighted_f1=f1.weighted,
        per_class=per_class,
        confidence=float(probs.max(axis=1).mean()),
    )


CROSSTAB_ROWS = ((True, True), (True, False), (False, True), (False, False))


@dataclass
class ErrorCrosstab:
    """Percent of samples per (A correct, B correct) x (fused correct, incorrect)."""

    names: tuple
    cells: dict

    def to_dict(self) -> dict:
        rows = []
        for a, b in CROSSTAB_ROWS:
            rows.append({self.names[0]: a, self.names[1]: b,
                         "correct": self.cells[(a, b, True)], "incorrect": self.cells[(a, b, False)]})
        return {"modalities": list(self.names), "rows": rows}


def error_crosstab(uni_preds: Sequence, fused_preds, truth, names=("A", "B")) -> ErrorCrosstab:
    if len(uni_preds) != 2:
        raise ShapeError(f"a crosstab compares two unimodal predictors, got {len(uni_preds)}")
    a, b, f, t = (_labels(x) for x in (uni_preds[0], uni_preds[1], fused_preds, truth))
    if not (a.shape == b.shape == f.shape == t.shape):
        raise ShapeError("prediction vectors must have equal lengths")
    if t.size == 0:
        raise EmptyBatchError("empty crosstab")
    ca, cb, cf = a == t, b == t, f == t
    cells = {}
    for ra, rb in CROSSTAB_ROWS:
        for rf in (True, False):
            hit = (ca == ra) & (cb == rb) & (cf == rf)
            cells[(ra, rb, rf)] = 100.0 * float(hit.sum()) / t.size
    return ErrorCrosstab(tuple(names), cells)


def pairwise_crosstabs(uni_logits: Sequence, fused_logits, truth, names) -> list:
    preds = [np.asarray(u).argmax(axis=1) for u in uni_logits]
    fused = np.asarray(fused_logits).argmax(axis=1)
    return [error_crosstab([preds[i], preds[j]], fused, truth, (names[i], names[j]))
            for i, j in combinations(range(len(preds)), 2)]


def gaussian_like(stats: StandardizationStats, modality: int, n: int, rng: np.random.Generator) -> np.ndarray:
    """Noise whose per-column mean and std match the training statistics."""
    mu, sd = stats.means[modality], stats.stds[modality]
    return mu + sd * rng.standard_normal((n, mu.shape[0]))


def corrupt_modality_eval(model, test: LabeledBatch, train_stats: Optional[StandardizationStats],
                          target, rng: np.random.Generator, standardize_stats=None) -> MetricsReport:
    """Fused-head metrics after replacing modalities with matched Gaussian noise.

    ``target`` is a modality index or name, ``"all"`` for the random-input
    probe, or ``None`` to corrupt nothing. ``train_stats`` describe the raw
    training features; ``test`` holds raw features too. When
    ``standardize_stats`` is given, inputs are z-scored with it before the
    model sees them.
    """
    if train_stats is None:
        raise ContractError("corruption needs training-set statistics")
    if target is None:
        targets = []
    elif target == "all":
        targets = list(range(test.num_modalities))
    elif isinstance(target, str):
        if target not in test.names:
            raise ContractError(f"unknown modality '{target}', have {test.names}")
        targets = [test.names.index(target)]
    else:
        if not 0 <= int(target) < test.num_modalities:
            raise ContractError(f"modality index {target} out of range")
        targets = [int(target)]
    mods = list(test.modalities)
    for m in targets:
        mods[m] = gaussian_like(train_stats, m, len(test), rng)
    batch = test.replace(mods)
    if standardize_stats is not None:
        batch, _ = standardize(batch, batch, standardize_stats)
    fused, _ = predict_logits(model, batch)
    return metrics_from_logits(fused, test.labels, test.num_classes)
