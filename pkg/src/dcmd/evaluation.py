"""Prediction metrics and data partitioning for benchmark runs."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ValidationError


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int
    fp: int
    fn: int
    tn: int

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.fn + self.tn


@dataclass(frozen=True)
class MetricReport:
    """Accuracy plus, for binary problems, precision/recall/F1.

    A metric whose denominator is zero is reported as None rather than 0.
    """

    accuracy: float
    precision: float | None = None
    recall: float | None = None
    f1: float | None = None
    confusion: ConfusionCounts | None = None


def accuracy(predictions, truths) -> float:
    preds = list(predictions)
    trues = list(truths)
    if len(preds) != len(trues):
        raise ValidationError("predictions and truths differ in length")
    if not preds:
        raise ValidationError("nothing to score")
    correct = sum(p == t for p, t in zip(preds, trues))
    return correct / len(preds)


def binary_metrics(predictions, truths, positive) -> MetricReport:
    preds = list(predictions)
    trues = list(truths)
    if len(set(trues)) > 2:
        raise ValidationError("binary metrics need at most two truth labels")
    acc = accuracy(preds, trues)
    tp = sum(p == positive and t == positive for p, t in zip(preds, trues))
    fp = sum(p == positive and t != positive for p, t in zip(preds, trues))
    fn = sum(p != positive and t == positive for p, t in zip(preds, trues))
    tn = len(preds) - tp - fp - fn
    precision = tp / (tp + fp) if tp + fp else None
    recall = tp / (tp + fn) if tp + fn else None
    if precision is None or recall is None or precision + recall == 0:
        f1 = None
    else:
        f1 = 2 * precision * recall / (precision + recall)
    return MetricReport(
        accuracy=acc,
        precision=precision,
        recall=recall,
        f1=f1,
        confusion=ConfusionCounts(tp, fp, fn, tn),
    )


def split(labels, fraction: float, stratified: bool = True, seed: int = 0):
    """Deterministic train/test index split.

    Stratified mode rounds fraction * class size per class, so proportions
    are preserved within one sample. Returns sorted (train, test) arrays.
    """
    if not 0 < fraction < 1:
        raise ValidationError("fraction must be strictly between 0 and 1")
    labels = np.asarray(labels)
    n = labels.size
    if n == 0:
        raise ValidationError("nothing to split")
    rng = np.random.default_rng(seed)

    if not stratified:
        order = rng.permutation(n)
        n_train = int(round(fraction * n))
        if n_train == 0 or n_train == n:
            raise ValidationError("split leaves one side empty")
        return np.sort(order[:n_train]), np.sort(order[n_train:])

    train, test = [], []
    for label in sorted(np.unique(labels).tolist()):
        members = np.flatnonzero(labels == label)
        order = members[rng.permutation(members.size)]
        n_train = int(round(fraction * members.size))
        if n_train == 0 or n_train == members.size:
            raise ValidationError(f"class {label!r} is too small to stratify")
        train.append(order[:n_train])
        test.append(order[n_train:])
    return np.sort(np.concatenate(train)), np.sort(np.concatenate(test))


def kfold(labels, folds: int, stratified: bool = True, seed: int = 0, groups=None) -> np.ndarray:
    """Assign each sample a fold id in 0..folds-1.

    Fold sizes differ by at most one; stratification deals each class's
    shuffled members onto consecutive folds. When `groups` is given, whole
    groups are kept inside a single fold (the fold currently holding the
    fewest samples, for balance).
    """
    labels = np.asarray(labels)
    n = labels.size
    if folds < 2:
        raise ValidationError("need at least two folds")
    if folds > n:
        raise ValidationError("more folds than samples")
    rng = np.random.default_rng(seed)
    assignment = np.full(n, -1, dtype=int)

    if groups is not None:
        groups = np.asarray(groups)
        if groups.shape != labels.shape:
            raise ValidationError("groups must align with labels")
        unique = sorted(np.unique(groups).tolist())
        order = rng.permutation(len(unique))
        load = np.zeros(folds, dtype=int)
        for gi in order:
            members = np.flatnonzero(groups == unique[gi])
            fold = int(load.argmin())
            assignment[members] = fold
            load[fold] += members.size
        return assignment

    if not stratified:
        order = rng.permutation(n)
        assignment[order] = np.arange(n) % folds
        return assignment

    cursor = 0
    for label in sorted(np.unique(labels).tolist()):
        members = np.flatnonzero(labels == label)
        order = members[rng.permutation(members.size)]
        for idx in order:
            assignment[idx] = cursor % folds
            cursor += 1
    return assignment
