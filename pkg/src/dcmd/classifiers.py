"""Centroid and k-nearest-neighbor classification over sample distances.

The centroid classifier ("k-means" in the sense of classifying to the
nearest class mean, not Lloyd iteration) averages component weights per
class and OTU; averaging weights is valid because both L2 metrics depend on
samples only through their weights. The same drivers run over
relative-abundance vectors with Euclidean or Manhattan distances, so the
baselines differ from the distribution methods only in the metric.

All tie-breaks are deterministic and documented on the operations: class
ties go to the smallest class (in sorted label order), neighbor boundary
ties to the lower training index, neighbor label ties to the tied label
with the smallest summed distance.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass

import numpy as np

from .distances import METRICS, pairwise_abs, pairwise_quadform, pairwise_sq
from .errors import ValidationError

DISTRIBUTION_METRICS = ("l2pdf", "l2cdf")
ABUNDANCE_METRICS = ("euclidean", "manhattan")

DEFAULT_K_GRID = (1, 3, 5, 7, 9, 11, 15, 21)


@dataclass(frozen=True)
class DistributionDataset:
    """Per-OTU sample component weights plus the shared per-OTU matrices.

    weights[otu] has one row per sample, aligned with sample_ids. Gram
    matrices are only required when the CDF metric is used.
    """

    sample_ids: tuple
    otu_ids: tuple
    weights: dict
    p_matrices: dict
    grams: dict | None = None

    def __post_init__(self):
        n = len(self.sample_ids)
        if set(self.weights) != set(self.otu_ids) or set(self.p_matrices) != set(self.otu_ids):
            raise ValidationError("per-OTU entries do not match the OTU ids")
        for otu in self.otu_ids:
            w = np.asarray(self.weights[otu], dtype=float)
            if w.shape != (n, self.p_matrices[otu].values.shape[0]):
                raise ValidationError(f"weight block for {otu!r} has the wrong shape")

    def __len__(self) -> int:
        return len(self.sample_ids)

    def take(self, indices) -> "DistributionDataset":
        idx = np.asarray(indices)
        return DistributionDataset(
            sample_ids=tuple(self.sample_ids[i] for i in idx),
            otu_ids=self.otu_ids,
            weights={otu: self.weights[otu][idx] for otu in self.otu_ids},
            p_matrices=self.p_matrices,
            grams=self.grams,
        )


@dataclass(frozen=True)
class AbundanceDataset:
    """Relative-abundance rows per sample."""

    sample_ids: tuple
    otu_ids: tuple
    matrix: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=float)
        if m.shape != (len(self.sample_ids), len(self.otu_ids)):
            raise ValidationError("abundance matrix shape mismatch")
        object.__setattr__(self, "matrix", m)

    def __len__(self) -> int:
        return len(self.sample_ids)

    def take(self, indices) -> "AbundanceDataset":
        idx = np.asarray(indices)
        return AbundanceDataset(
            sample_ids=tuple(self.sample_ids[i] for i in idx),
            otu_ids=self.otu_ids,
            matrix=self.matrix[idx],
        )


@dataclass(frozen=True)
class Prediction:
    sample_id: object
    label: object
    class_distances: dict | None = None
    neighbors: tuple = ()


@dataclass(frozen=True)
class KMeansModel:
    metric: str
    classes: tuple
    means: dict | np.ndarray
    otu_ids: tuple
    p_matrices: dict | None = None
    grams: dict | None = None


@dataclass(frozen=True)
class KnnModel:
    metric: str
    k: int
    train: object
    labels: tuple
    cv_accuracies: dict | None = None


def _check_metric(metric: str, dataset) -> None:
    if metric not in METRICS:
        raise ValidationError(f"unknown metric {metric!r}")
    if metric in DISTRIBUTION_METRICS and not isinstance(dataset, DistributionDataset):
        raise ValidationError(f"{metric} needs distribution inputs")
    if metric in ABUNDANCE_METRICS and not isinstance(dataset, AbundanceDataset):
        raise ValidationError(f"{metric} needs abundance inputs")
    if metric == "l2cdf" and isinstance(dataset, DistributionDataset) and not dataset.grams:
        raise ValidationError("l2cdf needs gram matrices on the dataset")


def _distance_block(queries, refs_by_otu, metric: str, p_matrices, grams) -> np.ndarray:
    """Summed per-OTU distances between query samples and reference rows."""
    first = refs_by_otu[queries.otu_ids[0]]
    total = np.zeros((len(queries), first.shape[0]))
    for otu in queries.otu_ids:
        if metric == "l2pdf":
            p = p_matrices[otu].values
            total += pairwise_sq(queries.weights[otu] @ p, refs_by_otu[otu] @ p)
        else:
            total += pairwise_quadform(queries.weights[otu], refs_by_otu[otu], grams[otu])
    return total


def _abundance_block(query_matrix: np.ndarray, ref_matrix: np.ndarray, metric: str) -> np.ndarray:
    # squared Euclidean ranks identically to Euclidean and keeps per-OTU additivity
    if metric == "euclidean":
        return pairwise_sq(query_matrix, ref_matrix)
    return pairwise_abs(query_matrix, ref_matrix)


def _query_to_train(queries, model_train, metric: str) -> np.ndarray:
    if isinstance(queries, DistributionDataset):
        if queries.otu_ids != model_train.otu_ids:
            raise ValidationError("query and training OTU sets differ")
        return _distance_block(
            queries, model_train.weights, metric, model_train.p_matrices, model_train.grams
        )
    if queries.otu_ids != model_train.otu_ids:
        raise ValidationError("query and training OTU sets differ")
    return _abundance_block(queries.matrix, model_train.matrix, metric)


def kmeans_train(dataset, labels, metric: str) -> KMeansModel:
    """Per-class, per-OTU arithmetic means of the sample representations."""
    _check_metric(metric, dataset)
    labels = np.asarray(labels)
    if labels.size != len(dataset):
        raise ValidationError("labels do not align with the dataset")
    classes = sorted(np.unique(labels).tolist())
    members = [np.flatnonzero(labels == cls) for cls in classes]
    if any(m.size == 0 for m in members):
        raise ValidationError("every class needs at least one training sample")

    if isinstance(dataset, DistributionDataset):
        means = {
            otu: np.stack([dataset.weights[otu][m].mean(axis=0) for m in members])
            for otu in dataset.otu_ids
        }
        return KMeansModel(
            metric=metric,
            classes=tuple(classes),
            means=means,
            otu_ids=dataset.otu_ids,
            p_matrices=dataset.p_matrices,
            grams=dataset.grams,
        )
    means = np.stack([dataset.matrix[m].mean(axis=0) for m in members])
    return KMeansModel(metric=metric, classes=tuple(classes), means=means, otu_ids=dataset.otu_ids)


def kmeans_predict(model: KMeansModel, dataset) -> list[Prediction]:
    """Assign each sample to the class with the smallest total distance.

    Exact ties go to the class earliest in sorted label order.
    """
    _check_metric(model.metric, dataset)
    if dataset.otu_ids != model.otu_ids:
        raise ValidationError("dataset OTU set differs from the model")
    if isinstance(dataset, DistributionDataset):
        dist = _distance_block(dataset, model.means, model.metric, model.p_matrices, model.grams)
    else:
        dist = _abundance_block(dataset.matrix, model.means, model.metric)
    winners = dist.argmin(axis=1)
    return [
        Prediction(
            sample_id=sid,
            label=model.classes[winners[i]],
            class_distances={cls: float(dist[i, j]) for j, cls in enumerate(model.classes)},
        )
        for i, sid in enumerate(dataset.sample_ids)
    ]


def _knn_vote(order_row, labels, dists_row, k: int):
    """Modal label of the k nearest; ties by smallest summed distance, then label."""
    top = order_row[:k]
    votes = Counter(labels[i] for i in top)
    top_count = max(votes.values())
    tied = [lbl for lbl, cnt in votes.items() if cnt == top_count]
    if len(tied) == 1:
        return tied[0]
    summed = {
        lbl: sum(dists_row[i] for i in top if labels[i] == lbl) for lbl in tied
    }
    return min(tied, key=lambda lbl: (summed[lbl], _sort_key(lbl)))


def _sort_key(label):
    return (str(type(label)), label)


def _neighbor_order(dist: np.ndarray) -> np.ndarray:
    """Row-wise neighbor ranking; equal distances keep the lower train index."""
    return np.argsort(dist, axis=1, kind="stable")


def knn_train(
    dataset,
    labels,
    metric: str,
    k: int | str = "cv",
    k_grid=DEFAULT_K_GRID,
    folds: int = 10,
    seed: int = 0,
) -> KnnModel:
    """Store the training set; pick k by stratified cross-validation when asked.

    k="cv" evaluates every usable grid value with the given fold count and
    keeps the one with the highest mean fold accuracy; ties go to the
    smallest k. Pass an integer k to skip the search.
    """
    from .evaluation import kfold

    _check_metric(metric, dataset)
    labels = tuple(np.asarray(labels).tolist())
    n = len(dataset)
    if len(labels) != n:
        raise ValidationError("labels do not align with the dataset")
    if n == 0:
        raise ValidationError("empty training set")

    if k != "cv":
        k = int(k)
        if not 1 <= k <= n:
            raise ValidationError("k must be between 1 and the training size")
        return KnnModel(metric=metric, k=k, train=dataset, labels=labels)

    folds = min(folds, n)
    assignment = kfold(labels, folds=folds, stratified=True, seed=seed)
    fold_sizes = np.bincount(assignment, minlength=folds)
    max_usable = n - fold_sizes.max()
    grid = sorted({int(g) for g in k_grid if 1 <= int(g) <= max_usable})
    if not grid:
        raise ValidationError("no usable k in the grid for this training size")

    dist = _query_to_train(dataset, dataset, metric)
    label_arr = np.asarray(labels)
    fold_acc = {g: [] for g in grid}
    for fold in range(folds):
        held = np.flatnonzero(assignment == fold)
        rest = np.flatnonzero(assignment != fold)
        sub = dist[np.ix_(held, rest)]
        order = _neighbor_order(sub)
        hits = {g: 0 for g in grid}
        for r, sample in enumerate(held):
            for g in grid:
                vote = _knn_vote(order[r], label_arr[rest], sub[r], g)
                hits[g] += int(vote == labels[sample])
        for g in grid:
            fold_acc[g].append(hits[g] / held.size)
    accuracies = {g: float(np.mean(fold_acc[g])) for g in grid}
    best = max(accuracies.values())
    chosen = min(g for g in grid if accuracies[g] == best)
    return KnnModel(metric=metric, k=chosen, train=dataset, labels=labels, cv_accuracies=accuracies)


def knn_predict(model: KnnModel, dataset) -> list[Prediction]:
    """Vote among the k nearest training samples by summed per-OTU distance."""
    _check_metric(model.metric, dataset)
    dist = _query_to_train(dataset, model.train, model.metric)
    order = _neighbor_order(dist)
    label_arr = np.asarray(model.labels)
    out = []
    for i, sid in enumerate(dataset.sample_ids):
        label = _knn_vote(order[i], label_arr, dist[i], model.k)
        neighbors = tuple(
            (model.train.sample_ids[j], model.labels[j], float(dist[i, j]))
            for j in order[i, : model.k]
        )
        out.append(Prediction(sample_id=sid, label=label, neighbors=neighbors))
    return out
