"""Downstream evaluation: classification, KNN, clustering, and agreement scores."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, InputError, UsageError


@dataclass
class ClusterAssignment:
    labels: np.ndarray
    k: int
    inertia: float


def confusion_counts(truth, predicted, n_classes) -> np.ndarray:
    """Count matrix [n_classes, n_classes], rows = truth."""
    truth = np.asarray(truth, dtype=np.int64)
    predicted = np.asarray(predicted, dtype=np.int64)
    if truth.shape != predicted.shape:
        raise InputError("truth and predictions have different lengths")
    if truth.min(initial=0) < 0 or truth.max(initial=0) >= n_classes:
        raise InputError("labels outside [0, %d)" % n_classes)
    if predicted.min(initial=0) < 0 or predicted.max(initial=0) >= n_classes:
        raise InputError("predictions outside [0, %d)" % n_classes)
    counts = np.zeros((n_classes, n_classes), dtype=np.int64)
    np.add.at(counts, (truth, predicted), 1)
    return counts


def accuracy_macro_f1(confusion):
    """(accuracy, macro F1); a class with zero support or zero predictions
    contributes F1 = 0."""
    confusion = np.asarray(confusion, dtype=np.float64)
    total = confusion.sum()
    if total <= 0:
        raise UsageError("empty confusion matrix")
    accuracy = np.trace(confusion) / total
    f1s = []
    for c in range(confusion.shape[0]):
        tp = confusion[c, c]
        support = confusion[c, :].sum()
        predicted = confusion[:, c].sum()
        if support == 0 or predicted == 0 or tp == 0:
            f1s.append(0.0)
            continue
        precision = tp / predicted
        recall = tp / support
        f1s.append(2 * precision * recall / (precision + recall))
    return float(accuracy), float(np.mean(f1s))


def knn_classify(train_feats, train_labels, test_feats, k=5):
    """Majority vote of the k nearest training points (Euclidean).

    Ties are broken by the smallest summed distance among the tied classes,
    then by the smallest class index.
    """
    train_feats = np.asarray(train_feats, dtype=np.float64)
    test_feats = np.asarray(test_feats, dtype=np.float64)
    train_labels = np.asarray(train_labels, dtype=np.int64)
    if train_feats.shape[0] < k:
        raise ConfigurationError(
            "KNN needs at least k=%d training points, got %d" % (k, train_feats.shape[0])
        )
    d2 = (
        (test_feats**2).sum(axis=1)[:, None]
        + (train_feats**2).sum(axis=1)[None, :]
        - 2.0 * test_feats @ train_feats.T
    )
    d2 = np.maximum(d2, 0.0)
    predictions = np.empty(test_feats.shape[0], dtype=np.int64)
    for i in range(test_feats.shape[0]):
        order = np.argsort(d2[i], kind="stable")[:k]
        votes = {}
        sums = {}
        for idx in order:
            lab = int(train_labels[idx])
            votes[lab] = votes.get(lab, 0) + 1
            sums[lab] = sums.get(lab, 0.0) + float(np.sqrt(d2[i, idx]))
        best = max(votes.values())
        tied = [lab for lab, v in votes.items() if v == best]
        tied.sort(key=lambda lab: (sums[lab], lab))
        predictions[i] = tied[0]
    return predictions


def _kmeans_pp_init(feats, k, rng):
    n = feats.shape[0]
    centers = np.empty((k, feats.shape[1]), dtype=np.float64)
    first = int(rng.integers(n))
    centers[0] = feats[first]
    closest = ((feats - centers[0]) ** 2).sum(axis=1)
    for j in range(1, k):
        total = closest.sum()
        if total <= 0:
            idx = int(rng.integers(n))
        else:
            idx = int(rng.choice(n, p=closest / total))
        centers[j] = feats[idx]
        closest = np.minimum(closest, ((feats - centers[j]) ** 2).sum(axis=1))
    return centers


def lloyd(feats, centers, max_iter, trace=None):
    """Lloyd iterations from given centers; optionally records the
    assignment inertia after every step in `trace`."""
    k = centers.shape[0]
    labels = None
    for _ in range(max_iter):
        d2 = ((feats[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
        new_labels = d2.argmin(axis=1)
        if trace is not None:
            trace.append(float(d2[np.arange(len(feats)), new_labels].sum()))
        for j in range(k):
            members = new_labels == j
            if members.any():
                centers[j] = feats[members].mean(axis=0)
            else:
                # reseed an empty cluster at the point farthest from its center
                nearest = d2[np.arange(len(feats)), new_labels]
                far = int(nearest.argmax())
                centers[j] = feats[far]
                new_labels[far] = j
        if labels is not None and np.array_equal(labels, new_labels):
            break
        labels = new_labels
    d2 = ((feats[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
    labels = d2.argmin(axis=1)
    inertia = float(d2[np.arange(len(feats)), labels].sum())
    return labels, inertia


def kmeans(feats, k, seed, max_iter=300, restarts=10) -> ClusterAssignment:
    """Lloyd's algorithm with k-means++ seeding, best of `restarts` by inertia."""
    feats = np.asarray(feats, dtype=np.float64)
    if feats.shape[0] < k:
        raise UsageError("k-means needs n >= k, got n=%d k=%d" % (feats.shape[0], k))
    rng = np.random.default_rng(seed)
    best = None
    for r in range(restarts):
        centers = _kmeans_pp_init(feats, k, rng)
        labels, inertia = lloyd(feats, centers, max_iter)
        if best is None or inertia < best[0]:
            best = (inertia, labels)
    return ClusterAssignment(labels=best[1], k=k, inertia=best[0])


def _comb2(x):
    return x * (x - 1) / 2.0


def ari(truth, clusters) -> float:
    """Adjusted Rand index from the pair-counting contingency table."""
    truth = np.asarray(truth, dtype=np.int64)
    clusters = np.asarray(clusters, dtype=np.int64)
    if truth.shape != clusters.shape:
        raise InputError("partitions have different lengths")
    t_ids = np.unique(truth)
    c_ids = np.unique(clusters)
    table = np.zeros((len(t_ids), len(c_ids)))
    for ti, t in enumerate(t_ids):
        for ci, c in enumerate(c_ids):
            table[ti, ci] = np.sum((truth == t) & (clusters == c))
    sum_ij = _comb2(table).sum()
    sum_a = _comb2(table.sum(axis=1)).sum()
    sum_b = _comb2(table.sum(axis=0)).sum()
    n_pairs = _comb2(len(truth))
    expected = sum_a * sum_b / n_pairs if n_pairs > 0 else 0.0
    denom = 0.5 * (sum_a + sum_b) - expected
    if denom == 0:
        return 1.0 if np.array_equal(np.unique(truth, return_inverse=True)[1],
                                     np.unique(clusters, return_inverse=True)[1]) else 0.0
    return float((sum_ij - expected) / denom)


def nmi(truth, clusters) -> float:
    """Mutual information normalized by the geometric mean of entropies; 0/0 -> 0."""
    truth = np.asarray(truth, dtype=np.int64)
    clusters = np.asarray(clusters, dtype=np.int64)
    if truth.shape != clusters.shape:
        raise InputError("partitions have different lengths")
    n = len(truth)
    t_ids = np.unique(truth)
    c_ids = np.unique(clusters)
    joint = np.zeros((len(t_ids), len(c_ids)))
    for ti, t in enumerate(t_ids):
        for ci, c in enumerate(c_ids):
            joint[ti, ci] = np.sum((truth == t) & (clusters == c)) / n
    pt = joint.sum(axis=1)
    pc = joint.sum(axis=0)
    mi = 0.0
    for ti in range(len(t_ids)):
        for ci in range(len(c_ids)):
            if joint[ti, ci] > 0:
                mi += joint[ti, ci] * np.log(joint[ti, ci] / (pt[ti] * pc[ci]))
    h_t = -np.sum(pt[pt > 0] * np.log(pt[pt > 0]))
    h_c = -np.sum(pc[pc > 0] * np.log(pc[pc > 0]))
    denom = np.sqrt(h_t * h_c)
    if denom == 0:
        return 0.0
    return float(max(mi, 0.0) / denom)


def correlated_accuracy(truth, predicted, n_classes) -> float:
    """Accuracy discounted linearly by ordinal class distance.

    Each sample contributes 1 - |y - y_hat| / max(y, C - y - 1), where y is
    the true label; the normalizer is that label's worst possible distance.
    """
    if n_classes < 2:
        raise ConfigurationError("correlated accuracy needs at least 2 classes")
    truth = np.asarray(truth, dtype=np.int64)
    predicted = np.asarray(predicted, dtype=np.int64)
    if truth.shape != predicted.shape:
        raise InputError("truth and predictions have different lengths")
    if truth.min(initial=0) < 0 or truth.max(initial=0) >= n_classes:
        raise InputError("labels outside [0, %d)" % n_classes)
    max_dist = np.maximum(truth, n_classes - truth - 1).astype(np.float64)
    return float(np.mean(1.0 - np.abs(truth - predicted) / max_dist))
