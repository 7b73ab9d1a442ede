import numpy as np
import pytest
from sklearn.metrics import adjusted_rand_score, normalized_mutual_info_score

from factorssl.errors import ConfigurationError, UsageError
from factorssl.metrics import (
    accuracy_macro_f1,
    ari,
    confusion_counts,
    correlated_accuracy,
    kmeans,
    knn_classify,
    lloyd,
    nmi,
)

from oracles import knn_oracle


def test_confusion_and_perfect_scores():
    truth = [0, 1, 2, 1]
    conf = confusion_counts(truth, truth, 3)
    assert conf.sum() == 4
    acc, f1 = accuracy_macro_f1(conf)
    assert acc == 1.0 and f1 == 1.0


def test_accuracy_macro_f1_hand_case():
    conf = np.array([[1, 1], [1, 1]])
    acc, f1 = accuracy_macro_f1(conf)
    assert acc == pytest.approx(0.5)
    assert f1 == pytest.approx(0.5)


def test_never_predicted_class_pulls_macro_down():
    # class 2 never predicted: its F1 contributes 0
    conf = np.array([[2, 0, 0], [0, 2, 0], [1, 1, 0]])
    _, f1 = accuracy_macro_f1(conf)
    per_class0 = 2 * (2 / 3) * 1.0 / ((2 / 3) + 1.0)
    assert f1 == pytest.approx((per_class0 + per_class0 + 0.0) / 3)


def test_knn_duplicate_training_point():
    feats = np.tile([1.0, 1.0], (5, 1))
    labels = np.array([3, 3, 3, 3, 3])
    pred = knn_classify(feats, labels, np.array([[1.0, 1.0]]), k=5)
    assert pred[0] == 3


def test_knn_k1_is_nearest_neighbor():
    train = np.array([[0.0], [10.0]])
    labels = np.array([0, 1])
    pred = knn_classify(train, labels, np.array([[2.0], [9.0]]), k=1)
    np.testing.assert_array_equal(pred, [0, 1])


def test_knn_matches_bruteforce_oracle():
    rng = np.random.default_rng(0)
    train = rng.standard_normal((60, 4))
    labels = rng.integers(0, 4, 60)
    test = rng.standard_normal((25, 4))
    np.testing.assert_array_equal(
        knn_classify(train, labels, test, k=5), knn_oracle(train, labels, test, 5)
    )


def test_knn_tie_broken_by_summed_distance():
    # two votes each; class 1 is closer in total
    train = np.array([[1.0, 0.0], [1.1, 0.0], [-2.0, 0.0], [-2.1, 0.0]])
    labels = np.array([1, 1, 0, 0])
    pred = knn_classify(train, labels, np.array([[0.0, 0.0]]), k=4)
    assert pred[0] == 1


def test_knn_isometry_invariance():
    rng = np.random.default_rng(1)
    train = rng.standard_normal((40, 3))
    labels = rng.integers(0, 3, 40)
    test = rng.standard_normal((15, 3))
    q, _ = np.linalg.qr(rng.standard_normal((3, 3)))
    shift = rng.standard_normal(3)
    base = knn_classify(train, labels, test, k=5)
    moved = knn_classify(train @ q + shift, labels, test @ q + shift, k=5)
    np.testing.assert_array_equal(base, moved)


def test_knn_requires_enough_training_points():
    with pytest.raises(ConfigurationError):
        knn_classify(np.zeros((3, 2)), np.zeros(3, dtype=int), np.zeros((1, 2)), k=5)


def test_kmeans_k_equals_n_zero_inertia():
    rng = np.random.default_rng(2)
    feats = rng.standard_normal((6, 2))
    out = kmeans(feats, k=6, seed=0)
    assert out.inertia == pytest.approx(0.0, abs=1e-20)
    assert len(set(out.labels.tolist())) == 6


def test_kmeans_separated_blobs_recovered():
    rng = np.random.default_rng(3)
    a = rng.standard_normal((30, 2)) * 0.1 + [0, 0]
    b = rng.standard_normal((30, 2)) * 0.1 + [20, 20]
    feats = np.concatenate([a, b])
    out = kmeans(feats, k=2, seed=1)
    first, second = out.labels[:30], out.labels[30:]
    assert len(set(first.tolist())) == 1 and len(set(second.tolist())) == 1
    assert first[0] != second[0]


def test_kmeans_deterministic_and_needs_enough_points():
    rng = np.random.default_rng(4)
    feats = rng.standard_normal((20, 3))
    a = kmeans(feats, 4, seed=9)
    b = kmeans(feats, 4, seed=9)
    np.testing.assert_array_equal(a.labels, b.labels)
    assert a.inertia == b.inertia
    with pytest.raises(UsageError):
        kmeans(feats[:2], 3, seed=0)


def test_lloyd_inertia_non_increasing():
    rng = np.random.default_rng(5)
    feats = rng.standard_normal((50, 2))
    centers = feats[rng.choice(50, 4, replace=False)].copy()
    trace = []
    lloyd(feats, centers, max_iter=50, trace=trace)
    assert all(b <= a + 1e-9 for a, b in zip(trace, trace[1:]))


def test_ari_identity_and_chance():
    truth = [0, 0, 1, 1, 2, 2]
    assert ari(truth, truth) == pytest.approx(1.0)
    assert ari(truth, [0, 0, 0, 0, 0, 0]) == pytest.approx(0.0)


def test_ari_four_point_hand_case():
    assert ari([0, 0, 1, 1], [0, 1, 0, 1]) == pytest.approx(-0.5)


def test_ari_nmi_match_sklearn_on_random_partitions():
    rng = np.random.default_rng(6)
    for _ in range(10):
        a = rng.integers(0, 4, 50)
        b = rng.integers(0, 3, 50)
        assert ari(a, b) == pytest.approx(adjusted_rand_score(a, b), abs=1e-12)
        assert nmi(a, b) == pytest.approx(
            normalized_mutual_info_score(a, b, average_method="geometric"), abs=1e-12
        )


def test_nmi_identity_and_relabel_invariance():
    truth = [0, 0, 1, 1, 2, 2]
    assert nmi(truth, truth) == pytest.approx(1.0)
    assert nmi(truth, [2, 2, 0, 0, 1, 1]) == pytest.approx(1.0)
    rng = np.random.default_rng(7)
    a = rng.integers(0, 4, 40)
    b = rng.integers(0, 4, 40)
    relabeled = (b + 2) % 4
    assert nmi(a, b) == pytest.approx(nmi(a, relabeled), abs=1e-12)
    assert ari(a, b) == pytest.approx(ari(a, relabeled), abs=1e-12)


def test_nmi_independent_labels_near_zero():
    rng = np.random.default_rng(8)
    a = rng.integers(0, 4, 10000)
    b = rng.integers(0, 4, 10000)
    assert nmi(a, b) < 0.05


def test_correlated_accuracy_cases():
    assert correlated_accuracy([0, 1, 2], [0, 1, 2], 4) == pytest.approx(1.0)
    assert correlated_accuracy([0], [3], 4) == pytest.approx(0.0)
    assert correlated_accuracy([1], [2], 4) == pytest.approx(0.5)
    assert correlated_accuracy([1, 0], [2, 3], 4) == pytest.approx(0.25)


def test_correlated_accuracy_one_iff_exact():
    rng = np.random.default_rng(9)
    truth = rng.integers(0, 5, 30)
    assert correlated_accuracy(truth, truth, 5) == pytest.approx(1.0)
    wrong = truth.copy()
    wrong[0] = (wrong[0] + 1) % 5
    assert correlated_accuracy(truth, wrong, 5) < 1.0


def test_correlated_accuracy_needs_two_classes():
    with pytest.raises(ConfigurationError):
        correlated_accuracy([0], [0], 1)
