import numpy as np
import pytest
from sklearn.metrics import roc_auc_score

from stepleak.errors import SplitError
from stepleak.evaluation import (
    ScoredSample,
    auc,
    auc_from_samples,
    cross_validate,
    fold_summary,
    pca_project,
    roc_curve,
    write_roc_csv,
)


def pair_count_auc(scores, labels):
    pos = [s for s, c in zip(scores, labels) if c == 1]
    neg = [s for s, c in zip(scores, labels) if c == 0]
    total = sum(1.0 if p > n else 0.5 if p == n else 0.0 for p in pos for n in neg)
    return total / (len(pos) * len(neg))


def threshold_sweep_auc(scores, labels):
    """ROC area from an explicit sweep over every distinct threshold."""
    scores, labels = np.asarray(scores), np.asarray(labels)
    points = [(0.0, 0.0)]
    for t in np.unique(scores)[::-1]:
        predicted = scores >= t
        points.append(
            (
                np.sum(predicted & (labels == 0)) / np.sum(labels == 0),
                np.sum(predicted & (labels == 1)) / np.sum(labels == 1),
            )
        )
    area = 0.0
    for (x0, y0), (x1, y1) in zip(points, points[1:]):
        area += (x1 - x0) * (y0 + y1) / 2
    return area


def random_scored_set(rng):
    n = int(rng.integers(2, 201))
    labels = rng.integers(0, 2, size=n)
    labels[0], labels[1] = 0, 1
    # a coarse grid injects plenty of ties
    scores = np.round(rng.random(n), int(rng.integers(1, 4)))
    return scores, labels


# ---------------------------------------------------------------------------
# AUC
# ---------------------------------------------------------------------------

def test_auc_examples():
    assert auc([0.1, 0.2, 0.8, 0.9], [0, 0, 1, 1]) == 1.0
    assert auc([0.3] * 6, [0, 1, 0, 1, 1, 0]) == 0.5
    assert auc([0.9, 0.4, 0.5, 0.1], [1, 1, 0, 0]) == 0.75


def test_auc_from_samples():
    samples = [ScoredSample(s, c) for s, c in ((0.9, 1), (0.4, 1), (0.5, 0), (0.1, 0))]
    assert auc_from_samples(samples) == 0.75
    with pytest.raises(ValueError):
        ScoredSample(0.5, 2)


def test_auc_matches_oracles_on_random_sets():
    rng = np.random.default_rng(0)
    for _ in range(100):
        scores, labels = random_scored_set(rng)
        value = auc(scores, labels)
        assert value == pytest.approx(pair_count_auc(scores, labels), abs=1e-9)
        assert value == pytest.approx(threshold_sweep_auc(scores, labels), abs=1e-9)
        assert value == pytest.approx(roc_auc_score(labels, scores), abs=1e-9)
        assert roc_curve(scores, labels).auc == pytest.approx(value, abs=1e-12)


def test_auc_label_flip_and_monotone_transform():
    rng = np.random.default_rng(1)
    for _ in range(20):
        scores, labels = random_scored_set(rng)
        value = auc(scores, labels)
        assert auc(scores, 1 - labels) == pytest.approx(1 - value, abs=1e-12)
        assert auc(np.exp(3 * scores) - 7, labels) == pytest.approx(value, abs=1e-12)


@pytest.mark.parametrize(
    "scores,labels",
    [([0.1, 0.2], [1, 1]), ([0.1, 0.2], [0, 0]), ([0.1, np.nan], [0, 1]), ([0.1], [0, 1])],
)
def test_auc_rejects_degenerate_input(scores, labels):
    with pytest.raises(ValueError):
        auc(scores, labels)


# ---------------------------------------------------------------------------
# ROC
# ---------------------------------------------------------------------------

def test_roc_two_samples():
    curve = roc_curve([0.8, 0.2], [1, 0])
    assert list(zip(curve.fpr, curve.tpr)) == [(0.0, 0.0), (0.0, 1.0), (1.0, 1.0)]
    assert curve.auc == 1.0


def test_roc_is_monotone_and_mirrors_on_flip():
    rng = np.random.default_rng(2)
    scores, labels = random_scored_set(rng)
    curve = roc_curve(scores, labels)
    assert np.all(np.diff(curve.fpr) >= 0)
    assert np.all(np.diff(curve.tpr) >= 0)
    assert (curve.fpr[-1], curve.tpr[-1]) == (1.0, 1.0)
    assert len(curve.fpr) == np.unique(scores).size + 1

    flipped = roc_curve(scores, 1 - labels)
    np.testing.assert_allclose(flipped.fpr, curve.tpr)
    np.testing.assert_allclose(flipped.tpr, curve.fpr)
    assert flipped.auc == pytest.approx(1 - curve.auc, abs=1e-12)


def test_write_roc_csv(tmp_path):
    path = tmp_path / "roc.csv"
    write_roc_csv(roc_curve([0.8, 0.2, 0.5], [1, 0, 1]), path)
    lines = path.read_text().splitlines()
    assert lines[0] == "fpr,tpr,threshold"
    assert len(lines) == 5


def test_fold_summary():
    assert fold_summary([]) == (None, None)
    mean, std = fold_summary([0.6, 0.8])
    assert mean == pytest.approx(0.7)
    assert std == pytest.approx(0.1)


# ---------------------------------------------------------------------------
# Cross-validation
# ---------------------------------------------------------------------------

def test_cross_validate_even_folds():
    folds = cross_validate([0, 1] * 5, 5)
    assert [f.size for f in folds] == [2] * 5
    assert sorted(np.concatenate(folds).tolist()) == list(range(10))


def test_cross_validate_is_stratified():
    labels = np.array([0] * 13 + [1] * 7)
    for fold in cross_validate(labels, 5, seed=3):
        assert int(np.sum(labels[fold] == 0)) in (2, 3)
        assert int(np.sum(labels[fold] == 1)) in (1, 2)


def test_cross_validate_keeps_groups_together():
    rng = np.random.default_rng(4)
    users = np.repeat(np.arange(30), 7)
    labels = np.repeat(rng.integers(0, 2, size=30), 7)
    folds = cross_validate(labels, 5, groups=users, seed=1)
    fold_of = {}
    for f, members in enumerate(folds):
        for i in members:
            assert fold_of.setdefault(users[i], f) == f
    assert len(fold_of) == 30
    assert sum(f.size for f in folds) == users.size


def test_cross_validate_is_seeded():
    labels = np.tile([0, 1, 1], 10)
    a = cross_validate(labels, 4, seed=5)
    b = cross_validate(labels, 4, seed=5)
    assert all(np.array_equal(x, y) for x, y in zip(a, b))


def test_cross_validate_errors():
    with pytest.raises(SplitError):
        cross_validate([0, 1, 0], 1)
    with pytest.raises(SplitError, match="folds"):
        cross_validate([0, 1, 0, 1], 5)
    with pytest.raises(SplitError, match="mixes"):
        cross_validate([0, 1, 0, 1, 0, 1], 2, groups=["a", "a", "b", "b", "c", "c"])


# ---------------------------------------------------------------------------
# PCA
# ---------------------------------------------------------------------------

def test_pca_points_on_a_line():
    t = np.linspace(-2.0, 3.0, 11)
    projection = pca_project(np.column_stack([t, 2 * t + 1]))
    assert projection.explained_variance[1] < 1e-9
    assert np.var(projection.coords[:, 1]) < 1e-9


def test_pca_rank_one_components_stay_orthogonal():
    projection = pca_project(np.outer(np.arange(6.0), [1.0, 2.0]) + 3.0)
    first, second = projection.components
    assert abs(first @ second) < 1e-9
    np.testing.assert_allclose(first, np.array([1.0, 2.0]) / np.sqrt(5.0), atol=1e-12)
    assert projection.explained_variance[0] == pytest.approx(17.5)
    assert projection.explained_variance[1] < 1e-9


def test_pca_variance_ordering_and_oracle():
    rng = np.random.default_rng(6)
    X = rng.normal(size=(5, 3))
    projection = pca_project(X, k=2)
    variances = projection.coords.var(axis=0, ddof=1)
    assert variances[0] >= variances[1]

    eigenvalues = np.linalg.eigh(np.cov(X, rowvar=False))[0][::-1]
    np.testing.assert_allclose(projection.explained_variance, eigenvalues[:2], atol=1e-8)


def test_pca_sign_convention():
    rng = np.random.default_rng(7)
    projection = pca_project(rng.normal(size=(20, 4)))
    for component in projection.components:
        first = component[np.flatnonzero(np.abs(component) > 1e-12)[0]]
        assert first > 0
        assert np.linalg.norm(component) == pytest.approx(1.0)


def test_pca_errors():
    with pytest.raises(ValueError, match="zero-variance"):
        pca_project(np.ones((5, 3)))
    with pytest.raises(ValueError):
        pca_project(np.ones((2, 3)))
