"""
Metrics and analysis helpers: ROC / AUC, stratified fold assignment, PCA projection.
"""
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Sequence

import numpy as np
import pandas as pd
from scipy.integrate import trapezoid
from scipy.stats import rankdata

from .errors import SplitError

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class ScoredSample:
    score: float
    label: int

    def __post_init__(self):
        if not np.isfinite(self.score):
            raise ValueError(f"score must be finite, got {self.score}")
        if self.label not in (0, 1):
            raise ValueError(f"label must be 0 or 1, got {self.label}")


@dataclass(frozen=True)
class RocCurve:
    """ROC points from (0, 0) to (1, 1); thresholds[i] is the score cut giving point i."""

    fpr: np.ndarray
    tpr: np.ndarray
    thresholds: np.ndarray
    auc: float


def _check_scored(scores, labels) -> tuple[np.ndarray, np.ndarray]:
    scores = np.asarray(scores, dtype=float)
    labels = np.asarray(labels)
    if scores.shape != labels.shape or scores.ndim != 1:
        raise ValueError(f"scores {scores.shape} and labels {labels.shape} must be equal 1-d")
    if not np.all(np.isfinite(scores)):
        raise ValueError("scores must be finite")
    if not np.isin(labels, (0, 1)).all():
        raise ValueError("labels must be 0 or 1")
    n_pos = int(labels.sum())
    if n_pos == 0 or n_pos == labels.size:
        raise ValueError("AUC needs at least one positive and one negative sample")
    return scores, labels.astype(int)


# ---------------------------------------------------------------------------
# ROC / AUC
# ---------------------------------------------------------------------------

def auc(scores: Sequence[float], labels: Sequence[int]) -> float:
    """
    P(score of a random positive > score of a random negative), ties counting one half.

    Computed from midranks (Mann-Whitney U), O(n log n).
    """
    scores, labels = _check_scored(scores, labels)
    ranks = rankdata(scores)
    n_pos = int(labels.sum())
    n_neg = labels.size - n_pos
    u = ranks[labels == 1].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def auc_from_samples(samples: Sequence[ScoredSample]) -> float:
    return auc([s.score for s in samples], [s.label for s in samples])


def roc_curve(scores: Sequence[float], labels: Sequence[int]) -> RocCurve:
    """One point per distinct score threshold (descending), starting at (0, 0)."""
    scores, labels = _check_scored(scores, labels)
    order = np.argsort(-scores, kind="stable")
    sorted_scores = scores[order]
    sorted_labels = labels[order]

    # last index of every block of equal scores
    ends = np.flatnonzero(np.diff(sorted_scores) != 0)
    ends = np.append(ends, sorted_scores.size - 1)
    tp = np.cumsum(sorted_labels)[ends]
    fp = (ends + 1) - tp

    tpr = np.concatenate(([0.0], tp / tp[-1]))
    fpr = np.concatenate(([0.0], fp / fp[-1]))
    thresholds = np.concatenate(([np.inf], sorted_scores[ends]))
    return RocCurve(fpr=fpr, tpr=tpr, thresholds=thresholds, auc=float(trapezoid(tpr, fpr)))


def write_roc_csv(curve: RocCurve, path: str | Path) -> None:
    pd.DataFrame({"fpr": curve.fpr, "tpr": curve.tpr, "threshold": curve.thresholds}).to_csv(
        path, index=False
    )


def fold_summary(fold_aucs: Sequence[float]) -> tuple[float | None, float | None]:
    """Mean and population standard deviation of the per-fold AUCs (None when empty)."""
    if not fold_aucs:
        return None, None
    values = np.asarray(fold_aucs, dtype=float)
    return float(values.mean()), float(values.std())


# ---------------------------------------------------------------------------
# Cross-validation
# ---------------------------------------------------------------------------

def cross_validate(
    labels: Sequence[int],
    k: int,
    groups: Sequence[Any] | None = None,
    seed: int = 0,
) -> list[np.ndarray]:
    """
    Stratified k-fold assignment.

    Units (items, or groups of items when `groups` is given) of each class are shuffled and
    dealt round-robin; the dealing position carries over from one class to the next, so fold
    sizes differ by at most one unit overall and within every class.

    Args:
        labels: class of every item; items of one group must share a class
        k: number of folds (>= 2)
        groups: optional group id per item (e.g. user id); a group never straddles folds
        seed: shuffling seed

    Returns:
        k sorted arrays of item indices (the test part of each fold)
    """
    labels = np.asarray(labels)
    if k < 2:
        raise SplitError(f"cross-validation needs k >= 2, got {k}")

    if groups is None:
        unit_of_item = np.arange(labels.size)
    else:
        groups = np.asarray(groups)
        if groups.shape != labels.shape:
            raise SplitError("groups and labels must have the same length")
        _, unit_of_item = np.unique(groups, return_inverse=True)
    n_units = int(unit_of_item.max()) + 1 if labels.size else 0
    if n_units < k:
        raise SplitError(f"cannot make {k} folds from {n_units} units")

    unit_labels = np.full(n_units, -1, dtype=np.int64)
    for unit, label in zip(unit_of_item, labels):
        if unit_labels[unit] not in (-1, label):
            raise SplitError(f"group {unit} mixes classes")
        unit_labels[unit] = label

    rng = np.random.default_rng(seed)
    unit_fold = np.empty(n_units, dtype=np.int64)
    offset = 0
    for label in np.unique(unit_labels):
        members = rng.permutation(np.flatnonzero(unit_labels == label))
        unit_fold[members] = (offset + np.arange(members.size)) % k
        offset = (offset + members.size) % k

    item_fold = unit_fold[unit_of_item]
    return [np.flatnonzero(item_fold == f) for f in range(k)]


# ---------------------------------------------------------------------------
# PCA
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Projection:
    coords: np.ndarray
    components: np.ndarray
    explained_variance: np.ndarray
    mean: np.ndarray = field(repr=False)


def pca_project(
    vectors: np.ndarray,
    k: int = 2,
    seed: int = 0,
    max_iter: int = 10000,
    tol: float = 1e-14,
) -> Projection:
    """
    Project mean-centred vectors onto the top-k principal axes.

    Axes come from power iteration on the covariance (applied as X^T (X v), so the d x d
    matrix is never formed), orthogonalized against the axes already found. Each axis is
    flipped so that its first non-negligible loading is positive. Variances use n - 1.
    """
    X = np.asarray(vectors, dtype=float)
    if X.ndim != 2 or X.shape[0] < k + 1:
        raise ValueError(f"PCA with k={k} needs at least {k + 1} vectors, got shape {X.shape}")
    if k > X.shape[1]:
        raise ValueError(f"cannot extract {k} components from {X.shape[1]} dimensions")
    mean = X.mean(axis=0)
    Xc = X - mean
    n = X.shape[0]
    if not np.any(Xc):
        raise ValueError("PCA of zero-variance data is undefined")

    rng = np.random.default_rng(seed)
    components: list[np.ndarray] = []
    variances: list[float] = []
    # total variance times (n - 1)
    scale = float(np.sum(Xc * Xc))

    def orthogonalize(v):
        # two Gram-Schmidt passes
        for _ in range(2):
            for c in components:
                v = v - (c @ v) * c
        return v

    def fresh_axis():
        v = orthogonalize(rng.standard_normal(X.shape[1]))
        return v / np.linalg.norm(v)

    for _ in range(k):
        v = fresh_axis()
        for _ in range(max_iter):
            w = orthogonalize(Xc.T @ (Xc @ v))
            norm = np.linalg.norm(w)
            if norm <= 1e-10 * scale:
                # no variance left outside the axes already found
                v = fresh_axis()
                break
            w /= norm
            converged = np.linalg.norm(w - v) < tol
            v = w
            if converged:
                break
        v = orthogonalize(v)
        v /= np.linalg.norm(v)
        significant = np.flatnonzero(np.abs(v) > 1e-12 * np.abs(v).max())
        if v[significant[0]] < 0:
            v = -v
        components.append(v)
        projected = Xc @ v
        variances.append(float(projected @ projected) / (n - 1))

    components_arr = np.vstack(components)
    return Projection(
        coords=Xc @ components_arr.T,
        components=components_arr,
        explained_variance=np.asarray(variances),
        mean=mean,
    )


def write_pca_csv(
    user_ids: Sequence[str], coords: np.ndarray, labels: Sequence[Any], path: str | Path
) -> None:
    frame = pd.DataFrame({"user_id": list(user_ids)})
    for i in range(coords.shape[1]):
        frame[f"c{i + 1}"] = coords[:, i]
    frame["label"] = list(labels)
    frame.to_csv(path, index=False)


# ---------------------------------------------------------------------------
# Task results
# ---------------------------------------------------------------------------

@dataclass
class TaskResult:
    """
    Output of an attack run.

    `records` are JSON-ready result dicts; `scores` maps a record id to the pooled test
    scores behind it (one row per scored unit with fold, score and label); `flags` lists
    skipped folds and users.
    """

    records: list[dict] = field(default_factory=list)
    scores: dict[str, pd.DataFrame] = field(default_factory=dict)
    flags: list[str] = field(default_factory=list)
