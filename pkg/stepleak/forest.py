"""
Random forest of CART trees (Gini impurity), stored as flat node arrays.
"""
import logging
from dataclasses import dataclass

import numpy as np

from .config_learners import ForestSpec
from .errors import ModelError

logger = logging.getLogger(__name__)

LEAF = -1


@dataclass
class DecisionTree:
    """
    Nodes in parallel arrays. Internal nodes send x[feature] <= threshold left.
    `vote` of a leaf is its majority class: 1.0, 0.0, or 0.5 on an even split.
    """

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    vote: np.ndarray

    @property
    def n_nodes(self) -> int:
        return int(self.feature.size)

    @property
    def depth(self) -> int:
        depths = np.zeros(self.n_nodes, dtype=int)
        for i in range(self.n_nodes):
            if self.feature[i] != LEAF:
                depths[self.left[i]] = depths[self.right[i]] = depths[i] + 1
        return int(depths.max())

    def apply(self, X: np.ndarray) -> np.ndarray:
        """Leaf index reached by each row."""
        node = np.zeros(X.shape[0], dtype=np.int64)
        rows = np.arange(X.shape[0])
        active = self.feature[node] != LEAF
        while active.any():
            r, n = rows[active], node[active]
            go_left = X[r, self.feature[n]] <= self.threshold[n]
            node[r] = np.where(go_left, self.left[n], self.right[n])
            active = self.feature[node] != LEAF
        return node

    def predict_vote(self, X: np.ndarray) -> np.ndarray:
        return self.vote[self.apply(X)]

    def to_dict(self) -> dict:
        return {
            "feature": self.feature.tolist(),
            "threshold": self.threshold.tolist(),
            "left": self.left.tolist(),
            "right": self.right.tolist(),
            "vote": self.vote.tolist(),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "DecisionTree":
        return cls(
            feature=np.asarray(data["feature"], dtype=np.int64),
            threshold=np.asarray(data["threshold"], dtype=float),
            left=np.asarray(data["left"], dtype=np.int64),
            right=np.asarray(data["right"], dtype=np.int64),
            vote=np.asarray(data["vote"], dtype=float),
        )


def _majority(y: np.ndarray) -> float:
    positives = 2 * int(y.sum())
    if positives > y.size:
        return 1.0
    if positives < y.size:
        return 0.0
    return 0.5


def _best_split(X: np.ndarray, y: np.ndarray, features: np.ndarray) -> tuple[int, float] | None:
    """Feature and midpoint threshold with the lowest weighted Gini impurity, or None."""
    n = y.size
    values = X[:, features]
    order = np.argsort(values, axis=0, kind="stable")
    sorted_x = np.take_along_axis(values, order, axis=0)
    sorted_y = y[order]

    pos_left = np.cumsum(sorted_y, axis=0)[:-1]
    n_left = np.arange(1, n, dtype=float)[:, None]
    n_right = n - n_left
    pos_right = y.sum() - pos_left
    # n * weighted Gini = 2 pL (nL - pL) / nL + 2 pR (nR - pR) / nR
    impurity = (
        2 * pos_left * (n_left - pos_left) / n_left
        + 2 * pos_right * (n_right - pos_right) / n_right
    )
    valid = sorted_x[:-1] < sorted_x[1:]
    if not valid.any():
        return None
    impurity = np.where(valid, impurity, np.inf)

    col, row = np.unravel_index(np.argmin(impurity.T), impurity.T.shape)
    lo, hi = sorted_x[row, col], sorted_x[row + 1, col]
    threshold = lo + (hi - lo) / 2
    if not lo <= threshold < hi:
        threshold = lo
    return int(features[col]), float(threshold)


def grow_tree(
    X: np.ndarray,
    y: np.ndarray,
    rng: np.random.Generator,
    max_features: int,
    max_depth: int | None = None,
    min_samples_split: int = 2,
) -> DecisionTree:
    """Grow one CART tree depth-first; `max_features` features are tried at every node."""
    feature, threshold, left, right, vote = [], [], [], [], []

    def new_node(idx):
        feature.append(LEAF)
        threshold.append(0.0)
        left.append(LEAF)
        right.append(LEAF)
        vote.append(_majority(y[idx]))
        return len(feature) - 1

    d = X.shape[1]
    root_idx = np.arange(y.size)
    stack = [(new_node(root_idx), root_idx, 0)]
    while stack:
        node, idx, depth = stack.pop()
        labels = y[idx]
        pure = labels.min() == labels.max()
        if pure or idx.size < min_samples_split or (max_depth is not None and depth >= max_depth):
            continue

        candidates = rng.permutation(d)
        split = _best_split(X[idx], labels, candidates[:max_features])
        if split is None and max_features < d:
            # every sampled feature was constant here; fall back to the rest
            split = _best_split(X[idx], labels, candidates[max_features:])
        if split is None:
            continue

        f, t = split
        goes_left = X[idx, f] <= t
        left_idx, right_idx = idx[goes_left], idx[~goes_left]
        feature[node], threshold[node] = f, t
        left[node] = new_node(left_idx)
        right[node] = new_node(right_idx)
        stack.append((right[node], right_idx, depth + 1))
        stack.append((left[node], left_idx, depth + 1))

    return DecisionTree(
        feature=np.asarray(feature, dtype=np.int64),
        threshold=np.asarray(threshold, dtype=float),
        left=np.asarray(left, dtype=np.int64),
        right=np.asarray(right, dtype=np.int64),
        vote=np.asarray(vote, dtype=float),
    )


def resolve_max_features(setting, n_features: int) -> int:
    if setting == "sqrt":
        return max(1, int(np.sqrt(n_features)))
    if setting == "all":
        return n_features
    if isinstance(setting, float) and setting <= 1.0:
        return max(1, int(setting * n_features))
    return max(1, min(n_features, int(setting)))


class RandomForest:
    """Bagged CART trees; the score of a sample is the mean of the tree votes."""

    sample_ndim = 1

    def __init__(self, spec: ForestSpec, n_features: int):
        self.spec = spec
        self.n_features = int(n_features)
        self.trees: list[DecisionTree] = []
        self.history: list[float] = []

    def train(self, X: np.ndarray, y: np.ndarray) -> "RandomForest":
        spec = self.spec
        y = np.asarray(y, dtype=np.int64)
        n = y.size
        max_features = resolve_max_features(spec.max_features, self.n_features)
        # One independent stream per tree, so the forest does not depend on build order
        streams = np.random.SeedSequence(spec.seed).spawn(spec.n_trees)
        self.trees = []
        for stream in streams:
            rng = np.random.default_rng(stream)
            idx = rng.integers(0, n, size=n) if spec.bootstrap else np.arange(n)
            self.trees.append(
                grow_tree(X[idx], y[idx], rng, max_features, spec.max_depth, spec.min_samples_split)
            )
        logger.debug(
            f"Grew {len(self.trees)} trees (max_features={max_features}, "
            f"mean nodes {np.mean([t.n_nodes for t in self.trees]):.1f})"
        )
        return self

    def check_input(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        if X.ndim != 2 or X.shape[1] != self.n_features:
            raise ModelError(
                f"RandomForest expects samples of {self.n_features} features, "
                f"got array of shape {X.shape}"
            )
        return X

    def predict_score(self, X: np.ndarray) -> np.ndarray:
        X = self.check_input(X)
        if not self.trees:
            raise ModelError("RandomForest used before train()")
        votes = np.zeros(X.shape[0])
        for tree in self.trees:
            votes += tree.predict_vote(X)
        return votes / len(self.trees)

    def describe(self) -> dict:
        return {
            "n_features": self.n_features,
            "n_trees": len(self.trees),
            "mean_depth": float(np.mean([t.depth for t in self.trees])) if self.trees else 0.0,
        }
