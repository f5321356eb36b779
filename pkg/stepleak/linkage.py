"""
Linkability: decide whether two days of step data come from the same person.

Pairs are built from daily feature vectors: every within-user pair of distinct days is a
positive, and an equal number of random cross-user pairs (also on distinct days) are the
negatives. Three attacks score pairs: a plain distance (euclidean or cosine), a random
forest on the element-wise |left - right| vector, and a dense Siamese network.
"""
import logging
from dataclasses import dataclass, field, replace
from itertools import combinations
from typing import Any, Sequence

import numpy as np
import pandas as pd
from joblib import Parallel, delayed

from .config_features import FeatureConfig
from .config_learners import ForestSpec, ModelSpec, SiameseSpec
from .core import DAYS_PER_WEEK, Cohort
from .errors import LinkageError
from .evaluation import TaskResult, auc, cross_validate, fold_summary
from .features import extract_features, feature_matrix
from .learners import fit, predict_score
from .processors import VarianceFilter, create_feature_processor

logger = logging.getLogger(__name__)

METRICS = ("euclidean", "cosine")
DAY_PAIRS = tuple(combinations(range(DAYS_PER_WEEK), 2))

# Enumerate the whole negative pool instead of rejection sampling when it is this small
_ENUMERATE_LIMIT = 200_000


@dataclass(frozen=True)
class LinkPair:
    left_user: str
    left_day: int
    right_user: str
    right_day: int
    same_user: bool


@dataclass(frozen=True)
class PairSet:
    """
    Daily vectors of a cohort and the labelled pairs drawn from them.

    Row i of `vectors` belongs to `index[i]` = (user_id, day); `pairs[j]` holds two row
    numbers (smaller first) and `labels[j]` is 1 for a same-user pair.
    """

    vectors: np.ndarray
    index: tuple[tuple[str, int], ...]
    pairs: np.ndarray
    labels: np.ndarray
    config: FeatureConfig
    provenance: dict[str, Any] = field(default_factory=dict)

    def __len__(self) -> int:
        return int(self.labels.size)

    @property
    def n_positive(self) -> int:
        return int(self.labels.sum())

    @property
    def n_negative(self) -> int:
        return len(self) - self.n_positive

    def pair(self, j: int) -> LinkPair:
        (lu, ld), (ru, rd) = self.index[self.pairs[j, 0]], self.index[self.pairs[j, 1]]
        return LinkPair(lu, ld, ru, rd, bool(self.labels[j]))

    def sides(self, vectors: np.ndarray | None = None, subset: np.ndarray | None = None):
        """Left and right matrices of the pairs in `subset` (all pairs by default)."""
        vectors = self.vectors if vectors is None else vectors
        pairs = self.pairs if subset is None else self.pairs[subset]
        return vectors[pairs[:, 0]], vectors[pairs[:, 1]]


# ---------------------------------------------------------------------------
# Pair construction
# ---------------------------------------------------------------------------

def _negative_pool(n_users: int) -> np.ndarray:
    """Every unordered cross-user pair of distinct days, as (a, b) row numbers with a < b."""
    u, v = np.triu_indices(n_users, k=1)
    d1, d2 = np.meshgrid(np.arange(DAYS_PER_WEEK), np.arange(DAYS_PER_WEEK), indexing="ij")
    off_diagonal = d1 != d2
    d1, d2 = d1[off_diagonal], d2[off_diagonal]
    a = (u[:, None] * DAYS_PER_WEEK + d1[None, :]).ravel()
    b = (v[:, None] * DAYS_PER_WEEK + d2[None, :]).ravel()
    return np.column_stack([a, b])


def _sample_negatives(n_users: int, count: int, rng: np.random.Generator) -> np.ndarray:
    pool_size = DAYS_PER_WEEK * (DAYS_PER_WEEK - 1) * n_users * (n_users - 1) // 2
    if pool_size < count:
        raise LinkageError(
            f"only {pool_size} cross-user pairs available for {count} negatives"
        )
    if pool_size <= _ENUMERATE_LIMIT:
        pool = _negative_pool(n_users)
        chosen = np.sort(rng.choice(pool_size, size=count, replace=False))
        return pool[chosen]

    n_rows = n_users * DAYS_PER_WEEK
    seen: set[int] = set()
    out: list[tuple[int, int]] = []
    while len(out) < count:
        batch = 2 * (count - len(out))
        u = rng.integers(0, n_users, size=batch)
        v = rng.integers(0, n_users - 1, size=batch)
        v = v + (v >= u)
        d1 = rng.integers(0, DAYS_PER_WEEK, size=batch)
        d2 = rng.integers(0, DAYS_PER_WEEK - 1, size=batch)
        d2 = d2 + (d2 >= d1)
        a = u * DAYS_PER_WEEK + d1
        b = v * DAYS_PER_WEEK + d2
        lo, hi = np.minimum(a, b), np.maximum(a, b)
        for x, y in zip(lo.tolist(), hi.tolist()):
            key = x * n_rows + y
            if key not in seen:
                seen.add(key)
                out.append((x, y))
                if len(out) == count:
                    break
    return np.asarray(out, dtype=np.int64)


def build_pairs(
    cohort: Cohort, config: FeatureConfig, seed: int = 0, max_steps: int | None = None
) -> PairSet:
    """
    All C(7, 2) = 21 within-user day pairs of every user plus as many random cross-user pairs.

    Pairs are unordered (a symmetric duplicate never appears) and negatives also have
    distinct days. Raises LinkageError when there are fewer than 2 users.
    """
    if config.scope != "day":
        raise LinkageError(f"linkage pairs need day-scope features, got {config.scope}")
    records = list(cohort)
    n_users = len(records)
    max_steps = cohort.stats.max_steps if max_steps is None else max_steps

    positives = np.array(
        [
            (u * DAYS_PER_WEEK + d1, u * DAYS_PER_WEEK + d2)
            for u in range(n_users)
            for d1, d2 in DAY_PAIRS
        ],
        dtype=np.int64,
    ).reshape(-1, 2)
    if n_users < 2:
        raise LinkageError(
            f"{len(positives)} positive pairs but no cross-user pairs: "
            "linkage needs at least 2 users"
        )

    vectors = []
    for record in records:
        daily = extract_features(record, config, max_steps)
        if len(daily) != DAYS_PER_WEEK:
            raise LinkageError(f"user {record.user_id} has {len(daily)} daily vectors")
        vectors.extend(daily)

    rng = np.random.default_rng(seed)
    negatives = _sample_negatives(n_users, len(positives), rng)
    pairs = np.vstack([positives, negatives])
    labels = np.concatenate(
        [np.ones(len(positives), dtype=np.int64), np.zeros(len(negatives), dtype=np.int64)]
    )
    logger.info(
        f"✓ Built {len(positives)} positive and {len(negatives)} negative pairs "
        f"from {n_users} users ({config.label})"
    )
    return PairSet(
        vectors=feature_matrix(vectors),
        index=tuple((v.owner, v.day) for v in vectors),
        pairs=pairs,
        labels=labels,
        config=config,
        provenance={"seed": seed, "n_users": n_users, "config": config.to_dict()},
    )


# ---------------------------------------------------------------------------
# Preprocessing
# ---------------------------------------------------------------------------

def _train_rows(pairs: PairSet, subset: np.ndarray | None) -> np.ndarray:
    chosen = pairs.pairs if subset is None else pairs.pairs[subset]
    return np.unique(chosen.ravel())


def variance_filter(
    pairs: PairSet, subset: np.ndarray | None = None, threshold: float = 1e-3
) -> np.ndarray:
    """Mask of features whose variance over the distinct vectors of `subset` is >= threshold."""
    return VarianceFilter(threshold).fit(pairs.vectors[_train_rows(pairs, subset)]).mask


def prepare_vectors(
    pairs: PairSet,
    train: np.ndarray | None = None,
    normalization: str | None = None,
    variance_threshold: float | None = 1e-3,
) -> np.ndarray:
    """
    Normalize and variance-filter every vector, fitted on the vectors of the training pairs.
    """
    normalization = pairs.config.normalization if normalization is None else normalization
    pipeline = create_feature_processor(normalization, variance_threshold=variance_threshold)
    pipeline.fit(pairs.vectors[_train_rows(pairs, train)])
    return pipeline.forward(pairs.vectors)


# ---------------------------------------------------------------------------
# Attacks
# ---------------------------------------------------------------------------

@dataclass
class AttackResult:
    attack: str
    auc: float
    scores: np.ndarray
    labels: np.ndarray
    subset: np.ndarray


def pair_distances(left: np.ndarray, right: np.ndarray, metric: str = "euclidean") -> np.ndarray:
    """Row-wise distance; the cosine distance involving a zero vector is 1."""
    if left.shape != right.shape:
        raise LinkageError(f"pair sides differ in shape: {left.shape} vs {right.shape}")
    if metric == "euclidean":
        return np.sqrt(np.sum((left - right) ** 2, axis=1))
    if metric == "cosine":
        norms = np.linalg.norm(left, axis=1) * np.linalg.norm(right, axis=1)
        dots = np.sum(left * right, axis=1)
        similarity = np.divide(dots, norms, out=np.zeros_like(dots), where=norms > 0)
        return 1.0 - similarity
    raise LinkageError(f"Unknown metric: {metric}")


def _subset(pairs: PairSet, subset) -> np.ndarray:
    return np.arange(len(pairs)) if subset is None else np.asarray(subset)


def similarity_attack(
    pairs: PairSet,
    metric: str = "euclidean",
    subset: np.ndarray | None = None,
    vectors: np.ndarray | None = None,
) -> AttackResult:
    """Rank pairs by negated distance: the AUC over every possible threshold at once."""
    subset = _subset(pairs, subset)
    left, right = pairs.sides(vectors, subset)
    scores = -pair_distances(left, right, metric)
    labels = pairs.labels[subset]
    return AttackResult(metric, auc(scores, labels), scores, labels, subset)


def _supervised(pairs, train, test, spec, vectors, make_features) -> AttackResult:
    train, test = np.asarray(train), np.asarray(test)
    if vectors is None:
        vectors = prepare_vectors(pairs, train)
    y_train = pairs.labels[train]
    if np.unique(y_train).size < 2:
        raise LinkageError("training pairs contain a single class")
    model = fit(spec, make_features(*pairs.sides(vectors, train)), y_train)
    scores = predict_score(model, make_features(*pairs.sides(vectors, test)))
    labels = pairs.labels[test]
    return AttackResult(spec.label, auc(scores, labels), scores, labels, test)


def rf_distance_attack(
    pairs: PairSet,
    train: np.ndarray,
    test: np.ndarray,
    spec: ForestSpec | None = None,
    vectors: np.ndarray | None = None,
) -> AttackResult:
    """Random forest on the element-wise L1 distance vector |left - right| of each pair."""
    return _supervised(
        pairs, train, test, spec or ForestSpec(), vectors, lambda a, b: np.abs(a - b)
    )


def siamese_attack(
    pairs: PairSet,
    train: np.ndarray,
    test: np.ndarray,
    spec: ModelSpec | None = None,
    vectors: np.ndarray | None = None,
) -> AttackResult:
    """Dense Siamese network trained on the pair labels."""
    return _supervised(
        pairs, train, test, spec or SiameseSpec(), vectors, lambda a, b: np.stack([a, b], axis=1)
    )


# ---------------------------------------------------------------------------
# Task
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class LinkTask:
    features: tuple[FeatureConfig, ...] = (
        FeatureConfig(scope="day", method="distributional", window=720, bucket=2),
    )
    metrics: tuple[str, ...] = METRICS
    models: tuple[ModelSpec, ...] = (ForestSpec(), SiameseSpec())
    cv_folds: int = 5
    seed: int = 0
    variance_threshold: float | None = 1e-3

    def __post_init__(self):
        object.__setattr__(self, "features", tuple(self.features))
        object.__setattr__(self, "metrics", tuple(self.metrics))
        object.__setattr__(self, "models", tuple(self.models))
        problems = self.problems()
        if problems:
            raise ValueError("; ".join(problems))

    def problems(self) -> list[str]:
        problems = []
        if not self.features:
            problems.append("features: at least one feature config is required")
        for i, config in enumerate(self.features):
            if config.scope != "day":
                problems.append(f"features[{i}].scope: linkage needs day scope, got {config.scope}")
        for i, metric in enumerate(self.metrics):
            if metric not in METRICS:
                problems.append(f"metrics[{i}]: must be one of {list(METRICS)}, got {metric!r}")
        for i, spec in enumerate(self.models):
            if not spec.type.startswith("siamese") and spec.type != "random_forest":
                problems.append(
                    f"models[{i}].type: linkage models are random_forest or siamese_*, "
                    f"got {spec.type}"
                )
        if not self.metrics and not self.models:
            problems.append("metrics: at least one metric or model is required")
        if self.cv_folds < 2:
            problems.append(f"cv_folds: must be >= 2, got {self.cv_folds}")
        if self.variance_threshold is not None and self.variance_threshold < 0:
            problems.append(f"variance_threshold: must be >= 0, got {self.variance_threshold}")
        return problems

    @property
    def attacks(self) -> list[str | ModelSpec]:
        return [*self.metrics, *self.models]


def _attack_label(attack: str | ModelSpec) -> str:
    return attack if isinstance(attack, str) else attack.label


def run_link_fold(
    task: LinkTask, pairs: PairSet, attack: str | ModelSpec, fold: int, folds: Sequence[np.ndarray]
) -> AttackResult:
    test = folds[fold]
    train = np.sort(np.concatenate([f for i, f in enumerate(folds) if i != fold]))
    vectors = prepare_vectors(pairs, train, variance_threshold=task.variance_threshold)
    if isinstance(attack, str):
        return similarity_attack(pairs, attack, test, vectors)
    seed = int(np.random.SeedSequence([task.seed, attack.seed, fold]).generate_state(1)[0])
    attack = replace(attack, seed=seed)
    if attack.type == "random_forest":
        return rf_distance_attack(pairs, train, test, attack, vectors)
    return siamese_attack(pairs, train, test, attack, vectors)


def run_link(task: LinkTask, cohort: Cohort, jobs: int = 1) -> TaskResult:
    """
    Every (feature config, attack) cell under pair-level stratified k-fold cross-validation.

    Pairs of one user can fall into both training and test folds.
    """
    result = TaskResult()
    for config in task.features:
        pairs = build_pairs(cohort, config, task.seed)
        folds = cross_validate(pairs.labels, task.cv_folds, seed=task.seed)
        outcomes = Parallel(n_jobs=jobs)(
            delayed(run_link_fold)(task, pairs, attack, fold, folds)
            for attack in task.attacks
            for fold in range(task.cv_folds)
        )
        for a, attack in enumerate(task.attacks):
            cell = outcomes[a * task.cv_folds:(a + 1) * task.cv_folds]
            label = _attack_label(attack)
            record_id = f"link-{config.label}-{label}"
            fold_aucs = [o.auc for o in cell]
            mean_auc, std_auc = fold_summary(fold_aucs)
            result.records.append(
                {
                    "id": record_id,
                    "task": "link",
                    "attribute": "identity",
                    "config": config.label,
                    "feature_config": config.to_dict(),
                    "classifier": label,
                    "classifier_spec": None if isinstance(attack, str) else attack.to_dict(),
                    "aggregation": "pair",
                    "folds": list(range(task.cv_folds)),
                    "fold_aucs": fold_aucs,
                    "mean_auc": mean_auc,
                    "std_auc": std_auc,
                    "n_train": [len(pairs) - f.size for f in folds],
                    "n_test": [int(f.size) for f in folds],
                    "n_positive": pairs.n_positive,
                    "n_negative": pairs.n_negative,
                    "skipped_folds": [],
                }
            )
            result.scores[record_id] = _pair_scores(pairs, cell)
            logger.info(f"✓ {record_id}: mean AUC {mean_auc:.3f} ± {std_auc:.3f}")
    return result


def _pair_scores(pairs: PairSet, cell: Sequence[AttackResult]) -> pd.DataFrame:
    rows = []
    for fold, outcome in enumerate(cell):
        for j, score, label in zip(outcome.subset, outcome.scores, outcome.labels):
            (lu, ld), (ru, rd) = pairs.index[pairs.pairs[j, 0]], pairs.index[pairs.pairs[j, 1]]
            rows.append((int(j), lu, ld, ru, rd, fold, float(score), int(label)))
    return pd.DataFrame(
        rows,
        columns=[
            "pair", "left_user", "left_day", "right_user", "right_day", "fold", "score", "label"
        ],
    )
