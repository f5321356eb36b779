"""
Attribute inference: predict gender, age class or education class from step features.

A task crosses feature configs with classifiers; every (config, classifier, fold) cell is
an independent job. Users are the unit of splitting: all daily vectors and all actions
of a user land on the same side of a split.
"""
import logging
from dataclasses import dataclass, field, replace
from typing import Mapping, Sequence

import numpy as np
import pandas as pd
from joblib import Parallel, delayed

from .config_features import FeatureConfig
from .config_learners import AutoencoderSpec, LogRegSpec, ModelSpec
from .core import ATTRIBUTES, Cohort
from .errors import FeatureError, SplitError
from .evaluation import TaskResult, auc, cross_validate, fold_summary
from .features import FeatureVector, extract_features, feature_matrix, matrix_length
from .learners import fit, predict_score
from .processors import create_feature_processor

logger = logging.getLogger(__name__)

AGGREGATIONS = ("mean", "majority")


@dataclass(frozen=True)
class TaskSpec:
    attribute: str
    features: tuple[FeatureConfig, ...] = (FeatureConfig(stats=("max", "median")),)
    classifiers: tuple[ModelSpec, ...] = (LogRegSpec(),)
    # Holdout training share per class; used when cv_folds < 2
    fraction: float = 0.8
    cv_folds: int = 5
    seed: int = 0
    # How action scores become a user score (actions scope only)
    aggregation: tuple[str, ...] = AGGREGATIONS
    variance_threshold: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "features", tuple(self.features))
        object.__setattr__(self, "classifiers", tuple(self.classifiers))
        object.__setattr__(self, "aggregation", tuple(self.aggregation))
        problems = self.problems()
        if problems:
            raise ValueError("; ".join(problems))

    def problems(self) -> list[str]:
        problems = []
        if self.attribute not in ATTRIBUTES:
            problems.append(f"attribute: must be one of {list(ATTRIBUTES)}, got {self.attribute!r}")
        if not self.features:
            problems.append("features: at least one feature config is required")
        if not self.classifiers:
            problems.append("classifiers: at least one classifier is required")
        for i, spec in enumerate(self.classifiers):
            if not spec.supervised:
                problems.append(f"classifiers[{i}].type: {spec.type} is not a classifier")
            elif spec.type == "siamese_dense":
                problems.append(f"classifiers[{i}].type: siamese networks score pairs, not users")
        if not 0 < self.fraction < 1:
            problems.append(f"fraction: must be in (0, 1), got {self.fraction}")
        if self.cv_folds < 0 or self.cv_folds == 1:
            problems.append(f"cv_folds: must be 0 (holdout) or >= 2, got {self.cv_folds}")
        unknown = sorted(set(self.aggregation) - set(AGGREGATIONS))
        if unknown or not self.aggregation:
            problems.append(f"aggregation: must be a non-empty subset of {list(AGGREGATIONS)}")
        if self.variance_threshold is not None and self.variance_threshold < 0:
            problems.append(f"variance_threshold: must be >= 0, got {self.variance_threshold}")
        return problems


@dataclass(frozen=True)
class SplitPlan:
    """Fold of every user; each fold in `test_folds` is held out once."""

    attribute: str
    assignment: Mapping[str, int]
    test_folds: tuple[int, ...]

    @property
    def n_folds(self) -> int:
        return len(self.test_folds)

    def test_users(self, fold: int) -> list[str]:
        return sorted(u for u, f in self.assignment.items() if f == fold)

    def train_users(self, fold: int) -> list[str]:
        return sorted(u for u, f in self.assignment.items() if f != fold)


# ---------------------------------------------------------------------------
# Splits
# ---------------------------------------------------------------------------

def _stratified_holdout(
    user_ids: Sequence[str], y: np.ndarray, fraction: float, seed: int
) -> dict[str, int]:
    """Fold 0 = test, fold 1 = train; round(fraction * n) training users per class."""
    rng = np.random.default_rng(seed)
    assignment = {}
    for label in (0, 1):
        members = [u for u, c in zip(user_ids, y) if c == label]
        if len(members) < 2:
            raise SplitError(f"class {label} has {len(members)} users; at least 2 are needed")
        n_train = min(max(int(round(fraction * len(members))), 1), len(members) - 1)
        order = rng.permutation(len(members))
        for rank, i in enumerate(order):
            assignment[members[i]] = 1 if rank < n_train else 0
    return assignment


def make_split(cohort: Cohort, attribute: str, fraction: float = 0.8, seed: int = 0) -> SplitPlan:
    """Stratified per-user holdout split of the users that take part in `attribute`'s task."""
    user_ids, y = cohort.labels(attribute)
    assignment = _stratified_holdout(user_ids, y, fraction, seed)
    return SplitPlan(attribute=attribute, assignment=assignment, test_folds=(0,))


def make_cv_split(cohort: Cohort, attribute: str, k: int = 5, seed: int = 0) -> SplitPlan:
    user_ids, y = cohort.labels(attribute)
    for label in (0, 1):
        if int(np.sum(y == label)) < 2:
            raise SplitError(f"class {label} of {attribute} has fewer than 2 users")
    folds = cross_validate(y, k, seed=seed)
    assignment = {user_ids[i]: f for f, members in enumerate(folds) for i in members}
    return SplitPlan(attribute=attribute, assignment=assignment, test_folds=tuple(range(k)))


# ---------------------------------------------------------------------------
# Aggregation
# ---------------------------------------------------------------------------

def aggregate_actions(scores: Sequence[float], method: str = "mean") -> float:
    """
    User score from per-action scores.

    The least sure half (smallest |s - 0.5|) is discarded; ceil(n / 2) scores are kept,
    ties in sureness keeping the earlier action. `mean` averages the kept scores,
    `majority` returns the fraction of kept scores above 0.5, a score of exactly 0.5
    counting as half a vote.
    """
    values = np.asarray(scores, dtype=float)
    if values.size == 0:
        raise FeatureError("no action scores to aggregate")
    if method not in AGGREGATIONS:
        raise ValueError(f"Unknown aggregation: {method}")
    keep = -(-values.size // 2)
    order = np.argsort(-np.abs(values - 0.5), kind="stable")
    kept = values[order[:keep]]
    if method == "mean":
        return float(kept.mean())
    votes = np.where(kept > 0.5, 1.0, np.where(kept == 0.5, 0.5, 0.0))
    return float(votes.mean())


def _aggregation_names(config: FeatureConfig, methods: Sequence[str]) -> list[str]:
    if config.scope == "week":
        return ["user"]
    if config.scope == "day":
        return ["day_mean"]
    return list(methods)


def _user_scores(
    config: FeatureConfig, owners: Sequence[str], row_scores: np.ndarray, methods: Sequence[str]
) -> dict[str, dict[str, float]]:
    """Per aggregation method, the score of every user with at least one row."""
    by_user: dict[str, list[float]] = {}
    for owner, s in zip(owners, row_scores):
        by_user.setdefault(owner, []).append(float(s))
    if config.scope == "week":
        return {"user": {u: s[0] for u, s in by_user.items()}}
    if config.scope == "day":
        return {"day_mean": {u: float(np.mean(s)) for u, s in by_user.items()}}
    return {m: {u: aggregate_actions(s, m) for u, s in by_user.items()} for m in methods}


# ---------------------------------------------------------------------------
# Task execution
# ---------------------------------------------------------------------------

@dataclass
class FoldOutcome:
    config_index: int
    classifier_index: int
    fold: int
    n_train: int = 0
    n_test: int = 0
    # aggregation -> {user_id: score}
    scores: dict[str, dict[str, float]] = field(default_factory=dict)
    skipped: str | None = None


def _cell_seed(task_seed: int, spec_seed: int, fold: int) -> int:
    return int(np.random.SeedSequence([task_seed, spec_seed, fold]).generate_state(1)[0])


def _rows(
    vectors: Mapping[str, list[FeatureVector]], users: Sequence[str], length: int | None
) -> tuple[np.ndarray, list[str]]:
    chosen = [v for u in users for v in vectors[u]]
    return feature_matrix(chosen, length), [v.owner for v in chosen]


def run_fold(
    task: TaskSpec,
    config_index: int,
    classifier_index: int,
    fold: int,
    vectors: Mapping[str, list[FeatureVector]],
    labels: Mapping[str, int],
    plan: SplitPlan,
) -> FoldOutcome:
    """Fit preprocessing and classifier on the training users of `fold`, score its test users."""
    config = task.features[config_index]
    spec = task.classifiers[classifier_index]
    outcome = FoldOutcome(config_index, classifier_index, fold)

    train_users = [u for u in plan.train_users(fold) if vectors.get(u)]
    test_users = [u for u in plan.test_users(fold) if vectors.get(u)]
    outcome.n_train, outcome.n_test = len(train_users), len(test_users)
    length = matrix_length(config)
    X_train, train_owners = _rows(vectors, train_users, length)
    X_test, test_owners = _rows(vectors, test_users, length)
    y_train = np.array([labels[u] for u in train_owners], dtype=int)
    test_classes = {labels[u] for u in test_users}

    if len(set(y_train.tolist())) < 2:
        outcome.skipped = "single-class training fold"
        return outcome
    if len(test_classes) < 2:
        outcome.skipped = "single-class test fold"
        return outcome

    seed = _cell_seed(task.seed, spec.seed, fold)
    pipeline = create_feature_processor(
        config.normalization,
        variance_threshold=task.variance_threshold,
        autoencoder=AutoencoderSpec(seed=seed) if config.autoencode else None,
    )
    X_train = pipeline.fit_forward(X_train)
    X_test = pipeline.forward(X_test)
    model = fit(replace(spec, seed=seed), X_train, y_train)
    outcome.scores = _user_scores(
        config, test_owners, predict_score(model, X_test), task.aggregation
    )
    return outcome


def extract_task_vectors(
    cohort: Cohort, config: FeatureConfig, user_ids: Sequence[str]
) -> dict[str, list[FeatureVector]]:
    max_steps = cohort.stats.max_steps
    return {u: extract_features(cohort.get(u), config, max_steps) for u in user_ids}


def _record_id(attribute: str, config: FeatureConfig, spec: ModelSpec, aggregation: str) -> str:
    return f"{attribute}-{config.label}-{spec.label}-{aggregation}"


def run_task(task: TaskSpec, cohort: Cohort, jobs: int = 1) -> TaskResult:
    """
    Evaluate every (feature config, classifier) cell of `task`.

    Returns one record per cell and aggregation with the per-fold test AUCs, their mean
    and standard deviation. Folds whose training or test users are all of one class are
    skipped and flagged.
    """
    user_ids, y = cohort.labels(task.attribute)
    labels = dict(zip(user_ids, y.tolist()))
    if task.cv_folds >= 2:
        plan = make_cv_split(cohort, task.attribute, task.cv_folds, task.seed)
    else:
        plan = make_split(cohort, task.attribute, task.fraction, task.seed)
    logger.info(
        f"Task {task.attribute}: {len(user_ids)} users, {len(task.features)} feature configs, "
        f"{len(task.classifiers)} classifiers, {plan.n_folds} folds"
    )

    result = TaskResult()
    vectors_by_config = []
    for config in task.features:
        vectors = extract_task_vectors(cohort, config, user_ids)
        for u in user_ids:
            if not vectors[u]:
                result.flags.append(f"{task.attribute}/{config.label}: user {u} has no actions")
                logger.warning(f"User {u} has no actions for {config.label}; skipped")
        vectors_by_config.append(vectors)

    jobs_list = [
        delayed(run_fold)(task, ci, mi, fold, vectors_by_config[ci], labels, plan)
        for ci in range(len(task.features))
        for mi in range(len(task.classifiers))
        for fold in plan.test_folds
    ]
    outcomes = Parallel(n_jobs=jobs)(jobs_list)

    grouped: dict[tuple[int, int], list[FoldOutcome]] = {}
    for outcome in outcomes:
        grouped.setdefault((outcome.config_index, outcome.classifier_index), []).append(outcome)

    for (ci, mi), cell in sorted(grouped.items()):
        cell.sort(key=lambda o: o.fold)
        config, spec = task.features[ci], task.classifiers[mi]
        for o in cell:
            if o.skipped:
                message = f"{task.attribute}/{config.label}/{spec.label}: fold {o.fold} {o.skipped}"
                result.flags.append(message)
                logger.warning(f"Skipped {message}")
        for aggregation in _aggregation_names(config, task.aggregation):
            _collect(result, task, config, spec, aggregation, cell, labels)
    logger.info(f"✓ Task {task.attribute}: {len(result.records)} result records")
    return result


def _collect(result, task, config, spec, aggregation, cell, labels) -> None:
    record_id = _record_id(task.attribute, config, spec, aggregation)
    fold_aucs, folds, n_train, n_test, skipped, rows = [], [], [], [], [], []
    for o in cell:
        if o.skipped:
            skipped.append({"fold": o.fold, "reason": o.skipped})
            continue
        scores = o.scores[aggregation]
        users = sorted(scores)
        fold_labels = [labels[u] for u in users]
        fold_scores = [scores[u] for u in users]
        fold_aucs.append(auc(fold_scores, fold_labels))
        folds.append(o.fold)
        n_train.append(o.n_train)
        n_test.append(o.n_test)
        rows.extend((u, o.fold, s, c) for u, s, c in zip(users, fold_scores, fold_labels))

    mean_auc, std_auc = fold_summary(fold_aucs)
    result.records.append(
        {
            "id": record_id,
            "task": "infer",
            "attribute": task.attribute,
            "config": config.label,
            "feature_config": config.to_dict(),
            "classifier": spec.label,
            "classifier_spec": spec.to_dict(),
            "aggregation": aggregation,
            "folds": folds,
            "fold_aucs": fold_aucs,
            "mean_auc": mean_auc,
            "std_auc": std_auc,
            "n_train": n_train,
            "n_test": n_test,
            "skipped_folds": skipped,
        }
    )
    result.scores[record_id] = pd.DataFrame(rows, columns=["user_id", "fold", "score", "label"])


# ---------------------------------------------------------------------------
# Transfer
# ---------------------------------------------------------------------------

def transfer_attack(
    cohort: Cohort,
    source: str,
    target: str,
    config: FeatureConfig,
    spec: ModelSpec | None = None,
    fraction: float = 0.8,
    seed: int = 0,
) -> dict:
    """
    Train a classifier on `source` labels and score the held-out users against `target`
    labels (e.g. an age model read as an education predictor).

    Only users with both labels take part; the split is stratified on the target labels.
    """
    spec = spec or LogRegSpec()
    for name in (source, target):
        if name not in ATTRIBUTES:
            raise ValueError(f"Unknown attribute: {name}")
    pool = [r for r in cohort if r.label(source) is not None and r.label(target) is not None]
    user_ids = [r.user_id for r in pool]
    y_target = np.array([r.label(target) for r in pool], dtype=int)
    y_source = {r.user_id: r.label(source) for r in pool}
    y_target_map = dict(zip(user_ids, y_target.tolist()))
    assignment = _stratified_holdout(user_ids, y_target, fraction, seed)

    vectors = extract_task_vectors(cohort, config, user_ids)
    train = [u for u in user_ids if assignment[u] == 1 and vectors[u]]
    test = [u for u in user_ids if assignment[u] == 0 and vectors[u]]
    length = matrix_length(config)
    X_train, train_owners = _rows(vectors, train, length)
    X_test, test_owners = _rows(vectors, test, length)
    y_train = np.array([y_source[u] for u in train_owners], dtype=int)
    if len(set(y_train.tolist())) < 2:
        raise SplitError(f"training users all share one {source} class")

    pipeline = create_feature_processor(config.normalization)
    model = fit(
        replace(spec, seed=_cell_seed(seed, spec.seed, 0)), pipeline.fit_forward(X_train), y_train
    )
    per_user = _user_scores(
        config, test_owners, predict_score(model, pipeline.forward(X_test)), ("mean",)
    )
    scores = next(iter(per_user.values()))
    users = sorted(scores)
    s = [scores[u] for u in users]
    source_labels = [y_source[u] for u in users]
    record = {
        "id": f"transfer-{source}-{target}-{config.label}-{spec.label}",
        "task": "transfer",
        "source": source,
        "target": target,
        "config": config.label,
        "classifier": spec.label,
        "n_train": len(train),
        "n_test": len(users),
        "target_auc": auc(s, [y_target_map[u] for u in users]),
        "source_auc": auc(s, source_labels) if len(set(source_labels)) == 2 else None,
    }
    logger.info(
        f"✓ Transfer {source} -> {target}: target AUC {record['target_auc']:.3f} "
        f"on {len(users)} users"
    )
    return record
