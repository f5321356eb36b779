"""
Feature extraction from raw step sequences.

Three ways of turning a step sequence into a feature vector:
  - statistical:    per non-overlapping window, a subset of (sum, max, mean, median, std)
  - distributional: per window, a histogram of step counts over buckets {0}, [1, b], [b+1, 2b], ...
  - actions:        the week cut into walking episodes separated by >= 8 zero-step periods

The last window of a sequence may be shorter than `window`; it is used as-is.
"""
import json
import logging
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Sequence

import numpy as np
import pandas as pd

from .config_features import STATISTICS, FeatureConfig
from .core import DAYS_PER_WEEK, StepSeries, UserRecord
from .errors import FeatureError

logger = logging.getLogger(__name__)

ACTION_MODES = ("raw", "statistical_all", "distributional")

_STATISTIC_FUNCTIONS = {
    "sum": lambda w: w.sum(axis=1),
    "max": lambda w: w.max(axis=1),
    "mean": lambda w: w.mean(axis=1),
    "median": lambda w: np.median(w, axis=1),
    "std": lambda w: w.std(axis=1),
}


@dataclass(frozen=True)
class Action:
    """A walking episode: a contiguous run of the week with non-zero first and last period."""

    owner: str
    start_period: int
    payload: np.ndarray
    rest_periods: int = 8

    def __post_init__(self):
        payload = np.asarray(self.payload)
        if self.rest_periods < 1:
            raise FeatureError(f"rest_periods must be >= 1, got {self.rest_periods}")
        if payload.size < 1:
            raise FeatureError("action payload must not be empty")
        if payload[0] == 0 or payload[-1] == 0:
            raise FeatureError("action payload must start and end with a non-zero period")
        inside = np.flatnonzero(payload)
        longest_rest = int((np.diff(inside) - 1).max(initial=0))
        if longest_rest >= self.rest_periods:
            raise FeatureError(
                f"action payload contains {longest_rest} consecutive zero periods, "
                f"which is a rest (>= {self.rest_periods})"
            )

    @property
    def length(self) -> int:
        return int(len(self.payload))


@dataclass(frozen=True)
class FeatureVector:
    values: np.ndarray
    owner: str
    config: FeatureConfig
    day: int | None = None
    start_period: int | None = None
    length: int | None = None

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if not np.all(np.isfinite(values)):
            raise FeatureError(f"feature vector of {self.owner} has non-finite values")
        object.__setattr__(self, "values", values)


# ---------------------------------------------------------------------------
# Window methods
# ---------------------------------------------------------------------------

def _window_blocks(raw: np.ndarray, window: int) -> list[np.ndarray]:
    """Full windows as one (k, window) block, plus the short tail as a (1, r) block."""
    n_full = raw.size // window
    blocks = []
    if n_full:
        blocks.append(raw[: n_full * window].reshape(n_full, window))
    if raw.size % window:
        blocks.append(raw[n_full * window:].reshape(1, -1))
    return blocks


def extract_statistical(raw: Sequence[float], window: int, stats: Sequence[str]) -> np.ndarray:
    """
    Per window statistics in canonical order, concatenated window after window.

    Median of an even-length window is the mean of the two middle values; std is the
    population standard deviation.
    """
    values = np.asarray(raw, dtype=float)
    if values.size == 0:
        raise FeatureError("cannot extract features from an empty sequence")
    if window < 1:
        raise FeatureError(f"window must be >= 1, got {window}")
    unknown = [s for s in stats if s not in STATISTICS]
    if unknown:
        raise FeatureError(f"unknown statistic(s) {unknown}, expected any of {list(STATISTICS)}")
    chosen = [s for s in STATISTICS if s in set(stats)]
    if not chosen:
        raise FeatureError("at least one statistic is required")

    rows = [
        np.column_stack([_STATISTIC_FUNCTIONS[s](block) for s in chosen])
        for block in _window_blocks(values, window)
    ]
    return np.vstack(rows).ravel()


def n_buckets(max_steps: int, bucket: int) -> int:
    """Bucket {0} plus ceil(max_steps / bucket) buckets of width `bucket`."""
    return 1 + -(-int(max_steps) // int(bucket))


def extract_distributional(
    raw: Sequence[int], window: int, bucket: int, max_steps: int
) -> np.ndarray:
    """Per window counts of periods falling into each step bucket."""
    values = np.asarray(raw)
    if values.size == 0:
        raise FeatureError("cannot extract features from an empty sequence")
    if window < 1 or bucket < 1:
        raise FeatureError(f"window and bucket must be >= 1, got w={window}, b={bucket}")
    observed = int(values.max())
    if observed > max_steps:
        raise FeatureError(
            f"observed {observed} steps in one period but max_steps is {max_steps} "
            "(stale cohort statistics?)"
        )

    values = values.astype(np.int64)
    k = n_buckets(max_steps, bucket)
    buckets = np.where(values == 0, 0, (values - 1) // bucket + 1)
    window_ids = np.arange(values.size) // window
    n_windows = -(-values.size // window)
    counts = np.bincount(window_ids * k + buckets, minlength=n_windows * k)
    return counts.astype(float)


# ---------------------------------------------------------------------------
# Actions
# ---------------------------------------------------------------------------

def segment_actions(raw: Sequence[int], owner: str = "", rest_periods: int = 8) -> list[Action]:
    """
    Split a week at every run of >= `rest_periods` zero periods.

    Leading and trailing zeros of each piece are trimmed, so every action starts and ends
    with a non-zero period; shorter zero runs stay inside the action.
    """
    values = np.asarray(raw)
    nonzero = np.flatnonzero(values)
    if nonzero.size == 0:
        return []

    gaps = np.diff(nonzero) - 1
    breaks = np.flatnonzero(gaps >= rest_periods)
    starts = np.concatenate(([nonzero[0]], nonzero[breaks + 1]))
    ends = np.concatenate((nonzero[breaks], [nonzero[-1]]))
    return [
        Action(owner, int(s), values[s:e + 1], rest_periods)
        for s, e in zip(starts, ends)
    ]


def action_features(
    action: Action, mode: str, bucket: int = 2, max_steps: int | None = None
) -> np.ndarray:
    """[length, start_period] followed by the payload, its statistics or its distribution."""
    head = np.array([action.length, action.start_period], dtype=float)
    if mode == "raw":
        body = np.asarray(action.payload, dtype=float)
    elif mode == "statistical_all":
        body = extract_statistical(action.payload, action.length, STATISTICS)
    elif mode == "distributional":
        if max_steps is None:
            raise FeatureError("distributional action features need max_steps")
        body = extract_distributional(action.payload, action.length, bucket, max_steps)
    else:
        raise FeatureError(f"Unknown action mode: {mode}")
    return np.concatenate([head, body])


# ---------------------------------------------------------------------------
# Per-user extraction
# ---------------------------------------------------------------------------

def _segment_values(counts: np.ndarray, config: FeatureConfig, max_steps: int) -> np.ndarray:
    if config.method == "raw":
        return counts.astype(float)
    if config.method == "statistical":
        return extract_statistical(counts, config.window, config.stats)
    return extract_distributional(counts, config.window, config.bucket, max_steps)


def extract_features(
    record: UserRecord | StepSeries, config: FeatureConfig, max_steps: int
) -> list[FeatureVector]:
    """One vector for week scope, seven for day scope, one per action for actions scope."""
    series = record.series if isinstance(record, UserRecord) else record
    owner = series.user_id

    if config.scope == "week":
        return [
            FeatureVector(_segment_values(series.counts, config, max_steps), owner, config)
        ]
    if config.scope == "day":
        return [
            FeatureVector(_segment_values(series.day(d), config, max_steps), owner, config, day=d)
            for d in range(DAYS_PER_WEEK)
        ]

    mode = {"raw": "raw", "statistical": "statistical_all", "distributional": "distributional"}[
        config.method
    ]
    return [
        FeatureVector(
            action_features(action, mode, config.bucket, max_steps),
            owner,
            config,
            start_period=action.start_period,
            length=action.length,
        )
        for action in segment_actions(series.counts, owner, config.rest_periods)
    ]


def feature_matrix(vectors: Sequence[FeatureVector], length: int | None = None) -> np.ndarray:
    """
    Stack vectors into a matrix.

    Vectors of different lengths (raw actions) are zero-padded or truncated to `length`.
    """
    if not vectors:
        return np.zeros((0, length or 0))
    lengths = {v.values.size for v in vectors}
    if length is None:
        if len(lengths) > 1:
            raise FeatureError(f"vectors have different lengths {sorted(lengths)}; pass length=")
        return np.vstack([v.values for v in vectors])

    matrix = np.zeros((len(vectors), length))
    for i, v in enumerate(vectors):
        n = min(length, v.values.size)
        matrix[i, :n] = v.values[:n]
    return matrix


def matrix_length(config: FeatureConfig) -> int | None:
    """Fixed matrix width for configs whose vectors vary in length."""
    if config.scope == "actions" and config.method == "raw":
        return 2 + config.action_length
    return None


def normalize(
    vectors: Sequence[FeatureVector], mode: str, fitted_on: Sequence[FeatureVector] | None = None
) -> list[FeatureVector]:
    """
    Normalize a set of vectors.

    feature_wise divides each column by its maximum over `fitted_on` (the training vectors;
    defaults to `vectors` themselves), so test values may exceed 1.
    """
    from .processors import create_normalizer

    if not vectors:
        return []
    matrix = feature_matrix(vectors)
    normalizer = create_normalizer(mode)
    normalizer.fit(feature_matrix(fitted_on) if fitted_on is not None else matrix)
    normalized = normalizer.forward(matrix)
    return [replace(v, values=row) for v, row in zip(vectors, normalized)]


def write_feature_matrix(vectors: Sequence[FeatureVector], path: str | Path) -> None:
    """CSV `user_id,day,f0..fk` plus a JSON sidecar echoing the feature config."""
    path = Path(path)
    if not vectors:
        raise FeatureError("no feature vectors to write")
    config = vectors[0].config
    matrix = feature_matrix(vectors, matrix_length(config))
    frame = pd.DataFrame(matrix, columns=[f"f{i}" for i in range(matrix.shape[1])])
    frame.insert(0, "day", [v.day if v.day is not None else "" for v in vectors])
    frame.insert(0, "user_id", [v.owner for v in vectors])
    if config.scope == "actions":
        frame.insert(2, "start_period", [v.start_period for v in vectors])
    frame.to_csv(path, index=False)
    sidecar = path.with_suffix(path.suffix + ".json")
    sidecar.write_text(json.dumps(config.to_dict(), indent=2) + "\n")
    logger.info(f"✓ Wrote {len(vectors)} {config.label} vectors to {path}")
