import json

import numpy as np
import pytest

from conftest import make_record
from stepleak.config_features import FEATURE_PRESETS, FeatureConfig, audit_grid
from stepleak.core import PERIODS_PER_DAY, WEEK_LENGTH
from stepleak.errors import FeatureError
from stepleak.features import (
    Action,
    FeatureVector,
    action_features,
    extract_distributional,
    extract_features,
    extract_statistical,
    feature_matrix,
    n_buckets,
    normalize,
    segment_actions,
    write_feature_matrix,
)

EXAMPLE = (5, 0, 0, 2, 3, 4, 3, 0)


def naive_statistics(raw, window, stats):
    out = []
    for start in range(0, len(raw), window):
        chunk = np.asarray(raw[start:start + window], dtype=float)
        values = {
            "sum": sum(chunk),
            "max": max(chunk),
            "mean": sum(chunk) / len(chunk),
            "median": float(np.median(chunk)),
            "std": float(np.sqrt(sum((chunk - chunk.mean()) ** 2) / len(chunk))),
        }
        out.extend(values[s] for s in ("sum", "max", "mean", "median", "std") if s in stats)
    return np.array(out)


def naive_actions(raw, rest=8):
    actions, start, last, zeros = [], None, None, 0
    for i, value in enumerate(raw):
        if value != 0:
            if start is None:
                start = i
            elif zeros >= rest:
                actions.append((start, last - start + 1))
                start = i
            last, zeros = i, 0
        else:
            zeros += 1
    if start is not None:
        actions.append((start, last - start + 1))
    return actions


# ---------------------------------------------------------------------------
# Statistical
# ---------------------------------------------------------------------------

def test_statistical_worked_example():
    values = extract_statistical(EXAMPLE, 3, ["sum", "mean"])
    assert values.tolist()[0::2] == [5.0, 9.0, 3.0]
    assert values[1] == pytest.approx(5 / 3, abs=1e-12)
    assert values[3] == 3.0
    assert values[5] == 1.5


def test_statistical_rejects_unknown_statistic():
    with pytest.raises(FeatureError, match="average"):
        extract_statistical([1, 2, 3, 4], 2, ["sum", "average"])


def test_statistical_zero_input():
    values = extract_statistical(np.zeros(11), 2, ["max"])
    np.testing.assert_array_equal(values, np.zeros(6))


def test_statistical_matches_naive_windows():
    rng = np.random.default_rng(5)
    raw = rng.integers(0, 40, size=100)
    stats = ["sum", "max", "mean", "median", "std"]
    np.testing.assert_allclose(
        extract_statistical(raw, 7, stats), naive_statistics(raw, 7, stats), rtol=0, atol=1e-12
    )


def test_statistical_order_is_canonical():
    assert np.array_equal(
        extract_statistical(EXAMPLE, 4, ["std", "sum"]),
        extract_statistical(EXAMPLE, 4, ["sum", "std"]),
    )


def test_statistical_errors():
    with pytest.raises(FeatureError):
        extract_statistical([], 3, ["max"])
    with pytest.raises(FeatureError):
        extract_statistical(EXAMPLE, 0, ["max"])


# ---------------------------------------------------------------------------
# Distributional
# ---------------------------------------------------------------------------

def test_distributional_worked_example():
    values = extract_distributional(EXAMPLE, 3, 3, 6)
    assert values.tolist() == [2, 0, 1, 0, 2, 1, 1, 1, 0]


def test_distributional_all_zero_single_window():
    values = extract_distributional(np.zeros(50, dtype=int), 50, 2, 10)
    assert values[0] == 50
    assert not values[1:].any()
    assert values.size == n_buckets(10, 2)


def test_distributional_matches_counting_oracle():
    rng = np.random.default_rng(9)
    raw = rng.integers(0, 31, size=333)
    window, bucket, max_steps = 40, 4, 30
    k = n_buckets(max_steps, bucket)
    values = extract_distributional(raw, window, bucket, max_steps).reshape(-1, k)

    for w, start in enumerate(range(0, raw.size, window)):
        chunk = raw[start:start + window]
        expected = [int(np.sum(chunk == 0))] + [
            int(np.sum((chunk >= j * bucket + 1) & (chunk <= (j + 1) * bucket)))
            for j in range(k - 1)
        ]
        assert values[w].tolist() == expected
        assert values[w].sum() == chunk.size


def test_distributional_rejects_stale_max_steps():
    with pytest.raises(FeatureError, match="max_steps"):
        extract_distributional(EXAMPLE, 3, 2, 4)


# ---------------------------------------------------------------------------
# Actions
# ---------------------------------------------------------------------------

def test_segment_single_action_when_never_idle():
    actions = segment_actions(np.ones(WEEK_LENGTH, dtype=int))
    assert [(a.start_period, a.length) for a in actions] == [(0, WEEK_LENGTH)]


def test_segment_only_rest_gives_no_actions():
    assert segment_actions(np.zeros(8, dtype=int)) == []


def test_segment_split_at_eight_zeros():
    raw = [1, 1] + [0] * 8 + [2, 2]
    actions = segment_actions(raw)
    assert [(a.start_period, a.length) for a in actions] == [(0, 2), (10, 2)]


def test_segment_keeps_short_pauses_inside():
    raw = [0, 3] + [0] * 7 + [4, 0, 0]
    actions = segment_actions(raw)
    assert [(a.start_period, a.length) for a in actions] == [(1, 9)]


def test_segment_matches_linear_scan():
    rng = np.random.default_rng(11)
    for _ in range(1000):
        n = int(rng.integers(1, 120))
        active = rng.random(n) < rng.uniform(0.05, 0.6)
        raw = np.where(active, rng.integers(1, 20, size=n), 0)
        got = [(a.start_period, a.length) for a in segment_actions(raw)]
        assert got == naive_actions(raw.tolist())


def test_segment_reconstructs_nonzero_positions():
    rng = np.random.default_rng(2)
    raw = np.where(rng.random(2000) < 0.1, rng.integers(1, 9, size=2000), 0)
    rebuilt = np.zeros_like(raw)
    for action in segment_actions(raw):
        rebuilt[action.start_period:action.start_period + action.length] = action.payload
    np.testing.assert_array_equal(rebuilt, raw)


def test_action_requires_nonzero_ends():
    with pytest.raises(FeatureError):
        Action("u", 0, np.array([0, 1]))


def test_action_cannot_contain_a_rest():
    payload = np.array([3] + [0] * 8 + [2])
    with pytest.raises(FeatureError, match="8 consecutive zero periods"):
        Action("u", 0, payload)
    assert Action("u", 0, payload, rest_periods=9).length == 10
    assert Action("u", 0, np.array([3] + [0] * 7 + [2])).length == 9


def test_action_features_modes():
    action = Action("u", 10, np.array([2, 3, 4]))
    assert action_features(action, "raw").tolist() == [3, 10, 2, 3, 4]

    stats = action_features(action, "statistical_all")
    assert stats[:6].tolist() == [3, 10, 9, 4, 3, 3]
    assert stats[6] == pytest.approx(np.std([2, 3, 4]), abs=1e-12)

    dist = action_features(action, "distributional", bucket=2, max_steps=4)
    assert dist.tolist() == [3, 10, 0, 1, 2]


def test_action_features_constant_payload_has_zero_std():
    stats = action_features(Action("u", 0, np.array([5, 5, 5, 5])), "statistical_all")
    assert stats[-1] == 0.0


# ---------------------------------------------------------------------------
# Normalization
# ---------------------------------------------------------------------------

def _vectors(rows):
    config = FeatureConfig()
    return [FeatureVector(np.asarray(r, dtype=float), f"u{i}", config) for i, r in enumerate(rows)]


def test_vector_wise_and_prob_dist_examples():
    (v,) = normalize(_vectors([[2, 4, 8]]), "vector_wise")
    assert v.values.tolist() == [0.25, 0.5, 1.0]
    (p,) = normalize(_vectors([[2, 2, 4]]), "prob_dist")
    assert p.values.tolist() == [0.25, 0.25, 0.5]


@pytest.mark.parametrize("mode", ["none", "feature_wise", "vector_wise", "prob_dist"])
def test_zero_vector_passes_through(mode):
    (v,) = normalize(_vectors([[0, 0, 0]]), mode)
    assert v.values.tolist() == [0.0, 0.0, 0.0]


def test_normalization_invariants_on_random_vectors():
    rng = np.random.default_rng(4)
    rows = rng.integers(0, 50, size=(40, 12)).astype(float)
    rows[3] = 0.0
    vectors = _vectors(rows)

    for v in normalize(vectors, "prob_dist"):
        if v.values.any():
            assert v.values.sum() == pytest.approx(1.0, abs=1e-12)
    train = normalize(vectors, "feature_wise")
    matrix = feature_matrix(train)
    assert matrix.min() >= 0.0
    assert matrix.max() <= 1.0
    assert not matrix[3].any()


def test_feature_wise_uses_fitted_maxima():
    train = _vectors([[1, 2], [2, 4]])
    test = _vectors([[4, 2]])
    (v,) = normalize(test, "feature_wise", fitted_on=train)
    assert v.values.tolist() == [2.0, 0.5]


# ---------------------------------------------------------------------------
# Per-user extraction
# ---------------------------------------------------------------------------

def test_extract_features_lengths():
    counts = np.tile(np.arange(10, dtype=np.int32), WEEK_LENGTH // 10)
    record = make_record("u1", counts)

    (week,) = extract_features(record, FEATURE_PRESETS["max_median_w720"], max_steps=9)
    assert week.values.size == 2 * WEEK_LENGTH // 720

    days = extract_features(record, FEATURE_PRESETS["dist_b2_w720_day"], max_steps=9)
    assert [v.day for v in days] == list(range(7))
    assert all(v.values.size == n_buckets(9, 2) * PERIODS_PER_DAY // 720 for v in days)

    raw_day = extract_features(record, FEATURE_PRESETS["raw_day"], max_steps=9)
    np.testing.assert_array_equal(raw_day[2].values, record.series.day(2))


def test_extract_action_vectors():
    counts = np.zeros(WEEK_LENGTH, dtype=np.int32)
    counts[100:110] = 3
    counts[500:503] = 7
    vectors = extract_features(make_record("u1", counts), FEATURE_PRESETS["actions_raw"], 7)
    assert [(v.start_period, v.length) for v in vectors] == [(100, 10), (500, 3)]
    padded = feature_matrix(vectors, 2 + 240)
    assert padded.shape == (2, 242)
    assert padded[1, :5].tolist() == [3, 500, 7, 7, 7]


def test_write_feature_matrix(tmp_path, small_cohort):
    config = FEATURE_PRESETS["max_w720"]
    vectors = [
        v for r in small_cohort for v in extract_features(r, config, small_cohort.stats.max_steps)
    ]
    path = tmp_path / "max.csv"
    write_feature_matrix(vectors, path)

    lines = path.read_text().splitlines()
    assert lines[0].startswith("user_id,day,f0")
    assert len(lines) == len(small_cohort) + 1
    sidecar = json.loads((tmp_path / "max.csv.json").read_text())
    assert sidecar["window"] == 720
    assert sidecar["stats"] == ["max"]


# ---------------------------------------------------------------------------
# Configs
# ---------------------------------------------------------------------------

def test_feature_config_reports_every_problem():
    with pytest.raises(ValueError) as info:
        FeatureConfig(window=-5, scope="month", stats=("max", "mode"))
    message = str(info.value)
    assert "window:" in message
    assert "scope:" in message
    assert "stats:" in message


def test_feature_config_label_and_round_trip():
    config = FeatureConfig(scope="day", method="distributional", window=720, bucket=4)
    assert config.label == "day_distributional_w720_b4_feature_wise"
    assert FeatureConfig(**{**config.to_dict(), "stats": tuple(config.stats)}) == config


def test_full_grid_size():
    grid = audit_grid(("feature_wise",))
    assert len(grid) == 2 + 31 * (13 + 9) + 2 * 4 * 3
    assert len({c.label for c in grid}) == len(grid)
